use proptest::prelude::*;

use prespec::linalg::{self, diag_real, re, HermEig};
use prespec::opint::{
    delta0_via_r_expansion, g_z, multiplier_table, operator_difference_identity_with, positive_pair, ricard_ratio,
    sqrt_via_resolvent_integral, MultiplierGrid, QuadratureSpec, Scheme,
};
use prespec::sample;

fn op_norm(m: &linalg::Mat) -> f64 {
    linalg::svals(m).unwrap()[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(25))]

    #[test]
    fn square_root_matches_eigendecomposition(seed in any::<u64>(), n in 1usize..=8, scale in 0.1f64..20.0) {
        let mut rng = sample::rng(seed);
        let t = sample::hermitian(n, &mut rng) * re(scale);
        let quad = QuadratureSpec::with_tol(1e-8);
        let want = HermEig::new(&t).unwrap().apply(|l| (1.0 + l * l).sqrt());
        let got = sqrt_via_resolvent_integral(&t, &quad).unwrap();
        prop_assert!(op_norm(&(got - want)) <= quad.tol);
    }

    #[test]
    fn delta0_matches_direct_commutator(seed in any::<u64>(), n in 1usize..=8) {
        let mut rng = sample::rng(seed);
        let t = sample::hermitian(n, &mut rng);
        let x = sample::complex_matrix(n, n, &mut rng);
        let quad = QuadratureSpec::with_tol(1e-8);
        let t0 = HermEig::new(&t).unwrap().apply(|l| (1.0 + l * l).sqrt());
        let got = delta0_via_r_expansion(&t, &x, &quad).unwrap();
        prop_assert!(op_norm(&(got - linalg::commutator(&t0, &x))) <= quad.tol);
    }

    #[test]
    fn ricard_commuting_never_exceeds_one(seed in any::<u64>(), n in 1usize..=10, s in 0.5f64..3.0) {
        let mut rng = sample::rng(seed);
        let x = diag_real(&sample::real_diagonal(n, 0.0, 4.0, &mut rng));
        let y = diag_real(&sample::real_diagonal(n, 0.0, 4.0, &mut rng));
        prop_assert!(ricard_ratio(&x, &y, s, 1.0).unwrap() <= 1.0 + 1e-9);
    }

    #[test]
    fn multiplier_inversion(t in -3.0f64..3.0, zr in 1.3f64..3.5) {
        let z = re(zr);
        let table = multiplier_table(z, &MultiplierGrid::for_tolerance(z, 1e-10).unwrap()).unwrap();
        prop_assert!((table.inversion(t) - g_z(z, t)).norm() <= 1e-6);
    }
}

#[test]
fn fixed_scheme_truncates_at_lambda_max() {
    let t = diag_real(&[2.0]);
    let quad = QuadratureSpec { scheme: Scheme::Fixed, lambda_max: 1e12, tol: 1e-6, panel_budget: 64 };
    let got = sqrt_via_resolvent_integral(&t, &quad).unwrap();
    // The dropped tail is about (2/π)·5/√λ_max.
    assert!((got[[0, 0]].re - 5f64.sqrt()).abs() < 1e-5);
    let tight = QuadratureSpec { panel_budget: 1, tol: 1e-14, ..quad };
    assert!(sqrt_via_resolvent_integral(&t, &tight).is_err());
}

#[test]
fn identity_residual_across_z_and_tolerance_scaling() {
    for zr in [2.2, 2.5, 3.0] {
        let z = re(zr);
        let fine = multiplier_table(z, &MultiplierGrid::for_tolerance(z, 1e-10).unwrap()).unwrap();
        let loose = multiplier_table(z, &MultiplierGrid::for_tolerance(z, 1e-6).unwrap()).unwrap();
        let half = multiplier_table(z, &MultiplierGrid::for_tolerance(z, 0.5e-6).unwrap()).unwrap();
        let mut rng = sample::rng(zr.to_bits());
        let (mut r_loose, mut r_half) = (0.0, 0.0);
        for _ in 0..8 {
            let (a, b) = positive_pair(6, 0.1, 3.0, &mut rng);
            let out = operator_difference_identity_with(&a, &b, &fine).unwrap();
            assert!(out.residual <= 1e-6, "z = {zr}: {}", out.residual);
            r_loose += operator_difference_identity_with(&a, &b, &loose).unwrap().residual;
            r_half += operator_difference_identity_with(&a, &b, &half).unwrap().residual;
        }
        assert!(r_half * 2.0 <= r_loose, "z = {zr}: {r_loose} -> {r_half}");
    }
}
