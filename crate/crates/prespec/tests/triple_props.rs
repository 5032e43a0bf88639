use proptest::prelude::*;

use prespec::linalg::{self, HermEig, Mat};
use prespec::opmodel::{bump, GridDomain};
use prespec::sample;
use prespec::triple::{clone, clone_r_block_defects, delta_map, r_map, validate_axioms, PreSpectralTripleModel};

fn model(n: usize, center: [f64; 2], r_in: f64, r_out: f64) -> PreSpectralTripleModel {
    let dom = GridDomain::unit_cube(2, n).unwrap();
    let f = bump(&dom, &center, r_in, r_out);
    let g = bump(&dom, &[0.5, 0.5], 0.05, 0.2);
    PreSpectralTripleModel::dirichlet(dom, &[f, g]).unwrap()
}

fn binomial(k: usize, l: usize) -> f64 {
    (0..l).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn clone_exactness(n in 10usize..=14, cx in 0.4f64..0.6, cy in 0.4f64..0.6, r_in in 0.02f64..0.1, width in 0.05f64..0.15) {
        let t = model(n, [cx, cy], r_in, r_in + width);
        let c = clone(&t);
        prop_assert_eq!(c.hermiticity_defect(), 0.0);
        let d2 = c.d2.to_dense();
        let g2 = c.grading2.as_ref().expect("even dimension is graded").to_dense();
        prop_assert!(linalg::max_abs(&(g2.dot(&d2) + d2.dot(&g2))) <= 1e-12);
        for a in &t.generators {
            prop_assert!(c.commutator_defect(&t, a).unwrap() <= 1e-12);
            let rep = c.rep(a).to_dense();
            prop_assert!(linalg::max_abs(&linalg::commutator(&g2, &rep)) <= 1e-12);
            let root = c.rep(&a.map(|z| z.sqrt())).to_dense();
            prop_assert!(linalg::max_abs(&(root.dot(&root) - &rep)) <= 1e-12);
        }
        let rep = validate_axioms(&t, 1.0).unwrap();
        prop_assert!(rep.get("symmetry_defect").unwrap().pass);
    }

    #[test]
    fn delta_r_binomial(seed in any::<u64>(), n in 2usize..=8, k in 1usize..=3) {
        let mut rng = sample::rng(seed);
        let t = sample::hermitian(n, &mut rng);
        let x = sample::complex_matrix(n, n, &mut rng);
        let eig = HermEig::new(&t).unwrap();
        let t0 = eig.apply(|w| (1.0 + w * w).sqrt());
        let rk = r_map(&t.dot(&t), &x, k).unwrap();
        let mut sum = linalg::zeros(n, n);
        for l in 0..=k {
            let d = delta_map(&t0, &x, 2 * k - l).unwrap();
            let pw = eig.apply(|w| (1.0 + w * w).powf(0.5 * (l as f64 - k as f64)));
            sum = sum + d.dot(&pw) * linalg::re(binomial(k, l) * 2f64.powi(l as i32));
        }
        let scale = 1.0 + linalg::max_abs(&rk);
        prop_assert!(linalg::max_abs(&(rk - sum)) <= 1e-9 * scale);
    }
}

fn poly(x: f64) -> f64 {
    3.0 + 2.0 * x + x * x
}

#[test]
fn polar_exchange_polynomial_and_resolvent() {
    let t = model(9, [0.5, 0.5], 0.05, 0.2);
    let dhat = t.pair.dhat.to_dense();
    let dd = linalg::adjoint(&dhat).dot(&dhat);
    let ddt = dhat.dot(&linalg::adjoint(&dhat));
    let (ev, ew) = (HermEig::new(&dd).unwrap(), HermEig::new(&ddt).unwrap());
    let check = |f: &dyn Fn(f64) -> f64| -> f64 {
        let left: Mat = dhat.dot(&ev.apply(f));
        let right: Mat = ew.apply(f).dot(&dhat);
        linalg::max_abs(&(left - &right)) / (1.0 + linalg::max_abs(&right))
    };
    assert!(check(&poly) <= 1e-10);
    assert!(check(&|x| 1.0 / (1.0 + x)) <= 1e-10);
}

#[test]
fn block_formula_up_to_three() {
    let dom = GridDomain::unit_cube(2, 20).unwrap();
    let f = bump(&dom, &[0.5, 0.5], 0.02, 0.12);
    let t = PreSpectralTripleModel::dirichlet(dom, &[f]).unwrap();
    let defects = clone_r_block_defects(&t, &t.generators[0], 3).unwrap();
    assert_eq!(defects.len(), 3);
    assert!(defects.iter().all(|&d| d <= 1e-10), "{defects:?}");
}
