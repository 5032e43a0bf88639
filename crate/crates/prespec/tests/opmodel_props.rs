use proptest::prelude::*;
use rand::Rng;

use prespec::linalg::{self, re, C64, ZERO};
use prespec::opmodel::{
    build_dirichlet_pair, build_staggered_interval, central_difference, gamma_matrices, GridDomain, MaskShape,
};
use prespec::sample;
use prespec::sparse::SparseMat;

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

#[test]
fn clifford_relations_every_dimension() {
    for d in 1..=6 {
        let g = gamma_matrices(d).unwrap();
        assert!(g.clifford_defect() <= 1e-12, "d = {d}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sobolev_identity(seed in any::<u64>(), d in 1usize..=3, n in 5usize..=9) {
        let dom = GridDomain::unit_cube(d, n).unwrap();
        let g = gamma_matrices(d).unwrap();
        let pair = build_dirichlet_pair(&dom, &g).unwrap();
        let e = pair.embed().unwrap();
        let inner = dom.shrunk_mask(1);
        let l = dom.num_nodes();
        let mut rng = sample::rng(seed);
        let f: Vec<C64> = e
            .cols
            .iter()
            .map(|&c| if inner[c % l] { C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) } else { ZERO })
            .collect();
        let lhs = norm_sqr(&pair.dhat.mul_vec(&f));
        let mut lifted = vec![ZERO; pair.w_dim];
        for (k, &c) in e.cols.iter().enumerate() {
            lifted[c] = f[k];
        }
        let rhs: f64 = (0..d)
            .map(|j| {
                let dj = SparseMat::identity(g.n).kron(&central_difference(&dom, j));
                norm_sqr(&dj.mul_vec(&lifted))
            })
            .sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs), "{lhs} vs {rhs}");
    }

    #[test]
    fn compressed_dirac_is_hermitian(d in 1usize..=3, sizes in prop::collection::vec(3usize..=8, 3), disc in any::<bool>(), ext in 0.5f64..2.0) {
        let shape = if disc && d > 1 { MaskShape::Disc } else { MaskShape::Rect };
        let extents = vec![ext; d];
        let dom = match GridDomain::new(&extents, &sizes[..d], shape) {
            Ok(dom) => dom,
            Err(_) => return Ok(()),
        };
        let pair = build_dirichlet_pair(&dom, &gamma_matrices(d).unwrap()).unwrap();
        let e = pair.embed().unwrap();
        let block = pair.dhat.select_rows(&e.cols);
        prop_assert_eq!(block.hermiticity_defect(), 0.0);
    }

    #[test]
    fn staggered_spectrum_closed_form(n in 2usize..=120, a in 0.5f64..3.0) {
        let pair = build_staggered_interval(n, a).unwrap();
        let h = a / (n + 1) as f64;
        let dd = pair.dstar_d().to_dense();
        let eig = linalg::HermEig::new(&dd).unwrap();
        let mut want: Vec<f64> = (1..=n)
            .map(|k| 4.0 / (h * h) * (k as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin().powi(2))
            .collect();
        want.sort_by(f64::total_cmp);
        for (got, w) in eig.values.iter().zip(&want) {
            prop_assert!((got - w).abs() <= 1e-10 * w, "{got} vs {w}");
        }
        let s = 1.0 / h;
        for i in 0..n {
            for j in 0..n {
                let want = match i.abs_diff(j) {
                    0 => 2.0 * s * s,
                    1 => -s * s,
                    _ => 0.0,
                };
                prop_assert_eq!(dd[[i, j]], re(want));
            }
        }
    }
}
