//! Seeded random matrices for surveys and property tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{adjoint, identity, Mat, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_like(rng: &mut impl Rng) -> f64 {
    // Sum of uniforms: cheap, bounded, adequately spread for test matrices.
    (0..4).map(|_| rng.gen::<f64>()).sum::<f64>() - 2.0
}

pub fn complex_matrix(r: usize, c: usize, rng: &mut impl Rng) -> Mat {
    Mat::from_shape_fn((r, c), |_| C64::new(gaussian_like(rng), gaussian_like(rng)))
}

pub fn hermitian(n: usize, rng: &mut impl Rng) -> Mat {
    let a = complex_matrix(n, n, rng);
    (&a + &adjoint(&a)).mapv(|z| z * 0.5)
}

/// `X X*`, positive semidefinite with generic rank `n`.
pub fn psd(n: usize, rng: &mut impl Rng) -> Mat {
    let x = complex_matrix(n, n, rng);
    x.dot(&adjoint(&x))
}

/// `X X* / n + floor`, strictly positive.
pub fn positive_definite(n: usize, floor: f64, rng: &mut impl Rng) -> Mat {
    let x = complex_matrix(n, n, rng);
    x.dot(&adjoint(&x)).mapv(|z| z / n as f64) + identity(n).mapv(|z| z * floor)
}

/// Unitary from Gram-Schmidt on a random complex matrix.
pub fn unitary(n: usize, rng: &mut impl Rng) -> Mat {
    let mut q = complex_matrix(n, n, rng);
    for j in 0..n {
        for k in 0..j {
            let proj: C64 = (0..n).map(|i| q[[i, k]].conj() * q[[i, j]]).sum();
            for i in 0..n {
                let v = q[[i, k]];
                q[[i, j]] -= proj * v;
            }
        }
        let nrm = (0..n).map(|i| q[[i, j]].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            q[[i, j]] /= nrm;
        }
    }
    q
}

pub fn real_diagonal(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()
}
