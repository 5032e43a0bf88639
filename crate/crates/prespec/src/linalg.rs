//! Dense complex linear algebra on top of ndarray and LAPACK.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, ShapeBuilder};
use ndarray_linalg::{EigVals, Eigh, Inverse, JobSvd, SVD, SVDDC, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat = Array2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn identity(n: usize) -> Mat {
    Array2::from_diag_elem(n, ONE)
}

pub fn zeros(r: usize, c: usize) -> Mat {
    Array2::zeros((r, c))
}

pub fn diag_real(d: &[f64]) -> Mat {
    let mut m = zeros(d.len(), d.len());
    for (k, &x) in d.iter().enumerate() {
        m[[k, k]] = re(x);
    }
    m
}

pub fn adjoint(a: &Mat) -> Mat {
    a.t().mapv(|z| z.conj())
}

pub fn commutator(a: &Mat, b: &Mat) -> Mat {
    a.dot(b) - b.dot(a)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let z = a[[i, j]];
            if z == ZERO {
                continue;
            }
            out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]).assign(&b.mapv(|w| z * w));
        }
    }
    out
}

/// Frobenius norm. Bounds the operator norm from above, so defects measured
/// with it are conservative.
pub fn fro(a: &Mat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace(a: &Mat) -> C64 {
    a.diag().sum()
}

/// `Tr(AB)` without forming the product.
pub fn trace_of_product(a: &Mat, b: &Mat) -> C64 {
    let bt = b.t();
    let mut acc = ZERO;
    for (ra, cb) in a.axis_iter(Axis(0)).zip(bt.axis_iter(Axis(0))) {
        acc += ra.iter().zip(cb.iter()).map(|(x, y)| x * y).sum::<C64>();
    }
    acc
}

pub fn hermiticity_defect(a: &Mat) -> f64 {
    fro(&(a - &adjoint(a)))
}

pub fn check_finite(a: &Mat) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input("matrix has non-finite entries".into()))
    }
}

pub fn check_square(a: &Mat, what: &str) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::Shape(format!("{what} must be square, got {r}x{c}")));
    }
    Ok(r)
}

/// Eigendecomposition `A = V diag(w) V*` of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub values: Array1<f64>,
    pub vectors: Mat,
}

impl HermEig {
    pub fn new(a: &Mat) -> Result<Self> {
        let n = check_square(a, "Hermitian argument")?;
        check_finite(a)?;
        if n == 0 {
            return Ok(Self { values: Array1::zeros(0), vectors: zeros(0, 0) });
        }
        // Divide and conquer occasionally fails to converge; QR iteration is
        // slower but more robust.
        let (values, vectors) = match zheevd(a.view()) {
            Ok(out) => out,
            Err(_) => a.eigh(UPLO::Lower).map_err(|e| Error::Linalg(e.to_string()))?,
        };
        Ok(Self { values, vectors })
    }

    pub fn from_parts(values: Array1<f64>, vectors: Mat) -> Self {
        Self { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `f(A) = V f(w) V*` for a real-valued spectral function.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Mat {
        self.apply_c(|x| re(f(x)))
    }

    pub fn apply_c(&self, f: impl Fn(f64) -> C64) -> Mat {
        let fw: Array1<C64> = self.values.mapv(f);
        let scaled = &self.vectors * &fw.view().insert_axis(Axis(0));
        scaled.dot(&adjoint(&self.vectors))
    }

    /// Rotate an operator into the eigenbasis: `V* X V`.
    pub fn to_basis(&self, x: &Mat) -> Mat {
        adjoint(&self.vectors).dot(&x.dot(&self.vectors))
    }

    pub fn from_basis(&self, x: &Mat) -> Mat {
        self.vectors.dot(&x.dot(&adjoint(&self.vectors)))
    }
}

fn zheevd(a: ArrayView2<C64>) -> Result<(Array1<f64>, Mat)> {
    let n = a.nrows();
    let ni = i32::try_from(n).map_err(|_| Error::Shape("matrix too large for LAPACK".into()))?;
    // Row-major iteration of the transpose is the column-major layout of `a`.
    let mut buf: Vec<C64> = a.t().iter().copied().collect();
    let mut w = vec![0.0f64; n];
    let jobz = b'V' as std::os::raw::c_char;
    let uplo = b'L' as std::os::raw::c_char;
    let mut info = 0i32;
    let mut wq = [ZERO];
    let mut rq = [0.0f64];
    let mut iq = [0i32];
    let query = -1i32;
    // SAFETY: all pointers reference live buffers of the sizes LAPACK expects;
    // the first call is a workspace query.
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr().cast(),
            &ni,
            w.as_mut_ptr(),
            wq.as_mut_ptr().cast(),
            &query,
            rq.as_mut_ptr(),
            &query,
            iq.as_mut_ptr(),
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("zheevd workspace query failed, info={info}")));
    }
    let lwork = wq[0].re.ceil() as i32;
    let lrwork = rq[0].ceil() as i32;
    let liwork = iq[0];
    let mut work = vec![ZERO; lwork.max(1) as usize];
    let mut rwork = vec![0.0f64; lrwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    // SAFETY: workspace sized from the query above.
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr().cast(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr().cast(),
            &lwork,
            rwork.as_mut_ptr(),
            &lrwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Linalg(format!("zheevd failed, info={info}")));
    }
    let v = Array2::from_shape_vec((n, n).f(), buf).map_err(|e| Error::Linalg(e.to_string()))?;
    Ok((Array1::from(w), v.as_standard_layout().to_owned()))
}

/// Singular values, non-increasing.
pub fn svals(a: &Mat) -> Result<Vec<f64>> {
    check_finite(a)?;
    let (r, c) = a.dim();
    if r == 0 || c == 0 {
        return Ok(Vec::new());
    }
    let s = match a.svddc(JobSvd::None) {
        Ok((_, s, _)) => s,
        // gesdd can fail to converge where gesvd does not.
        Err(_) => a.svd(false, false).map_err(|e| Error::Linalg(e.to_string()))?.1,
    };
    Ok(s.to_vec())
}

/// Thin SVD `A = U diag(s) Vt`.
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub vt: Mat,
}

pub fn svd_thin(a: &Mat) -> Result<Svd> {
    check_finite(a)?;
    let (u, s, vt) = match a.svddc(JobSvd::Some) {
        Ok(out) => out,
        Err(_) => {
            let (u, s, vt) = a.svd(true, true).map_err(|e| Error::Linalg(e.to_string()))?;
            let k = s.len();
            (u.map(|u| u.slice(s![.., ..k]).to_owned()), s, vt.map(|v| v.slice(s![..k, ..]).to_owned()))
        }
    };
    match (u, vt) {
        (Some(u), Some(vt)) => Ok(Svd { u, s: s.to_vec(), vt }),
        _ => Err(Error::Linalg("SVD did not return singular vectors".into())),
    }
}

/// Eigenvalues of a general square matrix.
pub fn eigvals(a: &Mat) -> Result<Vec<C64>> {
    check_square(a, "eigenvalue argument")?;
    check_finite(a)?;
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let e = a.eigvals().map_err(|e| Error::Linalg(e.to_string()))?;
    Ok(e.to_vec())
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    a.inv().map_err(|e| Error::Linalg(e.to_string()))
}

/// Multiply on the left by a real diagonal: `diag(d) X`.
pub fn diag_mul(d: &[f64], x: &Mat) -> Mat {
    let mut out = x.clone();
    for (mut row, &v) in out.axis_iter_mut(Axis(0)).zip(d) {
        row.mapv_inplace(|z| z * v);
    }
    out
}

/// Multiply on the right by a real diagonal: `X diag(d)`.
pub fn mul_diag(x: &Mat, d: &[f64]) -> Mat {
    let mut out = x.clone();
    for (mut col, &v) in out.axis_iter_mut(Axis(1)).zip(d) {
        col.mapv_inplace(|z| z * v);
    }
    out
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    pub(crate) fn random_hermitian(n: usize, rng: &mut impl rand::Rng) -> Mat {
        let a = Mat::from_shape_fn((n, n), |_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        &a + &adjoint(&a)
    }

    #[test]
    fn eigendecomposition_reconstructs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let h = random_hermitian(12, &mut rng);
        let e = HermEig::new(&h).unwrap();
        assert!(fro(&(e.apply(|x| x) - &h)) < 1e-12);
        assert!(e.values.windows(2).into_iter().all(|w| w[0] <= w[1]));
    }

    #[test]
    fn trace_of_product_matches_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let a = random_hermitian(7, &mut rng);
        let b = random_hermitian(7, &mut rng).dot(&a);
        let t = trace_of_product(&a, &b);
        assert!((t - trace(&a.dot(&b))).norm() < 1e-12);
    }

    #[test]
    fn kron_of_identities() {
        let k = kron(&identity(2), &identity(3));
        assert_eq!(k, identity(6));
    }

    #[test]
    fn linear_fit_exact_line() {
        let (m, b) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((m - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14);
    }
}
