//! Row-compressed complex matrices for stencil operators.

use ndarray::Axis;

use crate::error::{Error, Result};
use crate::linalg::{Mat, C64, ZERO};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    nrows: usize,
    ncols: usize,
    rows: Vec<Vec<(usize, C64)>>,
}

impl SparseMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, rows: vec![Vec::new(); nrows] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![C64::new(1.0, 0.0); n])
    }

    pub fn diagonal(d: &[C64]) -> Self {
        let rows = d.iter().enumerate().map(|(k, &z)| if z == ZERO { Vec::new() } else { vec![(k, z)] }).collect();
        Self { nrows: d.len(), ncols: d.len(), rows }
    }

    /// Duplicates are summed, exact zeros dropped, columns sorted.
    pub fn from_triplets(nrows: usize, ncols: usize, trips: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); nrows];
        for (i, j, z) in trips {
            debug_assert!(i < nrows && j < ncols);
            rows[i].push((j, z));
        }
        for row in &mut rows {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, C64)> = Vec::with_capacity(row.len());
            for &(j, z) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += z,
                    _ => merged.push((j, z)),
                }
            }
            merged.retain(|e| e.1 != ZERO);
            *row = merged;
        }
        Self { nrows, ncols, rows }
    }

    pub fn from_dense(a: &Mat) -> Self {
        let trips = a.indexed_iter().filter(|(_, z)| **z != ZERO).map(|((i, j), z)| (i, j, *z)).collect::<Vec<_>>();
        Self::from_triplets(a.nrows(), a.ncols(), trips)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| row.iter().map(move |&(j, z)| (i, j, z)))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.rows[i].binary_search_by_key(&j, |e| e.0).map(|k| self.rows[i][k].1).unwrap_or(ZERO)
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros((self.nrows, self.ncols));
        for (i, j, z) in self.triplets() {
            m[[i, j]] = z;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, z)| (j, i, z.conj())))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::from_triplets(self.nrows, self.ncols, self.triplets().map(|(i, j, z)| (i, j, z * c)))
    }

    fn check_mul(&self, cols_other: usize, rows_other: usize) -> Result<()> {
        if self.ncols != rows_other {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.nrows, self.ncols, rows_other, cols_other
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!("cannot add {:?} and {:?}", self.dim(), other.dim())));
        }
        Ok(Self::from_triplets(self.nrows, self.ncols, self.triplets().chain(other.triplets())))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_mul(other.ncols, other.nrows)?;
        let mut trips = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, a) in row {
                for &(j, b) in &other.rows[k] {
                    trips.push((i, j, a * b));
                }
            }
        }
        Ok(Self::from_triplets(self.nrows, other.ncols, trips))
    }

    /// `self · X` for dense `X`.
    pub fn mul_dense(&self, x: &Mat) -> Result<Mat> {
        self.check_mul(x.ncols(), x.nrows())?;
        let mut out = Mat::zeros((self.nrows, x.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let mut target = out.index_axis_mut(Axis(0), i);
            for &(k, a) in row {
                target.scaled_add(a, &x.index_axis(Axis(0), k));
            }
        }
        Ok(out)
    }

    /// `X · self` for dense `X`.
    pub fn dense_mul(&self, x: &Mat) -> Result<Mat> {
        if x.ncols() != self.nrows {
            return Err(Error::Shape(format!("cannot multiply {:?} by {}x{}", x.dim(), self.nrows, self.ncols)));
        }
        let mut out = Mat::zeros((x.nrows(), self.ncols));
        for (k, row) in self.rows.iter().enumerate() {
            let col_k = x.index_axis(Axis(1), k);
            for &(j, a) in row {
                out.index_axis_mut(Axis(1), j).scaled_add(a, &col_k);
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        self.rows.iter().map(|row| row.iter().map(|&(j, a)| a * v[j]).sum()).collect()
    }

    pub fn select_cols(&self, cols: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        Self::from_triplets(
            self.nrows,
            cols.len(),
            self.triplets().filter(|e| map[e.1] != usize::MAX).map(|(i, j, z)| (i, map[j], z)),
        )
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { nrows: rows.len(), ncols: self.ncols, rows: rows.iter().map(|&r| self.rows[r].clone()).collect() }
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    pub fn anticommutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.add(&other.matmul(self)?)
    }

    pub fn fro(&self) -> f64 {
        self.triplets().map(|e| e.2.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.triplets().map(|e| e.2.norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.sub(&self.adjoint()).map(|d| d.fro()).unwrap_or(f64::INFINITY)
    }

    /// Kronecker product.
    pub fn kron(&self, other: &Self) -> Self {
        let (br, bc) = other.dim();
        let mut trips = Vec::with_capacity(self.nnz() * other.nnz());
        for (i, j, a) in self.triplets() {
            for (k, l, b) in other.triplets() {
                trips.push((i * br + k, j * bc + l, a * b));
            }
        }
        Self::from_triplets(self.nrows * br, self.ncols * bc, trips)
    }

    /// Operator-norm estimate by power iteration on `A*A`.
    pub fn norm_estimate(&self, iters: usize) -> f64 {
        if self.nnz() == 0 {
            return 0.0;
        }
        let adj = self.adjoint();
        let mut v: Vec<C64> =
            (0..self.ncols).map(|k| C64::new(1.0 + (k % 7) as f64 * 0.1, (k % 3) as f64 * 0.05)).collect();
        let mut sigma = 0.0;
        for _ in 0..iters {
            let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nv == 0.0 {
                return 0.0;
            }
            for z in &mut v {
                *z /= nv;
            }
            let w = self.mul_vec(&v);
            sigma = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v = adj.mul_vec(&w);
        }
        sigma
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro, re};

    #[test]
    fn products_match_dense() {
        let a = SparseMat::from_triplets(3, 2, [(0, 0, re(1.0)), (2, 1, C64::new(0.0, 2.0)), (1, 1, re(-1.0))]);
        let b = SparseMat::from_triplets(2, 3, [(0, 2, re(3.0)), (1, 0, re(1.0))]);
        let ab = a.matmul(&b).unwrap().to_dense();
        assert!(fro(&(ab.clone() - a.to_dense().dot(&b.to_dense()))) < 1e-15);
        let x = b.to_dense();
        assert!(fro(&(a.mul_dense(&x).unwrap() - &ab)) < 1e-15);
        assert!(fro(&(b.dense_mul(&a.to_dense()).unwrap() - a.to_dense().dot(&b.to_dense()))) < 1e-15);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn duplicates_summed_and_zeros_dropped() {
        let a = SparseMat::from_triplets(2, 2, [(0, 0, re(1.0)), (0, 0, re(-1.0)), (1, 0, re(2.0)), (1, 0, re(1.0))]);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(1, 0), re(3.0));
    }

    #[test]
    fn norm_estimate_diagonal() {
        let d = SparseMat::diagonal(&[re(1.0), re(-4.0), re(2.0)]);
        assert!((d.norm_estimate(200) - 4.0).abs() < 1e-8);
    }
}
