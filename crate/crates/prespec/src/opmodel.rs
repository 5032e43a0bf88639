//! Finite operator models: gamma matrices, grid domains, the formal lattice
//! Dirac operator, Dirichlet and staggered rectangular pairs, and
//! multiplication operators by interior-supported functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, HermEig, Mat, C64, I, ONE, ZERO};
use crate::sparse::SparseMat;

// ---------------------------------------------------------------- gammas

#[derive(Debug, Clone)]
pub struct GammaSet {
    pub d: usize,
    /// Spinor dimension `2^{⌊d/2⌋}`.
    pub n: usize,
    pub gammas: Vec<Mat>,
    pub grading: Option<Mat>,
}

fn pauli() -> [Mat; 3] {
    let x = ndarray::arr2(&[[ZERO, ONE], [ONE, ZERO]]);
    let y = ndarray::arr2(&[[ZERO, -I], [I, ZERO]]);
    let z = ndarray::arr2(&[[ONE, ZERO], [ZERO, -ONE]]);
    [x, y, z]
}

/// Grading `(-i)^{d/2} γ_1⋯γ_d` of an even-dimensional set.
fn chirality(gammas: &[Mat], n: usize) -> Mat {
    let mut g = linalg::identity(n);
    for m in gammas {
        g = g.dot(m);
    }
    let phase = (-I).powu((gammas.len() / 2) as u32);
    g.mapv(|z| z * phase)
}

pub fn gamma_matrices(d: usize) -> Result<GammaSet> {
    if !(1..=6).contains(&d) {
        return Err(Error::Input(format!("gamma matrices are built for 1 <= d <= 6, got {d}")));
    }
    let [sx, sy, _] = pauli();
    // Even dimension 2k from 2k-2: γ_j ⊗ σx, Γ ⊗ σx, 1 ⊗ σy.
    let mut gammas: Vec<Mat> = Vec::new();
    let mut n = 1;
    let mut grading = linalg::identity(1);
    for _ in 0..d / 2 {
        let mut next: Vec<Mat> = gammas.iter().map(|g| linalg::kron(g, &sx)).collect();
        if n > 1 {
            next.push(linalg::kron(&grading, &sx));
        } else {
            next.push(linalg::kron(&linalg::identity(1), &sx));
        }
        next.push(linalg::kron(&linalg::identity(n), &sy));
        n *= 2;
        gammas = next;
        grading = chirality(&gammas, n);
    }
    let grading = if d % 2 == 1 {
        // Odd dimension: the even grading (or 1 when d = 1) joins as the last generator.
        gammas.push(grading);
        None
    } else {
        Some(grading)
    };
    Ok(GammaSet { d, n, gammas, grading })
}

impl GammaSet {
    /// Largest defect over Hermiticity, `{γ_j, γ_k} = 2δ_{jk}` and the grading relations.
    pub fn clifford_defect(&self) -> f64 {
        let id = linalg::identity(self.n);
        let mut worst: f64 = 0.0;
        for (j, a) in self.gammas.iter().enumerate() {
            worst = worst.max(linalg::hermiticity_defect(a));
            for (k, b) in self.gammas.iter().enumerate() {
                let ac = a.dot(b) + b.dot(a);
                let target = if j == k { id.mapv(|z| z * 2.0) } else { linalg::zeros(self.n, self.n) };
                worst = worst.max(linalg::max_abs(&(ac - target)));
            }
        }
        if let Some(g) = &self.grading {
            worst = worst.max(linalg::hermiticity_defect(g));
            worst = worst.max(linalg::max_abs(&(g.dot(g) - &id)));
            for a in &self.gammas {
                worst = worst.max(linalg::max_abs(&(g.dot(a) + a.dot(g))));
            }
        }
        worst
    }
}

// ---------------------------------------------------------------- domains

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskShape {
    Rect,
    Disc,
}

#[derive(Debug, Clone)]
pub struct GridDomain {
    pub d: usize,
    pub extents: Vec<f64>,
    pub nodes: Vec<usize>,
    pub h: Vec<f64>,
    pub mask: Vec<bool>,
    pub shape: MaskShape,
}

impl GridDomain {
    pub fn new(extents: &[f64], nodes: &[usize], shape: MaskShape) -> Result<Self> {
        let d = extents.len();
        if d == 0 || nodes.len() != d {
            return Err(Error::Input("extents and nodes must be non-empty and of equal length".into()));
        }
        if extents.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::Input("extents must be positive".into()));
        }
        if nodes.iter().any(|&n| n < 3) {
            return Err(Error::Input("each axis needs at least 3 nodes".into()));
        }
        let h: Vec<f64> = extents.iter().zip(nodes).map(|(e, &n)| e / (n - 1) as f64).collect();
        let mut dom = Self { d, extents: extents.to_vec(), nodes: nodes.to_vec(), h, mask: Vec::new(), shape };
        let total = dom.num_nodes();
        dom.mask = (0..total)
            .map(|flat| {
                let idx = dom.multi_index(flat);
                let inner = idx.iter().zip(&dom.nodes).all(|(&i, &n)| i > 0 && i + 1 < n);
                inner
                    && match shape {
                        MaskShape::Rect => true,
                        MaskShape::Disc => {
                            let x = dom.coords(flat);
                            x.iter().zip(&dom.extents).map(|(xi, e)| ((xi - 0.5 * e) / (0.5 * e)).powi(2)).sum::<f64>()
                                < 1.0
                        }
                    }
            })
            .collect();
        if !dom.mask.iter().any(|&m| m) {
            return Err(Error::Input("domain has empty interior".into()));
        }
        Ok(dom)
    }

    pub fn rect(extents: &[f64], nodes: &[usize]) -> Result<Self> {
        Self::new(extents, nodes, MaskShape::Rect)
    }

    /// Unit cube `[0,1]^d` with `n` nodes per axis.
    pub fn unit_cube(d: usize, n: usize) -> Result<Self> {
        Self::rect(&vec![1.0; d], &vec![n; d])
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.iter().product()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.d];
        for j in (0..self.d.saturating_sub(1)).rev() {
            s[j] = s[j + 1] * self.nodes[j + 1];
        }
        s
    }

    /// Row-major, axis 0 slowest.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.d];
        for j in (0..self.d).rev() {
            idx[j] = flat % self.nodes[j];
            flat /= self.nodes[j];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().zip(&self.h).map(|(&i, h)| i as f64 * h).collect()
    }

    pub fn interior(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&k| self.mask[k]).collect()
    }

    pub fn interior_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn volume(&self) -> f64 {
        match self.shape {
            MaskShape::Rect => self.extents.iter().product(),
            MaskShape::Disc => {
                let radii: f64 = self.extents.iter().map(|e| 0.5 * e).product();
                unit_ball_volume(self.d) * radii
            }
        }
    }

    /// Points whose whole `m`-neighbourhood (sup norm) lies in the mask.
    pub fn shrunk_mask(&self, m: usize) -> Vec<bool> {
        let mut cur = self.mask.clone();
        for _ in 0..m {
            let prev = cur.clone();
            for flat in 0..self.num_nodes() {
                if !prev[flat] {
                    continue;
                }
                let idx = self.multi_index(flat);
                let ok =
                    neighbourhood(&idx, &self.nodes).all(|q| q.map(|q| prev[self.flat_index(&q)]).unwrap_or(false));
                cur[flat] = ok;
            }
        }
        cur
    }

    /// Largest `m` with the support inside the mask shrunk by `m`;
    /// `None` if the support leaves the mask.
    pub fn margin_of(&self, samples: &[C64]) -> Option<usize> {
        let support: Vec<usize> = (0..samples.len()).filter(|&k| samples[k] != ZERO).collect();
        if support.iter().any(|&k| !self.mask[k]) {
            return None;
        }
        if support.is_empty() {
            return Some(usize::MAX);
        }
        let max_m = *self.nodes.iter().max().unwrap_or(&0);
        let mut cur = self.mask.clone();
        for m in 0..max_m {
            let prev = cur.clone();
            for flat in 0..self.num_nodes() {
                if prev[flat] {
                    let idx = self.multi_index(flat);
                    cur[flat] =
                        neighbourhood(&idx, &self.nodes).all(|q| q.map(|q| prev[self.flat_index(&q)]).unwrap_or(false));
                }
            }
            if support.iter().any(|&k| !cur[k]) {
                return Some(m);
            }
        }
        Some(max_m)
    }

    /// Sample a function of the physical coordinates on every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<C64> {
        (0..self.num_nodes()).map(|k| linalg::re(f(&self.coords(k)))).collect()
    }
}

pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// Sup-norm unit neighbourhood; `None` marks positions off the lattice.
fn neighbourhood<'a>(idx: &'a [usize], nodes: &'a [usize]) -> impl Iterator<Item = Option<Vec<usize>>> + 'a {
    let d = idx.len();
    (0..3usize.pow(d as u32)).map(move |mut code| {
        let mut q = Vec::with_capacity(d);
        for j in 0..d {
            let off = (code % 3) as isize - 1;
            code /= 3;
            let v = idx[j] as isize + off;
            if v < 0 || v >= nodes[j] as isize {
                return None;
            }
            q.push(v as usize);
        }
        Some(q)
    })
}

/// Smooth radial plateau: 1 for `r <= r_in`, 0 for `r >= r_out`.
pub fn plateau(r: f64, r_in: f64, r_out: f64) -> f64 {
    let t = ((r - r_in) / (r_out - r_in)).clamp(0.0, 1.0);
    let g = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let (a, b) = (g(1.0 - t), g(t));
    a / (a + b)
}

/// Radial bump centred at `center` with the given plateau and outer radii.
pub fn bump(dom: &GridDomain, center: &[f64], r_in: f64, r_out: f64) -> Vec<C64> {
    dom.sample(|x| {
        let r = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        plateau(r, r_in, r_out)
    })
}

// ---------------------------------------------------------------- operators

/// Central difference along `axis` with zero padding.
pub fn central_difference(dom: &GridDomain, axis: usize) -> SparseMat {
    let stride = dom.strides()[axis];
    let c = linalg::re(0.5 / dom.h[axis]);
    let mut trips = Vec::new();
    for flat in 0..dom.num_nodes() {
        let i = dom.multi_index(flat)[axis];
        if i + 1 < dom.nodes[axis] {
            trips.push((flat, flat + stride, c));
        }
        if i > 0 {
            trips.push((flat, flat - stride, -c));
        }
    }
    SparseMat::from_triplets(dom.num_nodes(), dom.num_nodes(), trips)
}

pub fn build_formal_dirac(dom: &GridDomain, g: &GammaSet) -> Result<SparseMat> {
    if g.d != dom.d {
        return Err(Error::Shape(format!("gamma set has d={} but domain has d={}", g.d, dom.d)));
    }
    let total = dom.num_nodes() * g.n;
    let mut acc = SparseMat::zeros(total, total);
    for (j, gamma) in g.gammas.iter().enumerate() {
        let spin = SparseMat::from_dense(&gamma.mapv(|z| -I * z));
        acc = acc.add(&spin.kron(&central_difference(dom, j)))?;
    }
    Ok(acc)
}

/// Isometric column selection `V ↪ W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub cols: Vec<usize>,
    pub w_dim: usize,
}

impl Embedding {
    pub fn v_dim(&self) -> usize {
        self.cols.len()
    }

    pub fn matrix(&self) -> SparseMat {
        SparseMat::from_triplets(self.w_dim, self.cols.len(), self.cols.iter().enumerate().map(|(k, &c)| (c, k, ONE)))
    }

    /// `E* X E` for a dense `X` on `W`.
    pub fn compress(&self, x: &Mat) -> Mat {
        let n = self.cols.len();
        Mat::from_shape_fn((n, n), |(i, j)| x[[self.cols[i], self.cols[j]]])
    }

    /// `E* X` (rows of `X` restricted to `V`).
    pub fn restrict_rows(&self, x: &Mat) -> Mat {
        Mat::from_shape_fn((self.cols.len(), x.ncols()), |(i, j)| x[[self.cols[i], j]])
    }

    /// `X E` (columns of `X` restricted to `V`).
    pub fn restrict_cols(&self, x: &Mat) -> Mat {
        Mat::from_shape_fn((x.nrows(), self.cols.len()), |(i, j)| x[[i, self.cols[j]]])
    }

    /// `E X` (rows placed into `W`).
    pub fn lift_rows(&self, x: &Mat) -> Mat {
        let mut out = linalg::zeros(self.w_dim, x.ncols());
        for (k, &c) in self.cols.iter().enumerate() {
            out.row_mut(c).assign(&x.row(k));
        }
        out
    }

    /// `X E*` (columns placed into `W`).
    pub fn lift_cols(&self, x: &Mat) -> Mat {
        let mut out = linalg::zeros(x.nrows(), self.w_dim);
        for (k, &c) in self.cols.iter().enumerate() {
            out.column_mut(c).assign(&x.column(k));
        }
        out
    }

    pub fn compress_sparse(&self, x: &SparseMat) -> SparseMat {
        x.select_rows(&self.cols).select_cols(&self.cols)
    }
}

/// A closed symmetric operator in finite form: `Dhat: V → W`.
#[derive(Debug, Clone)]
pub struct RectangularPair {
    pub w_dim: usize,
    pub v_dim: usize,
    pub dhat: SparseMat,
    pub embed: Option<Embedding>,
}

impl RectangularPair {
    pub fn new(dhat: SparseMat, embed: Option<Embedding>) -> Result<Self> {
        let (w_dim, v_dim) = dhat.dim();
        if let Some(e) = &embed {
            if e.w_dim != w_dim || e.v_dim() != v_dim {
                return Err(Error::Shape("embedding does not match Dhat".into()));
            }
        }
        Ok(Self { w_dim, v_dim, dhat, embed })
    }

    pub fn has_algebra(&self) -> bool {
        self.embed.is_some()
    }

    pub fn embed(&self) -> Result<&Embedding> {
        self.embed.as_ref().ok_or_else(|| Error::Input("pair has no embedding; algebra capability missing".into()))
    }

    /// `D*D` on `V`.
    pub fn dstar_d(&self) -> SparseMat {
        self.dhat.adjoint().matmul(&self.dhat).expect("shapes agree")
    }

    /// `DD*` on `W`.
    pub fn d_dstar(&self) -> SparseMat {
        self.dhat.matmul(&self.dhat.adjoint()).expect("shapes agree")
    }

    /// Hermiticity defect of `E* Dhat`.
    pub fn symmetry_defect(&self) -> Result<f64> {
        let e = self.embed()?;
        Ok(self.dhat.select_rows(&e.cols).hermiticity_defect())
    }
}

/// Dirichlet pair: `V` = spinor fields on the masked interior, `Dhat = 𝒟 E`.
pub fn build_dirichlet_pair(dom: &GridDomain, g: &GammaSet) -> Result<RectangularPair> {
    let formal = build_formal_dirac(dom, g)?;
    dirichlet_pair_from_formal(dom, g, &formal)
}

pub fn dirichlet_pair_from_formal(dom: &GridDomain, g: &GammaSet, formal: &SparseMat) -> Result<RectangularPair> {
    let interior = dom.interior();
    if interior.is_empty() {
        return Err(Error::Input("domain has empty interior".into()));
    }
    let l = dom.num_nodes();
    let cols: Vec<usize> = (0..g.n).flat_map(|s| interior.iter().map(move |&k| s * l + k)).collect();
    let embed = Embedding { cols: cols.clone(), w_dim: l * g.n };
    RectangularPair::new(formal.select_cols(&cols), Some(embed))
}

/// Forward difference from `n` interior nodes to `n+1` cells on `(0, a)`.
pub fn build_staggered_interval(n: usize, a: f64) -> Result<RectangularPair> {
    if n < 2 {
        return Err(Error::Input(format!("staggered interval needs n >= 2, got {n}")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Input("interval length must be positive".into()));
    }
    let h = a / (n + 1) as f64;
    let c = C64::new(0.0, -1.0 / h);
    let mut trips = Vec::new();
    for j in 0..=n {
        if j < n {
            trips.push((j, j, c));
        }
        if j >= 1 {
            trips.push((j, j - 1, -c));
        }
    }
    RectangularPair::new(SparseMat::from_triplets(n + 1, n, trips), None)
}

/// Dense `(D*D, DD*)`.
pub fn laplacian_pair(pair: &RectangularPair) -> (Mat, Mat) {
    (pair.dstar_d().to_dense(), pair.d_dstar().to_dense())
}

/// Eigendecomposition of the scalar Dirichlet block `L` of `D*D = L ⊗ 1_N`
/// on a rectangle, assembled from one-dimensional factors.
pub fn scalar_dirichlet_eig(dom: &GridDomain) -> Result<HermEig> {
    if dom.shape != MaskShape::Rect {
        return Err(Error::Input("Kronecker factorisation needs a rectangular mask".into()));
    }
    let mut values = vec![0.0];
    let mut vectors = linalg::identity(1);
    for j in 0..dom.d {
        let line = GridDomain::rect(&[dom.extents[j]], &[dom.nodes[j]])?;
        let diff = central_difference(&line, 0);
        let cols: Vec<usize> = (1..dom.nodes[j] - 1).collect();
        let e = diff.select_cols(&cols);
        let l1 = e.adjoint().matmul(&e)?.to_dense();
        let eig = HermEig::new(&l1)?;
        let m = eig.dim();
        values = values.iter().flat_map(|&a| eig.values.iter().map(move |&b| a + b)).collect();
        let _ = m;
        vectors = linalg::kron(&vectors, &eig.vectors);
    }
    Ok(HermEig::from_parts(ndarray::Array1::from(values), vectors))
}

// ---------------------------------------------------------------- algebra

/// Multiplication by an interior-supported function, `1_N ⊗ M_f`.
#[derive(Debug, Clone)]
pub struct AlgebraElement {
    pub samples: Vec<C64>,
    pub margin: usize,
    pub spin: usize,
    w_diag: Vec<C64>,
    v_diag: Vec<C64>,
}

impl AlgebraElement {
    fn assemble(samples: Vec<C64>, margin: usize, pair: &RectangularPair) -> Result<Self> {
        let e = pair.embed()?;
        let l = samples.len();
        if l == 0 || pair.w_dim % l != 0 {
            return Err(Error::Shape(format!("{l} samples do not tile W of dimension {}", pair.w_dim)));
        }
        let spin = pair.w_dim / l;
        let w_diag: Vec<C64> = (0..spin).flat_map(|_| samples.iter().copied()).collect();
        let v_diag = e.cols.iter().map(|&c| w_diag[c]).collect();
        Ok(Self { samples, margin, spin, w_diag, v_diag })
    }

    /// Skips the margin precondition; for negative controls only.
    pub fn unchecked(samples: Vec<C64>, dom: &GridDomain, pair: &RectangularPair) -> Result<Self> {
        let margin = dom.margin_of(&samples).unwrap_or(0);
        Self::assemble(samples, margin, pair)
    }

    pub fn as_w(&self) -> SparseMat {
        SparseMat::diagonal(&self.w_diag)
    }

    pub fn as_v(&self) -> SparseMat {
        SparseMat::diagonal(&self.v_diag)
    }

    pub fn w_diag(&self) -> &[C64] {
        &self.w_diag
    }

    pub fn v_diag(&self) -> &[C64] {
        &self.v_diag
    }

    pub fn norm(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        let samples: Vec<C64> = self.samples.iter().map(|&z| f(z)).collect();
        let spin = self.spin;
        let w_diag = self.w_diag.iter().map(|&z| f(z)).collect();
        let v_diag = self.v_diag.iter().map(|&z| f(z)).collect();
        let margin = if f(ZERO) == ZERO { self.margin } else { 0 };
        Self { samples, margin, spin, w_diag, v_diag }
    }

    /// Pointwise product; the margin is the smaller of the two.
    pub fn product(&self, other: &Self) -> Self {
        let zip = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>();
        Self {
            samples: zip(&self.samples, &other.samples),
            margin: self.margin.min(other.margin),
            spin: self.spin,
            w_diag: zip(&self.w_diag, &other.w_diag),
            v_diag: zip(&self.v_diag, &other.v_diag),
        }
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.map(|z| z * c);
        out.margin = self.margin;
        out
    }
}

pub fn multiplication_operator(f: &[C64], dom: &GridDomain, pair: &RectangularPair) -> Result<AlgebraElement> {
    if f.len() != dom.num_nodes() {
        return Err(Error::Shape(format!("{} samples for {} nodes", f.len(), dom.num_nodes())));
    }
    match dom.margin_of(f) {
        None => Err(Error::Margin("support leaves the interior".into())),
        Some(0) => Err(Error::Margin("support touches the interior edge; margin must be at least 1".into())),
        Some(m) => AlgebraElement::assemble(f.to_vec(), m, pair),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro, re};

    #[test]
    fn gamma_examples() {
        let g = gamma_matrices(2).unwrap();
        let [sx, sy, sz] = pauli();
        assert_eq!(g.gammas[0], sx);
        assert_eq!(g.gammas[1], sy);
        assert!(fro(&(g.grading.clone().unwrap() - sz)) < 1e-15);
        let g1 = gamma_matrices(1).unwrap();
        assert_eq!(g1.n, 1);
        assert_eq!(g1.gammas[0][[0, 0]], ONE);
        let g3 = gamma_matrices(3).unwrap();
        assert_eq!((g3.n, g3.gammas.len()), (2, 3));
        for d in 1..=6 {
            let g = gamma_matrices(d).unwrap();
            assert_eq!(g.n, 1 << (d / 2));
            assert!(g.clifford_defect() < 1e-12, "d={d}");
            assert_eq!(g.grading.is_some(), d % 2 == 0);
        }
        assert!(gamma_matrices(0).is_err() && gamma_matrices(7).is_err());
    }

    #[test]
    fn formal_dirac_three_nodes() {
        let dom = GridDomain::rect(&[2.0], &[3]).unwrap();
        let g = gamma_matrices(1).unwrap();
        let d = build_formal_dirac(&dom, &g).unwrap().to_dense();
        let s = [[0.0, 1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, -1.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((d[[i, j]] - C64::new(0.0, -0.5 * s[i][j])).norm() < 1e-15);
            }
        }
        assert_eq!(linalg::hermiticity_defect(&d), 0.0);
    }

    #[test]
    fn staggered_small() {
        let p = build_staggered_interval(3, 4.0).unwrap();
        let (dd, _) = laplacian_pair(&p);
        let e = HermEig::new(&dd).unwrap();
        let expect = [2.0 - 2f64.sqrt(), 2.0, 2.0 + 2f64.sqrt()];
        for (a, b) in e.values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(build_staggered_interval(1, 1.0).is_err());
    }

    #[test]
    fn multiplication_operator_margin() {
        let dom = GridDomain::unit_cube(2, 12).unwrap();
        let g = gamma_matrices(2).unwrap();
        let pair = build_dirichlet_pair(&dom, &g).unwrap();
        let f = bump(&dom, &[0.5, 0.5], 0.1, 0.3);
        let a = multiplication_operator(&f, &dom, &pair).unwrap();
        assert!(a.margin >= 1);
        let est = a.as_w().norm_estimate(50);
        assert!(est <= a.norm() + 1e-12 && est > 0.99 * a.norm());
        let wide = dom.sample(|_| 1.0);
        assert!(matches!(multiplication_operator(&wide, &dom, &pair), Err(Error::Margin(_))));
        let zero = vec![ZERO; dom.num_nodes()];
        let z = multiplication_operator(&zero, &dom, &pair).unwrap();
        assert_eq!(z.as_w().nnz(), 0);
    }

    #[test]
    fn factorisation_is_exact() {
        let dom = GridDomain::unit_cube(2, 10).unwrap();
        let g = gamma_matrices(2).unwrap();
        let pair = build_dirichlet_pair(&dom, &g).unwrap();
        let f = bump(&dom, &[0.5, 0.5], 0.05, 0.3);
        let a = multiplication_operator(&f, &dom, &pair).unwrap();
        let r = a.map(|z| re(z.re.sqrt()));
        let sq = r.as_w().matmul(&r.as_w()).unwrap();
        assert!(sq.sub(&a.as_w()).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn disc_mask_is_inside_rect_interior() {
        let dom = GridDomain::new(&[1.0, 1.0], &[15, 15], MaskShape::Disc).unwrap();
        let rect = GridDomain::unit_cube(2, 15).unwrap();
        assert!(dom.interior_len() < rect.interior_len());
        assert!(dom.mask.iter().zip(&rect.mask).all(|(a, b)| !a || *b));
    }
}
