//! Pre-spectral triples over Dirichlet models, their self-adjoint clones,
//! the R- and δ-derivations, and finite-scale dimension and hypothesis
//! diagnostics.

use std::sync::OnceLock;

use ndarray::{s, Array1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ideals::{quasi_norm, IdealKind, SingularSpectrum};
use crate::linalg::{self, HermEig, Mat, C64, ONE};
use crate::opmodel::{
    build_formal_dirac, dirichlet_pair_from_formal, gamma_matrices, multiplication_operator, scalar_dirichlet_eig,
    unit_ball_volume, AlgebraElement, Embedding, GammaSet, GridDomain, MaskShape, RectangularPair,
};
use crate::report::DiagnosticReport;
use crate::sparse::SparseMat;
use crate::window::{calibration_window, decay_slope, partial_sum_stability, DecayFit, PlateauStats};

const EXACT: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PreSpectralTripleModel {
    pub domain: GridDomain,
    pub gammas: GammaSet,
    /// Formal Dirac operator on `W`.
    pub formal: SparseMat,
    pub pair: RectangularPair,
    pub generators: Vec<AlgebraElement>,
    /// Grading on `W`, present for even `d`.
    pub grading: Option<SparseMat>,
    v_eig: OnceLock<HermEig>,
    w_eig: OnceLock<HermEig>,
}

impl PreSpectralTripleModel {
    /// Dirichlet model with generators given by their samples on the full lattice.
    pub fn dirichlet(domain: GridDomain, generators: &[Vec<C64>]) -> Result<Self> {
        Self::build(domain, generators, true)
    }

    /// Skips the margin precondition on generators; for negative controls.
    pub fn dirichlet_unchecked(domain: GridDomain, generators: &[Vec<C64>]) -> Result<Self> {
        Self::build(domain, generators, false)
    }

    fn build(domain: GridDomain, generators: &[Vec<C64>], checked: bool) -> Result<Self> {
        let gammas = gamma_matrices(domain.d)?;
        let formal = build_formal_dirac(&domain, &gammas)?;
        let pair = dirichlet_pair_from_formal(&domain, &gammas, &formal)?;
        let gens = generators
            .iter()
            .map(|f| {
                if checked {
                    multiplication_operator(f, &domain, &pair)
                } else {
                    AlgebraElement::unchecked(f.clone(), &domain, &pair)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let lattice = SparseMat::identity(domain.num_nodes());
        let grading = gammas.grading.as_ref().map(|g| SparseMat::from_dense(g).kron(&lattice));
        if let Some(g) = &grading {
            let anti = g.anticommutator(&formal)?.max_abs();
            if anti > EXACT {
                return Err(Error::Input(format!("grading fails to anticommute with the Dirac operator: {anti:e}")));
            }
            for a in &gens {
                let c = g.commutator(&a.as_w())?.max_abs();
                if c > EXACT {
                    return Err(Error::Input(format!("grading fails to commute with a generator: {c:e}")));
                }
            }
        }
        Ok(Self {
            domain,
            gammas,
            formal,
            pair,
            generators: gens,
            grading,
            v_eig: OnceLock::new(),
            w_eig: OnceLock::new(),
        })
    }

    pub fn element(&self, f: &[C64]) -> Result<AlgebraElement> {
        multiplication_operator(f, &self.domain, &self.pair)
    }

    pub fn embed(&self) -> &Embedding {
        self.pair.embed.as_ref().expect("Dirichlet models carry an embedding")
    }

    pub fn v_dim(&self) -> usize {
        self.pair.v_dim
    }

    pub fn w_dim(&self) -> usize {
        self.pair.w_dim
    }

    pub fn spin(&self) -> usize {
        self.gammas.n
    }

    pub fn grading_v(&self) -> Option<SparseMat> {
        self.grading.as_ref().map(|g| self.embed().compress_sparse(g))
    }

    /// Eigendecomposition of `D*D` on `V`; Kronecker-assembled on rectangles.
    pub fn v_spectrum(&self) -> Result<&HermEig> {
        if let Some(e) = self.v_eig.get() {
            return Ok(e);
        }
        let eig = if self.domain.shape == MaskShape::Rect {
            let scalar = scalar_dirichlet_eig(&self.domain)?;
            let n = self.spin();
            let values: Vec<f64> = (0..n).flat_map(|_| scalar.values.iter().copied()).collect();
            HermEig::from_parts(Array1::from(values), linalg::kron(&linalg::identity(n), &scalar.vectors))
        } else {
            HermEig::new(&self.pair.dstar_d().to_dense())?
        };
        Ok(self.v_eig.get_or_init(|| eig))
    }

    /// Eigendecomposition of `DD*` on `W`.
    pub fn w_spectrum(&self) -> Result<&HermEig> {
        if let Some(e) = self.w_eig.get() {
            return Ok(e);
        }
        let eig = HermEig::new(&self.pair.d_dstar().to_dense())?;
        Ok(self.w_eig.get_or_init(|| eig))
    }

    /// Scalar Dirichlet block `L` with `D*D = 1_N ⊗ L` (rectangles only).
    pub fn scalar_spectrum(&self) -> Result<HermEig> {
        scalar_dirichlet_eig(&self.domain)
    }
}

/// `∂(a) = [𝒟, 1⊗M_a]` on `W`.
pub fn partial_commutator(t: &PreSpectralTripleModel, a: &AlgebraElement) -> Result<SparseMat> {
    if a.margin < 1 {
        return Err(Error::Margin(format!("margin {} is below the stencil radius", a.margin)));
    }
    t.formal.commutator(&a.as_w())
}

/// Unchecked commutator, used where the margin itself is under test.
fn raw_commutator(t: &PreSpectralTripleModel, a: &AlgebraElement) -> Result<SparseMat> {
    t.formal.commutator(&a.as_w())
}

/// Largest entry of `X` outside the `V`-block, i.e. of `X - P X P` with `P = EE*`.
fn leakage(x: &SparseMat, e: &Embedding) -> f64 {
    let mut inside = vec![false; e.w_dim];
    for &c in &e.cols {
        inside[c] = true;
    }
    x.triplets().filter(|&(i, j, _)| !(inside[i] && inside[j])).map(|(_, _, z)| z.norm()).fold(0.0, f64::max)
}

pub fn validate_axioms(t: &PreSpectralTripleModel, tol: f64) -> Result<DiagnosticReport> {
    let mut rep = DiagnosticReport::new("axioms");
    let e = t.embed();
    rep.at_most("symmetry_defect", t.pair.symmetry_defect()?, EXACT, "closed symmetric operator");
    let spec = t.v_spectrum()?;
    let inv_sqrt: Vec<f64> = spec.values.iter().map(|&l| (1.0 + l.max(0.0)).powf(-0.5)).collect();
    for (g, a) in t.generators.iter().enumerate() {
        rep.at_most(&format!("algebra_into_domain[{g}]"), leakage(&a.as_w(), e), EXACT, "maps dom(D*) into dom(D)");
        let d = raw_commutator(t, a)?;
        rep.at_most(&format!("commutator_support[{g}]"), leakage(&d, e), EXACT, "has bounded extension")
            .with_note("range and support of the commutator stay inside the interior");
        rep.record_check(&format!("commutator_norm[{g}]"), d.norm_estimate(200), "has bounded extension");
        let av = linalg::mul_diag(&spec.to_basis(&a.as_v().to_dense()), &inv_sqrt);
        let mu = linalg::svals(&av)?;
        let mid = (t.v_dim() + 1) / 2;
        let ratio = if mu[0] > 0.0 { mu[mid.min(mu.len() - 1)] / mu[0] } else { 0.0 };
        rep.at_most(&format!("compactness_ratio[{g}]"), ratio, tol, "a(1+D*D)^{-1/2} is compact");
    }
    if let Some(gr) = &t.grading {
        let id = SparseMat::identity(t.w_dim());
        rep.at_most("grading_square", gr.matmul(gr)?.sub(&id)?.max_abs(), EXACT, "grading");
        rep.at_most("grading_hermitian", gr.hermiticity_defect(), EXACT, "grading");
        rep.at_most("grading_anticommutes", gr.anticommutator(&t.formal)?.max_abs(), EXACT, "anticommutes with D");
        for (g, a) in t.generators.iter().enumerate() {
            rep.at_most(&format!("grading_commutes[{g}]"), gr.commutator(&a.as_w())?.max_abs(), EXACT, "grading");
        }
    }
    // Polar exchange Dhat (1+D*D)^{-1} = (1+DD*)^{-1} Dhat, checked through
    // the residual of (1+DD*) X = Dhat, which bounds the defect since ‖(1+DD*)^{-1}‖ ≤ 1.
    let resolvent_v = spec.apply(|l| 1.0 / (1.0 + l));
    let x = t.pair.dhat.mul_dense(&resolvent_v)?;
    let lhs = &x + &t.pair.d_dstar().mul_dense(&x)?;
    let dhat = t.pair.dhat.to_dense();
    rep.at_most("polar_exchange_defect", linalg::max_abs(&(lhs - &dhat)), 1e-10, "the following useful trick");
    Ok(rep)
}

// ---------------------------------------------------------------- clone

/// Self-adjoint clone on `V ⊕ W`.
#[derive(Debug, Clone)]
pub struct CloneTriple {
    pub v_dim: usize,
    pub w_dim: usize,
    pub d2: SparseMat,
    pub embed: Embedding,
    pub grading2: Option<SparseMat>,
}

fn place(out: &mut Vec<(usize, usize, C64)>, x: &SparseMat, r0: usize, c0: usize, scale: C64) {
    out.extend(x.triplets().map(|(i, j, z)| (i + r0, j + c0, z * scale)));
}

pub fn clone(t: &PreSpectralTripleModel) -> CloneTriple {
    let (v, w) = (t.v_dim(), t.w_dim());
    let mut trips = Vec::new();
    place(&mut trips, &t.pair.dhat.adjoint(), 0, v, ONE);
    place(&mut trips, &t.pair.dhat, v, 0, ONE);
    let d2 = SparseMat::from_triplets(v + w, v + w, trips);
    let grading2 = t.grading.as_ref().map(|g| {
        let mut tr = Vec::new();
        place(&mut tr, &t.embed().compress_sparse(g), 0, 0, ONE);
        place(&mut tr, g, v, v, ONE);
        SparseMat::from_triplets(v + w, v + w, tr)
    });
    CloneTriple { v_dim: v, w_dim: w, d2, embed: t.embed().clone(), grading2 }
}

impl CloneTriple {
    pub fn dim(&self) -> usize {
        self.v_dim + self.w_dim
    }

    /// `½[[E*XE, E*X],[XE, X]]` for an operator `X` on `W`.
    pub fn q_block(&self, x: &SparseMat) -> SparseMat {
        let e = &self.embed;
        let half = linalg::re(0.5);
        let mut trips = Vec::new();
        place(&mut trips, &e.compress_sparse(x), 0, 0, half);
        place(&mut trips, &x.select_rows(&e.cols), 0, self.v_dim, half);
        place(&mut trips, &x.select_cols(&e.cols), self.v_dim, 0, half);
        place(&mut trips, x, self.v_dim, self.v_dim, half);
        SparseMat::from_triplets(self.dim(), self.dim(), trips)
    }

    /// Representation `a ↦ a ⊗ q`.
    pub fn rep(&self, a: &AlgebraElement) -> SparseMat {
        self.q_block(&a.as_w())
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.d2.hermiticity_defect()
    }

    /// `‖[D2, rep(a)] − q(∂(a))‖_max`.
    pub fn commutator_defect(&self, t: &PreSpectralTripleModel, a: &AlgebraElement) -> Result<f64> {
        let lhs = self.d2.commutator(&self.rep(a))?;
        let rhs = self.q_block(&partial_commutator(t, a)?);
        Ok(lhs.sub(&rhs)?.max_abs())
    }
}

/// One R-step `X ↦ (S_i X − X S_j) c_j` with sparse `S` and dense `c = (1+S_j)^{-1/2}`.
fn r_step(si: &SparseMat, sj: &SparseMat, cj: &Mat, x: &Mat) -> Result<Mat> {
    let comm = si.mul_dense(x)? - sj.dense_mul(x)?;
    Ok(comm.dot(cj))
}

/// Relative defect of the clone block formula for `R^k_{D2²}(rep(a))`, `k = 1..=kmax`.
pub fn clone_r_block_defects(t: &PreSpectralTripleModel, a: &AlgebraElement, kmax: usize) -> Result<Vec<f64>> {
    if a.margin < 1 {
        return Err(Error::Margin("block formula needs margin at least 1".into()));
    }
    let e = t.embed();
    let sv = t.pair.dstar_d();
    let sw = t.pair.d_dstar();
    let cv = t.v_spectrum()?.apply(|l| (1.0 + l).powf(-0.5));
    let cw = t.w_spectrum()?.apply(|l| (1.0 + l).powf(-0.5));
    let half = |m: Mat| m.mapv(|z| z * 0.5);
    let aw = a.as_w().to_dense();
    let av = a.as_v().to_dense();
    // Blocks of rep(a), each iterated with its own pair of S's.
    let mut x11 = half(av.clone());
    let mut x12 = half(e.restrict_rows(&aw));
    let mut x21 = half(e.restrict_cols(&aw));
    let mut x22 = half(aw.clone());
    let mut pv = av;
    let mut pw = aw;
    let mut out = Vec::with_capacity(kmax);
    for _ in 0..kmax {
        x11 = r_step(&sv, &sv, &cv, &x11)?;
        x12 = r_step(&sv, &sw, &cw, &x12)?;
        x21 = r_step(&sw, &sv, &cv, &x21)?;
        x22 = r_step(&sw, &sw, &cw, &x22)?;
        pv = r_step(&sv, &sv, &cv, &pv)?;
        pw = r_step(&sw, &sw, &cw, &pw)?;
        let r11 = half(pv.clone());
        let r12 = half(e.restrict_rows(&pw));
        let r21 = half(e.lift_rows(&pv));
        let r22 = half(pw.clone());
        let scale = [&r11, &r12, &r21, &r22].iter().map(|m| linalg::max_abs(m)).fold(1.0, f64::max);
        let defect = [
            linalg::max_abs(&(&x11 - &r11)),
            linalg::max_abs(&(&x12 - &r12)),
            linalg::max_abs(&(&x21 - &r21)),
            linalg::max_abs(&(&x22 - &r22)),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        out.push(defect / scale);
    }
    Ok(out)
}

/// Clone exactness report: self-adjointness, commutator identity, grading
/// relations, multiplicativity of the representation and the block formula.
pub fn clone_diagnostics(t: &PreSpectralTripleModel, kmax: usize) -> Result<DiagnosticReport> {
    let cl = clone(t);
    let mut rep = DiagnosticReport::new("clone");
    rep.at_most("d2_hermiticity_defect", cl.hermiticity_defect(), 0.0, "D_2 is self-adjoint");
    for (g, a) in t.generators.iter().enumerate() {
        rep.at_most(
            &format!("commutator_identity[{g}]"),
            cl.commutator_defect(t, a)?,
            EXACT,
            "bounded extension equal to the commutator tensor q",
        );
        let root = a.map(|z| linalg::re(z.re.max(0.0).sqrt()));
        let ra = cl.rep(&root);
        let sq = ra.matmul(&ra)?.sub(&cl.rep(a))?.max_abs();
        rep.at_most(&format!("factorisation_closure[{g}]"), sq, EXACT, "can be written as a product");
        if let Some(g2) = &cl.grading2 {
            rep.at_most(
                &format!("grading_commutes_rep[{g}]"),
                g2.commutator(&cl.rep(a))?.max_abs(),
                EXACT,
                "clone grading",
            );
        }
        for (k, d) in clone_r_block_defects(t, a, kmax)?.into_iter().enumerate() {
            rep.at_most(&format!("r_block_formula[{g},k{}]", k + 1), d, 1e-10, "is a smooth spectral triple");
        }
    }
    if let Some(g2) = &cl.grading2 {
        rep.at_most("grading_anticommutes_d2", g2.anticommutator(&cl.d2)?.max_abs(), EXACT, "clone grading");
    }
    Ok(rep)
}

/// Checks `W_u D2 W_u* = diag(T, −T)` and `W_u rep(a) W_u* = a ⊕ 0` for `V = W`.
/// The intertwining `rep(a) W_u = W_u (a ⊕ 0)` is recorded, not asserted.
pub fn self_adjoint_collapse(t: &Mat, a: &Mat) -> Result<DiagnosticReport> {
    let n = linalg::check_square(t, "T")?;
    if a.dim() != (n, n) {
        return Err(Error::Shape(format!("algebra operator {:?} vs T of size {n}", a.dim())));
    }
    let herm = linalg::hermiticity_defect(t);
    if herm > EXACT * (1.0 + linalg::max_abs(t)) {
        return Err(Error::Input(format!("T is not Hermitian (defect {herm:e})")));
    }
    let blocks = |b11: &Mat, b12: &Mat, b21: &Mat, b22: &Mat| {
        let mut m = linalg::zeros(2 * n, 2 * n);
        m.slice_mut(s![..n, ..n]).assign(b11);
        m.slice_mut(s![..n, n..]).assign(b12);
        m.slice_mut(s![n.., ..n]).assign(b21);
        m.slice_mut(s![n.., n..]).assign(b22);
        m
    };
    let id = linalg::identity(n);
    let z = linalg::zeros(n, n);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let wu = blocks(&id, &id, &id.mapv(|x| -x), &id).mapv(|x| x * r);
    let wus = linalg::adjoint(&wu);
    let d2 = blocks(&z, t, t, &z);
    let half_a = a.mapv(|x| x * 0.5);
    let rep_a = blocks(&half_a, &half_a, &half_a, &half_a);
    let a0 = blocks(a, &z, &z, &z);
    let mut rep = DiagnosticReport::new("self_adjoint_collapse");
    let diag = blocks(t, &z, &z, &t.mapv(|x| -x));
    rep.at_most(
        "diagonalises_d2",
        linalg::max_abs(&(wu.dot(&d2).dot(&wus) - diag)),
        EXACT,
        "effects a unitary equivalence",
    );
    rep.at_most(
        "conjugates_rep",
        linalg::max_abs(&(wu.dot(&rep_a).dot(&wus) - &a0)),
        EXACT,
        "effects a unitary equivalence",
    );
    rep.record_check(
        "literal_intertwining_defect",
        linalg::max_abs(&(rep_a.dot(&wu) - wu.dot(&a0))),
        "effects a unitary equivalence",
    )
    .with_note("rep(a) W_u equals W_u (0 ⊕ a); the conjugated form is the unitary equivalence");
    Ok(rep)
}

/// `R^k_E(T)` with `R(T) = [E2, T](1+E2)^{-1/2}`.
pub fn r_map(e2: &Mat, t: &Mat, k: usize) -> Result<Mat> {
    let n = linalg::check_square(e2, "E2")?;
    if t.dim() != (n, n) {
        return Err(Error::Shape(format!("operator {:?} vs E2 of size {n}", t.dim())));
    }
    let c = HermEig::new(e2)?.apply(|l| (1.0 + l).powf(-0.5));
    let mut x = t.clone();
    for _ in 0..k {
        x = linalg::commutator(e2, &x).dot(&c);
    }
    Ok(x)
}

/// Iterated commutator `[Eabs, ·]^k(T)`.
pub fn delta_map(eabs: &Mat, t: &Mat, k: usize) -> Result<Mat> {
    let n = linalg::check_square(eabs, "Eabs")?;
    if t.dim() != (n, n) {
        return Err(Error::Shape(format!("operator {:?} vs Eabs of size {n}", t.dim())));
    }
    let mut x = t.clone();
    for _ in 0..k {
        x = linalg::commutator(eabs, &x);
    }
    Ok(x)
}

// ---------------------------------------------------------------- dimension

/// `X̃_ij ((λ_i − λ_j)/√(1+λ_j))^k (1+λ_j)^{-q}`: the eigenbasis form of
/// `R^k(X)(1+S)^{-q}` up to a unitary, which leaves singular values unchanged.
fn weighted_r_in_basis(x_basis: &Mat, lambda: &[f64], k: usize, q: f64) -> Mat {
    let mut out = x_basis.clone();
    for ((i, j), z) in out.indexed_iter_mut() {
        let (li, lj) = (lambda[i], lambda[j].max(0.0));
        let r = ((li - lj) / (1.0 + lj).sqrt()).powi(k as i32);
        *z *= r * (1.0 + lj).powf(-q);
    }
    out
}

fn weak_statistic(mu: &[f64], p: f64) -> f64 {
    SingularSpectrum::new(mu.to_vec()).and_then(|s| quasi_norm(&s, IdealKind::Weak(p))).unwrap_or(f64::NAN)
}

pub fn dimension_diagnostic(t: &PreSpectralTripleModel, p: f64, kmax: usize) -> Result<DiagnosticReport> {
    if !(p > 0.0) {
        return Err(Error::Input(format!("dimension p must be positive, got {p}")));
    }
    let mut rep = DiagnosticReport::new("dimension");
    let e = t.embed();
    let vs = t.v_spectrum()?;
    let ws = t.w_spectrum()?;
    let lv: Vec<f64> = vs.values.to_vec();
    let lw: Vec<f64> = ws.values.to_vec();
    let window = calibration_window(t.v_dim());
    let window_w = calibration_window(t.w_dim());
    let mut probes: Vec<(String, SparseMat)> = Vec::new();
    for (g, a) in t.generators.iter().enumerate() {
        probes.push((format!("a{g}"), a.as_w()));
        probes.push((format!("da{g}"), partial_commutator(t, a)?));
    }
    for (name, xw) in probes {
        let xw_dense = xw.to_dense();
        let xv_basis = vs.to_basis(&e.compress(&xw_dense));
        let xw_basis = ws.to_basis(&xw_dense);
        for k in 0..=kmax {
            let mu_v = linalg::svals(&weighted_r_in_basis(&xv_basis, &lv, k, 0.5 * p))?;
            let mu_w = linalg::svals(&weighted_r_in_basis(&xw_basis, &lw, k, 0.5 * p))?;
            let pv = PlateauStats::new(&mu_v, 1.0, window)?;
            let pw = PlateauStats::new(&mu_w, 1.0, window_w)?;
            let tag = format!("{name},k{k}");
            if name.starts_with('a') && k == 0 {
                rep.at_most(&format!("plateau_ratio[{tag}]"), pv.ratio(), 1.5, "pre-spectral triple is p-dimensional");
            } else {
                rep.record_check(&format!("plateau_ratio[{tag}]"), pv.ratio(), "smoothly p-dimensional");
            }
            rep.value(&format!("plateau_mean[{tag}]"), pv.mean);
            rep.record_check(&format!("plateau_ratio_dd_star[{tag}]"), pw.ratio(), "smoothly p-dimensional");
            rep.value(&format!("plateau_mean_dd_star[{tag}]"), pw.mean);
            let mu_half = linalg::svals(&weighted_r_in_basis(&xv_basis, &lv, k, 0.5))?;
            rep.record_check(
                &format!("weak_p_statistic[{tag}]"),
                weak_statistic(&mu_half, p),
                "we may apply the Araki-Lieb-Thirring",
            );
            rep.value(&format!("r_norm[{tag}]"), mu_v.first().copied().unwrap_or(0.0));
        }
    }
    Ok(rep)
}

/// Dimension probe on a bare pair; without an algebra the only candidate is
/// the identity, which is not compactly supported and is flagged.
pub fn dimension_diagnostic_pair(pair: &RectangularPair, p: f64) -> Result<DiagnosticReport> {
    let mut rep = DiagnosticReport::new("dimension");
    if pair.has_algebra() {
        rep.record_check("algebra_probe", 1.0, "pre-spectral triple is p-dimensional");
        return Ok(rep);
    }
    rep.push("algebra_probe", f64::NAN, f64::NAN, false, "pre-spectral triple is p-dimensional")
        .with_note("pair has no algebra; identity probe is not compactly supported");
    let eig = HermEig::new(&pair.dstar_d().to_dense())?;
    let mut mu: Vec<f64> = eig.values.iter().map(|&l| (1.0 + l.max(0.0)).powf(-0.5 * p)).collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    let stats = PlateauStats::new(&mu, 1.0, calibration_window(mu.len()))?;
    rep.record_check("identity_plateau_ratio", stats.ratio(), "pre-spectral triple is p-dimensional");
    Ok(rep)
}

/// Weyl plateau `(n+1)^{2k/d} μ(n, (1⊗M_f)(1+D*D)^{-k})` from the scalar block.
pub fn weyl_plateau(t: &PreSpectralTripleModel, a: &AlgebraElement, k: u32) -> Result<PlateauStats> {
    let scalar = t.scalar_spectrum()?;
    let interior = t.domain.interior();
    let f: Vec<C64> = interior.iter().map(|&i| a.samples[i]).collect();
    let mut m = linalg::adjoint(&scalar.vectors);
    for (i, mut row) in m.columns_mut().into_iter().enumerate() {
        row.mapv_inplace(|z| z * f[i]);
    }
    let mut m = m.dot(&scalar.vectors);
    let w: Vec<f64> = scalar.values.iter().map(|&l| (1.0 + l.max(0.0)).powi(-(k as i32))).collect();
    m = linalg::mul_diag(&m, &w);
    let mu1 = linalg::svals(&m)?;
    let n = t.spin();
    let mu: Vec<f64> = mu1.iter().flat_map(|&x| std::iter::repeat(x).take(n)).collect();
    PlateauStats::new(&mu, 2.0 * k as f64 / t.domain.d as f64, calibration_window(t.v_dim()))
}

#[derive(Debug, Clone, Serialize)]
pub struct WeylCount {
    pub window: (usize, usize),
    pub multiplicity: f64,
    pub max_relative_error: f64,
    pub samples: Vec<(f64, f64, f64)>,
}

/// Midpoint eigenvalue count of `D*D` against `m ω_d |Ω| λ^{d/2}/(2π)^d`,
/// with `m = N·2^d` for spin and lattice doubling.
pub fn weyl_count(t: &PreSpectralTripleModel) -> Result<WeylCount> {
    let scalar = t.scalar_spectrum()?;
    let n = t.spin();
    let mut ev: Vec<f64> = scalar.values.iter().flat_map(|&x| std::iter::repeat(x).take(n)).collect();
    ev.sort_by(f64::total_cmp);
    let d = t.domain.d;
    let mult = (n * (1 << d)) as f64;
    let ball = unit_ball_volume(d);
    let vol = t.domain.volume();
    let window = calibration_window(ev.len());
    let mut samples = Vec::new();
    let mut worst: f64 = 0.0;
    for idx in window.0..=window.1 {
        let lam = ev[idx];
        let below = ev.partition_point(|&x| x < lam) as f64;
        let upto = ev.partition_point(|&x| x <= lam) as f64;
        let count = 0.5 * (below + upto);
        let weyl = mult * ball * vol * lam.powf(d as f64 / 2.0) / (2.0 * std::f64::consts::PI).powi(d as i32);
        worst = worst.max((count / weyl - 1.0).abs());
        samples.push((lam, count, weyl));
    }
    Ok(WeylCount { window, multiplicity: mult, max_relative_error: worst, samples })
}

/// Decay of `μ(n, a_V((1+D*D)^{-1} − E*(1+DD*)^{-1}E))` over the window.
pub fn resolvent_difference_decay(t: &PreSpectralTripleModel, a: &AlgebraElement) -> Result<(DecayFit, Vec<f64>)> {
    let rv = t.v_spectrum()?.apply(|l| 1.0 / (1.0 + l));
    let rw = t.w_spectrum()?.apply(|l| 1.0 / (1.0 + l));
    let diff = rv - t.embed().compress(&rw);
    let mu = linalg::svals(&a.as_v().mul_dense(&diff)?)?;
    let fit = decay_slope(&mu, calibration_window(t.v_dim()), 1e-300)?;
    Ok((fit, mu))
}

// ---------------------------------------------------------------- hypotheses

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisOptions {
    pub lambdas: Vec<f64>,
    pub ks: Vec<usize>,
    #[serde(skip)]
    pub dd_star_override: Option<Mat>,
}

impl Default for HypothesisOptions {
    fn default() -> Self {
        let lambdas = (0..9).map(|i| 10f64.powf(1.0 + 2.0 * i as f64 / 8.0)).collect();
        Self { lambdas, ks: vec![0, 1], dd_star_override: None }
    }
}

/// Trace norms `‖δ₀^k(x)(T₀+iλ)^{-1}‖₁` on the clone, per `λ`.
pub fn lambda_probe(t: &PreSpectralTripleModel, a: &AlgebraElement, k: usize, lambdas: &[f64]) -> Result<Vec<f64>> {
    let cl = clone(t);
    let d2 = cl.d2.to_dense();
    let eig = HermEig::new(&d2)?;
    let top = eig.values.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let thr = 1e-8 * top;
    let absvals: Vec<f64> = eig.values.iter().map(|&w| (1.0 + w * w).sqrt()).collect();
    let t0: Vec<f64> =
        eig.values.iter().zip(&absvals).map(|(&w, &m)| if w.abs() <= thr || w > 0.0 { m } else { -m }).collect();
    let mut x = eig.to_basis(&cl.rep(a).to_dense());
    for _ in 0..k {
        for ((i, j), z) in x.indexed_iter_mut() {
            *z *= absvals[i] - absvals[j];
        }
    }
    lambdas
        .iter()
        .map(|&lam| {
            let mut y = x.clone();
            for ((_, j), z) in y.indexed_iter_mut() {
                *z /= C64::new(t0[j], lam);
            }
            Ok(linalg::svals(&y)?.iter().sum())
        })
        .collect()
}

pub fn hypothesis_diagnostics(
    t: &PreSpectralTripleModel,
    p: f64,
    opts: &HypothesisOptions,
) -> Result<DiagnosticReport> {
    if !(p >= 1.0) {
        return Err(Error::Input(format!("hypothesis probes need p >= 1, got {p}")));
    }
    let mut rep = DiagnosticReport::new("hypotheses");
    let e = t.embed();
    let log_l: Vec<f64> = opts.lambdas.iter().map(|l| l.ln()).collect();
    for (g, a) in t.generators.iter().enumerate() {
        for &k in &opts.ks {
            let norms = lambda_probe(t, a, k, &opts.lambdas)?;
            let y: Vec<f64> = norms.iter().map(|x| x.ln()).collect();
            let (slope, _) = linalg::linear_fit(&log_l, &y);
            rep.at_most(
                &format!("lambda_slope_error[{g},k{k}]"),
                (slope + 1.0).abs(),
                0.15,
                "we have the following asymptotic",
            );
            rep.value(&format!("lambda_slope[{g},k{k}]"), slope);
        }
    }
    let vs = t.v_spectrum()?;
    let ws_owned;
    let ws = match &opts.dd_star_override {
        Some(m) => {
            if m.dim() != (t.w_dim(), t.w_dim()) {
                return Err(Error::Shape("DD* override must act on W".into()));
            }
            ws_owned = HermEig::new(m)?;
            &ws_owned
        }
        None => t.w_spectrum()?,
    };
    let window = calibration_window(t.v_dim());
    let rv = vs.apply(|l| 1.0 / (1.0 + l));
    let rw = e.compress(&ws.apply(|l| 1.0 / (1.0 + l.max(0.0))));
    let pv = vs.apply(|l| (1.0 + l).powf(-0.5 * p));
    let pw = ws.apply(|l| (1.0 + l.max(0.0)).powf(-0.5 * p));
    for (g, a) in t.generators.iter().enumerate() {
        let av = a.as_v();
        let h51 = av.dense_mul(&av.mul_dense(&rw)?)? - av.dense_mul(&av.mul_dense(&rv)?)?;
        let mu = linalg::svals(&h51)?;
        let fit = decay_slope(&mu, window, 1e-300)?;
        rep.at_most(&format!("sandwich_resolvent_slope[{g}]"), fit.slope, -4.0 / p, "a(1+DD*)^{-1}a - a(1+D*D)^{-1}a");
        let apow = a.map(|z| z.powf(p));
        let diff = apow.as_v().dense_mul(&pv)? - e.compress(&apow.as_w().dense_mul(&pw)?);
        let mu = linalg::svals(&diff)?;
        rep.at_most(
            &format!("power_difference_partial_sum_change[{g}]"),
            partial_sum_stability(&mu, window.1),
            0.05,
            "is trace class",
        );
        rep.value(&format!("power_difference_trace_norm[{g}]"), mu.iter().sum());
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opmodel::bump;
    use crate::sample;

    fn small_model(n: usize) -> PreSpectralTripleModel {
        let dom = GridDomain::unit_cube(2, n).unwrap();
        let f = bump(&dom, &[0.5, 0.5], 0.05, 0.25);
        PreSpectralTripleModel::dirichlet(dom, &[f]).unwrap()
    }

    #[test]
    fn r_map_hand_example() {
        let e2 = linalg::diag_real(&[0.0, 3.0]);
        let mut t = linalg::zeros(2, 2);
        t[[0, 1]] = ONE;
        let r = r_map(&e2, &t, 1).unwrap();
        assert!((r[[0, 1]] - linalg::re(-1.5)).norm() < 1e-14);
        assert!(r[[0, 0]].norm() + r[[1, 0]].norm() + r[[1, 1]].norm() < 1e-14);
        let commuting = linalg::diag_real(&[2.0, 5.0]);
        assert!(linalg::max_abs(&r_map(&e2, &commuting, 2).unwrap()) < 1e-14);
        assert!(linalg::max_abs(&delta_map(&e2, &commuting, 1).unwrap()) < 1e-14);
    }

    #[test]
    fn delta_r_conversion() {
        let mut rng = sample::rng(3);
        let t = sample::hermitian(6, &mut rng);
        let x = sample::complex_matrix(6, 6, &mut rng);
        let t2 = t.dot(&t);
        let eig = HermEig::new(&t).unwrap();
        let t0 = eig.apply(|w| (1.0 + w * w).sqrt());
        let t0_inv = eig.apply(|w| 1.0 / (1.0 + w * w).sqrt());
        let d1 = delta_map(&t0, &x, 1).unwrap();
        let d2 = delta_map(&t0, &x, 2).unwrap();
        let r = r_map(&t2, &x, 1).unwrap();
        let expect = d1.mapv(|z| z * 2.0) + d2.dot(&t0_inv);
        assert!(linalg::max_abs(&(r - expect)) < 1e-10);
        // Binomial expansion for k = 2.
        let r2 = r_map(&t2, &x, 2).unwrap();
        let mut sum = linalg::zeros(6, 6);
        let binom = [1.0, 2.0, 1.0];
        for l in 0..=2usize {
            let d = delta_map(&t0, &x, 4 - l).unwrap();
            let pw = eig.apply(|w| (1.0 + w * w).powf(0.5 * (l as f64 - 2.0)));
            sum = sum + d.dot(&pw).mapv(|z| z * binom[l] * 2f64.powi(l as i32));
        }
        assert!(linalg::max_abs(&(r2 - sum)) < 1e-9);
    }

    #[test]
    fn collapse_examples() {
        let t = linalg::diag_real(&[1.0, -1.0]);
        let a = linalg::diag_real(&[1.0, 0.0]);
        assert!(self_adjoint_collapse(&t, &a).unwrap().all_pass());
        let z = linalg::zeros(3, 3);
        assert!(self_adjoint_collapse(&z, &linalg::identity(3)).unwrap().all_pass());
        let mut rng = sample::rng(9);
        let h = sample::hermitian(8, &mut rng);
        let d = linalg::diag_real(&sample::real_diagonal(8, -1.0, 1.0, &mut rng));
        let r = self_adjoint_collapse(&h, &d).unwrap();
        assert!(r.all_pass());
        assert!(r.get("literal_intertwining_defect").unwrap().measured > 0.1);
        assert!(self_adjoint_collapse(&sample::complex_matrix(3, 3, &mut rng), &z).is_err());
    }

    #[test]
    fn partial_commutator_adjoint() {
        let t = small_model(12);
        let a = &t.generators[0];
        let c = partial_commutator(&t, a).unwrap();
        let cbar = partial_commutator(&t, &a.conj()).unwrap();
        assert!(c.adjoint().add(&cbar).unwrap().max_abs() < 1e-12);
        let zero = t.element(&vec![C64::new(0.0, 0.0); t.domain.num_nodes()]).unwrap();
        assert_eq!(partial_commutator(&t, &zero).unwrap().nnz(), 0);
    }

    #[test]
    fn ramp_commutator_is_minus_i() {
        // d = 1, N = 1: on the flat part of a ramp the commutator is -i·slope.
        let dom = GridDomain::rect(&[1.0], &[41]).unwrap();
        let f = dom.sample(|x| {
            let y = x[0];
            if (0.2..=0.8).contains(&y) {
                y - 0.2
            } else {
                0.0
            }
        });
        let t = PreSpectralTripleModel::dirichlet(dom.clone(), &[f]).unwrap();
        let c = partial_commutator(&t, &t.generators[0]).unwrap();
        let v: Vec<C64> = vec![ONE; dom.num_nodes()];
        let out = c.mul_vec(&v);
        for (k, z) in out.iter().enumerate() {
            let x = dom.coords(k)[0];
            if x > 0.3 && x < 0.7 {
                assert!((z - (-linalg::I)).norm() < 1e-10, "x={x}: {z}");
            }
        }
    }

    #[test]
    fn model_axioms_and_clone() {
        let dom = GridDomain::unit_cube(2, 20).unwrap();
        let f = bump(&dom, &[0.5, 0.5], 0.02, 0.12);
        let t = PreSpectralTripleModel::dirichlet(dom, &[f]).unwrap();
        assert!(t.generators[0].margin >= 6);
        let rep = validate_axioms(&t, 0.2).unwrap();
        assert!(rep.all_pass(), "{:?}", rep.failures());
        let cr = clone_diagnostics(&t, 2).unwrap();
        assert!(cr.all_pass(), "{:?}", cr.failures());
    }

    #[test]
    fn margin_violation_is_detected() {
        let dom = GridDomain::unit_cube(2, 10).unwrap();
        // Support reaching the last interior row: margin 0.
        let f = dom.sample(|x| if x[0] > 0.1 && x[0] < 0.95 && x[1] > 0.3 && x[1] < 0.7 { 1.0 } else { 0.0 });
        assert!(PreSpectralTripleModel::dirichlet(dom.clone(), &[f.clone()]).is_err());
        let t = PreSpectralTripleModel::dirichlet_unchecked(dom, &[f]).unwrap();
        let rep = validate_axioms(&t, 0.5).unwrap();
        assert!(!rep.get("commutator_support[0]").unwrap().pass);
    }

    #[test]
    fn spectrum_of_clone_square() {
        let t = small_model(8);
        let cl = clone(&t);
        let d2 = cl.d2.to_dense();
        let sq = HermEig::new(&d2.dot(&d2)).unwrap();
        let mut both: Vec<f64> = t.v_spectrum().unwrap().values.to_vec();
        both.extend(t.w_spectrum().unwrap().values.iter());
        both.sort_by(f64::total_cmp);
        for (a, b) in sq.values.iter().zip(&both) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn spinor_diagonal_laplacian() {
        let t = small_model(9);
        let dd = t.pair.dstar_d().to_dense();
        let m = t.domain.interior_len();
        let l = dd.slice(s![..m, ..m]).to_owned();
        assert!(linalg::max_abs(&(dd.slice(s![m.., m..]).to_owned() - &l)) < 1e-12);
        assert!(linalg::max_abs(&dd.slice(s![..m, m..]).to_owned()) < 1e-12);
        let fast = t.v_spectrum().unwrap();
        assert!(linalg::max_abs(&(fast.apply(|x| x) - dd)) < 1e-9);
    }
}
