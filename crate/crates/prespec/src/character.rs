//! Hochschild chains over the model algebra, the Fredholm apparatus built
//! from the phase of `Dhat`, the Chern pairing and the local trace side of
//! the character formula.

use ndarray::s;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ideals::{dixmier_estimate, order_by_modulus, zeta_residue_weighted, TraceEstimate, TraceMethod};
use crate::linalg::{self, HermEig, Mat, C64, ONE, ZERO};
use crate::opmodel::{bump, plateau, AlgebraElement, Embedding, GridDomain, RectangularPair};
use crate::report::DiagnosticReport;
use crate::sparse::SparseMat;
use crate::triple::{clone, partial_commutator, PreSpectralTripleModel};

/// Cycle condition tolerance on the boundary norm.
pub const CYCLE_TOL: f64 = 1e-9;
/// Singular values below `KERNEL_REL·‖Dhat‖` count as kernel.
pub const KERNEL_REL: f64 = 1e-8;

// ---------------------------------------------------------------- chains

#[derive(Debug, Clone)]
pub struct ChainTerm {
    pub coeff: C64,
    pub factors: Vec<AlgebraElement>,
}

#[derive(Debug, Clone)]
pub struct HochschildChain {
    pub degree: usize,
    pub terms: Vec<ChainTerm>,
    /// Positive element `φ` with `φ a₀ = a₀` for every term, when known.
    pub local_unit: Option<AlgebraElement>,
}

fn same_samples(a: &AlgebraElement, b: &AlgebraElement, tol: f64) -> bool {
    a.samples.len() == b.samples.len() && a.samples.iter().zip(&b.samples).all(|(x, y)| (x - y).norm() <= tol)
}

impl HochschildChain {
    pub fn new(degree: usize, terms: Vec<ChainTerm>) -> Result<Self> {
        let len = terms.first().map(|t| t.factors.first().map(|f| f.samples.len()).unwrap_or(0));
        for t in &terms {
            if t.factors.len() != degree + 1 {
                return Err(Error::Shape(format!(
                    "degree {degree} chain needs {} factors, got {}",
                    degree + 1,
                    t.factors.len()
                )));
            }
            if t.factors.iter().any(|f| Some(f.samples.len()) != len) {
                return Err(Error::Shape("chain factors live on different grids".into()));
            }
        }
        Ok(Self { degree, terms, local_unit: None })
    }

    pub fn elementary(factors: Vec<AlgebraElement>) -> Result<Self> {
        let degree = factors.len().checked_sub(1).ok_or_else(|| Error::Input("empty tensor".into()))?;
        Self::new(degree, vec![ChainTerm { coeff: ONE, factors }])
    }

    pub fn zero(degree: usize) -> Self {
        Self { degree, terms: Vec::new(), local_unit: None }
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff *= c;
        }
        out
    }

    /// Sum; the local unit is kept only if both sides agree on it.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.degree != other.degree {
            return Err(Error::Shape(format!("degrees {} and {} differ", self.degree, other.degree)));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        let local_unit = match (&self.local_unit, &other.local_unit) {
            (Some(a), Some(b)) if same_samples(a, b, 0.0) => Some(a.clone()),
            (Some(a), None) if other.terms.is_empty() => Some(a.clone()),
            (None, Some(b)) if self.terms.is_empty() => Some(b.clone()),
            _ => None,
        };
        Ok(Self { degree: self.degree, terms, local_unit })
    }

    /// Merge terms whose factors agree entrywise within `tol`.
    pub fn simplified(&self, tol: f64) -> Self {
        let mut merged: Vec<ChainTerm> = Vec::new();
        for t in &self.terms {
            match merged.iter_mut().find(|m| m.factors.iter().zip(&t.factors).all(|(a, b)| same_samples(a, b, tol))) {
                Some(m) => m.coeff += t.coeff,
                None => merged.push(t.clone()),
            }
        }
        merged.retain(|t| t.coeff != ZERO && t.factors.iter().all(|f| f.norm() > 0.0));
        Self { degree: self.degree, terms: merged, local_unit: self.local_unit.clone() }
    }

    /// Projective-type norm `Σ |c| Π ‖a_j‖_∞` after merging equal tensors.
    pub fn norm(&self) -> f64 {
        let scale = self.terms.iter().flat_map(|t| t.factors.iter().map(|f| f.norm())).fold(0.0, f64::max);
        self.simplified(1e-13 * scale.max(1.0))
            .terms
            .iter()
            .map(|t| t.coeff.norm() * t.factors.iter().map(|f| f.norm()).product::<f64>())
            .sum()
    }

    pub fn is_local(&self) -> Option<&AlgebraElement> {
        let phi = self.local_unit.as_ref()?;
        let fixes = self.terms.iter().all(|t| {
            let a0 = &t.factors[0];
            phi.product(a0).samples.iter().zip(&a0.samples).all(|(x, y)| (x - y).norm() <= 1e-14 * (1.0 + y.norm()))
        });
        fixes.then_some(phi)
    }
}

pub fn hochschild_boundary(c: &HochschildChain) -> Result<HochschildChain> {
    if c.degree == 0 {
        return Err(Error::Input("boundary of a degree-0 chain is not defined here".into()));
    }
    let p = c.degree;
    let mut terms = Vec::new();
    for t in &c.terms {
        let a = &t.factors;
        for j in 0..p {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let mut f: Vec<AlgebraElement> = a[..j].to_vec();
            f.push(a[j].product(&a[j + 1]));
            f.extend(a[j + 2..].iter().cloned());
            terms.push(ChainTerm { coeff: t.coeff * sign, factors: f });
        }
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        let mut f = vec![a[p].product(&a[0])];
        f.extend(a[1..p].iter().cloned());
        terms.push(ChainTerm { coeff: t.coeff * sign, factors: f });
    }
    Ok(HochschildChain { degree: p - 1, terms, local_unit: None })
}

fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    if n == 0 {
        return vec![(Vec::new(), 1.0)];
    }
    let mut out = Vec::new();
    for (perm, sign) in permutations(n - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, n - 1);
            // Inserting at `pos` moves the new largest element past `len - pos` entries.
            let flips = perm.len() - pos;
            out.push((p, if flips % 2 == 0 { sign } else { -sign }));
        }
    }
    out
}

/// Antisymmetrised chain `Σ_σ sgn(σ) a₀ ⊗ a_{σ(1)} ⊗ … ⊗ a_{σ(p)}` with a
/// localising unit `φ` equal to 1 on a one-cell neighbourhood of `supp a₀`.
pub fn build_volume_cycle(t: &PreSpectralTripleModel, factors: &[AlgebraElement]) -> Result<HochschildChain> {
    let (a0, rest) = factors.split_first().ok_or_else(|| Error::Input("volume cycle needs a₀".into()))?;
    if factors.iter().any(|f| f.margin < 1) {
        return Err(Error::Margin("every factor needs margin at least 1".into()));
    }
    if a0.margin < 2 {
        return Err(Error::Locality(format!("a₀ has margin {}; a localising unit needs 2", a0.margin)));
    }
    let phi = t.element(&dilated_indicator(&t.domain, &a0.samples))?;
    let terms = permutations(rest.len())
        .into_iter()
        .map(|(perm, sign)| {
            let mut f = vec![a0.clone()];
            f.extend(perm.iter().map(|&k| rest[k].clone()));
            ChainTerm { coeff: linalg::re(sign), factors: f }
        })
        .collect();
    let mut c = HochschildChain::new(rest.len(), terms)?;
    c.local_unit = Some(phi);
    Ok(c)
}

fn dilated_indicator(dom: &GridDomain, samples: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; samples.len()];
    for (k, z) in samples.iter().enumerate() {
        if *z == ZERO {
            continue;
        }
        let idx = dom.multi_index(k);
        for code in 0..3usize.pow(dom.d as u32) {
            let mut c = code;
            let mut q = idx.clone();
            let mut ok = true;
            for j in 0..dom.d {
                let v = idx[j] as isize + (c % 3) as isize - 1;
                c /= 3;
                if v < 0 || v >= dom.nodes[j] as isize {
                    ok = false;
                    break;
                }
                q[j] = v as usize;
            }
            if ok {
                out[dom.flat_index(&q)] = ONE;
            }
        }
    }
    out
}

// ---------------------------------------------------------------- apparatus

/// Phase `F` of `Dhat` with kernel projectors.
#[derive(Debug, Clone)]
pub struct Phase {
    pub f: Mat,
    pub pker_d: Mat,
    pub pker_dstar: Mat,
    pub rank: usize,
    pub threshold: f64,
    pub warning: Option<String>,
}

pub fn phase_of_pair(pair: &RectangularPair) -> Result<Phase> {
    let dhat = pair.dhat.to_dense();
    let svd = linalg::svd_thin(&dhat)?;
    let top = svd.s.first().copied().unwrap_or(0.0);
    let threshold = KERNEL_REL * top;
    let rank = svd.s.iter().filter(|&&x| x > threshold).count();
    let ur = svd.u.slice(s![.., ..rank]).to_owned();
    let vr = svd.vt.slice(s![..rank, ..]).to_owned();
    let f = ur.dot(&vr);
    let pker_d = linalg::identity(pair.v_dim) - linalg::adjoint(&vr).dot(&vr);
    let pker_dstar = linalg::identity(pair.w_dim) - ur.dot(&linalg::adjoint(&ur));
    let warning = match rank.checked_sub(1).map(|k| svd.s[k]) {
        Some(smallest) if smallest < 10.0 * threshold => {
            Some(format!("smallest kept singular value {smallest:e} within 10x of threshold {threshold:e}"))
        }
        _ => None,
    };
    Ok(Phase { f, pker_d, pker_dstar, rank, threshold, warning })
}

/// `F̃ = [[F_{D₂}, P],[P, −F_{D₂}]]` on `(V⊕W)⊕(V⊕W)`, kept in blocks.
#[derive(Debug, Clone)]
pub struct FredholmApparatus {
    pub v_dim: usize,
    pub w_dim: usize,
    pub phase: Phase,
    /// Phase of the clone `[[0, F*],[F, 0]]` on `V⊕W`.
    pub f_d2: Mat,
    /// `diag(P_{ker D}, P_{ker D*})`.
    pub p_ker: Mat,
    /// `diag(γ_V, γ_W)`, when graded.
    pub grading2: Option<SparseMat>,
    embed: Embedding,
}

pub fn phase_apparatus(t: &PreSpectralTripleModel) -> Result<FredholmApparatus> {
    let phase = phase_of_pair(&t.pair)?;
    let (v, w) = (t.v_dim(), t.w_dim());
    let m = v + w;
    let mut f_d2 = linalg::zeros(m, m);
    f_d2.slice_mut(s![..v, v..]).assign(&linalg::adjoint(&phase.f));
    f_d2.slice_mut(s![v.., ..v]).assign(&phase.f);
    let mut p_ker = linalg::zeros(m, m);
    p_ker.slice_mut(s![..v, ..v]).assign(&phase.pker_d);
    p_ker.slice_mut(s![v.., v..]).assign(&phase.pker_dstar);
    Ok(FredholmApparatus {
        v_dim: v,
        w_dim: w,
        phase,
        f_d2,
        p_ker,
        grading2: clone(t).grading2,
        embed: t.embed().clone(),
    })
}

impl FredholmApparatus {
    pub fn clone_dim(&self) -> usize {
        self.v_dim + self.w_dim
    }

    /// `π(a)` restricted to the first `V⊕W` block.
    pub fn pi_block(&self, a: &AlgebraElement) -> SparseMat {
        let e = &self.embed;
        let aw = a.as_w();
        let half = linalg::re(0.5);
        let v = self.v_dim;
        let mut trips: Vec<(usize, usize, C64)> = Vec::new();
        trips.extend(e.compress_sparse(&aw).triplets().map(|(i, j, z)| (i, j, z * half)));
        trips.extend(aw.select_rows(&e.cols).triplets().map(|(i, j, z)| (i, j + v, z * half)));
        trips.extend(aw.select_cols(&e.cols).triplets().map(|(i, j, z)| (i + v, j, z * half)));
        trips.extend(aw.triplets().map(|(i, j, z)| (i + v, j + v, z * half)));
        SparseMat::from_triplets(self.clone_dim(), self.clone_dim(), trips)
    }

    /// Dense `F̃`; for small models and tests.
    pub fn ftilde_dense(&self) -> Mat {
        let m = self.clone_dim();
        let mut out = linalg::zeros(2 * m, 2 * m);
        out.slice_mut(s![..m, ..m]).assign(&self.f_d2);
        out.slice_mut(s![..m, m..]).assign(&self.p_ker);
        out.slice_mut(s![m.., ..m]).assign(&self.p_ker);
        out.slice_mut(s![m.., m..]).assign(&self.f_d2.mapv(|z| -z));
        out
    }

    /// Largest defects of `F̃ = F̃*` and `F̃² = 1`, computed blockwise.
    pub fn ftilde_defects(&self) -> (f64, f64) {
        let herm = linalg::hermiticity_defect(&self.f_d2).max(linalg::hermiticity_defect(&self.p_ker));
        let id = linalg::identity(self.clone_dim());
        let diag = self.f_d2.dot(&self.f_d2) + self.p_ker.dot(&self.p_ker) - id;
        let off = self.f_d2.dot(&self.p_ker) - self.p_ker.dot(&self.f_d2);
        (herm, linalg::max_abs(&diag).max(linalg::max_abs(&off)))
    }

    /// Defects of `F*F + P_{ker D} = 1_V` and `FF* + P_{ker D*} = 1_W`.
    pub fn partial_isometry_defects(&self) -> (f64, f64) {
        let f = &self.phase.f;
        let fs = linalg::adjoint(f);
        let dv = fs.dot(f) + &self.phase.pker_d - linalg::identity(self.v_dim);
        let dw = f.dot(&fs) + &self.phase.pker_dstar - linalg::identity(self.w_dim);
        (linalg::max_abs(&dv), linalg::max_abs(&dw))
    }
}

/// 2×2 block matrix over `V⊕W`; `None` blocks are zero.
#[derive(Debug, Clone)]
struct Block2 {
    b: [[Option<Mat>; 2]; 2],
}

fn add_opt(a: Option<Mat>, b: Option<Mat>) -> Option<Mat> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x + y),
        (x, None) => x,
        (None, y) => y,
    }
}

impl Block2 {
    fn mul(&self, other: &Block2) -> Block2 {
        let mut b: [[Option<Mat>; 2]; 2] = Default::default();
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = None;
                for k in 0..2 {
                    if let (Some(x), Some(y)) = (&self.b[i][k], &other.b[k][j]) {
                        acc = add_opt(acc, Some(x.dot(y)));
                    }
                }
                b[i][j] = acc;
            }
        }
        Block2 { b }
    }

    /// `Tr(self · other)` without forming the product.
    fn trace_with(&self, other: &Block2) -> C64 {
        let mut acc = ZERO;
        for i in 0..2 {
            for k in 0..2 {
                if let (Some(x), Some(y)) = (&self.b[i][k], &other.b[k][i]) {
                    acc += linalg::trace_of_product(x, y);
                }
            }
        }
        acc
    }
}

/// `[F̃, π(a)] = [[F₂A − AF₂, −AP],[PA, 0]]`.
fn commutator_blocks(app: &FredholmApparatus, a: &AlgebraElement) -> Result<Block2> {
    let pa = app.pi_block(a);
    let f2a = pa.dense_mul(&app.f_d2)?;
    let af2 = pa.mul_dense(&app.f_d2)?;
    let ap = pa.mul_dense(&app.p_ker)?;
    let pa_ = pa.dense_mul(&app.p_ker)?;
    Ok(Block2 { b: [[Some(f2a - af2), Some(ap.mapv(|z| -z))], [Some(pa_), None]] })
}

/// `Γ F̃` as blocks; `Γ = 1` for odd degree.
fn gamma_ftilde(app: &FredholmApparatus, odd: bool) -> Result<Block2> {
    let (gf, gp) = if odd {
        (app.f_d2.clone(), app.p_ker.clone())
    } else {
        let g = app.grading2.as_ref().ok_or_else(|| Error::Input("even degree pairing needs a graded model".into()))?;
        (g.mul_dense(&app.f_d2)?, g.mul_dense(&app.p_ker)?)
    };
    let (lower_p, lower_f) = if odd {
        (gp.clone(), gf.mapv(|z| -z))
    } else {
        // Γ = diag(Γ₂, −Γ₂) flips the sign of the lower row.
        (gp.mapv(|z| -z), gf.clone())
    };
    Ok(Block2 { b: [[Some(gf), Some(gp)], [Some(lower_p), Some(lower_f)]] })
}

/// `½ Tr(Γ F̃ Π_k [F̃, π(a_k)])` for one elementary tensor; no cycle check.
pub fn pairing_term(app: &FredholmApparatus, factors: &[AlgebraElement]) -> Result<C64> {
    let odd = factors.len() % 2 == 0;
    let lead = gamma_ftilde(app, odd)?;
    let mut prod: Option<Block2> = None;
    for a in factors {
        let c = commutator_blocks(app, a)?;
        prod = Some(match prod {
            None => c,
            Some(p) => p.mul(&c),
        });
    }
    let prod = prod.ok_or_else(|| Error::Input("empty tensor".into()))?;
    Ok(lead.trace_with(&prod) * 0.5)
}

/// Cycle and locality preconditions shared by both sides of the formula.
pub fn check_cycle(c: &HochschildChain) -> Result<()> {
    if c.degree > 0 {
        let b = hochschild_boundary(c)?.norm();
        let scale = c.norm().max(1.0);
        if b > CYCLE_TOL * scale {
            return Err(Error::NotCycle(b));
        }
    }
    if !c.terms.is_empty() && c.is_local().is_none() {
        return Err(Error::Locality("no unit φ with φ a₀ = a₀ is attached to the chain".into()));
    }
    Ok(())
}

/// Weighted contributions `c_i · τ(term_i)` of every chain term.
pub fn chern_pairing_terms(c: &HochschildChain, app: &FredholmApparatus) -> Result<Vec<C64>> {
    check_cycle(c)?;
    c.terms.iter().map(|t| Ok(t.coeff * pairing_term(app, &t.factors)?)).collect()
}

pub fn chern_pairing(c: &HochschildChain, app: &FredholmApparatus) -> Result<C64> {
    Ok(chern_pairing_terms(c, app)?.into_iter().sum())
}

/// Values below this fraction of the largest term count as cancellation.
pub const CANCELLATION_REL: f64 = 1e-8;

// ---------------------------------------------------------------- trace side

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `Ω(c)(1+D*D)^{-p/2}` on `V`.
    DStarD,
    /// `Ω(c)(1+DD*)^{-p/2}` on `W`.
    DDStar,
}

fn omega_w(t: &PreSpectralTripleModel, c: &HochschildChain) -> Result<SparseMat> {
    let w = t.w_dim();
    let mut total = SparseMat::zeros(w, w);
    let odd = c.degree % 2 == 1;
    for term in &c.terms {
        let mut acc = term.factors[0].as_w().scale(term.coeff);
        if !odd {
            let g = t.grading.as_ref().ok_or_else(|| Error::Input("even degree needs a graded model".into()))?;
            acc = g.matmul(&acc)?;
        }
        for a in &term.factors[1..] {
            acc = acc.matmul(&partial_commutator(t, a)?)?;
        }
        total = total.add(&acc)?;
    }
    Ok(total)
}

/// Estimate without the spread-based reliability verdict.
pub fn character_lhs_raw(
    c: &HochschildChain,
    t: &PreSpectralTripleModel,
    p: usize,
    method: TraceMethod,
    side: Side,
) -> Result<TraceEstimate> {
    check_cycle(c)?;
    let om = omega_w(t, c)?;
    let (omega, eig): (Mat, &HermEig) = match side {
        // Supports stay inside the interior, so compression composes exactly.
        Side::DStarD => (t.embed().compress_sparse(&om).to_dense(), t.v_spectrum()?),
        Side::DDStar => (om.to_dense(), t.w_spectrum()?),
    };
    match method {
        TraceMethod::ZetaResidue => zeta_residue_weighted(&omega, eig, p as f64),
        TraceMethod::LogAverage => {
            let w: Vec<f64> = eig.values.iter().map(|&l| (1.0 + l.max(0.0)).powf(-0.5 * p as f64)).collect();
            let arg = linalg::mul_diag(&eig.to_basis(&omega), &w);
            let ev = order_by_modulus(linalg::eigvals(&arg)?);
            dixmier_estimate(&ev, method)
        }
    }
}

pub fn character_lhs(
    c: &HochschildChain,
    t: &PreSpectralTripleModel,
    p: usize,
    method: TraceMethod,
) -> Result<TraceEstimate> {
    let est = character_lhs_raw(c, t, p, method, Side::DStarD)?;
    if est.spread > 0.5 * est.value.abs() {
        return Err(Error::Unreliable(format!(
            "spread {:e} exceeds half of |value| {:e}",
            est.spread,
            est.value.abs()
        )));
    }
    Ok(est)
}

// ---------------------------------------------------------------- comparison

/// One chain factor: a radial plateau, optionally times `(x_j − center_j)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FactorSpec {
    pub center: Vec<f64>,
    pub r_in: f64,
    pub r_out: f64,
    #[serde(default)]
    pub coordinate: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CycleSpec {
    pub factors: Vec<FactorSpec>,
}

impl CycleSpec {
    /// `a₀` a centred plateau, `a_j = ψ·(x_j − ½)` with a wider plateau `ψ`.
    pub fn centered(d: usize) -> Self {
        let c = vec![0.5; d];
        let mut factors = vec![FactorSpec { center: c.clone(), r_in: 0.1, r_out: 0.25, coordinate: None }];
        for j in 0..d {
            factors.push(FactorSpec { center: c.clone(), r_in: 0.28, r_out: 0.42, coordinate: Some(j) });
        }
        Self { factors }
    }

    pub fn samples(&self, dom: &GridDomain) -> Vec<Vec<C64>> {
        self.factors
            .iter()
            .map(|f| match f.coordinate {
                None => bump(dom, &f.center, f.r_in, f.r_out),
                Some(j) => dom.sample(|x| {
                    let r = x.iter().zip(&f.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    plateau(r, f.r_in, f.r_out) * (x[j] - f.center[j])
                }),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Rung {
    pub nodes: usize,
    pub ch_re: f64,
    pub ch_im: f64,
    pub lhs: TraceEstimate,
    pub lhs_zeta: TraceEstimate,
    /// Largest single-term contribution to `Ch`.
    pub ch_term_scale: f64,
    /// Largest `|coeff|·∏‖a_k‖_∞` over the chain.
    pub natural_scale: f64,
    /// NaN when `Ch` cancels to rounding and the ratio carries no information.
    pub relative_gap: f64,
    pub ftilde_square_defect: f64,
}

/// Both sides of the character formula on one `n^d` grid.
pub fn character_rung(spec: &CycleSpec, d: usize, n: usize) -> Result<Rung> {
    let dom = GridDomain::unit_cube(d, n)?;
    let t = PreSpectralTripleModel::dirichlet(dom, &spec.samples(&GridDomain::unit_cube(d, n)?))?;
    let c = build_volume_cycle(&t, &t.generators)?;
    let p = c.degree;
    let lhs = character_lhs_raw(&c, &t, p, TraceMethod::LogAverage, Side::DStarD)?;
    let lhs_zeta = character_lhs_raw(&c, &t, p, TraceMethod::ZetaResidue, Side::DStarD)?;
    let app = phase_apparatus(&t)?;
    let (_, sq) = app.ftilde_defects();
    let terms = chern_pairing_terms(&c, &app)?;
    let ch: C64 = terms.iter().sum();
    let ch_term_scale = terms.iter().map(|z| z.norm()).fold(0.0, f64::max);
    // Sup-norm bound on a single elementary term; guards against terms that
    // are themselves rounding residue.
    let natural_scale = c
        .terms
        .iter()
        .map(|t| t.coeff.norm() * t.factors.iter().map(|a| a.norm()).product::<f64>())
        .fold(0.0, f64::max);
    let relative_gap = if ch.norm() <= CANCELLATION_REL * ch_term_scale.max(natural_scale) {
        f64::NAN
    } else {
        (lhs.value - ch.re).abs() / ch.norm()
    };
    Ok(Rung {
        nodes: n,
        ch_re: ch.re,
        ch_im: ch.im,
        lhs,
        lhs_zeta,
        ch_term_scale,
        natural_scale,
        relative_gap,
        ftilde_square_defect: sq,
    })
}

pub fn character_compare(spec: &CycleSpec, d: usize, ladder: &[usize]) -> Result<(DiagnosticReport, Vec<Rung>)> {
    let mut rep = DiagnosticReport::new("character");
    if ladder.len() < 2 || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input("ladder needs at least two strictly increasing rungs".into()));
    }
    let mut rungs = Vec::new();
    for &n in ladder {
        match character_rung(spec, d, n) {
            Ok(r) => rungs.push(r),
            Err(e @ (Error::Margin(_) | Error::Locality(_) | Error::NotCycle(_))) => {
                rep.push("cycle_valid", f64::NAN, f64::NAN, false, "for any normalised trace").with_note(e.to_string());
                return Ok((rep, rungs));
            }
            Err(e) => return Err(e),
        }
    }
    for r in &rungs {
        rep.at_most(&format!("ftilde_square[{}]", r.nodes), r.ftilde_square_defect, 1e-10, "In particular F̃²=1");
        rep.value(&format!("ch[{}]", r.nodes), r.ch_re);
        rep.value(&format!("lhs[{}]", r.nodes), r.lhs.value);
        rep.value(&format!("lhs_zeta[{}]", r.nodes), r.lhs_zeta.value);
        rep.value(&format!("lhs_spread[{}]", r.nodes), r.lhs.spread);
        rep.value(&format!("ch_term_scale[{}]", r.nodes), r.ch_term_scale);
        rep.value(&format!("relative_gap[{}]", r.nodes), r.relative_gap);
    }
    let last = rungs.last().expect("ladder is non-empty");
    let gap = rep.at_most("final_relative_gap", last.relative_gap, 0.35, "for any normalised trace");
    if last.relative_gap.is_nan() {
        gap.with_note("Ch cancels to rounding against its individual terms");
    }
    let decreasing = rungs.windows(2).all(|w| w[1].relative_gap < w[0].relative_gap);
    rep.push("gap_decreasing", if decreasing { 1.0 } else { 0.0 }, 1.0, decreasing, "for any normalised trace");
    let prev = &rungs[rungs.len() - 2];
    let stab = if last.relative_gap.is_nan() { f64::NAN } else { (last.ch_re - prev.ch_re).abs() / last.ch_re.abs() };
    rep.at_most("ch_stability", stab, 0.10, "for any normalised trace");
    Ok((rep, rungs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opmodel::build_staggered_interval;

    fn model(n: usize) -> PreSpectralTripleModel {
        let spec = CycleSpec::centered(2);
        let dom = GridDomain::unit_cube(2, n).unwrap();
        PreSpectralTripleModel::dirichlet(dom.clone(), &spec.samples(&dom)).unwrap()
    }

    #[test]
    fn permutation_signs() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        for (perm, sign) in p {
            let mut inv = 0;
            for i in 0..3 {
                for j in i + 1..3 {
                    if perm[i] > perm[j] {
                        inv += 1;
                    }
                }
            }
            assert_eq!(sign, if inv % 2 == 0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn boundaries() {
        let t = model(16);
        let g = &t.generators;
        let c1 = HochschildChain::elementary(vec![g[1].clone(), g[2].clone()]).unwrap();
        assert!(hochschild_boundary(&c1).unwrap().norm() < 1e-14);
        let c = build_volume_cycle(&t, g).unwrap();
        assert!(hochschild_boundary(&c).unwrap().norm() < 1e-12);
        assert!(c.is_local().is_some());
        let single = HochschildChain::elementary(g.clone()).unwrap();
        assert!(hochschild_boundary(&single).unwrap().norm() > 1e-6);
        let deg = build_volume_cycle(&t, &[g[0].clone(), g[1].clone(), g[1].clone()]).unwrap();
        assert!(deg.norm() < 1e-14);
        assert!(hochschild_boundary(&HochschildChain::zero(0)).is_err());
    }

    #[test]
    fn staggered_phase() {
        let pair = build_staggered_interval(16, 1.0).unwrap();
        let ph = phase_of_pair(&pair).unwrap();
        assert_eq!(ph.rank, 16);
        let k = &ph.pker_dstar;
        assert!((linalg::trace(k).re - 1.0).abs() < 1e-10);
        let c = 1.0 / 17.0;
        assert!((k[[0, 0]].re - c).abs() < 1e-10 && (k[[3, 9]].re - c).abs() < 1e-10);
    }

    #[test]
    fn apparatus_identities() {
        let t = model(16);
        let app = phase_apparatus(&t).unwrap();
        let (h, sq) = app.ftilde_defects();
        assert!(h < 1e-10 && sq < 1e-10);
        let (dv, dw) = app.partial_isometry_defects();
        assert!(dv < 1e-10 && dw < 1e-10);
        // Phase of the clone from its own eigendecomposition.
        let d2 = clone(&t).d2.to_dense();
        let eig = HermEig::new(&d2).unwrap();
        let thr = KERNEL_REL * eig.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let sign = eig.apply(|x| if x.abs() <= thr { 0.0 } else { x.signum() });
        let ker = eig.apply(|x| if x.abs() <= thr { 1.0 } else { 0.0 });
        assert!(linalg::max_abs(&(sign - &app.f_d2)) < 1e-8);
        assert!(linalg::max_abs(&(ker - &app.p_ker)) < 1e-8);
        let ft = app.ftilde_dense();
        assert!(linalg::max_abs(&(ft.dot(&ft) - linalg::identity(ft.nrows()))) < 1e-10);
    }

    #[test]
    fn pairing_properties() {
        let t = model(16);
        let app = phase_apparatus(&t).unwrap();
        let g = &t.generators;
        let c = build_volume_cycle(&t, g).unwrap();
        let swapped = build_volume_cycle(&t, &[g[0].clone(), g[2].clone(), g[1].clone()]).unwrap();
        let ch = chern_pairing(&c, &app).unwrap();
        let chs = chern_pairing(&swapped, &app).unwrap();
        let scale = pairing_term(&app, g).unwrap().norm().max(1.0);
        assert!((ch + chs).norm() < 1e-8 * scale);
        assert!(ch.im.abs() < 1e-8 * scale);
        let double = c.add(&c).unwrap();
        assert!((chern_pairing(&double, &app).unwrap() - ch * 2.0).norm() < 1e-8 * scale);
        let zero = g[0].scale(ZERO);
        assert_eq!(pairing_term(&app, &[zero, g[1].clone(), g[2].clone()]).unwrap(), ZERO);
        assert!(matches!(
            chern_pairing(&HochschildChain::elementary(g.clone()).unwrap(), &app),
            Err(Error::NotCycle(_))
        ));
    }
}
