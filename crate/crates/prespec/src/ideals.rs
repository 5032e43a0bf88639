//! Singular-value functionals, ideal quasi-norms, logarithmic submajorisation
//! and numerical surrogates for normalised traces on the weak trace ideal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, HermEig, Mat, C64};
use crate::report::DiagnosticReport;

/// Non-increasing, non-negative, finite sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularSpectrum(Vec<f64>);

impl SingularSpectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(x) = values.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Input(format!("spectrum entry {x} is negative or non-finite")));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Input("spectrum must be non-increasing".into()));
        }
        Ok(Self(values))
    }

    /// Sorts into non-increasing order before validating.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `μ(n)`, zero past the end.
    pub fn at(&self, n: usize) -> f64 {
        self.0.get(n).copied().unwrap_or(0.0)
    }

    pub fn powf(&self, theta: f64) -> Self {
        Self(self.0.iter().map(|x| x.powf(theta)).collect())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|x| x * c.abs()).collect())
    }

    /// The spectrum of a direct sum.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Self::from_unsorted(v).expect("union of valid spectra is valid")
    }

    pub fn as_terms(&self) -> Vec<C64> {
        self.0.iter().map(|&x| linalg::re(x)).collect()
    }
}

pub fn singular_values(t: &Mat) -> Result<SingularSpectrum> {
    linalg::check_finite(t)?;
    let mut s = linalg::svals(t)?;
    for x in &mut s {
        *x = x.max(0.0);
    }
    SingularSpectrum::from_unsorted(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum IdealKind {
    Schatten(f64),
    Weak(f64),
    LorentzQ1(f64),
}

impl IdealKind {
    pub fn validate(self) -> Result<Self> {
        let ok = match self {
            IdealKind::Schatten(p) | IdealKind::Weak(p) => p.is_finite() && p > 0.0,
            IdealKind::LorentzQ1(q) => q.is_finite() && q >= 1.0,
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::Input(format!("ideal parameter out of range: {self:?}")))
        }
    }
}

pub fn quasi_norm(s: &SingularSpectrum, kind: IdealKind) -> Result<f64> {
    Ok(match kind.validate()? {
        IdealKind::Schatten(p) => s.0.iter().map(|x| x.powf(p)).sum::<f64>().powf(1.0 / p),
        IdealKind::Weak(p) => {
            s.0.iter().enumerate().map(|(n, x)| ((n + 1) as f64).powf(1.0 / p) * x).fold(0.0, f64::max)
        }
        IdealKind::LorentzQ1(q) => s.0.iter().enumerate().map(|(n, x)| x / ((n + 1) as f64).powf(1.0 - 1.0 / q)).sum(),
    })
}

pub fn operator_norm(s: &SingularSpectrum) -> f64 {
    s.at(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Submajorisation {
    pub holds: bool,
    /// Largest prefix difference `Σ log a − Σ log b`.
    pub worst_margin: f64,
}

/// Logarithmic submajorisation `a ≺≺_log b`, prefix products compared in the
/// log domain. The shorter sequence is padded with zeros.
pub fn log_submajorises(a: &SingularSpectrum, b: &SingularSpectrum, tol: f64) -> Submajorisation {
    let n = a.len().max(b.len());
    let slack = tol.ln_1p();
    let (mut la, mut lb) = (0.0f64, 0.0f64);
    let mut holds = true;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..n {
        la += a.at(k).ln();
        lb += b.at(k).ln();
        let diff = match (la == f64::NEG_INFINITY, lb == f64::NEG_INFINITY) {
            (true, true) => 0.0,
            (false, true) => f64::INFINITY,
            (true, false) => f64::NEG_INFINITY,
            (false, false) => la - lb,
        };
        if diff > slack {
            holds = false;
        }
        worst = worst.max(diff);
    }
    if n == 0 {
        worst = 0.0;
    }
    Submajorisation { holds, worst_margin: worst }
}

/// Non-increasing modulus, ties broken by descending real part.
pub fn order_by_modulus(mut v: Vec<C64>) -> Vec<C64> {
    v.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal))
    });
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMethod {
    LogAverage,
    ZetaResidue,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEstimate {
    pub value: f64,
    /// Imaginary part of the estimate for non-normal arguments.
    pub imag: f64,
    pub method: TraceMethod,
    pub samples: Vec<(f64, f64)>,
    pub spread: f64,
}

const MIN_SAMPLES: usize = 8;
const LOG_CUTOFFS: usize = 32;
const ZETA_POINTS: usize = 12;
const ZETA_RANGE: (f64, f64) = (0.02, 0.2);

/// Geometrically spaced term counts in `[1, n]`, deduplicated.
fn geometric_cutoffs(n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..LOG_CUTOFFS)
        .map(|k| {
            let t = k as f64 / (LOG_CUTOFFS - 1) as f64;
            ((n as f64).powf(t)).round() as usize
        })
        .map(|c| c.clamp(1, n))
        .collect();
    out.dedup();
    out
}

/// Dixmier-type estimate from eigenvalues (or singular values) of the
/// argument ordered by non-increasing modulus.
pub fn dixmier_estimate(terms: &[C64], method: TraceMethod) -> Result<TraceEstimate> {
    match method {
        TraceMethod::LogAverage => log_average(terms),
        TraceMethod::ZetaResidue => zeta_residue(terms),
    }
}

/// Slope of partial sums `S_c` against `log c`. At each cutoff the slope is
/// fitted over cutoffs in `[√c, c]`; the value is the fit at the largest
/// cutoff and the spread runs over the upper half (in log scale).
fn log_average(terms: &[C64]) -> Result<TraceEstimate> {
    let n = terms.len();
    let cuts = geometric_cutoffs(n.max(1));
    if n == 0 || cuts.len() < MIN_SAMPLES {
        return Err(Error::Unreliable(format!(
            "log-average needs at least {MIN_SAMPLES} distinct cutoffs, got {}",
            cuts.len()
        )));
    }
    let mut partial = Vec::with_capacity(cuts.len());
    let mut acc = C64::new(0.0, 0.0);
    let mut next = 0;
    for &c in &cuts {
        while next < c {
            acc += terms[next];
            next += 1;
        }
        partial.push(acc);
    }
    let logs: Vec<f64> = cuts.iter().map(|&c| (c as f64).ln()).collect();
    let mut samples = Vec::new();
    let mut imag_last = 0.0;
    for j in 0..cuts.len() {
        let lo = 0.5 * logs[j];
        let idx: Vec<usize> = (0..=j).filter(|&i| logs[i] >= lo - 1e-12).collect();
        if idx.len() < 3 {
            continue;
        }
        let x: Vec<f64> = idx.iter().map(|&i| logs[i]).collect();
        let yr: Vec<f64> = idx.iter().map(|&i| partial[i].re).collect();
        let yi: Vec<f64> = idx.iter().map(|&i| partial[i].im).collect();
        let (sr, _) = linalg::linear_fit(&x, &yr);
        let (si, _) = linalg::linear_fit(&x, &yi);
        samples.push((cuts[j] as f64, sr));
        imag_last = si;
    }
    let Some(&(_, value)) = samples.last() else {
        return Err(Error::Unreliable("no cutoff window with three points".into()));
    };
    let half = 0.5 * (n as f64).ln();
    let tail: Vec<f64> = samples.iter().filter(|(c, _)| c.ln() >= half - 1e-12).map(|&(_, v)| v).collect();
    let spread =
        tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(TraceEstimate { value, imag: imag_last, method: TraceMethod::LogAverage, samples, spread: spread.max(0.0) })
}

fn zeta_grid() -> Vec<f64> {
    let (lo, hi) = ZETA_RANGE;
    // Decreasing towards zero.
    (0..ZETA_POINTS).map(|k| hi - (hi - lo) * k as f64 / (ZETA_POINTS - 1) as f64).collect()
}

/// Terms `t_n` with scales `r_n` such that the regularised sum is
/// `Σ t_n r_n^{-ε}`; for a plain list `r_n = 1/|t_n|`.
struct ZetaInput {
    terms: Vec<C64>,
    scales: Vec<f64>,
}

/// ε·ζ(ε) fitted linearly on the ε grid; the intercept is the residue.
///
/// Truncation is completed with a harmonic tail `c/(n+1)` whose constant
/// and scale growth are read off the last 5% of the terms.
fn zeta_fit(input: ZetaInput) -> Result<TraceEstimate> {
    let n = input.terms.len();
    if n < MIN_SAMPLES {
        return Err(Error::Unreliable(format!("zeta residue needs at least {MIN_SAMPLES} terms, got {n}")));
    }
    let k0 = n - (n / 20).max(1);
    let mut c_tail = C64::new(0.0, 0.0);
    let mut log_kappa = 0.0;
    let mut used = 0usize;
    for k in k0..n {
        let r = input.scales[k];
        if r.is_finite() && r > 0.0 {
            c_tail += input.terms[k] * (k + 1) as f64;
            log_kappa += (r / (k + 1) as f64).ln();
            used += 1;
        }
    }
    if used > 0 {
        c_tail /= used as f64;
        log_kappa /= used as f64;
    }
    let grid = zeta_grid();
    let mut samples = Vec::with_capacity(grid.len());
    let mut ys_re = Vec::new();
    let mut ys_im = Vec::new();
    for &eps in &grid {
        let mut z = C64::new(0.0, 0.0);
        for (t, &r) in input.terms.iter().zip(&input.scales) {
            if r.is_finite() && r > 0.0 {
                z += t * r.powf(-eps);
            }
        }
        if used > 0 {
            let hurwitz_tail = (n as f64 + 0.5).powf(-eps) / eps;
            z += c_tail * (-eps * log_kappa).exp() * hurwitz_tail;
        }
        let y = z * eps;
        samples.push((eps, y.re));
        ys_re.push(y.re);
        ys_im.push(y.im);
    }
    let (_, value) = linalg::linear_fit(&grid, &ys_re);
    let (_, imag) = linalg::linear_fit(&grid, &ys_im);
    let m = 8.min(grid.len());
    let sub = [0..m, (grid.len() - m) / 2..(grid.len() + m) / 2, grid.len() - m..grid.len()];
    let intercepts: Vec<f64> = sub.iter().map(|r| linalg::linear_fit(&grid[r.clone()], &ys_re[r.clone()]).1).collect();
    let spread = intercepts.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - intercepts.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(TraceEstimate { value, imag, method: TraceMethod::ZetaResidue, samples, spread: spread.max(0.0) })
}

fn zeta_residue(terms: &[C64]) -> Result<TraceEstimate> {
    let scales = terms.iter().map(|t| if t.norm() > 0.0 { 1.0 / t.norm() } else { f64::INFINITY }).collect();
    zeta_fit(ZetaInput { terms: terms.to_vec(), scales })
}

/// ζ-residue of `A (1+S)^{-p/2}` through `ε ↦ ε·Tr(A (1+S)^{-p(1+ε)/2})`,
/// with `S` given by its eigendecomposition.
pub fn zeta_residue_weighted(a: &Mat, s: &HermEig, p: f64) -> Result<TraceEstimate> {
    let n = s.dim();
    if a.dim() != (n, n) {
        return Err(Error::Shape(format!("argument {:?} vs weight {n}", a.dim())));
    }
    let rotated = s.to_basis(a);
    // Eigenvalues ascending, so weights (1+s)^{-p/2} are non-increasing.
    let mut terms = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    for k in 0..n {
        let base = 1.0 + s.values[k].max(0.0);
        let w = base.powf(-0.5 * p);
        terms.push(rotated[[k, k]] * w);
        scales.push(base.powf(0.5 * p));
    }
    zeta_fit(ZetaInput { terms, scales })
}

/// Hölder, interpolation, monotonicity and power-monotonicity checks for one pair.
pub fn verify_ideal_inequalities(t: &Mat, s: &Mat, p: f64, q: f64) -> Result<DiagnosticReport> {
    if !(p >= 1.0) || !(q >= 1.0) || (1.0 / p + 1.0 / q - 1.0).abs() > 1e-12 {
        return Err(Error::Input(format!("exponents p={p}, q={q} are not conjugate")));
    }
    if t.ncols() != s.nrows() {
        return Err(Error::Shape(format!("cannot multiply {:?} by {:?}", t.dim(), s.dim())));
    }
    let mut rep = DiagnosticReport::new("ideal inequalities");
    let mu_t = singular_values(t)?;
    let mu_s = singular_values(s)?;
    let mu_ts = singular_values(&t.dot(s))?;

    let lhs = quasi_norm(&mu_ts, IdealKind::Schatten(1.0))?;
    let rhs = quasi_norm(&mu_t, IdealKind::Weak(p))? * quasi_norm(&mu_s, IdealKind::LorentzQ1(q))?;
    rep.at_most("holder_ratio", ratio(lhs, rhs), 1.0 + 1e-9, "holder-type inequality");

    let r = p / (p + 1.0);
    let denom = quasi_norm(&mu_t, IdealKind::Weak(r))?.powf(r) * operator_norm(&mu_t).powf(1.0 / (p + 1.0));
    let c_p = ratio(quasi_norm(&mu_t, IdealKind::Schatten(1.0))?, denom);
    rep.record_check("interpolation_constant_candidate", c_p, "interpolation inequality");

    let sub = log_submajorises(&mu_t, &mu_s, 1e-9);
    rep.value("log_submajorisation_margin", sub.worst_margin);
    if sub.holds {
        let lhs = quasi_norm(&mu_t, IdealKind::Weak(1.0))?;
        let rhs = std::f64::consts::E * quasi_norm(&mu_s, IdealKind::Weak(1.0))?;
        rep.at_most("monotonicity_ratio", ratio(lhs, rhs), 1.0 + 1e-9, "weak-trace monotonicity");

        if is_positive(t) && is_positive(s) {
            let tp = psd_power(t, p)?;
            let sp = psd_power(s, p)?;
            let sub_p = log_submajorises(&singular_values(&tp)?, &singular_values(&sp)?, 1e-9);
            rep.push("power_monotonicity", sub_p.worst_margin, 1e-9f64.ln_1p(), sub_p.holds, "power monotonicity");
        }
    } else {
        rep.record_check("monotonicity_not_applicable", sub.worst_margin, "weak-trace monotonicity")
            .with_note("pair is not log-submajorised; inequality has no hypothesis");
    }
    Ok(rep)
}

/// `x/y` with `0/0 = 0`.
pub fn ratio(x: f64, y: f64) -> f64 {
    if y == 0.0 {
        if x == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        x / y
    }
}

fn is_positive(a: &Mat) -> bool {
    if a.nrows() != a.ncols() || linalg::hermiticity_defect(a) > 1e-10 * (1.0 + linalg::fro(a)) {
        return false;
    }
    HermEig::new(a)
        .map(|e| e.values.iter().all(|&x| x >= -1e-10 * (1.0 + e.values[e.dim() - 1].abs())))
        .unwrap_or(false)
}

/// `A^r` for a positive semidefinite `A`, negative rounding noise clipped.
pub fn psd_power(a: &Mat, r: f64) -> Result<Mat> {
    let e = HermEig::new(a)?;
    Ok(e.apply(|x| if x > 0.0 { x.powf(r) } else { 0.0 }))
}

/// One Araki–Lieb–Thirring trial: `μ(|AB|^r)` against `μ(A^r B^r)`.
///
/// The full product is an equality of determinants, so prefixes are compared
/// with a rounding allowance `n·ε·μ₀/μ_j` accumulated over both sides;
/// `worst_margin` is reported net of that allowance.
pub fn alt_trial(a: &Mat, b: &Mat, r: f64, tol: f64) -> Result<Submajorisation> {
    let ab = singular_values(&a.dot(b))?;
    let right = singular_values(&psd_power(a, r)?.dot(&psd_power(b, r)?))?;
    let n = ab.len().max(right.len());
    let eps = f64::EPSILON * n.max(1) as f64;
    let slack = tol.ln_1p();
    let (mut la, mut lb, mut noise) = (0.0f64, 0.0f64, 0.0f64);
    let mut worst = if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    for k in 0..n {
        let (x, y) = (ab.at(k), right.at(k));
        if x <= eps * ab.at(0) || y <= eps * right.at(0) {
            break;
        }
        la += r * x.ln();
        lb += y.ln();
        noise += r * eps * ab.at(0) / x + eps * right.at(0) / y;
        worst = worst.max(la - lb - noise);
    }
    Ok(Submajorisation { holds: worst <= slack, worst_margin: worst })
}
