//! Operator integrals: the resolvent form of `(1+T²)^{1/2}`, the expansion of
//! `[(1+T²)^{1/2}, X]` through iterated `R`, a sampled C² integrability
//! test, and the multiplier representation of `B^zA^z − (A^{1/2}BA^{1/2})^z`.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ideals::{quasi_norm, singular_values, IdealKind};
use crate::linalg::{self, HermEig, Mat, C64, I, ONE, ZERO};
use crate::report::DiagnosticReport;
use crate::sample;
use crate::window::{calibration_window, decay_slope, DecayFit};

// ---------------------------------------------------------------- quadrature

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Adaptive,
    /// `panel_budget` equal panels on the image of `[0, λ_max]`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    pub lambda_max: f64,
    pub tol: f64,
    pub panel_budget: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { scheme: Scheme::Adaptive, lambda_max: 1e12, tol: 1e-10, panel_budget: 4000 }
    }
}

impl QuadratureSpec {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.lambda_max > 0.0) || self.panel_budget == 0 {
            return Err(Error::Input(format!("invalid quadrature settings {self:?}")));
        }
        Ok(())
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Kronrod nodes and weights on `[a, b]`, ascending.
pub fn kronrod_nodes(a: f64, b: f64) -> Vec<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out: Vec<(f64, f64)> = (0..7).map(|k| (c - h * XGK[k], h * WGK[k])).collect();
    out.push((c, h * WGK[7]));
    out.extend((0..7).rev().map(|k| (c + h * XGK[k], h * WGK[k])));
    out
}

struct Panel {
    a: f64,
    b: f64,
    value: Mat,
    error: f64,
}

fn gk15<F>(f: &F, a: f64, b: f64) -> Panel
where
    F: Fn(f64) -> Mat + Sync,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut xs = vec![c];
    for &x in &XGK[..7] {
        xs.push(c - h * x);
        xs.push(c + h * x);
    }
    let vals: Vec<Mat> = xs.par_iter().map(|&x| f(x)).collect();
    let mut kron = vals[0].mapv(|z| z * WGK[7]);
    let mut gauss = vals[0].mapv(|z| z * WG[3]);
    for k in 0..7 {
        let pair = &vals[1 + 2 * k] + &vals[2 + 2 * k];
        kron.scaled_add(linalg::re(WGK[k]), &pair);
        if k % 2 == 1 {
            gauss.scaled_add(linalg::re(WG[k / 2]), &pair);
        }
    }
    kron.mapv_inplace(|z| z * h);
    gauss.mapv_inplace(|z| z * h);
    let error = linalg::fro(&(&kron - &gauss));
    Panel { a, b, value: kron, error }
}

/// `∫_0^{u_max} f(u) du` for a matrix-valued `f`.
fn integrate<F>(f: F, u_max: f64, quad: &QuadratureSpec) -> Result<Mat>
where
    F: Fn(f64) -> Mat + Sync,
{
    quad.validate()?;
    // Panel estimates are pessimistic, but keep a safety factor against the oracle.
    let target = 0.1 * quad.tol;
    let mut panels: Vec<Panel> = match quad.scheme {
        Scheme::Fixed => {
            let m = quad.panel_budget;
            (0..m).map(|k| gk15(&f, u_max * k as f64 / m as f64, u_max * (k + 1) as f64 / m as f64)).collect()
        }
        Scheme::Adaptive => vec![gk15(&f, 0.0, u_max)],
    };
    loop {
        let total: f64 = panels.iter().map(|p| p.error).sum();
        if total <= target {
            break;
        }
        if quad.scheme == Scheme::Fixed || panels.len() >= quad.panel_budget {
            return Err(Error::Quadrature { achieved: total });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(k, _)| k)
            .expect("panel list is non-empty");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        panels.push(gk15(&f, p.a, mid));
        panels.push(gk15(&f, mid, p.b));
    }
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut acc = panels[0].value.clone();
    for p in &panels[1..] {
        acc += &p.value;
    }
    Ok(acc)
}

fn u_limit(quad: &QuadratureSpec) -> f64 {
    match quad.scheme {
        Scheme::Adaptive => 1.0,
        Scheme::Fixed => {
            let r = quad.lambda_max.sqrt();
            r / (1.0 + r)
        }
    }
}

fn check_hermitian(t: &Mat, what: &str) -> Result<usize> {
    let n = linalg::check_square(t, what)?;
    linalg::check_finite(t)?;
    if linalg::hermiticity_defect(t) > 1e-12 * (1.0 + linalg::fro(t)) {
        return Err(Error::Input(format!("{what} is not Hermitian")));
    }
    Ok(n)
}

/// `(1+T²)^{1/2} = (1/π)∫₀^∞ (1+T²)(1+λ+T²)^{-1} λ^{-1/2} dλ`, with
/// `λ = u²/(1−u)²` so the integrand is smooth on `[0,1]`.
pub fn sqrt_via_resolvent_integral(t: &Mat, quad: &QuadratureSpec) -> Result<Mat> {
    let n = check_hermitian(t, "T")?;
    let id = linalg::identity(n);
    let one_t2 = &id + &t.dot(t);
    let integrand = |u: f64| -> Mat {
        let g = &id * linalg::re(u * u) + &one_t2 * linalg::re((1.0 - u).powi(2));
        let inv = linalg::inverse(&g).expect("u² + (1−u)²(1+T²) is positive definite");
        one_t2.dot(&inv) * linalg::re(2.0 / PI)
    };
    integrate(integrand, u_limit(quad), quad)
}

/// `[(1+T²)^{1/2}, X]` assembled from `R(Y) = [T², Y](1+T²)^{-1/2}`:
/// `½R − ⅛R²T₀⁻¹ + (1/16)R³T₀⁻² − (1/π)∫ λ^{1/2}(λ+T₀²)^{-1}R⁴T₀⁴(λ+T₀²)^{-4} dλ`.
pub fn delta0_via_r_expansion(t: &Mat, x: &Mat, quad: &QuadratureSpec) -> Result<Mat> {
    let n = check_hermitian(t, "T")?;
    if x.dim() != (n, n) {
        return Err(Error::Shape(format!("X is {:?}, T is {n}x{n}", x.dim())));
    }
    let eig = HermEig::new(t)?;
    let t0sq: Vec<f64> = eig.values.iter().map(|l| 1.0 + l * l).collect();
    let sq: Vec<f64> = eig.values.iter().map(|l| l * l).collect();
    // Work in the eigenbasis, where every function of T is diagonal.
    let r = |y: &Mat| -> Mat {
        let mut out = y.clone();
        for ((i, j), z) in out.indexed_iter_mut() {
            *z *= (sq[i] - sq[j]) / t0sq[j].sqrt();
        }
        out
    };
    let xb = eig.to_basis(x);
    let r1 = r(&xb);
    let r2 = r(&r1);
    let r3 = r(&r2);
    let r4 = r(&r3);
    let inv0: Vec<f64> = t0sq.iter().map(|v| 1.0 / v.sqrt()).collect();
    let inv02: Vec<f64> = t0sq.iter().map(|v| 1.0 / v).collect();
    let head = r1 * linalg::re(0.5) - linalg::mul_diag(&r2, &inv0) * linalg::re(0.125)
        + linalg::mul_diag(&r3, &inv02) * linalg::re(1.0 / 16.0);
    let integrand = |u: f64| -> Mat {
        let g: Vec<f64> = t0sq.iter().map(|v| u * u + (1.0 - u).powi(2) * v).collect();
        let w = 2.0 * u * u * (1.0 - u).powi(6) / PI;
        let mut out = r4.clone();
        for ((i, j), z) in out.indexed_iter_mut() {
            *z *= w * t0sq[j] * t0sq[j] / (g[i] * g[j].powi(4));
        }
        out
    };
    let tail = integrate(integrand, u_limit(quad), quad)?;
    Ok(eig.from_basis(&(head - tail)))
}

// ---------------------------------------------------------------- C² criterion

/// Samples `F(i·step)`, `i = 0, 1, …`.
#[derive(Debug, Clone)]
pub struct SampledCurve {
    pub step: f64,
    pub values: Vec<Mat>,
}

impl SampledCurve {
    pub fn from_fn(step: f64, end: f64, f: impl Fn(f64) -> Mat) -> Self {
        let count = (end / step).round() as usize + 1;
        Self { step, values: (0..count).map(|i| f(i as f64 * step)).collect() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct C2Outcome {
    pub sum: f64,
    pub integrable: bool,
    pub panel_norms: Vec<f64>,
    pub tail_slope: f64,
}

pub const MIN_POINTS_PER_PANEL: f64 = 5.0;

/// `Σ_j ‖F‖_{C²([j,j+1], L_{p,∞})}^{p/(p+1)}` from finite differences, with a
/// verdict from the tail slope of the summands against `log(j+1)`.
pub fn c2_criterion(curve: &SampledCurve, p: f64) -> Result<C2Outcome> {
    if !(p > 0.5) || !p.is_finite() {
        return Err(Error::Input(format!("p = {p} must exceed 1/2")));
    }
    let h = curve.step;
    if !(h > 0.0) || 1.0 / h < MIN_POINTS_PER_PANEL - 1e-9 {
        return Err(Error::Input(format!("step {h} gives fewer than {MIN_POINTS_PER_PANEL} points per unit panel")));
    }
    let m = curve.values.len();
    let panels = ((m - 1) as f64 * h + 1e-9).floor() as usize;
    if m < 3 || panels == 0 {
        return Err(Error::Input("curve does not cover a full unit panel".into()));
    }
    let weak = |x: &Mat| -> Result<f64> { quasi_norm(&singular_values(x)?, IdealKind::Weak(p)) };
    let v = &curve.values;
    let mut n0 = Vec::with_capacity(m);
    let mut n1 = Vec::with_capacity(m);
    let mut n2 = Vec::with_capacity(m);
    for i in 0..m {
        let d1 = if i == 0 {
            (&v[1] - &v[0]) / linalg::re(h)
        } else if i == m - 1 {
            (&v[m - 1] - &v[m - 2]) / linalg::re(h)
        } else {
            (&v[i + 1] - &v[i - 1]) / linalg::re(2.0 * h)
        };
        let c = i.clamp(1, m - 2);
        let d2 = (&v[c + 1] - &v[c] * linalg::re(2.0) + &v[c - 1]) / linalg::re(h * h);
        n0.push(weak(&v[i])?);
        n1.push(weak(&d1)?);
        n2.push(weak(&d2)?);
    }
    let panel_norms: Vec<f64> = (0..panels)
        .map(|j| {
            let lo = ((j as f64) / h - 1e-9).ceil() as usize;
            let hi = ((((j + 1) as f64) / h + 1e-9).floor() as usize).min(m - 1);
            let sup = |xs: &[f64]| xs[lo..=hi].iter().copied().fold(0.0, f64::max);
            sup(&n0) + sup(&n1) + sup(&n2)
        })
        .collect();
    let expo = p / (p + 1.0);
    let terms: Vec<f64> = panel_norms.iter().map(|x| x.powf(expo)).collect();
    let sum = terms.iter().sum();
    let scale = terms.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(C2Outcome { sum, integrable: true, panel_norms, tail_slope: f64::NEG_INFINITY });
    }
    let (x, y): (Vec<f64>, Vec<f64>) =
        (panels / 2..panels).filter(|&j| terms[j] > 1e-300).map(|j| (((j + 1) as f64).ln(), terms[j].ln())).unzip();
    if x.len() < 3 {
        return Err(Error::Unreliable("too few panels in the tail".into()));
    }
    let (tail_slope, _) = linalg::linear_fit(&x, &y);
    Ok(C2Outcome { sum, integrable: tail_slope < -1.0, panel_norms, tail_slope })
}

// ---------------------------------------------------------------- multiplier

/// `g_z(t) = 1 − sinh(zt/2) / (2 sinh(t/2) cosh((z−1)t/2))`, `g_z(0) = 1 − z/2`.
pub fn g_z(z: C64, t: f64) -> C64 {
    let t = t.abs();
    if t == 0.0 {
        return ONE - z * 0.5;
    }
    // Same ratio with every exponential pulled out; no overflow for large t.
    let num = ONE - (-z * t).exp();
    let den = (1.0 - (-t).exp()) * (ONE + (-(z - ONE) * t).exp());
    ONE - num / den
}

/// Decay rate of `ĝ_z`: distance of the nearest pole of `g_z` to the real axis.
pub fn ghat_decay_rate(z: C64) -> f64 {
    let w = z - ONE;
    (PI * w.re / w.norm_sqr()).min(2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierGrid {
    /// Width of the Kronrod panels on the `t` axis.
    pub t_panel: f64,
    pub s_max: f64,
    pub s_panel: f64,
}

impl MultiplierGrid {
    /// `s_max` chosen so the analytic tail bound `e^{−κ s_max}` sits at `tol`;
    /// `κ` is shaded down to absorb the polynomial prefactor of the tail.
    pub fn for_tolerance(z: C64, tol: f64) -> Result<Self> {
        if !(tol > 0.0) || !(z.re > 1.0) {
            return Err(Error::Input(format!("need tol > 0 and Re z > 1, got {tol}, {z}")));
        }
        let kappa = ghat_decay_rate(z);
        let s_max = ((10.0 / tol).ln() / (0.85 * kappa)).clamp(5.0, 400.0);
        let s_panel = s_max / (s_max / 0.5).ceil();
        Ok(Self { t_panel: (1.0 / s_max).min(0.1), s_max, s_panel })
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_panel > 0.0) || !(self.s_max > 0.0) || !(self.s_panel > 0.0) {
            return Err(Error::Input(format!("invalid multiplier grid {self:?}")));
        }
        if self.t_panel * self.s_max > PI {
            return Err(Error::Input(format!(
                "t panels of width {} undersample cos(st) at s = {}",
                self.t_panel, self.s_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierTable {
    pub z: (f64, f64),
    pub grid: MultiplierGrid,
    /// `|g_z| < 1e-10` beyond this.
    pub t_window: f64,
    pub t_nodes: Vec<f64>,
    pub g: Vec<(f64, f64)>,
    pub s_nodes: Vec<f64>,
    pub s_weights: Vec<f64>,
    pub ghat: Vec<(f64, f64)>,
    /// Slope of `log|ĝ_z|` against `log(1+|s|)` for `|s| ≥ 2`.
    pub decay_exponent: f64,
    /// `max |ĝ_z(s)|(1+|s|)²` on the grid.
    pub weighted_sup: f64,
}

fn c(z: (f64, f64)) -> C64 {
    C64::new(z.0, z.1)
}

pub fn multiplier_table(z: C64, grid: &MultiplierGrid) -> Result<MultiplierTable> {
    if !(z.re > 1.0) || !z.im.is_finite() {
        return Err(Error::Input(format!("Re z must exceed 1, got {z}")));
    }
    grid.validate()?;
    let mut t_window = 1.0;
    while g_z(z, t_window).norm() >= 1e-10 || g_z(z, t_window + 1.0).norm() >= 1e-10 {
        t_window += 1.0;
        if t_window > 5000.0 {
            return Err(Error::Input(format!("g_z decays too slowly for z = {z}")));
        }
    }
    let t_count = (t_window / grid.t_panel).ceil() as usize;
    let tq: Vec<(f64, f64)> =
        (0..t_count).flat_map(|k| kronrod_nodes(k as f64 * grid.t_panel, (k + 1) as f64 * grid.t_panel)).collect();
    let g: Vec<C64> = tq.iter().map(|&(t, _)| g_z(z, t)).collect();
    let s_count = (grid.s_max / grid.s_panel - 1e-9).ceil() as usize;
    let sq: Vec<(f64, f64)> = (0..2 * s_count)
        .flat_map(|k| {
            let a = -grid.s_max + k as f64 * grid.s_panel;
            kronrod_nodes(a, (a + grid.s_panel).min(grid.s_max))
        })
        .collect();
    // g is even, so ĝ(s) = (1/π)∫₀^∞ g(t) cos(st) dt.
    let ghat: Vec<C64> = sq
        .par_iter()
        .map(|&(s, _)| tq.iter().zip(&g).map(|(&(t, w), gv)| gv * (w * (s * t).cos())).sum::<C64>() / PI)
        .collect();
    let floor = 1e-13 * ghat.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let (x, y): (Vec<f64>, Vec<f64>) = sq
        .iter()
        .zip(&ghat)
        .filter(|((s, _), v)| *s >= 2.0 && v.norm() > floor)
        .map(|((s, _), v)| ((1.0 + s).ln(), v.norm().ln()))
        .unzip();
    let decay_exponent = if x.len() >= 3 { linalg::linear_fit(&x, &y).0 } else { f64::NEG_INFINITY };
    let weighted_sup = sq.iter().zip(&ghat).map(|((s, _), v)| v.norm() * (1.0 + s.abs()).powi(2)).fold(0.0, f64::max);
    Ok(MultiplierTable {
        z: (z.re, z.im),
        grid: *grid,
        t_window,
        t_nodes: tq.iter().map(|p| p.0).collect(),
        g: g.iter().map(|v| (v.re, v.im)).collect(),
        s_nodes: sq.iter().map(|p| p.0).collect(),
        s_weights: sq.iter().map(|p| p.1).collect(),
        ghat: ghat.iter().map(|v| (v.re, v.im)).collect(),
        decay_exponent,
        weighted_sup,
    })
}

impl MultiplierTable {
    pub fn z(&self) -> C64 {
        c(self.z)
    }

    /// `∫ ĝ_z(s) e^{ist} ds` on the stored grid; equals `g_z(t)`.
    pub fn inversion(&self, t: f64) -> C64 {
        self.s_nodes
            .iter()
            .zip(&self.s_weights)
            .zip(&self.ghat)
            .map(|((&s, &w), &v)| c(v) * w * (I * (s * t)).exp())
            .sum()
    }
}

/// Functional calculus of a PSD matrix with `0^{w} = 0` below the kernel threshold.
struct PsdCalculus {
    eig: HermEig,
    threshold: f64,
}

impl PsdCalculus {
    fn new(a: &Mat, what: &str) -> Result<Self> {
        check_hermitian(a, what)?;
        let eig = HermEig::new(a)?;
        let top = eig.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if eig.values.iter().any(|&x| x < -1e-10 * (1.0 + top)) {
            return Err(Error::Input(format!("{what} is not positive semidefinite")));
        }
        Ok(Self { eig, threshold: 1e-12 * top })
    }

    fn pow(&self, w: C64) -> Mat {
        let thr = self.threshold;
        self.eig.apply_c(|x| if x <= thr { ZERO } else { (w * x.ln()).exp() })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DifferenceIdentity {
    pub lhs_norm: f64,
    pub rhs_norm: f64,
    pub residual: f64,
    #[serde(skip)]
    pub lhs: Mat,
    #[serde(skip)]
    pub rhs: Mat,
}

/// `B^zA^z − Y^z` against `T_z(0) − ∫ T_z(s) ĝ_z(s) ds`, `Y = A^{1/2}BA^{1/2}`.
pub fn operator_difference_identity(a: &Mat, b: &Mat, z: C64, quad: &QuadratureSpec) -> Result<DifferenceIdentity> {
    quad.validate()?;
    let table = multiplier_table(z, &MultiplierGrid::for_tolerance(z, quad.tol)?)?;
    operator_difference_identity_with(a, b, &table)
}

pub fn operator_difference_identity_with(a: &Mat, b: &Mat, table: &MultiplierTable) -> Result<DifferenceIdentity> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("A is {:?}, B is {:?}", a.dim(), b.dim())));
    }
    let z = table.z();
    let ca = PsdCalculus::new(a, "A")?;
    let cb = PsdCalculus::new(b, "B")?;
    let a_half = ca.pow(linalg::re(0.5));
    let y = a_half.dot(b).dot(&a_half);
    let y = (&y + &linalg::adjoint(&y)) * linalg::re(0.5);
    let cy = PsdCalculus::new(&y, "A^{1/2}BA^{1/2}")?;
    let lhs = cb.pow(z).dot(&ca.pow(z)) - cy.pow(z);
    let ba = b.dot(&a_half);
    let tz = |s: f64| -> Mat {
        let is = I * s;
        let first = cb.pow(z - ONE + is).dot(&linalg::commutator(&ba, &ca.pow(z - 0.5 + is))).dot(&cy.pow(-is));
        let second = cb.pow(is).dot(&linalg::commutator(&ba, &ca.pow(0.5 + is))).dot(&cy.pow(z - ONE - is));
        first + second
    };
    let t0 = cb.pow(z - ONE).dot(&linalg::commutator(&ba, &ca.pow(z - 0.5)))
        + linalg::commutator(&ba, &a_half).dot(&cy.pow(z - ONE));
    let parts: Vec<Mat> = table
        .s_nodes
        .par_iter()
        .zip(&table.s_weights)
        .zip(&table.ghat)
        .map(|((&s, &w), &g)| tz(s) * (c(g) * w))
        .collect();
    let mut rhs = t0;
    for p in &parts {
        rhs -= p;
    }
    let residual = linalg::svals(&(&lhs - &rhs))?.first().copied().unwrap_or(0.0);
    let norm = |m: &Mat| linalg::svals(m).map(|s| s.first().copied().unwrap_or(0.0));
    Ok(DifferenceIdentity { lhs_norm: norm(&lhs)?, rhs_norm: norm(&rhs)?, residual, lhs, rhs })
}

// ---------------------------------------------------------------- ratios

fn schatten(x: &Mat, p: f64) -> Result<f64> {
    quasi_norm(&singular_values(x)?, IdealKind::Schatten(p))
}

fn lorentz(x: &Mat, r: f64) -> Result<f64> {
    quasi_norm(&singular_values(x)?, IdealKind::LorentzQ1(r))
}

/// `‖X^θ − Y^θ‖_{s/θ} / ‖X − Y‖_s^θ`; `0` when `X = Y`.
pub fn ricard_ratio(x: &Mat, y: &Mat, s: f64, theta: f64) -> Result<f64> {
    if !(s > 0.0) || !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Input(format!("need s > 0 and θ ∈ (0,1], got s = {s}, θ = {theta}")));
    }
    let cx = PsdCalculus::new(x, "X")?;
    let cy = PsdCalculus::new(y, "Y")?;
    let den = schatten(&(x - y), s)?.powf(theta);
    if den == 0.0 {
        return Ok(0.0);
    }
    let w = linalg::re(theta);
    Ok(schatten(&(cx.pow(w) - cy.pow(w)), s / theta)? / den)
}

/// `‖[X, Y^{1+2is}]‖_{r,1} / ((1+|s|)‖[X, Y]‖_{r,1})`; `0` for commuting pairs.
pub fn lipschitz_commutator_ratio(x: &Mat, y: &Mat, s: f64, r: f64) -> Result<f64> {
    if !(r > 1.0) || !s.is_finite() {
        return Err(Error::Input(format!("need r > 1 and finite s, got r = {r}, s = {s}")));
    }
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!("X is {:?}, Y is {:?}", x.dim(), y.dim())));
    }
    let cy = PsdCalculus::new(y, "Y")?;
    let base = linalg::commutator(x, y);
    let scale = linalg::fro(x) * linalg::fro(y);
    if linalg::fro(&base) <= 1e-13 * scale {
        return Ok(0.0);
    }
    let top = linalg::commutator(x, &cy.pow(ONE + I * (2.0 * s)));
    Ok(lorentz(&top, r)? / ((1.0 + s.abs()) * lorentz(&base, r)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct SurveyStats {
    pub trials: usize,
    pub max: f64,
    pub median: f64,
    pub ratios: Vec<f64>,
}

impl SurveyStats {
    fn new(ratios: Vec<f64>) -> Self {
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if sorted.is_empty() { f64::NAN } else { sorted[sorted.len() / 2] };
        let max = sorted.last().copied().unwrap_or(f64::NAN);
        Self { trials: ratios.len(), max, median, ratios }
    }
}

pub fn ricard_survey(trials: usize, n: usize, s: f64, theta: f64, seed: u64) -> Result<SurveyStats> {
    let mut rng = sample::rng(seed);
    let mut ratios = Vec::with_capacity(trials);
    for _ in 0..trials {
        let x = sample::psd(n, &mut rng);
        let y = sample::psd(n, &mut rng);
        ratios.push(ricard_ratio(&x, &y, s, theta)?);
    }
    Ok(SurveyStats::new(ratios))
}

/// Per trial, the largest ratio over `s_grid`.
pub fn lipschitz_survey(trials: usize, n: usize, s_grid: &[f64], r: f64, seed: u64) -> Result<SurveyStats> {
    let mut rng = sample::rng(seed);
    let mut ratios = Vec::with_capacity(trials);
    for _ in 0..trials {
        let x = sample::hermitian(n, &mut rng);
        let y = sample::psd(n, &mut rng);
        let mut worst = 0.0f64;
        for &s in s_grid {
            worst = worst.max(lipschitz_commutator_ratio(&x, &y, s, r)?);
        }
        ratios.push(worst);
    }
    Ok(SurveyStats::new(ratios))
}

/// Random strictly positive pair with spectra in `[lo, hi]`.
pub fn positive_pair(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> (Mat, Mat) {
    let make = |rng: &mut _| {
        let u = sample::unitary(n, rng);
        let d = sample::real_diagonal(n, lo, hi, rng);
        linalg::mul_diag(&u, &d).dot(&linalg::adjoint(&u))
    };
    let a = make(rng);
    let b = make(rng);
    (a, b)
}

// ---------------------------------------------------------------- conditions

/// Decay slope of a singular spectrum, or `None` when it is zero to rounding
/// or of finite rank within the window.
fn membership_slope(x: &Mat, scale: f64) -> Result<Option<DecayFit>> {
    let mu = singular_values(x)?;
    let mu = mu.values();
    if mu.is_empty() || mu[0] <= 1e-12 * scale {
        return Ok(None);
    }
    let n = mu.len();
    let w = calibration_window(n);
    let window = if w.1 >= w.0 + 3 { w } else { (1.min(n - 1), n - 1) };
    match decay_slope(mu, window, 1e-13 * mu[0]) {
        Ok(fit) => Ok(Some(fit)),
        Err(Error::Unreliable(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Finite-size statistics for the four hypotheses of the difference theorem
/// and the resulting `‖B^rA^r − (A^{1/2}BA^{1/2})^r‖₁`.
pub fn power_difference_conditions(a: &Mat, b: &Mat, r: f64) -> Result<DiagnosticReport> {
    if !(r > 1.0) || !r.is_finite() {
        return Err(Error::Input(format!("r = {r} must exceed 1")));
    }
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("A is {:?}, B is {:?}", a.dim(), b.dim())));
    }
    let ca = PsdCalculus::new(a, "A")?;
    let cb = PsdCalculus::new(b, "B")?;
    let a_half = ca.pow(linalg::re(0.5));
    let y = a_half.dot(b).dot(&a_half);
    let y = (&y + &linalg::adjoint(&y)) * linalg::re(0.5);
    let cy = PsdCalculus::new(&y, "A^{1/2}BA^{1/2}")?;
    let rm1 = linalg::re(r - 1.0);
    let scale = (1.0 + linalg::fro(a)) * (1.0 + linalg::fro(b));

    let m1 = cb.pow(rm1).dot(&ca.pow(rm1));
    let m3 = linalg::commutator(&b.dot(&a_half), &a_half);
    let m4 = cb.pow(rm1).dot(&linalg::commutator(b, &ca.pow(rm1))).dot(a);
    let q = r / (r - 1.0);
    let cases: [(&str, &Mat, f64, bool, &str); 4] = [
        ("weak_r_over_r_minus_1", &m1, -1.0 / q, false, "B^{r−1}A^{r−1} ∈ L_{r/(r−1),∞}"),
        ("weak_r", &y, -1.0 / r, false, "A^{1/2}BA^{1/2} ∈ L_{r,∞}"),
        ("lorentz_r_1", &m3, -1.0 / r, true, "[BA^{1/2},A^{1/2}] ∈ L_{r,1}"),
        ("trace_class", &m4, -1.0, true, "B^{r−1}[B,A^{r−1}]A ∈ L_1"),
    ];
    let mut rep = DiagnosticReport::new("difference_conditions");
    for (name, m, bound, strict, anchor) in cases {
        match membership_slope(m, scale)? {
            None => {
                rep.push(name, f64::NEG_INFINITY, bound, true, anchor).with_note("zero or finite rank at this size");
            }
            Some(fit) => {
                let pass = if strict { fit.slope < bound } else { fit.slope <= bound };
                rep.push(name, fit.slope, bound, pass, anchor);
            }
        }
    }
    let rr = linalg::re(r);
    let diff = cb.pow(rr).dot(&ca.pow(rr)) - cy.pow(rr);
    let trace_norm = quasi_norm(&singular_values(&diff)?, IdealKind::Schatten(1.0))?;
    rep.record_check("difference_trace_norm", trace_norm, "B^rA^r − (A^{1/2}BA^{1/2})^r ∈ L_1");
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::diag_real;

    #[test]
    fn kronrod_rule() {
        let nodes = kronrod_nodes(-1.0, 1.0);
        assert_eq!(nodes.len(), 15);
        assert!((nodes.iter().map(|p| p.1).sum::<f64>() - 2.0).abs() < 1e-14);
        // Exact through degree 22.
        let int: f64 = nodes.iter().map(|(x, w)| w * x.powi(22)).sum();
        assert!((int - 2.0 / 23.0).abs() < 1e-14);
        assert!(nodes.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn scalar_square_roots() {
        let q = QuadratureSpec::default();
        let id = sqrt_via_resolvent_integral(&linalg::zeros(1, 1), &q).unwrap();
        assert!((id[[0, 0]].re - 1.0).abs() < 1e-10);
        let three = sqrt_via_resolvent_integral(&diag_real(&[3.0]), &q).unwrap();
        assert!((three[[0, 0]].re - 10f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn random_sqrt_and_delta0() {
        let mut rng = sample::rng(5);
        let q = QuadratureSpec::with_tol(1e-9);
        for _ in 0..5 {
            let t = sample::hermitian(8, &mut rng);
            let x = sample::complex_matrix(8, 8, &mut rng);
            let eig = HermEig::new(&t).unwrap();
            let t0 = eig.apply(|l| (1.0 + l * l).sqrt());
            let s = sqrt_via_resolvent_integral(&t, &q).unwrap();
            assert!(linalg::svals(&(s - &t0)).unwrap()[0] < 1e-8);
            let d = delta0_via_r_expansion(&t, &x, &q).unwrap();
            assert!(linalg::svals(&(d - linalg::commutator(&t0, &x))).unwrap()[0] < 1e-8);
        }
        let t = sample::hermitian(6, &mut rng);
        let zero = delta0_via_r_expansion(&t, &linalg::identity(6), &q).unwrap();
        assert!(linalg::max_abs(&zero) < 1e-12);
        let commuting = delta0_via_r_expansion(&t, &t.dot(&t), &q).unwrap();
        assert!(linalg::max_abs(&commuting) < 1e-10);
    }

    #[test]
    fn budget_exhaustion() {
        let t = diag_real(&[1e4]);
        let q = QuadratureSpec { panel_budget: 2, tol: 1e-14, ..QuadratureSpec::default() };
        assert!(matches!(sqrt_via_resolvent_integral(&t, &q), Err(Error::Quadrature { .. })));
    }

    #[test]
    fn c2_examples() {
        let m = diag_real(&[1.0, 0.5, 0.25]);
        let fast = SampledCurve::from_fn(0.2, 400.0, |l| &m * linalg::re((1.0 + l).powf(-2.5)));
        let out = c2_criterion(&fast, 1.0).unwrap();
        assert!(out.integrable, "slope {}", out.tail_slope);
        assert!((out.tail_slope + 1.25).abs() < 0.05);
        let slow = SampledCurve::from_fn(0.2, 400.0, |l| &m * linalg::re((1.0 + l).powf(-2.0 / 3.0)));
        assert!(!c2_criterion(&slow, 1.0).unwrap().integrable);
        let flat = SampledCurve::from_fn(0.2, 100.0, |_| m.clone());
        assert!(!c2_criterion(&flat, 1.0).unwrap().integrable);
        let zero = SampledCurve::from_fn(0.2, 50.0, |_| linalg::zeros(3, 3));
        let z = c2_criterion(&zero, 1.0).unwrap();
        assert!(z.integrable && z.sum == 0.0);
        assert!(c2_criterion(&SampledCurve::from_fn(0.5, 50.0, |_| m.clone()), 1.0).is_err());
    }

    #[test]
    fn multiplier_examples() {
        let z = linalg::re(2.5);
        assert_eq!(g_z(z, 0.0), linalg::re(-0.25));
        // Continuity at the removable point.
        assert!((g_z(z, 1e-6) - g_z(z, 0.0)).norm() < 1e-9);
        let direct = 1.0 - (1.25f64).sinh() / (2.0 * 0.5f64.sinh() * 0.75f64.cosh());
        assert!((g_z(z, 1.0).re - direct).abs() < 1e-14);
        let table = multiplier_table(z, &MultiplierGrid::for_tolerance(z, 1e-10).unwrap()).unwrap();
        for t in [0.0, 0.7, 2.3] {
            assert!((table.inversion(t) - g_z(z, t)).norm() < 1e-6, "t = {t}");
        }
        assert!(table.weighted_sup.is_finite());
        assert!(table.decay_exponent < -2.0);
        let coarse = MultiplierGrid { t_panel: 1.0, s_max: 10.0, s_panel: 0.5 };
        assert!(multiplier_table(z, &coarse).is_err());
        assert!(multiplier_table(linalg::re(0.5), &coarse).is_err());
    }

    #[test]
    fn difference_identity() {
        let mut rng = sample::rng(11);
        let q = QuadratureSpec::default();
        let z = linalg::re(2.5);
        let (a, b) = positive_pair(6, 0.2, 3.0, &mut rng);
        let out = operator_difference_identity(&a, &b, z, &q).unwrap();
        assert!(out.residual < 1e-6, "residual {}", out.residual);
        assert!(out.lhs_norm > 1e-3);
        let id = operator_difference_identity(&linalg::identity(6), &b, z, &q).unwrap();
        assert!(id.lhs_norm < 1e-10 && id.rhs_norm < 1e-10);
        let zero = operator_difference_identity(&a, &linalg::zeros(6, 6), z, &q).unwrap();
        assert!(zero.lhs_norm < 1e-12 && zero.rhs_norm < 1e-12);
    }

    #[test]
    fn ratio_exact_cases() {
        let mut rng = sample::rng(3);
        let x = sample::psd(5, &mut rng);
        let r = ricard_ratio(&x, &linalg::zeros(5, 5), 1.0, 0.5).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
        let dx = diag_real(&[3.0, 1.0, 0.5]);
        let dy = diag_real(&[1.0, 2.0, 0.0]);
        assert!((ricard_ratio(&dx, &dy, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ricard_ratio(&x, &x, 1.0, 0.5).unwrap(), 0.0);
        assert!(ricard_ratio(&x, &x, 1.0, 1.5).is_err());

        let v = sample::unitary(4, &mut rng);
        let proj = v.dot(&diag_real(&[1.0, 1.0, 0.0, 0.0])).dot(&linalg::adjoint(&v));
        let h = sample::hermitian(4, &mut rng);
        assert!((lipschitz_commutator_ratio(&h, &proj, 0.0, 2.0).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(lipschitz_commutator_ratio(&dx, &dy, 3.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn conditions_on_commuting_and_flat_pairs() {
        let d: Vec<f64> = (0..200).map(|n| 1.0 / (n + 1) as f64).collect();
        let a = diag_real(&d);
        let rep = power_difference_conditions(&a, &a, 1.5).unwrap();
        assert!(rep.all_pass(), "{:?}", rep.failures());
        assert!(rep.get("difference_trace_norm").unwrap().measured < 1e-10);
        let mut rng = sample::rng(8);
        let (a, b) = positive_pair(60, 1.0, 2.0, &mut rng);
        let rep = power_difference_conditions(&a, &b, 1.5).unwrap();
        assert!(!rep.all_pass());
    }
}
