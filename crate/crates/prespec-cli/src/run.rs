//! Dispatch from a validated config to the library, collecting checks and tables.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use prespec::character::{character_compare, phase_of_pair};
use prespec::linalg::{self, re, HermEig, C64};
use prespec::opint::{
    c2_criterion, delta0_via_r_expansion, g_z, lipschitz_survey, multiplier_table, operator_difference_identity_with,
    positive_pair, ricard_survey, sqrt_via_resolvent_integral, MultiplierGrid, SampledCurve,
};
use prespec::opmodel::{build_staggered_interval, bump, GridDomain};
use prespec::report::DiagnosticReport;
use prespec::sample;
use prespec::triple::{
    clone_diagnostics, dimension_diagnostic, hypothesis_diagnostics, resolvent_difference_decay, validate_axioms,
    weyl_count, weyl_plateau, HypothesisOptions, PreSpectralTripleModel,
};
use prespec::window::calibration_window;
use prespec::{Error, Result};

use crate::config::{ExperimentConfig, Kind, ModelKind, SweepTarget};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub section: String,
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub anchor: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone)]
pub struct Table {
    pub file: &'static str,
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    pub pass: bool,
    pub checks: Vec<CheckRecord>,
    pub values: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_owned(),
            config: config.clone(),
            pass: true,
            checks: Vec::new(),
            values: BTreeMap::new(),
            artifacts: Vec::new(),
            tables: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    fn absorb(&mut self, section: &str, rep: DiagnosticReport) {
        for c in rep.checks {
            self.checks.push(CheckRecord {
                section: section.to_owned(),
                name: c.name,
                measured: c.measured,
                tolerance: c.tolerance,
                pass: c.pass,
                anchor: c.anchor,
                note: c.note,
            });
        }
        for (k, v) in rep.values {
            self.values.insert(format!("{section}.{k}"), v);
        }
    }

    fn timed<T>(&mut self, section: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.timings.insert(section.to_owned(), start.elapsed().as_secs_f64());
        out
    }

    fn finish(mut self) -> Self {
        self.pass = self.checks.iter().all(|c| c.pass);
        self
    }
}

/// Shortest round-trip form; empty for NaN, no negative zero.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x == 0.0 {
        "0".into()
    } else {
        format!("{x:?}")
    }
}

fn flag(i: usize, w: (usize, usize)) -> String {
    u8::from(i >= w.0 && i <= w.1).to_string()
}

fn domain(cfg: &ExperimentConfig, n: usize) -> Result<GridDomain> {
    GridDomain::new(&cfg.extents(), &vec![n; cfg.domain.dim], cfg.domain.shape)
}

/// Builds the model at `n` nodes per axis and enforces the configured margin.
fn model(cfg: &ExperimentConfig, n: usize) -> Result<PreSpectralTripleModel> {
    let dom = domain(cfg, n)?;
    let gens: Vec<Vec<C64>> = cfg.bumps.iter().map(|b| bump(&dom, &b.center, b.r_in, b.r_out)).collect();
    let t = PreSpectralTripleModel::dirichlet(dom, &gens)?;
    for (i, a) in t.generators.iter().enumerate() {
        if a.margin < cfg.domain.margin {
            return Err(Error::Margin(format!(
                "bump {i} has margin {} at {n} nodes, config demands {}",
                a.margin, cfg.domain.margin
            )));
        }
    }
    Ok(t)
}

pub fn run(command: &str, cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut out = RunReport::new(command, cfg);
    match cfg.kind {
        Kind::Spectrum => spectrum(cfg, &mut out)?,
        Kind::Axioms => {
            let t = model(cfg, cfg.domain.nodes[0])?;
            let rep = out.timed("axioms", || validate_axioms(&t, cfg.estimator.axiom_tol))?;
            out.absorb("axioms", rep);
            let rep = out.timed("clone", || clone_diagnostics(&t, cfg.estimator.kmax))?;
            out.absorb("clone", rep);
        }
        Kind::Dimension => dimension(cfg, &mut out)?,
        Kind::Hypotheses => {
            let t = model(cfg, cfg.domain.nodes[0])?;
            let rep =
                out.timed("hypotheses", || hypothesis_diagnostics(&t, cfg.estimator.p, &HypothesisOptions::default()))?;
            out.absorb("hypotheses", rep);
        }
        Kind::Character => character(cfg, &mut out)?,
        Kind::OpintSurvey => opint_survey(cfg, &mut out)?,
        Kind::Sweep => sweep(cfg, &mut out)?,
    }
    Ok(out.finish())
}

fn spectrum(cfg: &ExperimentConfig, out: &mut RunReport) -> Result<()> {
    let n = cfg.domain.nodes[0];
    let mut rep = DiagnosticReport::new("spectrum");
    let (values, reference) = match cfg.domain.model {
        ModelKind::Staggered => {
            let a = cfg.extents()[0];
            let pair = build_staggered_interval(n, a)?;
            let eig = out.timed("spectrum", || HermEig::new(&pair.dstar_d().to_dense()))?;
            let h = a / (n + 1) as f64;
            let mut want: Vec<f64> = (1..=n)
                .map(|k| 4.0 / (h * h) * (k as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin().powi(2))
                .collect();
            want.sort_by(f64::total_cmp);
            let worst = eig.values.iter().zip(&want).map(|(g, w)| (g - w).abs() / w).fold(0.0, f64::max);
            rep.at_most("closed_form_relative_error", worst, 1e-10, "is the Dirichlet Laplacian");
            let phase = phase_of_pair(&pair)?;
            let ker_d = (pair.v_dim - phase.rank) as f64;
            let ker_dstar = (pair.w_dim - phase.rank) as f64;
            rep.push("kernel_dim_dstar_d", ker_d, 0.0, ker_d == 0.0, "always has trivial kernel");
            rep.push(
                "kernel_dim_d_dstar",
                ker_dstar,
                1.0,
                ker_dstar == 1.0,
                "1-dimensional kernel consisting of constant functions",
            );
            (eig.values.to_vec(), want)
        }
        ModelKind::Dirichlet => {
            let t = model(cfg, n)?;
            rep.at_most("symmetry_defect", t.pair.symmetry_defect()?, 1e-12, "closed symmetric operator");
            let values = out.timed("spectrum", || t.v_spectrum().map(|s| s.values.to_vec()))?;
            if cfg.domain.shape == prespec::opmodel::MaskShape::Rect {
                let wc = weyl_count(&t)?;
                rep.record_check("weyl_count_relative_error", wc.max_relative_error, "Weyl law");
            }
            let nan = vec![f64::NAN; values.len()];
            (values, nan)
        }
    };
    let w = calibration_window(values.len());
    let rows = values
        .iter()
        .zip(&reference)
        .enumerate()
        .map(|(i, (v, r))| vec![i.to_string(), num(*v), num(*r), flag(i, w)])
        .collect();
    out.tables.push(Table { file: "spectrum.csv", header: &["index", "value", "reference", "in_window"], rows });
    out.absorb("spectrum", rep);
    Ok(())
}

fn series_rows(series: &str, values: &[f64], offset: usize, w: (usize, usize)) -> Vec<Vec<String>> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| vec![series.to_owned(), (i + offset).to_string(), num(*v), flag(i + offset, w)])
        .collect()
}

const SERIES_HEADER: &[&str] = &["series", "index", "value", "in_window"];

fn dimension(cfg: &ExperimentConfig, out: &mut RunReport) -> Result<()> {
    let t = model(cfg, cfg.domain.nodes[0])?;
    let rep = out.timed("dimension", || dimension_diagnostic(&t, cfg.estimator.p, cfg.estimator.kmax))?;
    out.absorb("dimension", rep);
    let mut rep = DiagnosticReport::new("weyl");
    let a = &t.generators[0];
    let plateau = out.timed("weyl_plateau", || weyl_plateau(&t, a, 1))?;
    rep.at_most("plateau_ratio", plateau.ratio(), 1.5, "(1⊗M_f)(1+D*D)^{-k} ∈ L_{d/(2k),∞}");
    rep.value("plateau_mean", plateau.mean);
    if cfg.domain.shape == prespec::opmodel::MaskShape::Rect {
        let wc = weyl_count(&t)?;
        rep.at_most("weyl_count_relative_error", wc.max_relative_error, 0.10, "Weyl law");
    }
    let (fit, mu) = out.timed("resolvent_difference", || resolvent_difference_decay(&t, a))?;
    rep.at_most("resolvent_difference_slope", fit.slope, -3.0, "⋂_{s>0} L_s");
    out.absorb("weyl", rep);
    let w = calibration_window(t.v_dim());
    let mut rows = series_rows("weyl_plateau", &plateau.values, plateau.window.0, w);
    rows.extend(series_rows("resolvent_difference", &mu, 0, w));
    out.tables.push(Table { file: "spectra.csv", header: SERIES_HEADER, rows });
    Ok(())
}

fn character(cfg: &ExperimentConfig, out: &mut RunReport) -> Result<()> {
    let spec = cfg.cycle_spec();
    let (rep, rungs) = out.timed("character", || character_compare(&spec, cfg.domain.dim, &cfg.domain.nodes))?;
    out.absorb("character", rep);
    let rows = rungs
        .iter()
        .map(|r| {
            vec![
                r.nodes.to_string(),
                num(r.ch_re),
                num(r.ch_im),
                num(r.lhs.value),
                num(r.lhs.spread),
                num(r.lhs_zeta.value),
                num(r.relative_gap),
                num(r.ftilde_square_defect),
            ]
        })
        .collect();
    out.tables.push(Table {
        file: "ladder.csv",
        header: &["nodes", "ch_re", "ch_im", "lhs", "lhs_spread", "lhs_zeta", "relative_gap", "ftilde_square_defect"],
        rows,
    });
    Ok(())
}

fn opint_survey(cfg: &ExperimentConfig, out: &mut RunReport) -> Result<()> {
    let s = &cfg.survey;
    let quad = cfg.quadrature;
    let mut rng = sample::rng(cfg.seed);
    let mut rep = DiagnosticReport::new("opint");
    let (mut sqrt_err, mut delta_err): (f64, f64) = (0.0, 0.0);
    out.timed("resolvent_integrals", || {
        for _ in 0..s.trials {
            let t = sample::hermitian(s.size, &mut rng);
            let eig = HermEig::new(&t)?;
            let t0 = eig.apply(|l| (1.0 + l * l).sqrt());
            let got = sqrt_via_resolvent_integral(&t, &quad)?;
            sqrt_err = sqrt_err.max(linalg::svals(&(got - &t0))?[0]);
            let x = sample::complex_matrix(s.size, s.size, &mut rng);
            let got = delta0_via_r_expansion(&t, &x, &quad)?;
            delta_err = delta_err.max(linalg::svals(&(got - linalg::commutator(&t0, &x)))?[0]);
        }
        Ok(())
    })?;
    rep.at_most("sqrt_integral_error", sqrt_err, quad.tol, "Starting from the integral formula");
    rep.at_most("delta0_expansion_error", delta_err, quad.tol, "Starting from the integral formula");
    let m = linalg::diag_real(&[1.0, 0.5, 0.25]);
    let fast = c2_criterion(&SampledCurve::from_fn(0.2, 400.0, |l| &m * re((1.0 + l).powf(-2.5))), 1.0)?;
    let slow = c2_criterion(&SampledCurve::from_fn(0.2, 400.0, |l| &m * re((1.0 + l).powf(-2.0 / 3.0))), 1.0)?;
    rep.push("c2_integrable_fast_decay", fast.tail_slope, -1.0, fast.integrable, "3p > 2");
    rep.push("c2_divergent_slow_decay", slow.tail_slope, -1.0, !slow.integrable, "3p > 2");
    let mut survey_rows = Vec::new();
    for &zr in &s.z {
        let z = re(zr);
        let table = out.timed(&format!("multiplier_table[{zr}]"), || {
            multiplier_table(z, &MultiplierGrid::for_tolerance(z, s.identity_tol)?)
        })?;
        let mut worst: f64 = 0.0;
        for i in 0..s.trials {
            let (a, b) = positive_pair(s.size, 0.1, 3.0, &mut rng);
            let r = operator_difference_identity_with(&a, &b, &table)?.residual;
            worst = worst.max(r);
            survey_rows.push(vec![format!("identity_residual[z={zr}]"), i.to_string(), num(r)]);
        }
        rep.at_most(&format!("identity_residual[z={zr}]"), worst, 1e-6, "T_z(0) − ∫T_z(s)ĝ_z(s)ds");
    }
    let g0 = g_z(re(2.5), 0.0);
    rep.push("g_2.5_at_zero", g0.re, -0.25, g0 == re(-0.25), "T_z(0) − ∫T_z(s)ĝ_z(s)ds");
    let ricard =
        out.timed("ricard", || ricard_survey(s.trials, s.size, s.ricard_s, s.ricard_theta, cfg.seed.wrapping_add(1)))?;
    let lip = out.timed("lipschitz", || {
        lipschitz_survey(s.trials, s.size, &s.lipschitz_s, s.lipschitz_r, cfg.seed.wrapping_add(2))
    })?;
    rep.push("ricard_max_ratio", ricard.max, f64::INFINITY, ricard.max.is_finite(), "C_{s,θ}")
        .with_note("constant is measured, not bounded");
    rep.value("ricard_median_ratio", ricard.median);
    rep.push("lipschitz_max_ratio", lip.max, f64::INFINITY, lip.max.is_finite(), "c_r")
        .with_note("constant is measured, not bounded");
    rep.value("lipschitz_median_ratio", lip.median);
    for (i, r) in ricard.ratios.iter().enumerate() {
        survey_rows.push(vec!["ricard".into(), i.to_string(), num(*r)]);
    }
    for (i, r) in lip.ratios.iter().enumerate() {
        survey_rows.push(vec!["lipschitz".into(), i.to_string(), num(*r)]);
    }
    out.absorb("opint", rep);
    out.tables.push(Table { file: "survey.csv", header: &["series", "index", "value"], rows: survey_rows });
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, out: &mut RunReport) -> Result<()> {
    let target = cfg.sweep.as_ref().map(|s| s.target).ok_or_else(|| Error::Input("missing [sweep] table".into()))?;
    let mut rep = DiagnosticReport::new("sweep");
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    let mut metric = Vec::new();
    // Rungs run one after another: each holds dense spectra of the whole grid.
    for &n in &cfg.domain.nodes {
        let t = model(cfg, n)?;
        let a = &t.generators[0];
        let value = match target {
            SweepTarget::Dimension => {
                let p = out.timed(&format!("rung[{n}]"), || weyl_plateau(&t, a, 1))?;
                rep.record_check(&format!("plateau_ratio[{n}]"), p.ratio(), "(1⊗M_f)(1+D*D)^{-k} ∈ L_{d/(2k),∞}");
                rows.push(vec![n.to_string(), "plateau_ratio".into(), num(p.ratio())]);
                rows.push(vec![n.to_string(), "plateau_mean".into(), num(p.mean)]);
                p.mean
            }
            SweepTarget::Decay => {
                let (fit, _) = out.timed(&format!("rung[{n}]"), || resolvent_difference_decay(&t, a))?;
                rep.at_most(&format!("decay_slope[{n}]"), fit.slope, -3.0, "⋂_{s>0} L_s");
                rows.push(vec![n.to_string(), "decay_slope".into(), num(fit.slope)]);
                fit.slope
            }
        };
        logs.push((n as f64).ln());
        metric.push(value);
    }
    if target == SweepTarget::Dimension {
        let hi = metric.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = metric.iter().copied().fold(f64::INFINITY, f64::min);
        rep.at_most("plateau_mean_spread", hi / lo - 1.0, 0.30, "(1⊗M_f)(1+D*D)^{-k} ∈ L_{d/(2k),∞}");
    }
    let (trend, _) = linalg::linear_fit(&logs, &metric);
    rep.value("trend_per_log_nodes", trend);
    out.absorb("sweep", rep);
    out.tables.push(Table { file: "ladder.csv", header: &["nodes", "metric", "value"], rows });
    Ok(())
}
