//! Experiment configuration: a flat TOML file with one table per concern.

use std::path::Path;

use serde::{Deserialize, Serialize};

use prespec::character::CycleSpec;
use prespec::ideals::TraceMethod;
use prespec::opint::QuadratureSpec;
use prespec::opmodel::MaskShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Spectrum,
    Axioms,
    Dimension,
    Hypotheses,
    Character,
    OpintSurvey,
    Sweep,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Spectrum => "spectrum",
            Kind::Axioms => "axioms",
            Kind::Dimension => "dimension",
            Kind::Hypotheses => "hypotheses",
            Kind::Character => "character",
            Kind::OpintSurvey => "opint-survey",
            Kind::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Forward difference on an interval, `n` interior nodes.
    Staggered,
    /// Central-difference Dirac operator with Dirichlet truncation.
    Dirichlet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default = "default_shape")]
    pub shape: MaskShape,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Side lengths; a single value is used for every axis.
    #[serde(default = "default_extents")]
    pub extents: Vec<f64>,
    /// Node ladder. Every kind except `sweep` and `character` uses the first entry.
    pub nodes: Vec<usize>,
    /// Minimum support margin (in cells) demanded of every generator.
    #[serde(default = "default_margin")]
    pub margin: usize,
}

fn default_model() -> ModelKind {
    ModelKind::Dirichlet
}

fn default_shape() -> MaskShape {
    MaskShape::Rect
}

fn default_dim() -> usize {
    2
}

fn default_extents() -> Vec<f64> {
    vec![1.0]
}

fn default_margin() -> usize {
    1
}

/// Radial plateau generators `ψ(|x − c|)`, equal to 1 inside `r_in`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub center: Vec<f64>,
    pub r_in: f64,
    pub r_out: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_method")]
    pub method: TraceMethod,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Highest iterate for block-formula and smoothness probes.
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    #[serde(default = "default_axiom_tol")]
    pub axiom_tol: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { method: default_method(), p: default_p(), kmax: default_kmax(), axiom_tol: default_axiom_tol() }
    }
}

fn default_method() -> TraceMethod {
    TraceMethod::LogAverage
}

fn default_p() -> f64 {
    2.0
}

fn default_kmax() -> usize {
    1
}

fn default_axiom_tol() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_z")]
    pub z: Vec<f64>,
    /// Identity tolerance used to size the multiplier grid.
    #[serde(default = "default_identity_tol")]
    pub identity_tol: f64,
    #[serde(default = "default_ricard_s")]
    pub ricard_s: f64,
    #[serde(default = "default_ricard_theta")]
    pub ricard_theta: f64,
    #[serde(default = "default_lipschitz_s")]
    pub lipschitz_s: Vec<f64>,
    #[serde(default = "default_lipschitz_r")]
    pub lipschitz_r: f64,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            size: default_size(),
            z: default_z(),
            identity_tol: default_identity_tol(),
            ricard_s: default_ricard_s(),
            ricard_theta: default_ricard_theta(),
            lipschitz_s: default_lipschitz_s(),
            lipschitz_r: default_lipschitz_r(),
        }
    }
}

fn default_trials() -> usize {
    20
}

fn default_size() -> usize {
    6
}

fn default_z() -> Vec<f64> {
    vec![2.2, 2.5, 3.0]
}

fn default_identity_tol() -> f64 {
    1e-10
}

fn default_ricard_s() -> f64 {
    1.0
}

fn default_ricard_theta() -> f64 {
    0.5
}

fn default_lipschitz_s() -> Vec<f64> {
    vec![0.0, 1.0, 5.0, 20.0]
}

fn default_lipschitz_r() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepTarget {
    /// Weyl plateau of the first generator at `k = 1`.
    Dimension,
    /// Resolvent-difference decay slope of the first generator.
    Decay,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub target: SweepTarget,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainConfig,
    #[serde(default)]
    pub bumps: Vec<BumpConfig>,
    #[serde(default)]
    pub cycle: Option<CycleSpec>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub survey: SurveyConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Extents with a scalar broadcast to every axis.
    pub fn extents(&self) -> Vec<f64> {
        match self.domain.extents.as_slice() {
            [e] => vec![*e; self.domain.dim],
            e => e.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.domain;
        if d.nodes.is_empty() {
            return fail("domain.nodes must list at least one grid size");
        }
        if d.nodes.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("node ladder {:?} must be strictly increasing", d.nodes));
        }
        if !(1..=4).contains(&d.dim) {
            return fail(format!("domain.dim = {} outside 1..=4", d.dim));
        }
        let ext = self.extents();
        if ext.len() != d.dim || ext.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return fail(format!("domain.extents {:?} must hold 1 or {} positive values", d.extents, d.dim));
        }
        if d.model == ModelKind::Staggered && (d.dim != 1 || self.kind != Kind::Spectrum) {
            return fail("the staggered model is one-dimensional and supports kind = \"spectrum\" only");
        }
        for (i, b) in self.bumps.iter().enumerate() {
            if b.center.len() != d.dim {
                return fail(format!("bumps[{i}].center has {} coordinates, domain has {}", b.center.len(), d.dim));
            }
            if !(b.r_in >= 0.0 && b.r_out > b.r_in) {
                return fail(format!("bumps[{i}] needs 0 <= r_in < r_out"));
            }
        }
        let needs_bumps = matches!(self.kind, Kind::Axioms | Kind::Dimension | Kind::Hypotheses | Kind::Sweep);
        if needs_bumps && self.bumps.is_empty() {
            return fail(format!("kind = \"{}\" needs at least one [[bumps]] generator", self.kind.name()));
        }
        if let Some(c) = &self.cycle {
            if c.factors.len() != d.dim + 1 {
                return fail(format!("cycle needs {} factors in dimension {}", d.dim + 1, d.dim));
            }
            for (i, f) in c.factors.iter().enumerate() {
                if f.center.len() != d.dim || !(f.r_in >= 0.0 && f.r_out > f.r_in) {
                    return fail(format!("cycle.factors[{i}] is malformed"));
                }
                if f.coordinate.is_some_and(|j| j >= d.dim) {
                    return fail(format!("cycle.factors[{i}].coordinate out of range"));
                }
            }
        }
        match self.kind {
            Kind::Sweep => {
                if d.nodes.len() < 2 {
                    return fail("sweep needs a node ladder with at least two rungs");
                }
                if self.sweep.is_none() {
                    return fail("kind = \"sweep\" needs a [sweep] table with a target");
                }
            }
            Kind::Character => {
                if d.nodes.len() < 2 {
                    return fail("character comparison needs a node ladder with at least two rungs");
                }
                if d.dim % 2 != 0 {
                    return fail("character comparison needs an even dimension");
                }
            }
            _ => {}
        }
        let e = &self.estimator;
        if !(e.p > 0.0 && e.p.is_finite()) || !(e.axiom_tol > 0.0) {
            return fail("estimator.p and estimator.axiom_tol must be positive");
        }
        self.quadrature.validate().map_err(|err| ConfigError(err.to_string()))?;
        let s = &self.survey;
        if s.trials == 0 || s.size == 0 {
            return fail("survey.trials and survey.size must be positive");
        }
        if s.z.iter().any(|&z| !(z > 1.0)) || !(s.identity_tol > 0.0) {
            return fail("survey.z entries must exceed 1 and survey.identity_tol must be positive");
        }
        if !(s.ricard_s > 0.0) || !(s.ricard_theta > 0.0 && s.ricard_theta <= 1.0) || !(s.lipschitz_r > 1.0) {
            return fail("survey ratios need ricard_s > 0, ricard_theta in (0, 1], lipschitz_r > 1");
        }
        Ok(())
    }

    pub fn cycle_spec(&self) -> CycleSpec {
        self.cycle.clone().unwrap_or_else(|| CycleSpec::centered(self.domain.dim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
kind = "dimension"
seed = 3
[domain]
nodes = [12]
[[bumps]]
center = [0.5, 0.5]
r_in = 0.05
r_out = 0.25
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(cfg.kind, Kind::Dimension);
        assert_eq!(cfg.extents(), vec![1.0, 1.0]);
        assert_eq!(cfg.estimator.p, 2.0);
        assert_eq!(cfg.quadrature, QuadratureSpec::default());
    }

    #[test]
    fn rejects_bad_ladders_and_fields() {
        let bad = BASE.replace("nodes = [12]", "nodes = [12, 12]");
        assert!(ExperimentConfig::parse(&bad).is_err());
        let sweep = BASE.replace("\"dimension\"", "\"sweep\"") + "[sweep]\ntarget = \"decay\"\n";
        assert!(ExperimentConfig::parse(&sweep).unwrap_err().0.contains("two rungs"));
        assert!(ExperimentConfig::parse(&(BASE.to_owned() + "bogus = 1\n")).is_err());
        let stag = BASE.replace("[domain]", "[domain]\nmodel = \"staggered\"");
        assert!(ExperimentConfig::parse(&stag).is_err());
    }
}
