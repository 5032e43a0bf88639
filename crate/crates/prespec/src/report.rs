//! Named measurements with tolerances and verdicts.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Short identifier of the property under test.
    pub anchor: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DiagnosticReport {
    pub title: String,
    pub checks: Vec<Check>,
    pub values: BTreeMap<String, f64>,
}

impl DiagnosticReport {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), ..Self::default() }
    }

    pub fn push(&mut self, name: &str, measured: f64, tolerance: f64, pass: bool, anchor: &str) -> &mut Check {
        self.checks.push(Check {
            name: name.to_string(),
            measured,
            tolerance,
            pass,
            anchor: anchor.to_string(),
            note: None,
        });
        self.checks.last_mut().expect("just pushed")
    }

    /// Passes when `measured <= tolerance` (NaN fails).
    pub fn at_most(&mut self, name: &str, measured: f64, tolerance: f64, anchor: &str) -> &mut Check {
        let pass = measured <= tolerance;
        self.push(name, measured, tolerance, pass, anchor)
    }

    /// Informational record: always passes, tolerance is NaN.
    pub fn record_check(&mut self, name: &str, measured: f64, anchor: &str) -> &mut Check {
        self.push(name, measured, f64::NAN, measured.is_finite(), anchor)
    }

    pub fn value(&mut self, name: &str, v: f64) {
        self.values.insert(name.to_string(), v);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn merge(&mut self, prefix: &str, other: DiagnosticReport) {
        for mut c in other.checks {
            c.name = format!("{prefix}{}", c.name);
            self.checks.push(c);
        }
        for (k, v) in other.values {
            self.values.insert(format!("{prefix}{k}"), v);
        }
    }
}

impl Check {
    pub fn with_note(&mut self, note: impl Into<String>) -> &mut Self {
        self.note = Some(note.into());
        self
    }
}
