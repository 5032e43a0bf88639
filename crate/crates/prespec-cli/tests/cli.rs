use std::path::Path;
use std::process::{Command, Output};

fn run(sub: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    let dir = out.parent().unwrap();
    let cfg = dir.join(format!("{sub}.toml"));
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_prespec"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("PRESPEC_SEED")
        .env_remove("PRESPEC_OUT")
        .env_remove("PRESPEC_CONFIG")
        .env_remove("PRESPEC_THREADS")
        .output()
        .unwrap()
}

const STAGGERED: &str = r#"
kind = "spectrum"
[domain]
model = "staggered"
dim = 1
nodes = [256]
"#;

const SURVEY: &str = r#"
kind = "opint-survey"
seed = 5
[domain]
nodes = [4]
[quadrature]
tol = 1e-8
[survey]
trials = 4
size = 4
z = [2.5]
"#;

#[test]
fn staggered_spectrum_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let res = run("spectrum", STAGGERED, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let mut rdr = csv::Reader::from_path(out.join("spectrum.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["index", "value", "reference", "in_window"]);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let v: f64 = rec[1].parse().unwrap();
        let r: f64 = rec[2].parse().unwrap();
        assert!((v - r).abs() <= 1e-10 * r, "{v} vs {r}");
        rows += 1;
    }
    assert_eq!(rows, 256);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["pass"], true);
    for check in report["checks"].as_array().unwrap() {
        assert!(!check["anchor"].as_str().unwrap().is_empty());
    }
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for (sub, cfg) in [
        ("spectrum", "kind = \"spectrum\"\n[domain\nnodes = 3"),
        ("spectrum", "kind = \"spectrum\"\n[domain]\nnodes = [10, 8]\nmodel = \"staggered\"\ndim = 1\n"),
        ("sweep", "kind = \"sweep\"\n[domain]\nnodes = [12]\n[[bumps]]\ncenter = [0.5, 0.5]\nr_in = 0.05\nr_out = 0.2\n[sweep]\ntarget = \"decay\"\n"),
        ("opint", STAGGERED),
    ] {
        let res = run(sub, cfg, &out, &[]);
        assert_eq!(res.status.code(), Some(2), "{cfg}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(!out.exists());
    }
    // Margin demanded by the config but not met by the bump.
    let tight = "kind = \"axioms\"\n[domain]\nnodes = [10]\nmargin = 6\n[[bumps]]\ncenter = [0.5, 0.5]\nr_in = 0.05\nr_out = 0.4\n";
    let res = run("model", tight, &out, &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn reports_are_byte_identical_for_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(run("opint", SURVEY, &a, &[]).status.code(), Some(0));
    assert_eq!(run("opint", SURVEY, &b, &["--threads", "1"]).status.code(), Some(0));
    for file in ["report.json", "checks.csv", "survey.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    assert_eq!(run("opint", SURVEY, &c, &["--seed", "6"]).status.code(), Some(0));
    assert_ne!(std::fs::read(a.join("survey.csv")).unwrap(), std::fs::read(c.join("survey.csv")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(c.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 6);
}

#[test]
fn seed_can_come_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("survey.toml");
    std::fs::write(&cfg, SURVEY).unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_prespec"))
        .arg("opint")
        .env("PRESPEC_CONFIG", &cfg)
        .env("PRESPEC_OUT", &out)
        .env("PRESPEC_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 11);
}

#[test]
fn failing_checks_exit_1_with_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    // The R^2 block formula needs more margin than this bump leaves.
    let cfg = "kind = \"axioms\"\n[domain]\nnodes = [12]\n[[bumps]]\ncenter = [0.5, 0.5]\nr_in = 0.05\nr_out = 0.3\n[estimator]\nkmax = 2\n";
    let res = run("model", cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(1), "{}", String::from_utf8_lossy(&res.stdout));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
    assert!(out.join("checks.csv").exists());
}

#[test]
fn decay_sweep_reports_each_rung() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = "kind = \"sweep\"\n[domain]\nnodes = [12, 16]\n[[bumps]]\ncenter = [0.5, 0.5]\nr_in = 0.05\nr_out = 0.25\n[sweep]\ntarget = \"decay\"\n";
    let res = run("sweep", cfg, &out, &[]);
    assert!(matches!(res.status.code(), Some(0 | 1)));
    let text = std::fs::read_to_string(out.join("ladder.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "nodes,metric,value");
    assert_eq!(lines.len(), 3);
}
