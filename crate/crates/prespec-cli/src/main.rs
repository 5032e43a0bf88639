//! `prespec`: run model, spectrum, diagnostic, character and operator-integral
//! experiments from a TOML config and write CSV tables plus a JSON report.
//!
//! Exit status: 0 when every check passes, 1 when a check fails or a
//! computation breaks down, 2 for unusable configuration (nothing is written).

mod config;
mod run;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig, Kind};
use run::RunReport;

#[derive(Parser)]
#[command(name = "prespec", version, about = "Numerical laboratory for symmetric Dirac operators and their clones")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a model and validate its axioms and clone (kind = "axioms").
    Model(Common),
    /// Spectrum of D*D with closed-form or Weyl references (kind = "spectrum").
    Spectrum(Common),
    /// Axioms, dimension or hypothesis diagnostics.
    Diagnose(Common),
    /// Character comparison across a node ladder (kind = "character").
    Character(Common),
    /// Resolvent-integral, C² and difference-identity surveys (kind = "opint-survey").
    Opint(Common),
    /// Run one diagnostic across a node ladder and report trends (kind = "sweep").
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, env = "PRESPEC_CONFIG")]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, env = "PRESPEC_OUT", default_value = "prespec-out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, env = "PRESPEC_SEED")]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, env = "PRESPEC_THREADS")]
    threads: Option<usize>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common, &'static [Kind]) {
        match self {
            Command::Model(c) => ("model", c, &[Kind::Axioms]),
            Command::Spectrum(c) => ("spectrum", c, &[Kind::Spectrum]),
            Command::Diagnose(c) => ("diagnose", c, &[Kind::Axioms, Kind::Dimension, Kind::Hypotheses]),
            Command::Character(c) => ("character", c, &[Kind::Character]),
            Command::Opint(c) => ("opint", c, &[Kind::OpintSurvey]),
            Command::Sweep(c) => ("sweep", c, &[Kind::Sweep]),
        }
    }
}

fn load(name: &str, common: &Common, kinds: &[Kind]) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if !kinds.contains(&cfg.kind) {
        let allowed: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
        return Err(ConfigError(format!(
            "`{name}` runs kind {}, config has \"{}\"",
            allowed.join(" | "),
            cfg.kind.name()
        )));
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.threads == Some(0) {
        return Err(ConfigError("--threads must be positive".into()));
    }
    Ok(cfg)
}

fn write_artifacts(dir: &Path, report: &mut RunReport) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut names = vec!["checks.csv".to_owned()];
    names.extend(report.tables.iter().map(|t| t.file.to_owned()));
    names.push("timing.json".to_owned());
    report.artifacts = names;

    let mut w = csv::Writer::from_path(dir.join("checks.csv"))?;
    w.write_record(["section", "name", "measured", "tolerance", "pass", "anchor"])?;
    for c in &report.checks {
        w.write_record([
            c.section.clone(),
            c.name.clone(),
            run::num(c.measured),
            run::num(c.tolerance),
            c.pass.to_string(),
            c.anchor.clone(),
        ])?;
    }
    w.flush()?;
    for t in &report.tables {
        let mut w = csv::Writer::from_path(dir.join(t.file))?;
        w.write_record(t.header)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    // Timings live apart from the report so that the report is reproducible.
    let timing = serde_json::to_string_pretty(&report.timings)?;
    fs::write(dir.join("timing.json"), timing + "\n")?;
    let mut f = fs::File::create(dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut f, &*report)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, kinds) = cli.command.parts();
    let cfg = match load(name, common, kinds) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("thread pool: {e}");
        }
    }
    let mut report = match run::run(name, &cfg) {
        Ok(r) => r,
        Err(e @ (prespec::Error::Input(_) | prespec::Error::Margin(_) | prespec::Error::Shape(_))) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write_artifacts(&common.out, &mut report) {
        eprintln!("writing {}: {e}", common.out.display());
        return ExitCode::from(1);
    }
    let failed: Vec<&run::CheckRecord> = report.checks.iter().filter(|c| !c.pass).collect();
    println!(
        "{name}: {} checks, {} failed; report at {}",
        report.checks.len(),
        failed.len(),
        common.out.join("report.json").display()
    );
    for c in &failed {
        println!("  FAIL {}.{} measured {} tolerance {}", c.section, c.name, c.measured, c.tolerance);
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
