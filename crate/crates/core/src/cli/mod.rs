//! Batch front end: `memctrl run <config.json>` executes one experiment and
//! writes `results.json` plus CSV tables into the configured output directory.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 when the
//! experiment ran but its verdict failed.

pub mod config;
mod experiments;

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub use config::{Experiment, ExperimentConfig};
pub use experiments::{zeta_convergence, ConvergenceRow, ZetaConvergenceReport};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERDICT: i32 = 2;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "MEMCTRL_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
        }
    }
}

/// What an experiment produced before it is written out.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub summary: Value,
    pub verdicts: Value,
    /// `(file name, contents)`
    pub artifacts: Vec<(String, Vec<u8>)>,
    /// Console lines.
    pub lines: Vec<String>,
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Runs a configuration and returns the exit code; messages go to stdout/stderr.
pub fn run(config_path: &Path) -> i32 {
    match run_inner(config_path) {
        Ok((status, lines)) => {
            for l in lines {
                println!("{l}");
            }
            match status {
                Status::Pass => EXIT_OK,
                Status::Fail => EXIT_VERDICT,
            }
        }
        Err(e) => {
            eprintln!("memctrl: {e}");
            exit_code_for(&e)
        }
    }
}

/// Exit code for an error that escaped an experiment.
pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::ReachFailed { .. }
        | Error::IllConditioned { .. }
        | Error::NoConvergence { .. }
        | Error::ObstructionVanishes { .. } => EXIT_VERDICT,
        _ => EXIT_USAGE,
    }
}

fn run_inner(config_path: &Path) -> Result<(Status, Vec<String>)> {
    configure_threads()?;
    let config = ExperimentConfig::load(config_path)?;
    let base = config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let outcome = execute(&config, &base)?;
    let out_dir = base.join(&config.output_dir);
    write_outputs(&config, &outcome, &out_dir)?;
    let mut lines = outcome.lines.clone();
    lines.push(format!(
        "{} {} -> {}",
        config.experiment.name(),
        outcome.status.name(),
        out_dir.join("results.json").display()
    ));
    Ok((outcome.status, lines))
}

/// Runs an already parsed config; relative paths resolve against `base`.
pub fn execute(config: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    config.validate()?;
    match config.experiment {
        Experiment::Steer => experiments::steer(config, base),
        Experiment::Regularity => experiments::regularity(config, base),
        Experiment::Riesz => experiments::riesz(config, base),
        Experiment::ZetaConvergence => experiments::convergence(config, base),
    }
}

fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// `results.json` contents; only `timestamp` varies between identical runs.
pub fn results_document(config: &ExperimentConfig, outcome: &Outcome, timestamp: u64) -> Value {
    json!({
        "experiment": config.experiment.name(),
        "status": outcome.status.name(),
        "timestamp": timestamp,
        "versions": {
            "memctrl": env!("CARGO_PKG_VERSION"),
        },
        "parameters": serde_json::to_value(config).expect("config serialises"),
        "tolerances": experiments::tolerances(),
        "summary": outcome.summary,
        "verdicts": outcome.verdicts,
        "artifacts": outcome.artifacts.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
    })
}

fn write_outputs(config: &ExperimentConfig, outcome: &Outcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in &outcome.artifacts {
        std::fs::write(dir.join(name), bytes)?;
    }
    let doc = results_document(config, outcome, unix_timestamp());
    let mut text = serde_json::to_string_pretty(&doc).expect("json");
    text.push('\n');
    std::fs::write(dir.join("results.json"), text)?;
    Ok(())
}

pub fn print_default_config(name: &str) -> Result<String> {
    let experiment = Experiment::parse(name).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "unknown experiment {name:?}; expected steer, regularity, riesz or zeta-convergence"
        ))
    })?;
    Ok(ExperimentConfig::template(experiment).to_pretty_json())
}
