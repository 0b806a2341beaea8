use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use memctrl::cli::config::ExperimentConfig;
use memctrl::cli::Experiment;
use memctrl::kernels::MemoryKernel;
use memctrl::spectral::build_interval_basis;
use serde_json::Value;

fn memctrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memctrl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn template(experiment: Experiment) -> Value {
    serde_json::to_value(ExperimentConfig::template(experiment)).unwrap()
}

fn results(dir: &Path, config: &Value) -> Value {
    let out = dir
        .join(config["output_dir"].as_str().unwrap())
        .join("results.json");
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

#[test]
fn steer_without_memory_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = template(Experiment::Steer);
    config["kernel"] = serde_json::json!({ "family": "zero" });
    config["T"] = 2.5.into();
    config["control_class"] = "h10".into();
    config["n_modes"] = 12.into();
    let path = write_config(dir.path(), "steer.json", &config);
    let out = memctrl(&["run", path.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = results(dir.path(), &config);
    assert_eq!(doc["status"], "pass");
    assert!(doc["summary"]["reach_error"].as_f64().unwrap() <= 1e-3);
    for name in ["control.csv", "state.csv", "tail.csv"] {
        assert!(dir.path().join("out/steer").join(name).exists(), "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("out/steer/control.csv")).unwrap();
    assert!(csv.starts_with("t,g,f,d1f\n"));
}

#[test]
fn negative_horizon_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = template(Experiment::Steer);
    config["T"] = (-1.0).into();
    let path = write_config(dir.path(), "bad.json", &config);
    let out = memctrl(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`T`"));
}

#[test]
fn unknown_fields_and_syntax_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = template(Experiment::Riesz);
    config["colour"] = "blue".into();
    let path = write_config(dir.path(), "unknown.json", &config);
    let out = memctrl(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\n  \"experiment\": \"riesz\",\n  \"T\": ,\n}").unwrap();
    let out = memctrl(&["run", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = memctrl(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn regularity_with_memory_is_divergent() {
    let dir = tempfile::tempdir().unwrap();
    let config = template(Experiment::Regularity);
    assert_eq!(config["kernel"]["family"], "exponential");
    let path = write_config(dir.path(), "regularity.json", &config);
    let out = memctrl(&["run", path.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = results(dir.path(), &config);
    assert_eq!(doc["verdicts"]["verdict_k3"], "divergent");
    assert_eq!(doc["verdicts"]["memoryless_verdict_k3"], "summable");
}

#[test]
fn unmet_reach_is_a_verdict_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = template(Experiment::Steer);
    config["conventions"] =
        serde_json::to_value(memctrl::moment::ConventionTable::literal()).unwrap();
    config["control_class"] = "h20".into();
    let path = write_config(dir.path(), "literal.json", &config);
    let out = memctrl(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let doc = results(dir.path(), &config);
    assert_eq!(doc["status"], "fail");
    assert_eq!(doc["verdicts"]["reached"], false);
}

#[test]
fn riesz_expectation_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = template(Experiment::Riesz);
    config["T"] = 1.0.into();
    config["riesz"] = serde_json::json!({ "order": 0, "expect_riesz": true });
    let path = write_config(dir.path(), "riesz.json", &config);
    let out = memctrl(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let doc = results(dir.path(), &config);
    assert!(doc["summary"]["defect"].as_u64().unwrap() >= 1);
    let gram = std::fs::read_to_string(dir.path().join("out/riesz/gram.csv")).unwrap();
    assert_eq!(gram.lines().count(), 32 + 1);
}

#[test]
fn under_resolved_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = template(Experiment::ZetaConvergence);
    config["grid"] = 16.into();
    let path = write_config(dir.path(), "coarse.json", &config);
    let out = memctrl(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn print_default_config_round_trips() {
    for name in ["steer", "regularity", "riesz", "zeta-convergence"] {
        let out = memctrl(&["print-default-config", name]);
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8(out.stdout).unwrap();
        let parsed = ExperimentConfig::from_json(&text).unwrap();
        parsed.validate().unwrap();
        assert_eq!(parsed.experiment.name(), name);
    }
    assert_eq!(
        memctrl(&["print-default-config", "plot"]).status.code(),
        Some(1)
    );
    assert_eq!(memctrl(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn memoryless_convergence_is_second_order() {
    let basis = build_interval_basis(0.0, 1).unwrap();
    let report =
        memctrl::cli::zeta_convergence(&MemoryKernel::zero(), &basis, &[1], 2.0, 512).unwrap();
    assert_eq!(report.reference, "closed_form");
    for row in report
        .rows
        .iter()
        .filter(|r| r.solver == memctrl::synthesis::ZetaSolver::Picard)
    {
        assert!(row.error < 1e-13);
    }
    for (_, solver, observed) in &report.orders {
        for order in observed {
            match solver {
                memctrl::synthesis::ZetaSolver::Timestep => {
                    let o = order.expect("nonzero error");
                    assert!((o - 2.0).abs() <= 0.2, "order {o}");
                }
                // exact without memory
                memctrl::synthesis::ZetaSolver::Picard => {}
            }
        }
    }
}

#[test]
fn self_convergence_with_memory_is_second_order() {
    let basis = build_interval_basis(0.0, 4).unwrap();
    let kernel = MemoryKernel::exponential(1.0, 1.0);
    let report = memctrl::cli::zeta_convergence(&kernel, &basis, &[4], 2.0, 512).unwrap();
    assert_eq!(report.reference, "self_convergence");
    for (_, _, observed) in &report.orders {
        for order in observed {
            let o = order.unwrap();
            assert!((o - 2.0).abs() <= 0.3, "order {o}");
        }
    }
}

#[test]
fn thread_cap_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "riesz.json", &template(Experiment::Riesz));
    let out = Command::new(env!("CARGO_BIN_EXE_memctrl"))
        .args(["run", path.to_str().unwrap()])
        .env(memctrl::cli::THREADS_ENV, "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_memctrl"))
        .args(["run", path.to_str().unwrap()])
        .env(memctrl::cli::THREADS_ENV, "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
