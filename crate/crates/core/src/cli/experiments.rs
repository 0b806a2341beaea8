use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, GeneratorConfig, GridConfig, TargetConfig};
use super::{Outcome, Status};
use crate::error::{Error, Result};
use crate::kernels::{MemoryKernel, Signal, TimeGrid};
use crate::moment::{
    assemble_gram, build_kernel_set, riesz_diagnostics, write_matrix_csv, ConventionTable,
    TargetSpec, DEFECT_TOL, MOMENT_RESIDUAL_TOL, PROJECTION_TOL,
};
use crate::spectral::{
    build_interval_basis, fit_decay_exponent, weighted_tail, CoeffState, ModalBasis, TailVerdict,
};
use crate::synthesis::{
    lift_generator, projected_sine, regularity_experiment, solve_zetas, steer as run_steer,
    windowed_cubic, ControlClass, RegularityReport, SteerOptions, ZetaSolver, REACH_THRESHOLD,
};
use crate::volterra::{auto_steps, solve_zeta_picard, solve_zeta_timestep, ZetaTable};

const PICARD_MAX_ITER: usize = 500;
const PICARD_TOL: f64 = 1e-13;

pub(super) fn tolerances() -> Value {
    json!({
        "reach_relative_error": REACH_THRESHOLD,
        "moment_residual": MOMENT_RESIDUAL_TOL,
        "projection": PROJECTION_TOL,
        "gram_defect": DEFECT_TOL,
        "summable_slope": crate::spectral::SUMMABLE_SLOPE,
        "divergent_slope": crate::spectral::DIVERGENT_SLOPE,
    })
}

fn grid_for(config: &ExperimentConfig, basis: &ModalBasis) -> Result<TimeGrid> {
    let steps = match config.grid {
        GridConfig::Steps(m) => m,
        GridConfig::Keyword(_) => auto_steps(config.horizon, basis.max_abs_lambda()),
    };
    TimeGrid::new(config.horizon, steps)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn target_spec(config: &ExperimentConfig, class: ControlClass) -> Result<TargetSpec> {
    let tc = class
        .target_class()
        .ok_or_else(|| Error::InvalidArgument("control class has no target class".into()))?;
    let n = config.n_modes;
    let (xi, eta): (Vec<f64>, Vec<f64>) = match config.target.as_ref().expect("validated") {
        TargetConfig::InversePower {
            power,
            xi_scale,
            eta_scale,
        } => (1..=n)
            .map(|k| {
                let w = (k as f64).powf(-power);
                (xi_scale * w, eta_scale * w)
            })
            .unzip(),
        TargetConfig::Random { decay } => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
            (1..=n)
                .map(|k| {
                    let s = (k as f64).powf(-decay);
                    (rng.gen_range(-s..s), rng.gen_range(-s..s))
                })
                .unzip()
        }
        TargetConfig::Explicit { xi, eta } => (xi.clone(), eta.clone()),
    };
    TargetSpec::real(tc, &xi, &eta)
}

fn write_state_csv(
    buf: &mut Vec<u8>,
    basis: &ModalBasis,
    target: &CoeffState,
    achieved: &CoeffState,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(buf);
    out.write_record([
        "n",
        "lambda_sq",
        "target_position",
        "target_velocity",
        "achieved_position",
        "achieved_velocity",
    ])?;
    for (i, mode) in basis.modes.iter().take(target.len()).enumerate() {
        out.write_record([
            mode.index.to_string(),
            format!("{:.17e}", mode.lambda_sq),
            format!("{:.17e}", target.position[i].re),
            format!("{:.17e}", target.velocity[i].re),
            format!("{:.17e}", achieved.position[i].re),
            format!("{:.17e}", achieved.velocity[i].re),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn verdict_name(v: TailVerdict) -> Value {
    serde_json::to_value(v).expect("verdict")
}

pub(super) fn steer(config: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    let class = config.control_class.expect("validated");
    let kernel = config.kernel.build(base)?;
    let basis = build_interval_basis(config.b, config.n_modes)?;
    let grid = grid_for(config, &basis)?;
    let target = target_spec(config, class)?;
    let options = SteerOptions {
        ridge: config.ridge,
        conventions: config
            .conventions
            .unwrap_or_else(ConventionTable::validated),
        zeta_solver: config.zeta_solver,
    };
    let mut lines = vec![format!(
        "steer: class {} kernel [{}] N={} {}",
        class.name(),
        kernel.describe(),
        config.n_modes,
        grid
    )];
    match run_steer(&target, &basis, &kernel, grid, class, &options) {
        Ok(result) => {
            let report = &result.report;
            let k = report.class.order() as u32;
            let tail = if basis.len() >= 8 {
                let t = weighted_tail(&report.achieved, &basis, k)?;
                let fit = fit_decay_exponent(&t.partial_sums)?;
                Some((t, fit))
            } else {
                None
            };
            let endpoint = result.control.endpoint_defect();
            lines.push(format!(
                "  reach error {:.3e} (threshold {REACH_THRESHOLD:.0e}), moment residual {:.3e}, condition {:.3e}",
                report.relative_error, result.moment_residual, result.condition
            ));
            lines.push(format!("  endpoint defect {endpoint:.3e}"));
            let mut artifacts = vec![
                (
                    "control.csv".to_string(),
                    csv_bytes(|b| result.control.write_csv(b))?,
                ),
                (
                    "state.csv".to_string(),
                    csv_bytes(|b| write_state_csv(b, &basis, &report.target, &report.achieved))?,
                ),
            ];
            let mut verdicts = json!({
                "reached": true,
            });
            let mut tail_json = Value::Null;
            if let Some((t, fit)) = &tail {
                lines.push(format!(
                    "  lambda^{k}-weighted tail slope {:.4} -> {:?}",
                    fit.slope, fit.verdict
                ));
                verdicts["tail"] = verdict_name(fit.verdict);
                tail_json =
                    json!({ "k": k, "slope": fit.slope, "verdict": verdict_name(fit.verdict) });
                artifacts.push((
                    "tail.csv".into(),
                    csv_bytes(|b| {
                        let mut out = csv::Writer::from_writer(b);
                        out.write_record(["n", "weighted", "partial_sum"])?;
                        for (i, (e, s)) in t.entries.iter().zip(&t.partial_sums).enumerate() {
                            out.write_record([
                                (i + 1).to_string(),
                                format!("{e:.17e}"),
                                format!("{s:.17e}"),
                            ])?;
                        }
                        out.flush()?;
                        Ok(())
                    })?,
                ));
            }
            Ok(Outcome {
                status: Status::Pass,
                summary: json!({
                    "steps": grid.steps(),
                    "reach_error": report.relative_error,
                    "position_error": report.position_error,
                    "velocity_error": report.velocity_error,
                    "target_norm": report.target_norm,
                    "moment_residual": result.moment_residual,
                    "condition": result.condition,
                    "endpoint_defect": endpoint,
                    "tail": tail_json,
                }),
                verdicts,
                artifacts,
                lines,
            })
        }
        Err(Error::ReachFailed {
            relative_error,
            report,
            ..
        }) => {
            lines.push(format!(
                "  reach FAILED: error {relative_error:.3e} above {REACH_THRESHOLD:.0e}"
            ));
            Ok(Outcome {
                status: Status::Fail,
                summary: json!({
                    "steps": grid.steps(),
                    "reach_error": relative_error,
                    "position_error": report.position_error,
                    "velocity_error": report.velocity_error,
                    "target_norm": report.target_norm,
                }),
                verdicts: json!({ "reached": false }),
                artifacts: vec![(
                    "state.csv".into(),
                    csv_bytes(|b| write_state_csv(b, &basis, &report.target, &report.achieved))?,
                )],
                lines,
            })
        }
        Err(e @ Error::IllConditioned { .. }) => {
            lines.push(format!("  {e}"));
            Ok(Outcome {
                status: Status::Fail,
                summary: json!({ "steps": grid.steps(), "error": e.to_string() }),
                verdicts: json!({ "reached": false }),
                artifacts: vec![],
                lines,
            })
        }
        Err(e) => Err(e),
    }
}

fn generator(config: &GeneratorConfig, grid: TimeGrid) -> Signal {
    match *config {
        GeneratorConfig::ProjectedSine { k } => projected_sine(grid, k),
        GeneratorConfig::WindowedCubic { power } => windowed_cubic(grid, power),
    }
}

fn tails_csv(buf: &mut Vec<u8>, report: &RegularityReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(buf);
    let mut header = vec!["n".to_string()];
    header.extend((1..=4).map(|k| format!("s{k}_memory")));
    header.extend((1..=4).map(|k| format!("s{k}_memoryless")));
    out.write_record(&header)?;
    let len = report.with_memory.partial_sums[0].len();
    for n in 0..len {
        let mut row = vec![(n + 1).to_string()];
        for study in [&report.with_memory, &report.memoryless] {
            row.extend(study.partial_sums.iter().map(|s| format!("{:.17e}", s[n])));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub(super) fn regularity(config: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    let settings = config.regularity.as_ref().expect("validated");
    let kernel = config.kernel.build(base)?;
    let basis = build_interval_basis(config.b, config.n_modes)?;
    let grid = grid_for(config, &basis)?;
    let g1 = generator(&settings.g1, grid);
    let mut lines = vec![format!(
        "regularity: kernel [{}] N={} {}",
        kernel.describe(),
        config.n_modes,
        grid
    )];
    let report = match regularity_experiment(&kernel, settings.g0, &g1, &basis, grid) {
        Ok(r) => r,
        Err(Error::ObstructionVanishes { value }) => {
            lines.push(format!("  obstruction {value:.3e} vanishes: inconclusive"));
            return Ok(Outcome {
                status: Status::Fail,
                summary: json!({ "steps": grid.steps(), "obstruction": value }),
                verdicts: json!({ "verdict_k3": "inconclusive" }),
                artifacts: vec![],
                lines,
            });
        }
        Err(e) => return Err(e),
    };
    let expect_divergent = !kernel.is_zero();
    let k3 = report.with_memory.verdict(3);
    let twin_k3 = report.memoryless.verdict(3);
    let pass = twin_k3 == TailVerdict::Summable
        && if expect_divergent {
            k3 == TailVerdict::Divergent
        } else {
            k3 == TailVerdict::Summable
        };
    lines.push(format!("  obstruction {:.6e}", report.obstruction));
    for k in 1..=4 {
        lines.push(format!(
            "  k={k}: slope {:.4} ({:?}) | memoryless {:.4} ({:?})",
            report.with_memory.slope(k),
            report.with_memory.verdict(k),
            report.memoryless.slope(k),
            report.memoryless.verdict(k)
        ));
    }
    let control = lift_generator(
        &g1.scale(crate::Complex64::new(settings.g0, 0.0)),
        ControlClass::H30,
    )?;
    Ok(Outcome {
        status: if pass { Status::Pass } else { Status::Fail },
        summary: json!({
            "steps": grid.steps(),
            "obstruction": report.obstruction,
            "slopes": (1..=4).map(|k| report.with_memory.slope(k)).collect::<Vec<_>>(),
            "memoryless_slopes": (1..=4).map(|k| report.memoryless.slope(k)).collect::<Vec<_>>(),
            "endpoint_defect": control.endpoint_defect(),
        }),
        verdicts: json!({
            "verdict_k3": verdict_name(k3),
            "memoryless_verdict_k3": verdict_name(twin_k3),
            "per_k": (1..=4).map(|k| verdict_name(report.with_memory.verdict(k))).collect::<Vec<_>>(),
            "memoryless_per_k": (1..=4).map(|k| verdict_name(report.memoryless.verdict(k))).collect::<Vec<_>>(),
        }),
        artifacts: vec![
            ("tails.csv".into(), csv_bytes(|b| tails_csv(b, &report))?),
            ("control.csv".into(), csv_bytes(|b| control.write_csv(b))?),
        ],
        lines,
    })
}

pub(super) fn riesz(config: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    let settings = config.riesz.clone().unwrap_or(super::config::RieszConfig {
        order: 0,
        expect_riesz: None,
    });
    let kernel = config.kernel.build(base)?;
    let basis = build_interval_basis(config.b, config.n_modes)?;
    let grid = grid_for(config, &basis)?;
    // closed form when there is no memory
    let (zetas, source) = if kernel.is_zero() {
        (
            basis
                .modes
                .iter()
                .map(|&m| ZetaTable::closed_form_memoryless(m, grid))
                .collect::<Vec<_>>(),
            "closed_form",
        )
    } else {
        (
            solve_zetas(&basis, &kernel, grid, config.zeta_solver)?,
            match config.zeta_solver {
                ZetaSolver::Timestep => "timestep",
                ZetaSolver::Picard => "picard",
            },
        )
    };
    let set = build_kernel_set(settings.order, &basis, &zetas, &kernel)?;
    let report = riesz_diagnostics(&set, 0..set.len())?;
    let gram = assemble_gram(&set);
    let riesz = report.is_riesz();
    let status = match settings.expect_riesz {
        Some(e) if e != riesz => Status::Fail,
        _ => Status::Pass,
    };
    let lines = vec![
        format!(
            "riesz: order {} kernel [{}] N={} {}",
            settings.order,
            kernel.describe(),
            config.n_modes,
            grid
        ),
        format!(
            "  eigenvalues [{:.4e}, {:.4e}], condition {:.4e}, off-diagonal ratio {:.3e}",
            report.min_eigenvalue,
            report.max_eigenvalue,
            report.condition,
            report.off_diagonal_ratio
        ),
        format!(
            "  defect {} (after removing {:?}: defect {}, condition {:.4e})",
            report.defect,
            report.removed,
            report.defect_after_removal,
            report.condition_after_removal
        ),
    ];
    Ok(Outcome {
        status,
        summary: json!({
            "steps": grid.steps(),
            "zeta_source": source,
            "min_eigenvalue": report.min_eigenvalue,
            "max_eigenvalue": report.max_eigenvalue,
            "condition": report.condition,
            "off_diagonal_ratio": report.off_diagonal_ratio,
            "defect": report.defect,
            "removed": report.removed,
            "defect_after_removal": report.defect_after_removal,
            "condition_after_removal": report.condition_after_removal,
        }),
        verdicts: json!({ "riesz_sequence": riesz }),
        artifacts: vec![
            (
                "gram.csv".into(),
                csv_bytes(|b| write_matrix_csv(&gram, b))?,
            ),
            (
                "spectrum.csv".into(),
                csv_bytes(|b| report.write_spectrum_csv(b))?,
            ),
            (
                "moment_kernels.csv".into(),
                csv_bytes(|b| set.write_csv(b))?,
            ),
        ],
        lines,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub mode: usize,
    pub solver: ZetaSolver,
    pub steps: usize,
    /// Sup error of `ζ` at the nodes of this grid: against the closed form
    /// without memory, otherwise against the solution on twice as many steps.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaConvergenceReport {
    /// `"closed_form"` without memory, otherwise `"self_convergence"`.
    pub reference: String,
    pub rows: Vec<ConvergenceRow>,
    /// `(mode, solver, observed orders)`, `log₂` of consecutive error ratios;
    /// `None` where an error is exactly zero.
    pub orders: Vec<(usize, ZetaSolver, Vec<Option<f64>>)>,
}

fn solve(
    mode: &crate::spectral::Mode,
    kernel: &MemoryKernel,
    grid: TimeGrid,
    solver: ZetaSolver,
) -> Result<ZetaTable> {
    match solver {
        ZetaSolver::Timestep => solve_zeta_timestep(mode, kernel, grid),
        ZetaSolver::Picard => solve_zeta_picard(mode, kernel, grid, PICARD_MAX_ITER, PICARD_TOL),
    }
}

/// Sup over the coarse nodes of `|coarse − fine|`, the fine grid refining the
/// coarse one by an integer factor.
fn coarse_error(coarse: &Signal, fine: &Signal) -> f64 {
    let ratio = fine.grid().steps() / coarse.grid().steps();
    coarse
        .values()
        .iter()
        .enumerate()
        .map(|(j, c)| (c - fine.values()[j * ratio]).norm())
        .fold(0.0, f64::max)
}

fn ratio_order(a: f64, b: f64) -> Option<f64> {
    (a > 0.0 && b > 0.0).then(|| (a / b).log2())
}

/// Richardson study of both `ζ` solvers on `m`, `2m` and `4m` steps.
pub fn zeta_convergence(
    kernel: &MemoryKernel,
    basis: &ModalBasis,
    modes: &[usize],
    horizon: f64,
    base_steps: usize,
) -> Result<ZetaConvergenceReport> {
    let exact = kernel.is_zero();
    let mut rows = Vec::new();
    let mut orders = Vec::new();
    for &index in modes {
        let mode = basis
            .modes
            .iter()
            .find(|m| m.index == index)
            .ok_or(Error::MissingMode { index })?;
        for solver in [ZetaSolver::Timestep, ZetaSolver::Picard] {
            let tables = [1, 2, 4]
                .iter()
                .map(|f| {
                    solve(
                        mode,
                        kernel,
                        TimeGrid::new(horizon, base_steps * f)?,
                        solver,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let errors: Vec<(usize, f64)> = if exact {
                tables
                    .iter()
                    .map(|t| {
                        let oracle = ZetaTable::closed_form_memoryless(*mode, t.grid);
                        Ok((t.grid.steps(), t.zeta.sub(&oracle.zeta)?.sup_norm()))
                    })
                    .collect::<Result<_>>()?
            } else {
                tables
                    .windows(2)
                    .map(|w| (w[0].grid.steps(), coarse_error(&w[0].zeta, &w[1].zeta)))
                    .collect()
            };
            for &(steps, error) in &errors {
                rows.push(ConvergenceRow {
                    mode: index,
                    solver,
                    steps,
                    error,
                });
            }
            let observed = errors
                .windows(2)
                .map(|w| ratio_order(w[0].1, w[1].1))
                .collect();
            orders.push((index, solver, observed));
        }
    }
    Ok(ZetaConvergenceReport {
        reference: if exact {
            "closed_form"
        } else {
            "self_convergence"
        }
        .into(),
        rows,
        orders,
    })
}

pub(super) fn convergence(config: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    let settings = config.zeta_convergence.as_ref().expect("validated");
    let kernel = config.kernel.build(base)?;
    let basis = build_interval_basis(config.b, config.n_modes)?;
    let selected = ModalBasis {
        modes: basis
            .modes
            .iter()
            .filter(|m| settings.modes.contains(&m.index))
            .copied()
            .collect(),
        ..basis.clone()
    };
    let base_steps = match config.grid {
        GridConfig::Steps(m) => m,
        GridConfig::Keyword(_) => auto_steps(config.horizon, selected.max_abs_lambda()),
    };
    let report = zeta_convergence(&kernel, &basis, &settings.modes, config.horizon, base_steps)?;
    let mut lines = vec![format!(
        "zeta-convergence: kernel [{}] T={} m={base_steps} reference {}",
        kernel.describe(),
        config.horizon,
        report.reference
    )];
    let fmt = |o: Option<f64>| o.map_or("-".to_string(), |v| format!("{v:.3}"));
    for (mode, solver, observed) in &report.orders {
        let shown: Vec<String> = observed.iter().map(|o| fmt(*o)).collect();
        lines.push(format!(
            "  mode {mode} {solver:?}: observed order {}",
            shown.join(" / ")
        ));
    }
    let rows_csv = csv_bytes(|b| {
        let mut out = csv::Writer::from_writer(b);
        out.write_record(["mode", "solver", "steps", "error"])?;
        for r in &report.rows {
            let solver = match r.solver {
                ZetaSolver::Timestep => "timestep",
                ZetaSolver::Picard => "picard",
            };
            out.write_record([
                r.mode.to_string(),
                solver.into(),
                r.steps.to_string(),
                format!("{:.17e}", r.error),
            ])?;
        }
        out.flush()?;
        Ok(())
    })?;
    let mut artifacts = vec![("zeta_convergence.csv".to_string(), rows_csv)];
    let grid = TimeGrid::new(config.horizon, base_steps)?;
    for mode in &selected.modes {
        let table = solve_zeta_timestep(mode, &kernel, grid)?;
        artifacts.push((
            format!("zeta_mode{}.csv", mode.index),
            csv_bytes(|b| table.write_csv(b))?,
        ));
    }
    Ok(Outcome {
        status: Status::Pass,
        summary: json!({
            "base_steps": base_steps,
            "reference": report.reference,
            "rows": report.rows,
        }),
        verdicts: json!({
            "orders": report.orders.iter().map(|(m, s, o)| json!({
                "mode": m, "solver": s, "observed": o,
            })).collect::<Vec<_>>(),
        }),
        artifacts,
        lines,
    })
}
