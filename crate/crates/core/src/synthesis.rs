//! Controls from moment generators, forward simulation, steering and the
//! regularity experiment for `H³`-class controls.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{convolve, convolve_at, MemoryKernel, Signal, TimeGrid};
use crate::moment::{
    build_kernel_set, project_polynomials, solve_min_norm, vanishing_moments, ConventionTable,
    MomentSystem, TargetClass, TargetSpec, FORCING_SIGN,
};
use crate::spectral::{
    fit_decay_exponent, weighted_tail, CoeffState, DecayFit, ModalBasis, TailVerdict,
};
use crate::volterra::{check_resolution, solve_zeta_picard, verlet_memory, ZetaTable};

pub const REACH_THRESHOLD: f64 = 1e-3;
pub const CONSTRAINT_TOL: f64 = 1e-6;
/// Critical time of the interval controlled from one end.
pub const CRITICAL_TIME: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlClass {
    L2,
    H10,
    H20,
    H30,
}

impl ControlClass {
    /// Number of vanishing moments `∫(T − s)^k g = 0` the generator needs.
    pub fn constraints(self) -> usize {
        match self {
            ControlClass::L2 => 0,
            ControlClass::H10 => 1,
            ControlClass::H20 => 2,
            ControlClass::H30 => 3,
        }
    }

    /// Target class reached by steering with this control class.
    pub fn target_class(self) -> Option<TargetClass> {
        match self {
            ControlClass::L2 => Some(TargetClass::L2Hm1),
            ControlClass::H10 => Some(TargetClass::H10L2),
            ControlClass::H20 => Some(TargetClass::H2H10),
            ControlClass::H30 => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ControlClass::L2 => "l2",
            ControlClass::H10 => "h10",
            ControlClass::H20 => "h20",
            ControlClass::H30 => "h30",
        }
    }
}

/// Boundary control `f` together with its generator and the derivatives the
/// lift provides in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    pub class: ControlClass,
    pub g: Signal,
    pub f: Signal,
    /// `f^{(j)}` for `j = 1 ..`; as many as the class makes continuous.
    pub derivatives: Vec<Signal>,
}

impl ControlSignal {
    pub fn grid(&self) -> &TimeGrid {
        self.f.grid()
    }

    /// `max |f^{(j)}(0)|, |f^{(j)}(T)|` over the derivatives the class forces
    /// to vanish (`j < k` for `k` constraints).
    pub fn endpoint_defect(&self) -> f64 {
        let count = self.class.constraints();
        std::iter::once(&self.f)
            .chain(&self.derivatives)
            .take(count)
            .map(|s| s.first().norm().max(s.last().norm()))
            .fold(0.0, f64::max)
    }

    /// Columns `t, g, f, df, …` (real parts).
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "g".into(), "f".into()];
        header.extend((1..=self.derivatives.len()).map(|j| format!("d{j}f")));
        out.write_record(&header)?;
        for (j, t) in self.grid().nodes().enumerate() {
            let mut row = vec![
                format!("{t:.17e}"),
                format!("{:.17e}", self.g.values()[j].re),
                format!("{:.17e}", self.f.values()[j].re),
            ];
            row.extend(
                self.derivatives
                    .iter()
                    .map(|d| format!("{:.17e}", d.values()[j].re)),
            );
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn times(grid: TimeGrid, power: i32) -> Signal {
    Signal::from_real_fn(grid, |t| t.powi(power))
}

/// `f(t) = ∫₀ᵗ (t − s)^{k−1} g(s) ds` for the class with `k` constraints
/// (`f = g` for `L²`). Running integrals of `sʲ g` are combined so that
/// `f(T)` is exactly the trapezoid value of the corresponding vanishing moment.
pub fn lift_generator(g: &Signal, class: ControlClass) -> Result<ControlSignal> {
    let grid = *g.grid();
    let horizon = grid.horizon();
    let norm = g.l2_norm();
    let count = class.constraints();
    for (k, value) in vanishing_moments(g, count).into_iter().enumerate() {
        let scale = norm * horizon.powi(k as i32) * horizon.sqrt();
        let tolerance = CONSTRAINT_TOL * scale;
        if value.norm() > tolerance {
            return Err(Error::ConstraintViolated {
                functional: format!("integral of (T - s)^{k} g(s)"),
                value: value.norm(),
                tolerance,
            });
        }
    }
    let running =
        |power: i32| -> Result<Signal> { Ok(times(grid, power).mul(g)?.cumulative_integral()) };
    let t1 = times(grid, 1);
    let t2 = times(grid, 2);
    let (f, derivatives) = match class {
        ControlClass::L2 => (g.clone(), vec![]),
        ControlClass::H10 => (running(0)?, vec![g.clone()]),
        ControlClass::H20 => {
            let (g0, g1) = (running(0)?, running(1)?);
            (t1.mul(&g0)?.sub(&g1)?, vec![g0, g.clone()])
        }
        ControlClass::H30 => {
            let (g0, g1, g2) = (running(0)?, running(1)?, running(2)?);
            let two = Complex64::new(2.0, 0.0);
            let f = t2.mul(&g0)?.sub(&t1.mul(&g1)?.scale(two))?.add(&g2)?;
            let df = t1.mul(&g0)?.sub(&g1)?.scale(two);
            let d2f = g0.scale(two);
            (f, vec![df, d2f, g.scale(two)])
        }
    };
    Ok(ControlSignal {
        class,
        g: g.clone(),
        f,
        derivatives,
    })
}

// ---------------------------------------------------------------------------
// forward simulation

/// Timesteps `wₙ'' = −λₙ² wₙ + K ∗ wₙ − (γ₁φₙ) f` from rest for every mode.
pub fn simulate_modal(
    f: &Signal,
    basis: &ModalBasis,
    kernel: &MemoryKernel,
    grid: TimeGrid,
) -> Result<CoeffState> {
    grid.ensure_same(f.grid())?;
    for mode in &basis.modes {
        check_resolution(mode, &grid)?;
    }
    let k = kernel.sample_real(grid);
    let forcing: Vec<f64> = f.values().iter().map(|z| z.re).collect();
    let h = grid.step();
    let ends: Vec<(f64, f64)> = basis
        .modes
        .par_iter()
        .map(|mode| {
            let force: Vec<f64> = forcing.iter().map(|v| -mode.trace * v).collect();
            let (x, v) = verlet_memory(mode.lambda_sq, &k, Some(&force), h, 0.0, 0.0);
            (x[x.len() - 1], v[v.len() - 1])
        })
        .collect();
    let (position, velocity): (Vec<f64>, Vec<f64>) = ends.into_iter().unzip();
    CoeffState::from_real(&position, &velocity)
}

/// `wₙ(T) = σ γ₁φₙ (ζₙ ∗ f)(T)`, `wₙ'(T) = σ γ₁φₙ (ζₙ' ∗ f)(T)` with `σ = −1`
/// the sign of the boundary forcing in the modal equation.
pub fn simulate_via_representation(f: &Signal, zetas: &[ZetaTable]) -> Result<CoeffState> {
    let mut position = Vec::with_capacity(zetas.len());
    let mut velocity = Vec::with_capacity(zetas.len());
    for table in zetas {
        table.grid.ensure_same(f.grid())?;
        let h = table.grid.step();
        let last = table.grid.steps();
        let scale = FORCING_SIGN * table.mode.trace;
        position.push(scale * convolve_at(table.zeta.values(), f.values(), last, h));
        velocity.push(scale * convolve_at(table.dzeta.values(), f.values(), last, h));
    }
    CoeffState::new(position, velocity)
}

// ---------------------------------------------------------------------------
// steering

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachReport {
    pub class: TargetClass,
    pub target: CoeffState,
    pub achieved: CoeffState,
    /// `‖λₙᵏ (w̃ₙ − wₙ)‖₂` with `k` the class order.
    pub position_error: f64,
    /// `‖λₙᵏ⁻¹ (w̃ₙ' − wₙ')‖₂`.
    pub velocity_error: f64,
    pub target_norm: f64,
    pub relative_error: f64,
}

impl ReachReport {
    pub fn new(
        class: TargetClass,
        target: CoeffState,
        achieved: CoeffState,
        basis: &ModalBasis,
    ) -> Result<Self> {
        if target.len() != achieved.len() {
            return Err(Error::InvalidArgument(
                "target and achieved sizes differ".into(),
            ));
        }
        let k = class.order() as i32;
        let (mut pe, mut ve, mut tn) = (0.0, 0.0, 0.0);
        for (n, mode) in basis.modes.iter().take(target.len()).enumerate() {
            let l = mode.lambda.norm();
            let (wp, wv) = (l.powi(k), l.powi(k - 1));
            pe += (wp * (achieved.position[n] - target.position[n]).norm()).powi(2);
            ve += (wv * (achieved.velocity[n] - target.velocity[n]).norm()).powi(2);
            tn +=
                (wp * target.position[n].norm()).powi(2) + (wv * target.velocity[n].norm()).powi(2);
        }
        let (pe, ve, tn) = (pe.sqrt(), ve.sqrt(), tn.sqrt());
        let err = pe.hypot(ve);
        let relative_error = if tn > 0.0 { err / tn } else { err };
        Ok(Self {
            class,
            target,
            achieved,
            position_error: pe,
            velocity_error: ve,
            target_norm: tn,
            relative_error,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaSolver {
    #[default]
    Timestep,
    Picard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerOptions {
    pub ridge: f64,
    pub conventions: ConventionTable,
    pub zeta_solver: ZetaSolver,
}

impl Default for SteerOptions {
    fn default() -> Self {
        Self {
            ridge: 0.0,
            conventions: ConventionTable::default(),
            zeta_solver: ZetaSolver::Timestep,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteerResult {
    pub control: ControlSignal,
    pub report: ReachReport,
    pub moment_residual: f64,
    pub condition: f64,
}

pub fn solve_zetas(
    basis: &ModalBasis,
    kernel: &MemoryKernel,
    grid: TimeGrid,
    solver: ZetaSolver,
) -> Result<Vec<ZetaTable>> {
    match solver {
        ZetaSolver::Timestep => crate::volterra::solve_all_timestep(basis, kernel, grid),
        ZetaSolver::Picard => basis
            .modes
            .par_iter()
            .map(|m| solve_zeta_picard(m, kernel, grid, 200, 1e-13))
            .collect(),
    }
}

/// Full pipeline: `ζ` tables, kernel set, Gram solve, lift and an independent
/// forward simulation of the synthesised control.
pub fn steer(
    target: &TargetSpec,
    basis: &ModalBasis,
    kernel: &MemoryKernel,
    grid: TimeGrid,
    class: ControlClass,
    options: &SteerOptions,
) -> Result<SteerResult> {
    let order = match class.target_class() {
        Some(tc) if tc == target.class => tc.order(),
        _ => {
            return Err(Error::ClassMismatch {
                target: target.class.name().into(),
                order: class.constraints() as u8,
            })
        }
    };
    if grid.horizon() < CRITICAL_TIME {
        return Err(Error::InvalidArgument(format!(
            "horizon {} below the critical time {CRITICAL_TIME}",
            grid.horizon()
        )));
    }
    if target.len() > basis.len() {
        return Err(Error::MissingMode {
            index: basis.len() + 1,
        });
    }
    let basis = basis.truncate(target.len());
    let zetas = solve_zetas(&basis, kernel, grid, options.zeta_solver)?;
    let set = build_kernel_set(order, &basis, &zetas, kernel)?;
    let system = MomentSystem::for_target(set, target, &options.conventions)?;
    let solution = solve_min_norm(&system, options.ridge)?;
    let control = lift_generator(&solution.g, class)?;
    let achieved = simulate_modal(&control.f, &basis, kernel, grid)?;
    let report = ReachReport::new(target.class, target.to_state(&basis)?, achieved, &basis)?;
    if report.relative_error > REACH_THRESHOLD {
        return Err(Error::ReachFailed {
            relative_error: report.relative_error,
            threshold: REACH_THRESHOLD,
            report: Box::new(report),
        });
    }
    Ok(SteerResult {
        control,
        report,
        moment_residual: solution.residual,
        condition: solution.condition,
    })
}

// ---------------------------------------------------------------------------
// regularity

/// `∫₀ᵀ (T − ν)² (K ∗ g₁)(ν) dν`.
pub fn obstruction_value(kernel: &MemoryKernel, g1: &Signal) -> f64 {
    let grid = *g1.grid();
    if kernel.is_zero() {
        return 0.0;
    }
    let conv = convolve(&kernel.sample(grid), g1).expect("same grid");
    let horizon = grid.horizon();
    Signal::from_real_fn(grid, |t| (horizon - t).powi(2))
        .dot(&conv)
        .expect("same grid")
        .re
}

/// `sin(kπt/T)` with its components along `{1, t, t²}` removed.
pub fn projected_sine(grid: TimeGrid, k: f64) -> Signal {
    let horizon = grid.horizon();
    project_polynomials(
        &Signal::from_real_fn(grid, |t| (k * std::f64::consts::PI * t / horizon).sin()),
        2,
    )
}

/// `W(t)·q(t)` with `W = (t(T − t)/T²)^power` and `q` the cubic orthogonal to
/// `{1, t, t²}` in the trapezoid inner product weighted by `W`. The window
/// makes the generator vanish to order `power` at both ends, which keeps the
/// memoryless response free of endpoint terms.
pub fn windowed_cubic(grid: TimeGrid, power: i32) -> Signal {
    let horizon = grid.horizon();
    let weights = grid.trapezoid_weights();
    let window: Vec<f64> = grid
        .nodes()
        .map(|t| {
            (t * (horizon - t) / (horizon * horizon))
                .max(0.0)
                .powi(power)
        })
        .collect();
    let x: Vec<f64> = grid.nodes().map(|t| 2.0 * t / horizon - 1.0).collect();
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        (0..a.len())
            .map(|j| weights[j] * window[j] * a[j] * b[j])
            .sum()
    };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut q = Vec::new();
    for k in 0..=3 {
        let mut v: Vec<f64> = x.iter().map(|xi| xi.powi(k)).collect();
        for _ in 0..2 {
            for b in &basis {
                let c = inner(&v, b);
                v.iter_mut().zip(b).for_each(|(vj, bj)| *vj -= c * bj);
            }
        }
        let norm = inner(&v, &v).sqrt();
        v.iter_mut().for_each(|vj| *vj /= norm);
        if k == 3 {
            q = v;
        } else {
            basis.push(v);
        }
    }
    let values: Vec<f64> = window.iter().zip(&q).map(|(w, qj)| w * qj).collect();
    Signal::from_real(grid, &values).expect("grid length")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailStudy {
    pub kernel: String,
    /// `partial_sums[k − 1][N − 1] = S_k(N) = Σ_{n ≤ N} λₙ^{2k} |wₙ(T)|²`.
    pub partial_sums: Vec<Vec<f64>>,
    pub fits: Vec<DecayFit>,
}

impl TailStudy {
    fn new(kernel: &MemoryKernel, state: &CoeffState, basis: &ModalBasis) -> Result<Self> {
        let mut partial_sums = Vec::new();
        let mut fits = Vec::new();
        for k in 1..=4 {
            let tail = weighted_tail(state, basis, k)?;
            fits.push(fit_decay_exponent(&tail.partial_sums)?);
            partial_sums.push(tail.partial_sums);
        }
        Ok(Self {
            kernel: kernel.describe(),
            partial_sums,
            fits,
        })
    }

    pub fn verdict(&self, k: usize) -> TailVerdict {
        self.fits[k - 1].verdict
    }

    pub fn slope(&self, k: usize) -> f64 {
        self.fits[k - 1].slope
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub class: ControlClass,
    pub obstruction: f64,
    pub with_memory: TailStudy,
    /// Same control with `K = 0`.
    pub memoryless: TailStudy,
}

/// Below this `|Obs| / (‖g₁‖ T^{7/2} ‖K‖∞)` the obstruction counts as vanishing.
pub const OBSTRUCTION_TOL: f64 = 1e-8;

pub fn regularity_experiment(
    kernel: &MemoryKernel,
    g0: f64,
    g1: &Signal,
    basis: &ModalBasis,
    grid: TimeGrid,
) -> Result<RegularityReport> {
    grid.ensure_same(g1.grid())?;
    let obstruction = obstruction_value(kernel, g1);
    let scale = g1.l2_norm() * grid.horizon().powf(3.5) * kernel.sup_norm(grid);
    if !kernel.is_zero() && obstruction.abs() <= OBSTRUCTION_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::ObstructionVanishes { value: obstruction });
    }
    let g = g1.scale(Complex64::new(g0, 0.0));
    let control = lift_generator(&g, ControlClass::H30)?;
    let zero = MemoryKernel::zero();
    let with = simulate_modal(&control.f, basis, kernel, grid)?;
    let without = simulate_modal(&control.f, basis, &zero, grid)?;
    Ok(RegularityReport {
        class: ControlClass::H30,
        obstruction,
        with_memory: TailStudy::new(kernel, &with, basis)?,
        memoryless: TailStudy::new(&zero, &without, basis)?,
    })
}
