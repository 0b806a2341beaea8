//! Modal impulse responses of the memory equation
//!
//! ```text
//! ζ'' = −λ² ζ + (K ∗ ζ),   ζ(0) = 0,  ζ'(0) = 1,
//! ```
//!
//! by two independent solvers (velocity Verlet with trapezoidal memory, and
//! Picard iteration on the equivalent second-kind Volterra equations), plus
//! the asymptotic convolution expansion of `Z = ζ' + iλζ`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    conv_power, convolve, convolve_at_real, trig_signals, MemoryKernel, Signal, TimeGrid,
};
use crate::spectral::{ModalBasis, Mode};

/// Largest admissible `h·|λ|`.
pub const MAX_H_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Timestep,
    Picard,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZetaTable {
    pub mode: Mode,
    pub grid: TimeGrid,
    pub zeta: Signal,
    pub dzeta: Signal,
    /// `Z = ζ' + iλζ`
    pub z: Signal,
    pub method: SolveMethod,
    /// Picard sweeps used (1 for the other methods).
    pub iterations: usize,
}

impl ZetaTable {
    fn assemble(
        mode: Mode,
        grid: TimeGrid,
        zeta: Signal,
        dzeta: Signal,
        method: SolveMethod,
        iterations: usize,
    ) -> Self {
        let il = Complex64::new(0.0, 1.0) * mode.lambda;
        let z = dzeta
            .zip_with(&zeta, |d, x| d + il * x)
            .expect("zeta and dzeta share a grid");
        Self {
            mode,
            grid,
            zeta,
            dzeta,
            z,
            method,
            iterations,
        }
    }

    /// Closed form at `K = 0`: `ζ = sin(λt)/λ`.
    pub fn closed_form_memoryless(mode: Mode, grid: TimeGrid) -> Self {
        let trig = trig_signals(&mode, grid);
        let zeta = trig.sin.scale(Complex64::new(1.0, 0.0) / mode.lambda);
        Self::assemble(mode, grid, zeta, trig.cos, SolveMethod::ClosedForm, 1)
    }

    /// Columns `t, Re ζ, Im ζ, Re ζ', Im ζ'`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["t", "re_zeta", "im_zeta", "re_dzeta", "im_dzeta"])?;
        for (j, t) in self.grid.nodes().enumerate() {
            let z = self.zeta.values()[j];
            let d = self.dzeta.values()[j];
            out.write_record([
                format!("{t:.17e}"),
                format!("{:.17e}", z.re),
                format!("{:.17e}", z.im),
                format!("{:.17e}", d.re),
                format!("{:.17e}", d.im),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn check_resolution(mode: &Mode, grid: &TimeGrid) -> Result<()> {
    let h_lambda = grid.step() * mode.lambda.norm();
    if h_lambda > MAX_H_LAMBDA {
        Err(Error::UnderResolved {
            index: mode.index,
            h_lambda,
        })
    } else {
        Ok(())
    }
}

/// `max(512, next_pow2(⌈4 T |λ_max|⌉))`.
pub fn auto_steps(horizon: f64, max_abs_lambda: f64) -> usize {
    let need = (4.0 * horizon * max_abs_lambda).ceil().max(1.0) as usize;
    need.next_power_of_two().max(512)
}

/// Velocity Verlet for `x'' = −λ² x + (K ∗ x) + F` on the grid, with the
/// memory term evaluated by trapezoidal convolution at each new node. The
/// `½ h K(0) x_{j+1}` contribution uses the freshly drifted position, so the
/// scheme stays explicit.
pub(crate) fn verlet_memory(
    lambda_sq: f64,
    kernel: &[f64],
    forcing: Option<&[f64]>,
    h: f64,
    x0: f64,
    v0: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = kernel.len();
    let memory = kernel.iter().any(|&k| k != 0.0);
    let force = |j: usize| forcing.map_or(0.0, |f| f[j]);
    let mut x = vec![0.0; n];
    let mut v = vec![0.0; n];
    x[0] = x0;
    v[0] = v0;
    let mut acc = -lambda_sq * x0 + force(0);
    for j in 0..n - 1 {
        let half = v[j] + 0.5 * h * acc;
        x[j + 1] = x[j] + h * half;
        let mem = if memory {
            convolve_at_real(kernel, &x, j + 1, h)
        } else {
            0.0
        };
        acc = -lambda_sq * x[j + 1] + mem + force(j + 1);
        v[j + 1] = half + 0.5 * h * acc;
    }
    (x, v)
}

pub fn solve_zeta_timestep(
    mode: &Mode,
    kernel: &MemoryKernel,
    grid: TimeGrid,
) -> Result<ZetaTable> {
    check_resolution(mode, &grid)?;
    let k = kernel.sample_real(grid);
    let (x, v) = verlet_memory(mode.lambda_sq, &k, None, grid.step(), 0.0, 1.0);
    Ok(ZetaTable::assemble(
        *mode,
        grid,
        Signal::from_real(grid, &x)?,
        Signal::from_real(grid, &v)?,
        SolveMethod::Timestep,
        1,
    ))
}

/// Picard iteration on
///
/// ```text
/// ζ  = S/λ + λ⁻¹ (K ∗ S) ∗ ζ,
/// ζ' = C   + λ⁻¹ (K ∗ S) ∗ ζ',
/// ```
///
/// starting from the forcing terms. Stops once both iterates move less than
/// `tol` in sup-norm.
pub fn solve_zeta_picard(
    mode: &Mode,
    kernel: &MemoryKernel,
    grid: TimeGrid,
    max_iter: usize,
    tol: f64,
) -> Result<ZetaTable> {
    if max_iter < 1 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    check_resolution(mode, &grid)?;
    let trig = trig_signals(mode, grid);
    let inv_lambda = Complex64::new(1.0, 0.0) / mode.lambda;
    let forcing_zeta = trig.sin.scale(inv_lambda);
    let forcing_dzeta = trig.cos.clone();
    let q = convolve(&kernel.sample(grid), &trig.sin)?.scale(inv_lambda);

    let mut zeta = forcing_zeta.clone();
    let mut dzeta = forcing_dzeta.clone();
    let mut last_step = f64::INFINITY;
    for iteration in 1..=max_iter {
        let next_zeta = forcing_zeta.add(&convolve(&q, &zeta)?)?;
        let next_dzeta = forcing_dzeta.add(&convolve(&q, &dzeta)?)?;
        last_step = next_zeta
            .sub(&zeta)?
            .sup_norm()
            .max(next_dzeta.sub(&dzeta)?.sup_norm());
        zeta = next_zeta;
        dzeta = next_dzeta;
        if last_step < tol {
            return Ok(ZetaTable::assemble(
                *mode,
                grid,
                zeta,
                dzeta,
                SolveMethod::Picard,
                iteration,
            ));
        }
    }
    Err(Error::NoConvergence {
        max_iter,
        tol,
        last_step,
    })
}

/// Timestep solve for every mode of `basis`, in parallel, returned in mode order.
pub fn solve_all_timestep(
    basis: &ModalBasis,
    kernel: &MemoryKernel,
    grid: TimeGrid,
) -> Result<Vec<ZetaTable>> {
    basis
        .modes
        .par_iter()
        .map(|mode| solve_zeta_timestep(mode, kernel, grid))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZExpansion {
    pub order: usize,
    /// `E + Σ_{r=1}^{order} λ^{−r} K^{∗r} ∗ S^{∗r} ∗ E`
    pub expansion: Signal,
    /// `λ^{order+1} (Z − expansion)`
    pub remainder: Signal,
}

pub const MAX_EXPANSION_ORDER: usize = 4;

pub fn z_expansion(
    mode: &Mode,
    kernel: &MemoryKernel,
    grid: TimeGrid,
    order: usize,
) -> Result<ZExpansion> {
    let table = solve_zeta_timestep(mode, kernel, grid)?;
    z_expansion_from(&table, kernel, order)
}

/// Expansion against an already computed `Z`.
pub fn z_expansion_from(
    table: &ZetaTable,
    kernel: &MemoryKernel,
    order: usize,
) -> Result<ZExpansion> {
    let mode = &table.mode;
    if !mode.is_oscillatory() {
        return Err(Error::ImaginaryLambda {
            index: mode.index,
            lambda_sq: mode.lambda_sq,
        });
    }
    if order > MAX_EXPANSION_ORDER {
        return Err(Error::InvalidArgument(format!(
            "expansion order {order} exceeds {MAX_EXPANSION_ORDER}"
        )));
    }
    let grid = table.grid;
    let trig = trig_signals(mode, grid);
    let lambda = mode.lambda.re;
    let mut expansion = trig.exp.clone();
    if order >= 1 && !kernel.is_zero() {
        let k = kernel.sample(grid);
        for r in 1..=order {
            let kr = conv_power(&k, r)?;
            let sr = conv_power(&trig.sin, r)?;
            let term = convolve(&convolve(&kr, &sr)?, &trig.exp)?;
            expansion =
                expansion.add(&term.scale(Complex64::new(lambda.powi(-(r as i32)), 0.0)))?;
        }
    }
    let scale = Complex64::new(lambda.powi(order as i32 + 1), 0.0);
    let remainder = table.z.sub(&expansion)?.scale(scale);
    Ok(ZExpansion {
        order,
        expansion,
        remainder,
    })
}

/// `‖Z − E − λ⁻¹ K ∗ S ∗ Z‖∞`.
pub fn fixed_point_residual(table: &ZetaTable, kernel: &MemoryKernel) -> Result<f64> {
    let trig = trig_signals(&table.mode, table.grid);
    let ks = convolve(&kernel.sample(table.grid), &trig.sin)?;
    let rhs = trig
        .exp
        .add(&convolve(&ks, &table.z)?.scale(Complex64::new(1.0, 0.0) / table.mode.lambda))?;
    Ok(table.z.sub(&rhs)?.sup_norm())
}

/// Sup over interior nodes of `|δ²ζ/h² + λ²ζ − K ∗ ζ|`.
pub fn zeta_defect(table: &ZetaTable, kernel: &MemoryKernel) -> Result<f64> {
    let h = table.grid.step();
    let mem = convolve(&kernel.sample(table.grid), &table.zeta)?;
    let z = table.zeta.values();
    let m = mem.values();
    Ok((1..z.len() - 1)
        .map(|j| {
            let second = (z[j + 1] - 2.0 * z[j] + z[j - 1]) / (h * h);
            (second + table.mode.lambda_sq * z[j] - m[j]).norm()
        })
        .fold(0.0, f64::max))
}

/// Sup over interior nodes of `|δZ/δt − iλZ − K ∗ ζ|` with centred differences.
pub fn derivative_identity_defect(table: &ZetaTable, kernel: &MemoryKernel) -> Result<f64> {
    let h = table.grid.step();
    let mem = convolve(&kernel.sample(table.grid), &table.zeta)?;
    let il = Complex64::new(0.0, 1.0) * table.mode.lambda;
    let z = table.z.values();
    Ok((1..z.len() - 1)
        .map(|j| ((z[j + 1] - z[j - 1]) / (2.0 * h) - il * z[j] - mem.values()[j]).norm())
        .fold(0.0, f64::max))
}
