//! Moment kernels, projections onto the generator subspaces `N₁`/`N₂`, Gram
//! assembly and the minimum-norm moment solve.
//!
//! A generator `g` acts on mode `n` through
//!
//! ```text
//! mₙ(g) = ∫₀ᵀ pₙ(r) g(T − r) dr,        pₙ = Ψₙ (P Xₙ) + i λₙ Ψₙ (P Yₙ),
//! ```
//!
//! where `(Xₙ, Yₙ)` are real signals built from `ζₙ` and `P` is the identity
//! (order 0) or the projection onto `N₁` (order 1) / `N₂` (order 2). Because `g`
//! is real the complex moment is matched through two real functionals per mode,
//! one carried by each of `Xₙ` and `Yₙ`.

use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{convolve, MemoryKernel, Signal, TimeGrid};
use crate::spectral::{CoeffState, ModalBasis, Mode};
use crate::volterra::ZetaTable;

/// Sign of the boundary forcing in the modal equation: `wₙ(T) = σ γ₁φₙ (ζₙ ∗ f)(T)`.
pub const FORCING_SIGN: f64 = -1.0;
pub const PROJECTION_TOL: f64 = 1e-10;
pub const MOMENT_RESIDUAL_TOL: f64 = 1e-6;
pub const DEFECT_TOL: f64 = 1e-8;
pub const MAX_CONDITION: f64 = 1e12;

const I: Complex64 = Complex64::new(0.0, 1.0);

// ---------------------------------------------------------------------------
// projections

/// Orthonormal basis (trapezoid weights) of polynomials of degree `≤ degree`.
fn polynomial_basis(grid: &TimeGrid, degree: usize) -> Vec<Vec<f64>> {
    let w = grid.trapezoid_weights();
    let horizon = grid.horizon();
    let x: Vec<f64> = grid
        .nodes()
        .map(|t| (t - horizon / 2.0) / horizon)
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(degree + 1);
    for k in 0..=degree {
        let mut v: Vec<f64> = x.iter().map(|&xi| xi.powi(k as i32)).collect();
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = (0..v.len()).map(|j| w[j] * q[j] * v[j]).sum();
                v.iter_mut().zip(q).for_each(|(vj, qj)| *vj -= c * qj);
            }
        }
        let norm = (0..v.len()).map(|j| w[j] * v[j] * v[j]).sum::<f64>().sqrt();
        v.iter_mut().for_each(|vj| *vj /= norm);
        basis.push(v);
    }
    basis
}

/// Removes the trapezoid-orthogonal component along polynomials of degree `≤ degree`.
pub fn project_polynomials(s: &Signal, degree: usize) -> Signal {
    let grid = *s.grid();
    let w = grid.trapezoid_weights();
    let mut out = s.values().to_vec();
    for q in polynomial_basis(&grid, degree) {
        let c: Complex64 = (0..out.len()).map(|j| out[j] * (w[j] * q[j])).sum();
        out.iter_mut().zip(&q).for_each(|(o, qj)| *o -= c * qj);
    }
    Signal::new(grid, out).expect("same length")
}

/// `s − (1/T)∫₀ᵀ s`.
pub fn project_n1(s: &Signal) -> Signal {
    let mean = s.integral() / s.grid().horizon();
    s.map(|z| z - mean)
}

/// `(A, B)` with `P₂ s = s − tA − B`: the slope of the weighted regression line
/// and its intercept. At the continuum level `A = (12/T³)∫₀ᵀ(t − T/2)s dt`.
pub fn n2_coefficients(s: &Signal) -> (Complex64, Complex64) {
    let grid = *s.grid();
    let horizon = grid.horizon();
    let ones = Signal::from_real_fn(grid, |_| 1.0);
    let t_mean = Signal::from_real_fn(grid, |t| t).integral().re / horizon;
    let centred = Signal::from_real_fn(grid, |t| t - t_mean);
    let denom = centred.dot(&centred).expect("same grid").re;
    let a = centred.dot(s).expect("same grid") / denom;
    let b = s.dot(&ones).expect("same grid") / horizon - a * t_mean;
    (a, b)
}

/// `s − tA − B`; the result satisfies `∫ s = 0` and `∫ t s = 0`.
pub fn project_n2(s: &Signal) -> Signal {
    let (a, b) = n2_coefficients(s);
    let grid = *s.grid();
    Signal::new(
        grid,
        grid.nodes()
            .zip(s.values())
            .map(|(t, &v)| v - a * t - b)
            .collect(),
    )
    .expect("same length")
}

/// Projection onto the complement of `{1, t, t²}`.
pub fn project_n3(s: &Signal) -> Signal {
    project_polynomials(s, 2)
}

/// `∫₀ᵀ (T − s)^k g(s) ds` for `k < count`.
pub fn vanishing_moments(g: &Signal, count: usize) -> Vec<Complex64> {
    let grid = *g.grid();
    let horizon = grid.horizon();
    (0..count)
        .map(|k| {
            let weight = Signal::from_real_fn(grid, |t| (horizon - t).powi(k as i32));
            weight.dot(g).expect("same grid")
        })
        .collect()
}

// ---------------------------------------------------------------------------
// kernel sets

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetClass {
    /// `L² × H⁻¹`, moment order 0.
    L2Hm1,
    /// `H¹₀ × L²`, moment order 1.
    H10L2,
    /// `H² × H¹₀`, moment order 2.
    H2H10,
}

impl TargetClass {
    pub fn order(self) -> u8 {
        match self {
            TargetClass::L2Hm1 => 0,
            TargetClass::H10L2 => 1,
            TargetClass::H2H10 => 2,
        }
    }

    pub fn from_order(order: u8) -> Result<Self> {
        match order {
            0 => Ok(TargetClass::L2Hm1),
            1 => Ok(TargetClass::H10L2),
            2 => Ok(TargetClass::H2H10),
            _ => Err(Error::InvalidArgument(format!(
                "moment order {order} not in 0..=2"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetClass::L2Hm1 => "l2_hm1",
            TargetClass::H10L2 => "h10_l2",
            TargetClass::H2H10 => "h2_h10",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeKernel {
    pub mode: Mode,
    /// Real part carried by `Ψₙ` before projection.
    pub x_part: Vec<f64>,
    /// Real part carried by `iλₙΨₙ` before projection.
    pub y_part: Vec<f64>,
    /// Projected parts (equal to the raw parts at order 0).
    pub px: Vec<f64>,
    pub py: Vec<f64>,
    pub e: Signal,
    pub p: Signal,
}

impl ModeKernel {
    fn new(mode: Mode, grid: TimeGrid, x_part: Vec<f64>, y_part: Vec<f64>, order: u8) -> Self {
        let psi = mode.psi;
        let il_psi = I * mode.lambda * psi;
        let combine = |x: &[f64], y: &[f64]| {
            Signal::new(
                grid,
                x.iter()
                    .zip(y)
                    .map(|(&a, &b)| psi * a + il_psi * b)
                    .collect(),
            )
            .expect("grid length")
        };
        let e = combine(&x_part, &y_part);
        let (px, py) = (project(order, &x_part, grid), project(order, &y_part, grid));
        let p = if order == 0 {
            e.clone()
        } else {
            combine(&px, &py)
        };
        Self {
            mode,
            x_part,
            y_part,
            px,
            py,
            e,
            p,
        }
    }

    /// The two real functionals `(κˣ, κʸ)`. For real `λₙ` these are
    /// `√2 (Re pₙ, Im pₙ)`; for imaginary `λₙ` both parts of `pₙ` are purely
    /// imaginary and each is kept separately.
    pub fn realified(&self) -> (Vec<f64>, Vec<f64>) {
        let psi = self.mode.psi;
        let lpsi = self.mode.lambda * psi;
        let sx = std::f64::consts::SQRT_2 * (psi.re + psi.im);
        let sy = std::f64::consts::SQRT_2 * (lpsi.re + lpsi.im);
        (
            self.px.iter().map(|v| sx * v).collect(),
            self.py.iter().map(|v| sy * v).collect(),
        )
    }
}

fn project(order: u8, v: &[f64], grid: TimeGrid) -> Vec<f64> {
    let s = Signal::from_real(grid, v).expect("grid length");
    let out = match order {
        1 => project_n1(&s),
        2 => project_n2(&s),
        _ => s,
    };
    out.real_parts()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentKernelSet {
    pub order: u8,
    pub grid: TimeGrid,
    pub kernels: Vec<ModeKernel>,
}

impl MomentKernelSet {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Realified family in the order `κˣ₁, κʸ₁, κˣ₂, κʸ₂, …`.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        self.kernels
            .iter()
            .flat_map(|k| {
                let (x, y) = k.realified();
                [x, y]
            })
            .collect()
    }

    /// Columns `t, re_p1, im_p1, …`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        for k in &self.kernels {
            header.push(format!("re_p{}", k.mode.index));
            header.push(format!("im_p{}", k.mode.index));
        }
        out.write_record(&header)?;
        for (j, t) in self.grid.nodes().enumerate() {
            let mut row = vec![format!("{t:.17e}")];
            for k in &self.kernels {
                let z = k.p.values()[j];
                row.push(format!("{:.17e}", z.re));
                row.push(format!("{:.17e}", z.im));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn build_kernel_set(
    order: u8,
    basis: &ModalBasis,
    zetas: &[ZetaTable],
    kernel: &MemoryKernel,
) -> Result<MomentKernelSet> {
    TargetClass::from_order(order)?;
    let first = zetas.first().ok_or(Error::MissingMode { index: 1 })?.grid;
    let mut chosen = Vec::with_capacity(basis.len());
    for mode in &basis.modes {
        let table = zetas
            .iter()
            .find(|z| z.mode.index == mode.index)
            .ok_or(Error::MissingMode { index: mode.index })?;
        first.ensure_same(&table.grid)?;
        chosen.push((mode, table));
    }
    let grid = first;
    let k1 = kernel.sample_k1(grid);
    let k2 = kernel.sample_k2(grid);
    let memory = !kernel.is_zero();
    let kernels = chosen
        .par_iter()
        .map(|&(mode, table)| -> Result<ModeKernel> {
            let zeta = table.zeta.re();
            let dzeta = table.dzeta.re().real_parts();
            let zeta_vals = zeta.real_parts();
            let (x, y) = match order {
                0 => (dzeta, zeta_vals),
                _ if !memory => (dzeta, zeta_vals),
                1 => {
                    let m1 = convolve(&k1, &zeta)?.real_parts();
                    (sub(&dzeta, &m1), zeta_vals)
                }
                _ => {
                    let m1 = convolve(&k1, &zeta)?.real_parts();
                    let m2 = convolve(&k2, &zeta)?.real_parts();
                    (sub(&dzeta, &m1), sub(&zeta_vals, &m2))
                }
            };
            Ok(ModeKernel::new(*mode, grid, x, y, order))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentKernelSet {
        order,
        grid,
        kernels,
    })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn reversed_real(g: &Signal) -> Vec<f64> {
    g.values().iter().rev().map(|z| z.re).collect()
}

fn weighted(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (0..a.len()).map(|j| w[j] * a[j] * b[j]).sum()
}

/// `mₙ = ∫₀ᵀ pₙ(r) g(T − r) dr`.
pub fn pair(set: &MomentKernelSet, g: &Signal) -> Result<Vec<Complex64>> {
    set.grid.ensure_same(g.grid())?;
    let reversed = g.reversed();
    set.kernels.iter().map(|k| k.p.dot(&reversed)).collect()
}

/// Values of the realified functionals on a real generator.
pub fn pair_realified(set: &MomentKernelSet, g: &Signal) -> Result<Vec<f64>> {
    set.grid.ensure_same(g.grid())?;
    let w = set.grid.trapezoid_weights();
    let rev = reversed_real(g);
    Ok(set
        .columns()
        .iter()
        .map(|c| weighted(&w, c, &rev))
        .collect())
}

pub fn gram_of_columns(columns: &[Vec<f64>], grid: &TimeGrid) -> DMatrix<f64> {
    let w = grid.trapezoid_weights();
    let n = columns.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| weighted(&w, &columns[i], &columns[j]))
                .collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        if i <= j {
            rows[i][j - i]
        } else {
            rows[j][i - j]
        }
    })
}

/// Real symmetric Gram matrix of the realified family.
pub fn assemble_gram(set: &MomentKernelSet) -> DMatrix<f64> {
    gram_of_columns(&set.columns(), &set.grid)
}

// ---------------------------------------------------------------------------
// targets and conventions

/// Normalised target coefficients: `ξ = Σ (ξₙ / λₙᵏ) φₙ`, `η = Σ (ηₙ / λₙᵏ⁻¹) φₙ`
/// with `k` the moment order of the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub class: TargetClass,
    pub xi: Vec<Complex64>,
    pub eta: Vec<Complex64>,
}

impl TargetSpec {
    pub fn real(class: TargetClass, xi: &[f64], eta: &[f64]) -> Result<Self> {
        Self::new(
            class,
            xi.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            eta.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn new(class: TargetClass, xi: Vec<Complex64>, eta: Vec<Complex64>) -> Result<Self> {
        if xi.len() != eta.len() {
            return Err(Error::InvalidArgument(format!(
                "xi has {} entries, eta has {}",
                xi.len(),
                eta.len()
            )));
        }
        if xi
            .iter()
            .chain(&eta)
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidArgument(
                "target coefficients must be finite".into(),
            ));
        }
        Ok(Self { class, xi, eta })
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// Physical coefficients `(wₙ(T), wₙ'(T))`.
    pub fn to_state(&self, basis: &ModalBasis) -> Result<CoeffState> {
        let k = self.class.order() as i32;
        let modes = modes_for(basis, self.len())?;
        let position = modes
            .iter()
            .zip(&self.xi)
            .map(|(m, &x)| x / m.lambda.powi(k))
            .collect();
        let velocity = modes
            .iter()
            .zip(&self.eta)
            .map(|(m, &e)| e / m.lambda.powi(k - 1))
            .collect();
        CoeffState::new(position, velocity)
    }

    pub fn from_state(class: TargetClass, state: &CoeffState, basis: &ModalBasis) -> Result<Self> {
        let k = class.order() as i32;
        let modes = modes_for(basis, state.len())?;
        let xi = modes
            .iter()
            .zip(&state.position)
            .map(|(m, &w)| w * m.lambda.powi(k))
            .collect();
        let eta = modes
            .iter()
            .zip(&state.velocity)
            .map(|(m, &v)| v * m.lambda.powi(k - 1))
            .collect();
        Self::new(class, xi, eta)
    }
}

fn modes_for(basis: &ModalBasis, len: usize) -> Result<&[Mode]> {
    if basis.len() < len {
        return Err(Error::MissingMode {
            index: basis.len() + 1,
        });
    }
    Ok(&basis.modes[..len])
}

/// `cₙ = xi·ξₙ + eta·ηₙ`; one coefficient must be real and the other imaginary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convention {
    pub xi: Complex64,
    pub eta: Complex64,
}

impl Convention {
    pub const fn new(xi: Complex64, eta: Complex64) -> Self {
        Self { xi, eta }
    }

    fn validate(&self) -> Result<()> {
        let real = |z: Complex64| z.im == 0.0 && z.re != 0.0;
        let imag = |z: Complex64| z.re == 0.0 && z.im != 0.0;
        if (real(self.xi) && imag(self.eta)) || (imag(self.xi) && real(self.eta)) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "convention needs one real and one imaginary coefficient, got xi = {}, eta = {}",
                self.xi, self.eta
            )))
        }
    }

    pub fn apply(&self, xi: Complex64, eta: Complex64) -> Complex64 {
        self.xi * xi + self.eta * eta
    }

    /// `(real-coefficient term, imaginary-coefficient term / i)`.
    fn split(&self, xi: Complex64, eta: Complex64) -> (Complex64, Complex64) {
        if self.xi.im == 0.0 {
            (self.xi * xi, self.eta * eta / I)
        } else {
            (self.eta * eta, self.xi * xi / I)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionTable {
    pub l2_hm1: Convention,
    pub h10_l2: Convention,
    pub h2_h10: Convention,
}

impl ConventionTable {
    /// The textbook conventions for the three classes, taken at face value.
    pub fn literal() -> Self {
        let one = Complex64::new(1.0, 0.0);
        Self {
            l2_hm1: Convention::new(I, one),
            h10_l2: Convention::new(-one, I),
            h2_h10: Convention::new(I, -one),
        }
    }

    /// Conventions derived from the order-`k` moment identities; they differ
    /// from [`ConventionTable::literal`] only in the sign of `ξ` for `H² × H¹₀`.
    pub fn validated() -> Self {
        Self {
            h2_h10: Convention::new(-I, Complex64::new(-1.0, 0.0)),
            ..Self::literal()
        }
    }

    pub fn get(&self, class: TargetClass) -> Convention {
        match class {
            TargetClass::L2Hm1 => self.l2_hm1,
            TargetClass::H10L2 => self.h10_l2,
            TargetClass::H2H10 => self.h2_h10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.l2_hm1.validate()?;
        self.h10_l2.validate()?;
        self.h2_h10.validate()
    }
}

impl Default for ConventionTable {
    fn default() -> Self {
        Self::validated()
    }
}

pub fn target_to_moments(
    target: &TargetSpec,
    order: u8,
    conventions: &ConventionTable,
) -> Result<Vec<Complex64>> {
    if target.class.order() != order {
        return Err(Error::ClassMismatch {
            target: target.class.name().into(),
            order,
        });
    }
    let c = conventions.get(target.class);
    c.validate()?;
    Ok(target
        .xi
        .iter()
        .zip(&target.eta)
        .map(|(&x, &e)| c.apply(x, e))
        .collect())
}

// ---------------------------------------------------------------------------
// solve

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSystem {
    pub kernels: MomentKernelSet,
    pub gram: DMatrix<f64>,
    /// Complex moments the generator must produce, `pair(g) = moments`.
    pub moments: Vec<Complex64>,
    /// Realified right-hand side, aligned with [`MomentKernelSet::columns`].
    pub rhs: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSolution {
    /// Real generator on the kernel grid.
    pub g: Signal,
    pub beta: DVector<f64>,
    /// `‖pair(g) − moments‖₂`.
    pub residual: f64,
    pub condition: f64,
    pub ridge: f64,
}

impl MomentSystem {
    /// Solve `pair(g) = c` literally; `(Re cₙ, Im cₙ)` are matched.
    pub fn from_moments(kernels: MomentKernelSet, moments: Vec<Complex64>) -> Result<Self> {
        let split = moments
            .iter()
            .map(|c| (Complex64::new(c.re, 0.0), Complex64::new(c.im, 0.0)))
            .collect::<Vec<_>>();
        Self::from_split(kernels, moments, split)
    }

    /// Moments that steer the state to `target`: `pair(g) = σ c` with `σ` the
    /// forcing sign and `c` from the convention table.
    pub fn for_target(
        kernels: MomentKernelSet,
        target: &TargetSpec,
        conventions: &ConventionTable,
    ) -> Result<Self> {
        let c = target_to_moments(target, kernels.order, conventions)?;
        if c.len() != kernels.len() {
            return Err(Error::InvalidArgument(format!(
                "target has {} modes, kernel set has {}",
                c.len(),
                kernels.len()
            )));
        }
        let conv = conventions.get(target.class);
        let split = target
            .xi
            .iter()
            .zip(&target.eta)
            .map(|(&x, &e)| {
                let (a, b) = conv.split(x, e);
                (a * FORCING_SIGN, b * FORCING_SIGN)
            })
            .collect();
        let moments = c.iter().map(|z| z * FORCING_SIGN).collect();
        Self::from_split(kernels, moments, split)
    }

    fn from_split(
        kernels: MomentKernelSet,
        moments: Vec<Complex64>,
        split: Vec<(Complex64, Complex64)>,
    ) -> Result<Self> {
        if moments.len() != kernels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} moments for {} kernels",
                moments.len(),
                kernels.len()
            )));
        }
        let s = std::f64::consts::SQRT_2;
        let rhs = DVector::from_iterator(
            2 * split.len(),
            split
                .iter()
                .flat_map(|(a, b)| [s * (a.re + a.im), s * (b.re + b.im)]),
        );
        let gram = assemble_gram(&kernels);
        Ok(Self {
            kernels,
            gram,
            moments,
            rhs,
        })
    }

    /// Residual of a generator in realified units (equals the complex residual
    /// for real spectra).
    pub fn residual(&self, g: &Signal) -> Result<f64> {
        let values = pair_realified(&self.kernels, g)?;
        let diff: f64 = values
            .iter()
            .zip(self.rhs.iter())
            .map(|(v, r)| (v - r).powi(2))
            .sum();
        Ok((diff / 2.0).sqrt())
    }
}

fn condition_number(eig: &DVector<f64>) -> f64 {
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Minimum-norm generator `g(T − r) = Σ βₖ κₖ(r)` with `(G + ridge·I)β = rhs`.
pub fn solve_min_norm(system: &MomentSystem, ridge: f64) -> Result<MomentSolution> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    let grid = system.kernels.grid;
    let n = system.gram.nrows();
    if system.rhs.iter().all(|&r| r == 0.0) {
        return Ok(MomentSolution {
            g: Signal::zeros(grid),
            beta: DVector::zeros(n),
            residual: 0.0,
            condition: 1.0,
            ridge,
        });
    }
    let regularised = &system.gram + DMatrix::identity(n, n) * ridge;
    let eig = SymmetricEigen::new(regularised.clone());
    let condition = condition_number(&eig.eigenvalues);
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let beta = match regularised.clone().cholesky() {
        Some(ch) => ch.solve(&system.rhs),
        None => {
            let inv = eig.eigenvalues.map(|v| 1.0 / v);
            &eig.eigenvectors
                * DMatrix::from_diagonal(&inv)
                * eig.eigenvectors.transpose()
                * &system.rhs
        }
    };
    let columns = system.kernels.columns();
    let len = grid.len();
    let mut reversed = vec![0.0; len];
    for (b, col) in beta.iter().zip(&columns) {
        reversed.iter_mut().zip(col).for_each(|(r, c)| *r += b * c);
    }
    let values: Vec<f64> = reversed.into_iter().rev().collect();
    let g = Signal::from_real(grid, &values)?;
    let residual = system.residual(&g)?;
    Ok(MomentSolution {
        g,
        beta,
        residual,
        condition,
        ridge,
    })
}

// ---------------------------------------------------------------------------
// diagnostics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszReport {
    pub columns: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub condition: f64,
    /// `max |Gᵢⱼ| (i ≠ j) / min Gᵢᵢ`
    pub off_diagonal_ratio: f64,
    pub tolerance: f64,
    /// Number of eigenvalues below `tolerance · λ_max`.
    pub defect: usize,
    /// Realified column indices removed greedily, in removal order.
    pub removed: Vec<usize>,
    pub condition_after_removal: f64,
    pub defect_after_removal: usize,
    pub eigenvalues: Vec<f64>,
}

impl RieszReport {
    pub fn is_riesz(&self) -> bool {
        self.defect == 0
    }

    pub fn write_spectrum_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["index", "eigenvalue"])?;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            out.write_record([i.to_string(), format!("{v:.17e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn defect_count(eig: &DVector<f64>, tol: f64) -> usize {
    let threshold = tol * eig.max();
    eig.iter().filter(|&&v| v < threshold).count()
}

/// Diagnostics over the modes `modes` (0-based positions in the kernel set).
pub fn riesz_diagnostics(set: &MomentKernelSet, modes: Range<usize>) -> Result<RieszReport> {
    if modes.end > set.len() || modes.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 modes inside 0..{}, got {modes:?}",
            set.len()
        )));
    }
    let columns: Vec<Vec<f64>> = set.kernels[modes]
        .iter()
        .flat_map(|k| {
            let (x, y) = k.realified();
            [x, y]
        })
        .collect();
    Ok(riesz_diagnostics_columns(&columns, &set.grid, DEFECT_TOL))
}

pub fn riesz_diagnostics_columns(columns: &[Vec<f64>], grid: &TimeGrid, tol: f64) -> RieszReport {
    let gram = gram_of_columns(columns, grid);
    let n = gram.nrows();
    let eig = SymmetricEigen::new(gram.clone());
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let defect = defect_count(&eig.eigenvalues, tol);
    let min_diag = (0..n).map(|i| gram[(i, i)]).fold(f64::INFINITY, f64::min);
    let off = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| gram[(i, j)].abs())
        .fold(0.0, f64::max);

    let mut keep: Vec<usize> = (0..n).collect();
    let mut removed = Vec::new();
    for _ in 0..defect {
        let sub = DMatrix::from_fn(keep.len(), keep.len(), |i, j| gram[(keep[i], keep[j])]);
        let e = SymmetricEigen::new(sub);
        let k = e.eigenvalues.imin();
        let v = e.eigenvectors.column(k);
        let worst = v.iamax();
        removed.push(keep.remove(worst));
    }
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |i, j| gram[(keep[i], keep[j])]);
    let after = SymmetricEigen::new(sub).eigenvalues;

    RieszReport {
        columns: n,
        min_eigenvalue: eigenvalues[0],
        max_eigenvalue: eigenvalues[n - 1],
        condition: condition_number(&eig.eigenvalues),
        off_diagonal_ratio: off / min_diag,
        tolerance: tol,
        defect,
        removed,
        condition_after_removal: condition_number(&after),
        defect_after_removal: defect_count(&after, tol),
        eigenvalues,
    }
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
    out.write_record(&header)?;
    for i in 0..m.nrows() {
        out.write_record((0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])))?;
    }
    out.flush()?;
    Ok(())
}
