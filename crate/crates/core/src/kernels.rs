//! Uniform time grids, sampled signals, the memory kernel and trapezoidal
//! convolution quadrature.
//!
//! Every convolution in the crate goes through [`convolve`]:
//!
//! ```text
//! (a ∗ b)(t_j) ≈ h [ ½ a₀ b_j + Σ_{0<i<j} a_i b_{j−i} + ½ a_j b₀ ],   (a ∗ b)(0) = 0,
//! ```
//!
//! which is second order for C² integrands.

use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Mode;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub const MIN_STEPS: usize = 16;

    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon T must be positive, got {horizon}"
            )));
        }
        if steps < Self::MIN_STEPS {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {} steps, got {steps}",
                Self::MIN_STEPS
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.steps {
            self.horizon
        } else {
            j as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |j| self.node(j))
    }

    /// Composite trapezoid weights, `h/2` at both ends.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.len()];
        w[0] = 0.5 * h;
        w[self.steps] = 0.5 * h;
        w
    }

    pub fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl fmt::Display for TimeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T={} m={}", self.horizon, self.steps)
    }
}

/// Complex samples on every node of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    grid: TimeGrid,
    values: Vec<Complex64>,
}

impl Signal {
    pub fn new(grid: TimeGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "signal has {} samples, grid {grid} needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![ZERO; grid.len()],
        }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            grid,
            values: grid.nodes().map(f).collect(),
        }
    }

    pub fn from_real_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |t| Complex64::new(f(t), 0.0))
    }

    pub fn from_real(grid: TimeGrid, values: &[f64]) -> Result<Self> {
        Self::new(
            grid,
            values.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> Complex64 {
        self.values[0]
    }

    pub fn last(&self) -> Complex64 {
        self.values[self.values.len() - 1]
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn re(&self) -> Signal {
        self.map(|z| Complex64::new(z.re, 0.0))
    }

    pub fn im(&self) -> Signal {
        self.map(|z| Complex64::new(z.im, 0.0))
    }

    pub fn conj(&self) -> Signal {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Signal {
        Signal {
            grid: self.grid,
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Signal {
        self.map(|z| z * c)
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Signal) -> Result<Signal> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn zip_with(
        &self,
        other: &Signal,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Signal> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Signal {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `s(T − t)`.
    pub fn reversed(&self) -> Signal {
        let mut values = self.values.clone();
        values.reverse();
        Signal {
            grid: self.grid,
            values,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Trapezoidal `∫₀ᵀ s(t) dt`.
    pub fn integral(&self) -> Complex64 {
        let h = self.grid.step();
        let n = self.values.len();
        let inner: Complex64 = self.values[1..n - 1].iter().sum();
        (inner + 0.5 * (self.values[0] + self.values[n - 1])) * h
    }

    /// Trapezoidal `∫₀ᵀ a(t) b(t) dt` (no conjugation).
    pub fn dot(&self, other: &Signal) -> Result<Complex64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(weighted_dot(&self.grid, &self.values, &other.values))
    }

    /// Trapezoidal `∫₀ᵀ a(t) conj(b(t)) dt`.
    pub fn inner(&self, other: &Signal) -> Result<Complex64> {
        self.grid.ensure_same(&other.grid)?;
        let h = self.grid.step();
        let n = self.values.len();
        let mut acc = ZERO;
        for j in 0..n {
            let w = if j == 0 || j == n - 1 { 0.5 * h } else { h };
            acc += self.values[j] * other.values[j].conj() * w;
        }
        Ok(acc)
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self)
            .map(|z| z.re.max(0.0).sqrt())
            .unwrap_or(0.0)
    }

    /// Running trapezoidal integral `t ↦ ∫₀ᵗ s`.
    pub fn cumulative_integral(&self) -> Signal {
        let h = self.grid.step();
        let mut acc = ZERO;
        let mut values = Vec::with_capacity(self.values.len());
        values.push(ZERO);
        for pair in self.values.windows(2) {
            acc += 0.5 * h * (pair[0] + pair[1]);
            values.push(acc);
        }
        Signal {
            grid: self.grid,
            values,
        }
    }
}

fn weighted_dot(grid: &TimeGrid, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let h = grid.step();
    let n = a.len();
    let inner: Complex64 = (1..n - 1).map(|j| a[j] * b[j]).sum();
    (inner + 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1])) * h
}

/// Trapezoidal `(a ∗ b)(t_j)` for a single node `j`.
pub fn convolve_at(a: &[Complex64], b: &[Complex64], j: usize, h: f64) -> Complex64 {
    if j == 0 {
        return ZERO;
    }
    let mut acc = 0.5 * (a[0] * b[j] + a[j] * b[0]);
    for i in 1..j {
        acc += a[i] * b[j - i];
    }
    acc * h
}

/// Real-valued variant of [`convolve_at`].
pub fn convolve_at_real(a: &[f64], b: &[f64], j: usize, h: f64) -> f64 {
    if j == 0 {
        return 0.0;
    }
    let mut acc = 0.5 * (a[0] * b[j] + a[j] * b[0]);
    for i in 1..j {
        acc += a[i] * b[j - i];
    }
    acc * h
}

/// Below this length the direct sum beats the transform.
const FFT_MIN_LEN: usize = 128;

/// `Σ_{i ≤ j} a_i b_{j−i}` for every `j < a.len()`, by zero-padded FFT.
fn linear_convolution(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let n = a.len();
    let size = (2 * n).next_power_of_two();
    let mut planner = rustfft::FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let mut fa = a.to_vec();
    fa.resize(size, ZERO);
    let mut fb = b.to_vec();
    fb.resize(size, ZERO);
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inverse.process(&mut fa);
    let norm = 1.0 / size as f64;
    fa.truncate(n);
    fa.iter_mut().for_each(|x| *x *= norm);
    fa
}

pub fn convolve(a: &Signal, b: &Signal) -> Result<Signal> {
    a.grid.ensure_same(&b.grid)?;
    let h = a.grid.step();
    let values = if a.len() < FFT_MIN_LEN {
        (0..a.len())
            .map(|j| convolve_at(&a.values, &b.values, j, h))
            .collect()
    } else {
        let full = linear_convolution(&a.values, &b.values);
        let (a0, b0) = (a.values[0], b.values[0]);
        full.iter()
            .enumerate()
            .map(|(j, s)| {
                if j == 0 {
                    ZERO
                } else {
                    (s - 0.5 * (a0 * b.values[j] + a.values[j] * b0)) * h
                }
            })
            .collect()
    };
    Ok(Signal {
        grid: a.grid,
        values,
    })
}

/// `a^{(∗r)}`, with `a^{(∗1)} = a`.
pub fn conv_power(a: &Signal, r: usize) -> Result<Signal> {
    if r < 1 {
        return Err(Error::InvalidArgument(
            "convolution power must be >= 1".into(),
        ));
    }
    let mut acc = a.clone();
    for _ in 1..r {
        acc = convolve(a, &acc)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrigSignals {
    /// `sin λt`
    pub sin: Signal,
    /// `cos λt`
    pub cos: Signal,
    /// `e^{iλt}`
    pub exp: Signal,
}

/// Samples of `sin λt`, `cos λt` and `e^{iλt}`; hyperbolic when `λ` is imaginary.
pub fn trig_signals(mode: &Mode, grid: TimeGrid) -> TrigSignals {
    let i = Complex64::new(0.0, 1.0);
    let lambda = mode.lambda;
    TrigSignals {
        sin: Signal::from_fn(grid, |t| (lambda * t).sin()),
        cos: Signal::from_fn(grid, |t| (lambda * t).cos()),
        exp: Signal::from_fn(grid, |t| (i * lambda * t).exp()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    Zero,
    Constant {
        k0: f64,
    },
    /// `K(t) = k0 e^{−a t}`
    Exponential {
        k0: f64,
        a: f64,
    },
    /// Piecewise-linear interpolant of `(t, K(t))` samples.
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

/// The scalar memory kernel `K` with antiderivatives `K₁ = ∫₀ᵗ K` and `K₂ = ∫₀ᵗ K₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryKernel {
    family: KernelFamily,
    // Tabulated only: K₁ and K₂ at the sample times.
    k1_nodes: Vec<f64>,
    k2_nodes: Vec<f64>,
}

impl MemoryKernel {
    pub fn zero() -> Self {
        Self::analytic(KernelFamily::Zero)
    }

    pub fn constant(k0: f64) -> Self {
        Self::analytic(KernelFamily::Constant { k0 })
    }

    pub fn exponential(k0: f64, a: f64) -> Self {
        Self::analytic(KernelFamily::Exponential { k0, a })
    }

    fn analytic(family: KernelFamily) -> Self {
        Self {
            family,
            k1_nodes: Vec::new(),
            k2_nodes: Vec::new(),
        }
    }

    pub fn from_family(family: KernelFamily) -> Result<Self> {
        match family {
            KernelFamily::Tabulated { times, values } => Self::tabulated(times, values),
            KernelFamily::Constant { k0 } if !k0.is_finite() => {
                Err(Error::InvalidArgument("kernel k0 must be finite".into()))
            }
            KernelFamily::Exponential { k0, a } if !(k0.is_finite() && a.is_finite()) => Err(
                Error::InvalidArgument("kernel parameters must be finite".into()),
            ),
            other => Ok(Self::analytic(other)),
        }
    }

    /// Tabulated kernel; samples must start at `t = 0` with increasing times.
    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::InvalidArgument(
                "tabulated kernel needs at least two (t, K) pairs".into(),
            ));
        }
        if times[0].abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "tabulated kernel must start at t = 0, got {}",
                times[0]
            )));
        }
        if times
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::InvalidArgument(
                "tabulated kernel times must be strictly increasing".into(),
            ));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "tabulated kernel has non-finite samples".into(),
            ));
        }
        let mut k1_nodes = vec![0.0; times.len()];
        let mut k2_nodes = vec![0.0; times.len()];
        for i in 0..times.len() - 1 {
            let d = times[i + 1] - times[i];
            let slope = (values[i + 1] - values[i]) / d;
            k1_nodes[i + 1] = k1_nodes[i] + values[i] * d + slope * d * d / 2.0;
            k2_nodes[i + 1] =
                k2_nodes[i] + k1_nodes[i] * d + values[i] * d * d / 2.0 + slope * d * d * d / 6.0;
        }
        Ok(Self {
            family: KernelFamily::Tabulated { times, values },
            k1_nodes,
            k2_nodes,
        })
    }

    /// Two-column CSV `t,K`; a non-numeric first row is treated as a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "kernel CSV line {}: expected two columns",
                    line + 1
                )));
            }
            match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
                (Ok(t), Ok(k)) => {
                    times.push(t);
                    values.push(k);
                }
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "kernel CSV line {}: cannot parse numbers",
                        line + 1
                    )))
                }
            }
        }
        Self::tabulated(times, values)
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn is_zero(&self) -> bool {
        match &self.family {
            KernelFamily::Zero => true,
            KernelFamily::Constant { k0 } | KernelFamily::Exponential { k0, .. } => *k0 == 0.0,
            KernelFamily::Tabulated { values, .. } => values.iter().all(|&v| v == 0.0),
        }
    }

    /// Largest time at which the kernel is known; analytic families are global.
    pub fn support_end(&self) -> f64 {
        match &self.family {
            KernelFamily::Tabulated { times, .. } => *times.last().unwrap(),
            _ => f64::INFINITY,
        }
    }

    pub fn covers(&self, horizon: f64) -> bool {
        self.support_end() >= horizon * (1.0 - 1e-12)
    }

    fn segment(times: &[f64], t: f64) -> usize {
        match times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(times.len() - 2),
            Err(i) => i.saturating_sub(1).min(times.len() - 2),
        }
    }

    /// `K(t)`; tabulated kernels are held constant past the last sample.
    pub fn k(&self, t: f64) -> f64 {
        match &self.family {
            KernelFamily::Zero => 0.0,
            KernelFamily::Constant { k0 } => *k0,
            KernelFamily::Exponential { k0, a } => k0 * (-a * t).exp(),
            KernelFamily::Tabulated { times, values } => {
                let i = Self::segment(times, t);
                let s = (t - times[i]).min(times[i + 1] - times[i]);
                let slope = (values[i + 1] - values[i]) / (times[i + 1] - times[i]);
                if t > times[i + 1] {
                    values[i + 1]
                } else {
                    values[i] + slope * s
                }
            }
        }
    }

    pub fn k1(&self, t: f64) -> f64 {
        match &self.family {
            KernelFamily::Zero => 0.0,
            KernelFamily::Constant { k0 } => k0 * t,
            KernelFamily::Exponential { k0, a } => {
                if *a == 0.0 {
                    k0 * t
                } else {
                    -k0 * (-a * t).exp_m1() / a
                }
            }
            KernelFamily::Tabulated { times, values } => {
                let last = times.len() - 1;
                if t >= times[last] {
                    return self.k1_nodes[last] + values[last] * (t - times[last]);
                }
                let i = Self::segment(times, t);
                let s = t - times[i];
                let slope = (values[i + 1] - values[i]) / (times[i + 1] - times[i]);
                self.k1_nodes[i] + values[i] * s + slope * s * s / 2.0
            }
        }
    }

    pub fn k2(&self, t: f64) -> f64 {
        match &self.family {
            KernelFamily::Zero => 0.0,
            KernelFamily::Constant { k0 } => k0 * t * t / 2.0,
            KernelFamily::Exponential { k0, a } => {
                if *a == 0.0 {
                    k0 * t * t / 2.0
                } else {
                    // t/a − (1 − e^{−at})/a²
                    k0 * (t / a + (-a * t).exp_m1() / (a * a))
                }
            }
            KernelFamily::Tabulated { times, values } => {
                let last = times.len() - 1;
                if t >= times[last] {
                    let s = t - times[last];
                    return self.k2_nodes[last]
                        + self.k1_nodes[last] * s
                        + values[last] * s * s / 2.0;
                }
                let i = Self::segment(times, t);
                let s = t - times[i];
                let slope = (values[i + 1] - values[i]) / (times[i + 1] - times[i]);
                self.k2_nodes[i]
                    + self.k1_nodes[i] * s
                    + values[i] * s * s / 2.0
                    + slope * s * s * s / 6.0
            }
        }
    }

    pub fn sample(&self, grid: TimeGrid) -> Signal {
        Signal::from_real_fn(grid, |t| self.k(t))
    }

    pub fn sample_k1(&self, grid: TimeGrid) -> Signal {
        Signal::from_real_fn(grid, |t| self.k1(t))
    }

    pub fn sample_k2(&self, grid: TimeGrid) -> Signal {
        Signal::from_real_fn(grid, |t| self.k2(t))
    }

    pub fn sample_real(&self, grid: TimeGrid) -> Vec<f64> {
        grid.nodes().map(|t| self.k(t)).collect()
    }

    /// `sup_{[0,T]} |K|` over the grid nodes.
    pub fn sup_norm(&self, grid: TimeGrid) -> f64 {
        grid.nodes().map(|t| self.k(t).abs()).fold(0.0, f64::max)
    }

    pub fn describe(&self) -> String {
        match &self.family {
            KernelFamily::Zero => "K = 0".into(),
            KernelFamily::Constant { k0 } => format!("K = {k0}"),
            KernelFamily::Exponential { k0, a } => format!("K = {k0} exp(-{a} t)"),
            KernelFamily::Tabulated { times, .. } => {
                format!("K tabulated ({} samples)", times.len())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid(t: f64, m: usize) -> TimeGrid {
        TimeGrid::new(t, m).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(-1.0, 100).is_err());
        assert!(TimeGrid::new(1.0, 15).is_err());
        let g = grid(2.5, 40);
        assert_eq!(g.node(40), 2.5);
        assert_relative_eq!(g.step() * 40.0, 2.5, max_relative = 1e-15);
        let w: f64 = g.trapezoid_weights().iter().sum();
        assert_relative_eq!(w, 2.5, max_relative = 1e-14);
    }

    #[test]
    fn convolution_of_constants_is_exact() {
        let g = grid(1.0, 100);
        let one = Signal::from_real_fn(g, |_| 1.0);
        let c = convolve(&one, &one).unwrap();
        for (t, v) in g.nodes().zip(c.values()) {
            assert_relative_eq!(v.re, t, epsilon = 1e-14);
        }
        assert_eq!(c.first(), ZERO);
        let lin = Signal::from_real_fn(g, |t| t);
        assert_relative_eq!(
            convolve(&lin, &one).unwrap().last().re,
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn convolution_matches_closed_form() {
        let g = grid(1.0, 200);
        let a = Signal::from_real_fn(g, |t| (PI * t).sin());
        let b = Signal::from_real_fn(g, |t| (-t).exp());
        let exact = PI * (1.0 + (-1f64).exp()) / (1.0 + PI * PI);
        let c = convolve(&a, &b).unwrap();
        assert!((c.last().re - exact).abs() < 5e-5);
    }

    #[test]
    fn transform_path_agrees_with_direct_sum() {
        let g = grid(3.0, 777);
        let a = Signal::from_fn(g, |t| Complex64::new((3.0 * t).sin(), t * t));
        let b = Signal::from_fn(g, |t| Complex64::new((-t).exp(), (5.0 * t).cos()));
        let c = convolve(&a, &b).unwrap();
        for j in [0, 1, 2, 100, 776, 777] {
            let direct = convolve_at(a.values(), b.values(), j, g.step());
            assert!((c.values()[j] - direct).norm() < 1e-12, "node {j}");
        }
    }

    #[test]
    fn richardson_ratio_is_four() {
        let exact = PI * (1.0 + (-1f64).exp()) / (1.0 + PI * PI);
        let err = |m: usize| {
            let g = grid(1.0, m);
            let a = Signal::from_real_fn(g, |t| (PI * t).sin());
            let b = Signal::from_real_fn(g, |t| (-t).exp());
            (convolve(&a, &b).unwrap().last().re - exact).abs()
        };
        for m in [50, 100, 200] {
            let ratio = err(m) / err(2 * m);
            assert!((3.2..=4.8).contains(&ratio), "ratio {ratio} at m={m}");
        }
    }

    #[test]
    fn convolution_powers() {
        let g = grid(1.0, 400);
        let one = Signal::from_real_fn(g, |_| 1.0);
        let p2 = conv_power(&one, 2).unwrap();
        let p3 = conv_power(&one, 3).unwrap();
        for (j, t) in g.nodes().enumerate() {
            assert_relative_eq!(p2.values()[j].re, t, epsilon = 1e-13);
            assert!((p3.values()[j].re - t * t / 2.0).abs() < 1e-3);
        }
        let k = Signal::from_real_fn(g, |t| (-t).exp());
        let k2 = conv_power(&k, 2).unwrap();
        for (j, t) in g.nodes().enumerate() {
            assert!((k2.values()[j].re - t * (-t).exp()).abs() < 1e-4);
        }
        assert!(conv_power(&k, 0).is_err());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = Signal::zeros(grid(1.0, 100));
        let b = Signal::zeros(grid(1.0, 64));
        assert!(matches!(convolve(&a, &b), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn trig_samples() {
        let g = grid(1.0, 16);
        let mode = Mode::new(1, PI * PI, -PI).unwrap();
        let trig = trig_signals(&mode, g);
        let j = 8; // t = 0.5
        assert_relative_eq!(trig.sin.values()[j].re, 1.0, epsilon = 1e-14);
        assert!(trig.cos.values()[j].norm() < 1e-14);
        assert!((trig.exp.values()[j] - Complex64::new(0.0, 1.0)).norm() < 1e-14);

        let mode = Mode::new(2, 4.0 * PI * PI, -PI).unwrap();
        let trig = trig_signals(&mode, g);
        assert!((trig.exp.last() - Complex64::new(1.0, 0.0)).norm() < 1e-13);

        let mode = Mode::new(1, -1.0, 1.0).unwrap();
        let trig = trig_signals(&mode, g);
        assert_relative_eq!(trig.exp.last().re, (-1f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn antiderivatives_vanish_at_zero_and_differentiate() {
        let kernels = [
            MemoryKernel::constant(2.0),
            MemoryKernel::exponential(1.0, 1.0),
            MemoryKernel::exponential(0.5, 3.0),
            MemoryKernel::tabulated(vec![0.0, 0.5, 1.0, 2.0], vec![1.0, 0.2, -0.3, 0.8]).unwrap(),
        ];
        let h = 1e-4;
        for k in &kernels {
            assert_eq!(k.k1(0.0), 0.0);
            assert_eq!(k.k2(0.0), 0.0);
            for &t in &[0.3, 0.7, 1.3, 1.9] {
                let dk1 = (k.k1(t + h) - k.k1(t - h)) / (2.0 * h);
                let dk2 = (k.k2(t + h) - k.k2(t - h)) / (2.0 * h);
                assert!((dk1 - k.k(t)).abs() < 1e-6, "{}", k.describe());
                assert!((dk2 - k.k1(t)).abs() < 1e-6, "{}", k.describe());
            }
        }
    }

    #[test]
    fn exponential_antiderivatives_match_quadrature() {
        let k = MemoryKernel::exponential(1.0, 1.0);
        let g = grid(2.0, 400);
        let k1_num = k.sample(g).cumulative_integral();
        let k2_num = k1_num.cumulative_integral();
        let h2 = g.step() * g.step();
        for (j, t) in g.nodes().enumerate() {
            assert!((k1_num.values()[j].re - k.k1(t)).abs() < h2);
            assert!((k2_num.values()[j].re - k.k2(t)).abs() < 2.0 * h2);
        }
    }

    #[test]
    fn tabulated_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        let mut text = String::from("t,K\n");
        for j in 0..=50 {
            let t = j as f64 * 0.05;
            text.push_str(&format!("{t},{}\n", (-t).exp()));
        }
        std::fs::write(&path, text).unwrap();
        let k = MemoryKernel::from_csv(&path).unwrap();
        assert!(k.covers(2.5));
        assert!(!k.covers(3.0));
        assert!((k.k(1.0) - (-1f64).exp()).abs() < 1e-3);
        assert!((k.k1(2.0) - (1.0 - (-2f64).exp())).abs() < 1e-3);

        std::fs::write(&path, "0,1\n0.5,x\n").unwrap();
        assert!(MemoryKernel::from_csv(&path).is_err());
        assert!(MemoryKernel::tabulated(vec![0.1, 0.2], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn projections_helpers() {
        let g = grid(1.0, 64);
        let s = Signal::from_real_fn(g, |t| t);
        assert_relative_eq!(s.integral().re, 0.5, epsilon = 1e-15);
        let c = s.cumulative_integral();
        assert_relative_eq!(c.last().re, 0.5, epsilon = 1e-15);
        assert_eq!(s.reversed().first().re, 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn smooth(g: TimeGrid, c: [f64; 3]) -> Signal {
            Signal::from_real_fn(g, move |t| c[0] + c[1] * (c[2] * t).sin() + 0.3 * t * t)
        }

        proptest! {
            #[test]
            fn convolution_commutes_and_associates(
                a in prop::array::uniform3(-2.0f64..2.0),
                b in prop::array::uniform3(-2.0f64..2.0),
                c in prop::array::uniform3(-2.0f64..2.0),
            ) {
                let g = TimeGrid::new(1.0, 128).unwrap();
                let (sa, sb, sc) = (smooth(g, a), smooth(g, b), smooth(g, c));
                let ab = convolve(&sa, &sb).unwrap();
                let ba = convolve(&sb, &sa).unwrap();
                prop_assert!(ab.sub(&ba).unwrap().sup_norm() <= 1e-12);
                let left = convolve(&ab, &sc).unwrap();
                let right = convolve(&sa, &convolve(&sb, &sc).unwrap()).unwrap();
                let h2 = g.step() * g.step();
                prop_assert!(left.sub(&right).unwrap().sup_norm() <= 50.0 * h2);
            }
        }
    }
}
