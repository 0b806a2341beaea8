//! Eigenstructure of `A = d²/dx² + b` on `(0, 1)` with Dirichlet conditions.
//!
//! Eigenfunctions are `φₙ(x) = √2 sin(nπx)` with `−A φₙ = λₙ² φₙ`,
//! `λₙ² = n²π² − b`. The controlled boundary is the single endpoint `x = 0`,
//! so every boundary integral collapses to a point evaluation there; for this
//! geometry the critical control time is `T₀ = 2`.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|λ²|` below this is treated as a zero eigenvalue.
const DEGENERATE_TOL: f64 = 1e-10;

/// Chosen square root of `λ²`: real positive for `λ² > 0`, otherwise the
/// root with positive imaginary part. The same determination is used for
/// every fractional power in the crate.
pub fn principal_root(lambda_sq: f64) -> Complex64 {
    if lambda_sq >= 0.0 {
        Complex64::new(lambda_sq.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-lambda_sq).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// 1-based mode index.
    pub index: usize,
    pub lambda_sq: f64,
    pub lambda: Complex64,
    /// Normalised trace factor `Ψₙ = γ₁φₙ / λₙ`.
    pub psi: Complex64,
    /// Exterior normal derivative `γ₁φₙ` at the controlled endpoint.
    pub trace: f64,
}

impl Mode {
    pub fn new(index: usize, lambda_sq: f64, trace: f64) -> Result<Self> {
        if index == 0 {
            return Err(Error::InvalidArgument("mode index must be >= 1".into()));
        }
        if !lambda_sq.is_finite() || !trace.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mode {index}: non-finite eigen data"
            )));
        }
        if lambda_sq.abs() <= DEGENERATE_TOL {
            return Err(Error::DegenerateEigenvalue { index, lambda_sq });
        }
        let lambda = principal_root(lambda_sq);
        Ok(Self {
            index,
            lambda_sq,
            lambda,
            psi: Complex64::new(trace, 0.0) / lambda,
            trace,
        })
    }

    pub fn is_oscillatory(&self) -> bool {
        self.lambda_sq > 0.0
    }

    /// `|λₙ|^k`.
    pub fn lambda_pow(&self, k: u32) -> f64 {
        self.lambda.norm().powi(k as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    Interval,
    /// Growth-only stand-in for a `d`-dimensional domain; carries no eigenfunctions.
    Synthetic {
        dim: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalBasis {
    pub b: f64,
    pub modes: Vec<Mode>,
    pub domain: DomainTag,
}

impl ModalBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn max_abs_lambda(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.lambda.norm())
            .fold(0.0, f64::max)
    }

    /// First `n` modes as a new basis.
    pub fn truncate(&self, n: usize) -> ModalBasis {
        ModalBasis {
            b: self.b,
            modes: self.modes[..n.min(self.modes.len())].to_vec(),
            domain: self.domain,
        }
    }
}

/// Basis of the interval `(0, 1)`; `γ₁φₙ = −φₙ'(0) = −√2 nπ`.
pub fn build_interval_basis(b: f64, n_modes: usize) -> Result<ModalBasis> {
    if n_modes < 1 {
        return Err(Error::InvalidArgument("n_modes must be >= 1".into()));
    }
    if !b.is_finite() {
        return Err(Error::InvalidArgument("b must be finite".into()));
    }
    let modes = (1..=n_modes)
        .map(|n| {
            let npi = n as f64 * PI;
            Mode::new(n, npi * npi - b, -SQRT_2 * npi)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModalBasis {
        b,
        modes,
        domain: DomainTag::Interval,
    })
}

/// Synthetic spectrum `λₙ² = n^{2/d}` with user-supplied trace factors.
pub fn build_synthetic_basis(dim: u32, n_modes: usize, psi_profile: &[f64]) -> Result<ModalBasis> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidArgument(format!(
            "synthetic dimension must be 1, 2 or 3, got {dim}"
        )));
    }
    if n_modes < 1 {
        return Err(Error::InvalidArgument("n_modes must be >= 1".into()));
    }
    if psi_profile.len() != n_modes {
        return Err(Error::InvalidArgument(format!(
            "psi profile has {} entries, expected {n_modes}",
            psi_profile.len()
        )));
    }
    if let Some((i, p)) = psi_profile
        .iter()
        .enumerate()
        .find(|(_, p)| !(1e-3..=1e3).contains(&p.abs()))
    {
        return Err(Error::InvalidArgument(format!(
            "psi[{}] = {p} outside [1e-3, 1e3] in absolute value",
            i + 1
        )));
    }
    let exponent = 2.0 / f64::from(dim);
    let modes = psi_profile
        .iter()
        .enumerate()
        .map(|(i, &psi)| {
            let n = i + 1;
            let lambda_sq = (n as f64).powf(exponent);
            Mode::new(n, lambda_sq, psi * lambda_sq.sqrt())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModalBasis {
        b: 0.0,
        modes,
        domain: DomainTag::Synthetic { dim },
    })
}

/// Coefficients `⟨D g₀, φₙ⟩` of the lift of a constant datum `g₀` at `x = 0`.
///
/// The lift solves `u'' + b u = 0`, `u(0) = g₀`, `u(1) = 0`. Integrating by
/// parts against `φₙ` gives `⟨u, φₙ⟩ = g₀ √2 nπ / (n²π² − b)` for every `b`
/// that is not resonant; for `b = 0` this is `g₀ √2 / (nπ)`, i.e. `Dg₀ = (1 − x) g₀`.
pub fn dirichlet_lift_coeffs(basis: &ModalBasis, boundary_value: f64) -> Result<Vec<f64>> {
    if basis.domain != DomainTag::Interval {
        return Err(Error::InvalidArgument(
            "Dirichlet lift is only defined for the interval basis".into(),
        ));
    }
    if let Some(m) = resonant_index(basis.b) {
        return Err(Error::NoSolution { b: basis.b, m });
    }
    Ok(basis
        .modes
        .iter()
        .map(|mode| {
            let npi = mode.index as f64 * PI;
            boundary_value * SQRT_2 * npi / (npi * npi - basis.b)
        })
        .collect())
}

fn resonant_index(b: f64) -> Option<usize> {
    if b <= 0.0 {
        return None;
    }
    let m = (b.sqrt() / PI).round();
    if m < 1.0 {
        return None;
    }
    let target = (m * PI).powi(2);
    ((b - target).abs() <= DEGENERATE_TOL * target.max(1.0)).then_some(m as usize)
}

/// Spectral coefficients of `(w(t), w'(t))` at a fixed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffState {
    pub position: Vec<Complex64>,
    pub velocity: Vec<Complex64>,
}

impl CoeffState {
    pub fn new(position: Vec<Complex64>, velocity: Vec<Complex64>) -> Result<Self> {
        if position.len() != velocity.len() {
            return Err(Error::InvalidArgument(format!(
                "position has {} coefficients, velocity {}",
                position.len(),
                velocity.len()
            )));
        }
        if position
            .iter()
            .chain(velocity.iter())
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        Ok(Self { position, velocity })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            position: vec![Complex64::new(0.0, 0.0); len],
            velocity: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn from_real(position: &[f64], velocity: &[f64]) -> Result<Self> {
        Self::new(
            position.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            velocity.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTail {
    pub k: u32,
    /// `|λₙ|^k |wₙ|`.
    pub entries: Vec<f64>,
    /// `S(N) = Σ_{n ≤ N} |λₙ|^{2k} |wₙ|²`.
    pub partial_sums: Vec<f64>,
}

/// Weighted position coefficients for `dom 𝒜^k` diagnostics.
pub fn weighted_tail(state: &CoeffState, basis: &ModalBasis, k: u32) -> Result<WeightedTail> {
    weighted_sequence(&state.position, basis, k)
}

/// Same as [`weighted_tail`] for an arbitrary coefficient sequence.
pub fn weighted_sequence(coeffs: &[Complex64], basis: &ModalBasis, k: u32) -> Result<WeightedTail> {
    if coeffs.len() > basis.len() {
        return Err(Error::InvalidArgument(format!(
            "{} coefficients but only {} modes",
            coeffs.len(),
            basis.len()
        )));
    }
    let entries: Vec<f64> = coeffs
        .iter()
        .zip(&basis.modes)
        .map(|(w, mode)| mode.lambda_pow(k) * w.norm())
        .collect();
    let partial_sums = entries
        .iter()
        .scan(0.0, |acc, e| {
            *acc += e * e;
            Some(*acc)
        })
        .collect();
    Ok(WeightedTail {
        k,
        entries,
        partial_sums,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailVerdict {
    Summable,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub verdict: TailVerdict,
}

pub const SUMMABLE_SLOPE: f64 = 0.05;
pub const DIVERGENT_SLOPE: f64 = 0.5;

/// Least-squares slope of `log S(N)` against `log N` over `N ∈ [L/2, L]`,
/// where `partial_sums[N − 1] = S(N)`.
pub fn fit_decay_exponent(partial_sums: &[f64]) -> Result<DecayFit> {
    if partial_sums.len() < 8 {
        return Err(Error::InvalidArgument(format!(
            "need at least 8 partial sums, got {}",
            partial_sums.len()
        )));
    }
    if let Some((i, s)) = partial_sums
        .iter()
        .enumerate()
        .find(|(_, s)| !(s.is_finite() && **s > 0.0))
    {
        return Err(Error::InvalidArgument(format!(
            "partial sum S({}) = {s} is not positive",
            i + 1
        )));
    }
    let len = partial_sums.len();
    let first = len / 2;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (first..=len)
        .map(|n| ((n as f64).ln(), partial_sums[n - 1].ln()))
        .unzip();
    let count = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / count;
    let mean_y = ys.iter().sum::<f64>() / count;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mean_x) * (y - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    let slope = sxy / sxx;
    let verdict = if slope <= SUMMABLE_SLOPE {
        TailVerdict::Summable
    } else if slope >= DIVERGENT_SLOPE {
        TailVerdict::Divergent
    } else {
        TailVerdict::Inconclusive
    };
    Ok(DecayFit { slope, verdict })
}
