//! Boundary steering of the one-dimensional wave equation with persistent memory:
//!
//! ```text
//! w'' = w_xx + b w + ∫₀ᵗ K(t − s) w(s) ds,   x ∈ (0, 1),
//! w(0, t) = f(t),  w(1, t) = 0,  w(·, 0) = w'(·, 0) = 0.
//! ```
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: Dirichlet eigenstructure, boundary traces, Sobolev tail diagnostics.
//! * [`kernels`]: time grids, sampled signals, the memory kernel and trapezoidal convolution.
//! * [`volterra`]: the modal impulse responses ζₙ by two independent solvers.
//! * [`moment`]: moment kernels, projections, Gram matrices and the minimum-norm solve.
//! * [`synthesis`]: controls, forward simulators, steering and the regularity experiment.
//! * [`cli`]: JSON-configured experiments writing `results.json` and CSV tables.

pub mod cli;
pub mod error;
pub mod kernels;
pub mod moment;
pub mod spectral;
pub mod synthesis;
pub mod volterra;

pub use error::{Error, Result};
pub use num_complex::Complex64;
