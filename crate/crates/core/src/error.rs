use thiserror::Error;

/// Errors raised by the modal, moment and synthesis layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate eigenvalue: lambda_{index}^2 = {lambda_sq:e} is zero")]
    DegenerateEigenvalue { index: usize, lambda_sq: f64 },

    #[error("Dirichlet lift has no solution: b = {b} is resonant with m = {m}")]
    NoSolution { b: f64, m: usize },

    #[error("signals live on different time grids ({left} vs {right})")]
    GridMismatch { left: String, right: String },

    #[error("mode {index} under-resolved: h*|lambda| = {h_lambda:.4} > 0.5")]
    UnderResolved { index: usize, h_lambda: f64 },

    #[error("Picard iteration did not reach tol {tol:e} in {max_iter} iterations (last step {last_step:e})")]
    NoConvergence {
        max_iter: usize,
        tol: f64,
        last_step: f64,
    },

    #[error(
        "mode {index} has imaginary lambda (lambda^2 = {lambda_sq}); expansion needs real lambda"
    )]
    ImaginaryLambda { index: usize, lambda_sq: f64 },

    #[error("zeta table missing for mode {index}")]
    MissingMode { index: usize },

    #[error("target class {target} does not match kernel order {order}")]
    ClassMismatch { target: String, order: u8 },

    #[error("Gram matrix ill-conditioned: condition estimate {condition:e} exceeds 1e12")]
    IllConditioned { condition: f64 },

    #[error("generator violates {functional}: value {value:e} exceeds {tolerance:e}")]
    ConstraintViolated {
        functional: String,
        value: f64,
        tolerance: f64,
    },

    #[error(
        "obstruction functional vanishes (|Obs| = {value:e}); regularity experiment inconclusive"
    )]
    ObstructionVanishes { value: f64 },

    #[error("reach failed: relative error {relative_error:e} > {threshold:e}")]
    ReachFailed {
        relative_error: f64,
        threshold: f64,
        report: Box<crate::synthesis::ReachReport>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
