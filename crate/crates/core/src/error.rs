use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("requested {requested} eigenpairs but the grid only has {available}")]
    TooManyModes { requested: usize, available: usize },

    #[error("quadrature did not converge on [{lo}, {hi}]")]
    QuadratureFailed { lo: f64, hi: f64 },

    #[error("resolvent bracket could not be established for r = {0}; b is not monotone above b0")]
    BracketFailed(f64),

    #[error("singular tridiagonal pivot at row {0}")]
    SingularPivot(usize),

    #[error("step {step} out of range for a path of {steps} steps")]
    StepOutOfRange { step: usize, steps: usize },

    #[error("noise mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("diffusion expression: {0}")]
    Expression(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
