use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    SvdNonConvergence { rows: usize, cols: usize },

    #[error("hamiltonian is not hermitian: ||H - H^dagger|| = {norm:e}")]
    NonHermitian { norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("steady state is not unique: kernel dimension {dim}")]
    KernelDimension { dim: usize },

    #[error("steady state has a negative eigenvalue {value:e}")]
    NonPositive { value: f64 },

    #[error("imaginary residue {value:e} in {quantity}")]
    ImaginaryResidue { quantity: &'static str, value: f64 },

    #[error("unknown jump label {0}")]
    UnknownLabel(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("parameter {param:?} of clockwork {clockwork} (memory {memory}) is outside its parameter space")]
    OutOfRange {
        clockwork: usize,
        memory: usize,
        param: Vec<f64>,
    },

    #[error("not a classical system: {0}")]
    NotClassical(String),

    #[error("state {state} has zero escape rate")]
    ZeroEscapeRate { state: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("norm collapsed to {norm:e} without resolving a jump")]
    NormCollapse { norm: f64 },

    #[error("simulation reached absorbing state {state}")]
    Absorbing { state: usize },

    #[error("objective failed: {0}")]
    Objective(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Configuration-type failures as opposed to numerical ones.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::UnknownLabel(_)
                | Error::InvalidPolicy(_)
                | Error::OutOfRange { .. }
                | Error::NonHermitian { .. }
                | Error::InvalidMatrix(_)
                | Error::InvalidParameter(_)
                | Error::DimensionMismatch(_)
        )
    }
}
