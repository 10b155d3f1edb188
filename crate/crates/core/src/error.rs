use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A state, output or sensitivity entry became NaN or infinite.
    #[error("non-finite value at step {step}")]
    NonFiniteState { step: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("sequence length mismatch: inputs {inputs}, targets {targets}")]
    LengthMismatch { inputs: usize, targets: usize },

    #[error("unknown parameter block `{0}`")]
    UnknownBlock(String),

    #[error("sampling region is empty")]
    EmptyRegion,

    #[error("Newton iteration did not converge")]
    NoConvergence,

    #[error("Jacobian is singular")]
    SingularJacobian,

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("cost diverged")]
    DivergentCost,

    /// Training hit a non-finite state; nothing after this batch was applied.
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    TrainingDiverged { epoch: usize, batch: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed cell document: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors that signal numerical divergence rather than misuse.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteState { .. }
                | Error::NoConvergence
                | Error::SingularJacobian
                | Error::SingularMatrix
                | Error::DivergentCost
                | Error::TrainingDiverged { .. }
        )
    }
}
