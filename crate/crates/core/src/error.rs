use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A threshold sits exactly on the mean where no bound branch applies.
    #[error("degenerate threshold: {0}")]
    DegenerateThreshold(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("singular Fisher information at theta = {0}")]
    SingularFisher(f64),

    #[error("random distribution generation failed after {0} attempts")]
    Generation(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("threshold state is not initialized")]
    NotInitialized,

    #[error("malformed IDX data: {0}")]
    Format(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged { epoch: usize, batch: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad caller input rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Diverged { .. } | Error::Generation(_))
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
