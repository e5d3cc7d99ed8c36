use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants group into the process exit codes used by the binary:
/// usage/configuration problems (1), data problems (2), numerical
/// failures (3). See [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("non-finite value produced by {context}")]
    NonFinite { context: String },

    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: String },

    #[error(
        "training diverged at epoch {epoch}, subject {subject}: {detail} \
         ({} finite epoch losses recorded)", history.len()
    )]
    TrainingDiverged {
        epoch: usize,
        subject: String,
        detail: String,
        /// Mean loss of every epoch completed before the failure.
        history: Vec<f64>,
    },

    #[error("view {view} is degenerate: {detail}")]
    DegenerateView { view: usize, detail: String },

    #[error("invalid data in {path}: {detail}")]
    InvalidData { path: PathBuf, detail: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], got: &[usize]) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }

    /// Process exit code for the binary: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::EmptyInput(_) => 1,
            Error::ShapeMismatch { .. }
            | Error::DegenerateView { .. }
            | Error::InvalidData { .. }
            | Error::Io { .. } => 2,
            Error::NonFinite { .. }
            | Error::NonFiniteGradient { .. }
            | Error::TrainingDiverged { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
