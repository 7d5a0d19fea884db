use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid bandwidth schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("tree address capacity exceeded at generation {generation}")]
    Capacity { generation: u32 },

    #[error("incomplete simulation: needed generations 0..={needed}, stream ended after {got} generation(s)")]
    IncompleteStream { needed: u32, got: usize },

    #[error("non-finite quadrature result ({0}); integrand grows too fast")]
    IntegrandGrowth(String),

    #[error("generation {n} exceeds the second-moment cap of {cap}")]
    MomentCap { n: u32, cap: u32 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("degenerate sample: all {count} values equal {value}")]
    DegenerateSample { value: f64, count: usize },

    #[error("mismatched lengths: {0}")]
    Mismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
