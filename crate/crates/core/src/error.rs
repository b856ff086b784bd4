use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Model or config text that does not follow the documented grammar.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Offspring laws or rates that are not a well-formed model.
    #[error("malformed model: {0}")]
    Structural(String),

    /// Argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("numerical error: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },

    /// A time-stepping scheme produced NaN or left the admissible range.
    #[error("stability error: {message} (dt = {dt}, dx = {dx})")]
    Stability { message: String, dt: f64, dx: f64 },

    /// The PDE front reached the right edge of the grid.
    #[error("domain too small: {0}")]
    DomainTooSmall(String),

    #[error("population cap {cap} exceeded at t = {t} (lambda* = {lambda_star})")]
    PopulationCap { cap: usize, t: f64, lambda_star: f64 },

    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient samples: accepted {accepted}, need {required}")]
    InsufficientSamples { accepted: usize, required: usize },

    /// The model fails an assumption required by the operation.
    #[error("model rejected: {0}")]
    Rejected(String),

    #[error("unknown {kind} '{name}'; valid: {valid}")]
    Unknown {
        kind: &'static str,
        name: String,
        valid: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by running out of a configured resource.
    pub fn is_resource(&self) -> bool {
        match self {
            Error::PopulationCap { .. } => true,
            Error::Replicate { source, .. } => source.is_resource(),
            _ => false,
        }
    }
}
