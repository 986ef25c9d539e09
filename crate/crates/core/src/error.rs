use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A numerical routine failed or produced an inconsistent result.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A function was evaluated outside of its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two adiabatic levels are closer than the degeneracy threshold.
    #[error("degenerate spectrum: gap {gap:e} below threshold {threshold:e} at levels {lower}/{upper}")]
    Degenerate {
        gap: f64,
        threshold: f64,
        lower: usize,
        upper: usize,
    },

    /// The integrator step was too coarse to preserve an invariant.
    #[error("step-size error: {0}; reduce dt")]
    StepSize(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Numerical(_) => "numerical",
            Error::Domain(_) => "domain",
            Error::Degenerate { .. } => "degenerate",
            Error::StepSize(_) => "step_size",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
