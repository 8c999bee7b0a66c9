//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GvpError>;

#[derive(Debug, Error)]
pub enum GvpError {
    /// A parameter lies outside the domain of the function being evaluated
    /// (non-positive variance, stick fraction on the boundary, zero scale, ...).
    #[error("parameter domain error: {0}")]
    Domain(String),

    /// A score evaluated to -inf (zero density or zero censored mass).
    /// `index` is the zero-based term index `t` inside a sample criterion.
    #[error("degenerate score{}: {reason}", index.map(|t| format!(" at term {t}")).unwrap_or_default())]
    Degenerate { index: Option<usize>, reason: String },

    /// Root finding or quadrature did not reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed or inconsistent user input.
    #[error("invalid input: {0}")]
    Input(String),

    /// Too many stochastic-gradient iterations were skipped.
    #[error("calibration failed: {skipped} of {iterations} iterations skipped")]
    CalibrationFailed {
        skipped: usize,
        iterations: usize,
        elbo_trace: Vec<f64>,
    },

    /// Sampler diagnostics outside the acceptable range.
    #[error("sampler diagnostics: {0}")]
    Diagnostics(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GvpError {
    pub fn degenerate(index: Option<usize>, reason: impl Into<String>) -> Self {
        GvpError::Degenerate {
            index,
            reason: reason.into(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, GvpError::Degenerate { .. })
    }

    /// Attach a term index to a degenerate-score error raised by a single-term evaluation.
    pub fn at_term(self, t: usize) -> Self {
        match self {
            GvpError::Degenerate { reason, .. } => GvpError::Degenerate {
                index: Some(t),
                reason,
            },
            other => other,
        }
    }
}
