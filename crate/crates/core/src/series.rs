//! Observed data.
//!
//! Index convention: `y[0]` is a presample value that is conditioned on but
//! never scored, and `y[1..=n]` are the observations `y_1, ..., y_n`. The
//! predictive for `y_{t+1}` uses `y[0..=t]` and the covariates at index
//! `t + 1`, so covariate columns may extend one step beyond `y`.

use crate::error::{GvpError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub y: Vec<f64>,
    pub covariate_names: Vec<String>,
    /// One column per covariate, aligned with `y`.
    pub covariates: Vec<Vec<f64>>,
}

impl Series {
    pub fn univariate(y: Vec<f64>) -> Self {
        Series {
            y,
            covariate_names: Vec::new(),
            covariates: Vec::new(),
        }
    }

    pub fn with_covariates(y: Vec<f64>, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(GvpError::Input(format!(
                "{} covariate names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if let Some((name, col)) = names.iter().zip(&columns).find(|(_, c)| c.len() != y.len()) {
            return Err(GvpError::Input(format!(
                "covariate '{name}' has {} rows, series has {}",
                col.len(),
                y.len()
            )));
        }
        Ok(Series {
            y,
            covariate_names: names,
            covariates: columns,
        })
    }

    /// Number of scored observations (excludes the presample value).
    pub fn n(&self) -> usize {
        self.y.len().saturating_sub(1)
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| {
                GvpError::Input(format!(
                    "covariate '{name}' not found; available: {:?}",
                    self.covariate_names
                ))
            })
    }

    pub fn sample(&self) -> Sample<'_> {
        Sample {
            y: &self.y,
            covariates: &self.covariates,
        }
    }
}

/// Borrowed view of a series prefix.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub y: &'a [f64],
    pub covariates: &'a [Vec<f64>],
}

impl<'a> Sample<'a> {
    pub fn univariate(y: &'a [f64]) -> Self {
        Sample { y, covariates: &[] }
    }

    /// Number of scored observations.
    pub fn n(&self) -> usize {
        self.y.len().saturating_sub(1)
    }

    /// The first `n` observations (plus the presample value). Covariates are
    /// left untouched so a predictive one step past the prefix stays available.
    pub fn truncated(&self, n: usize) -> Sample<'a> {
        Sample {
            y: &self.y[..=n.min(self.n())],
            covariates: self.covariates,
        }
    }

    /// Observations `y_1..y_n` without the presample value.
    pub fn observations(&self) -> &'a [f64] {
        &self.y[1..]
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.len() < 2 {
            return Err(GvpError::Input(
                "sample needs a presample value and at least one observation".into(),
            ));
        }
        if let Some(t) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(GvpError::Input(format!("non-finite observation at index {t}")));
        }
        Ok(())
    }
}
