//! Predictive model classes.
//!
//! Every model works in transformed coordinates where each parameter lives
//! on the real line. A model instance carries any constants frozen from the
//! initial estimation window (GARCH variance seed, network input scaling).

pub mod bnn;
pub mod garch;
pub mod gaussian;
pub mod mixture;

use crate::error::{GvpError, Result};
use crate::predictive::ConditionalPredictive;
use crate::scoring::ResolvedRule;
use crate::series::{Sample, Series};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Range;

pub use bnn::{Activation, BnnModel};
pub use garch::GarchModel;
pub use gaussian::GaussianMeanModel;
pub use mixture::MixtureModel;

pub trait PredictiveModel: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    /// Dimension of the transformed parameter vector.
    fn dim(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    fn supports(&self, _rule: &ResolvedRule) -> bool {
        true
    }

    /// Log prior density in transformed coordinates, up to a constant.
    fn log_prior(&self, theta: &[f64]) -> f64;

    fn grad_log_prior(&self, theta: &[f64]) -> Vec<f64>;

    /// Moment-based starting point in transformed coordinates.
    fn initial_theta(&self, sample: &Sample) -> Vec<f64>;

    /// Predictives for `y_{t+1}` given information up to `t`, one per `t`
    /// in `range`. Requires `range.end <= sample.y.len()`.
    fn predictives(
        &self,
        theta: &[f64],
        sample: &Sample,
        range: Range<usize>,
    ) -> Result<Vec<ConditionalPredictive>>;

    /// Sample criterion `S_n`. Models override this when a cheaper
    /// evaluation than building every predictive exists.
    fn criterion(&self, rule: &ResolvedRule, theta: &[f64], sample: &Sample) -> Result<f64> {
        sample_criterion(self, rule, theta, sample)
    }

    /// `S_n` and its analytic gradient in transformed coordinates.
    fn criterion_gradient(
        &self,
        rule: &ResolvedRule,
        theta: &[f64],
        sample: &Sample,
    ) -> Result<(f64, Vec<f64>)>;
}

/// `S_n(theta) = sum_{t=0}^{n-1} s(P^{(t)}, y_{t+1})`, built term by term from
/// the model's predictives. Degenerate terms are reported with their index.
pub fn sample_criterion<M: PredictiveModel + ?Sized>(
    model: &M,
    rule: &ResolvedRule,
    theta: &[f64],
    sample: &Sample,
) -> Result<f64> {
    sample.validate()?;
    let n = sample.n();
    let preds = model.predictives(theta, sample, 0..n)?;
    let mut total = 0.0;
    for (t, pred) in preds.iter().enumerate() {
        total += rule.score(pred, sample.y[t + 1]).map_err(|e| e.at_term(t))?;
    }
    Ok(total)
}

pub(crate) fn check_dim(theta: &[f64], dim: usize, model: &str) -> Result<()> {
    if theta.len() != dim {
        return Err(GvpError::Input(format!(
            "{model} expects {dim} parameters, got {}",
            theta.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(GvpError::Domain(format!("{model} parameters must be finite")));
    }
    Ok(())
}

pub(crate) fn check_range(sample: &Sample, range: &Range<usize>) -> Result<()> {
    if range.end > sample.y.len() {
        return Err(GvpError::Input(format!(
            "predictive range ends at {} but only {} values are available",
            range.end,
            sample.y.len()
        )));
    }
    Ok(())
}

/// Which model class to build for an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase")]
pub enum ModelSpec {
    Garch,
    Mixture {
        k: usize,
    },
    Bnn {
        /// Covariate column names fed to the network next to `y_{t-1}`.
        inputs: Vec<String>,
        #[serde(default)]
        activation: Activation,
    },
}

impl ModelSpec {
    /// Builds a model, freezing data-dependent constants from the first
    /// `n0` observations of `series`.
    pub fn build(&self, series: &Series, n0: usize) -> Result<Box<dyn PredictiveModel>> {
        if n0 < 2 || n0 > series.n() {
            return Err(GvpError::Input(format!(
                "initial window {n0} must lie in [2, {}]",
                series.n()
            )));
        }
        let window = &series.y[1..=n0];
        Ok(match self {
            ModelSpec::Garch => Box::new(GarchModel::from_window(window)?),
            ModelSpec::Mixture { k } => Box::new(MixtureModel::new(*k)?),
            ModelSpec::Bnn { inputs, activation } => {
                let columns = inputs
                    .iter()
                    .map(|name| series.covariate_index(name))
                    .collect::<Result<Vec<_>>>()?;
                Box::new(BnnModel::from_window(
                    &series.sample(),
                    n0,
                    columns,
                    *activation,
                )?)
            }
        })
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::Garch => "garch".into(),
            ModelSpec::Mixture { k } => format!("mixture(K={k})"),
            ModelSpec::Bnn { inputs, .. } => {
                let mut parts = vec!["y_lag".to_string()];
                parts.extend(inputs.iter().cloned());
                format!("bnn({})", parts.join(","))
            }
        }
    }

    /// Whether closed-form CRPS is available for the class.
    pub fn supports_crps(&self) -> bool {
        !matches!(self, ModelSpec::Mixture { .. })
    }
}
