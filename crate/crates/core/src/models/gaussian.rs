//! I.i.d. Gaussian observations with known variance and unknown mean.
//!
//! With the log score and unit weight the Gibbs posterior is the ordinary
//! conjugate posterior, which makes this model a closed-form check for both
//! posterior engines.

use super::{check_dim, check_range, PredictiveModel};
use crate::error::{GvpError, Result};
use crate::predictive::ConditionalPredictive;
use crate::scoring::ResolvedRule;
use crate::series::Sample;
use std::ops::Range;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeanModel {
    pub var: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
}

impl GaussianMeanModel {
    pub fn new(var: f64, prior_mean: f64, prior_var: f64) -> Result<Self> {
        if !(var > 0.0 && prior_var > 0.0) {
            return Err(GvpError::Domain(
                "observation and prior variances must be positive".into(),
            ));
        }
        Ok(Self {
            var,
            prior_mean,
            prior_var,
        })
    }

    /// Exact posterior mean and variance of the location given `y_1..y_n`.
    pub fn posterior(&self, observations: &[f64]) -> (f64, f64) {
        let n = observations.len() as f64;
        let precision = 1.0 / self.prior_var + n / self.var;
        let sum: f64 = observations.iter().sum();
        let mean = (self.prior_mean / self.prior_var + sum / self.var) / precision;
        (mean, 1.0 / precision)
    }
}

impl PredictiveModel for GaussianMeanModel {
    fn name(&self) -> String {
        "gaussian-mean".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        -0.5 * (theta[0] - self.prior_mean).powi(2) / self.prior_var
    }

    fn grad_log_prior(&self, theta: &[f64]) -> Vec<f64> {
        vec![-(theta[0] - self.prior_mean) / self.prior_var]
    }

    fn initial_theta(&self, sample: &Sample) -> Vec<f64> {
        let obs = sample.observations();
        vec![obs.iter().sum::<f64>() / obs.len().max(1) as f64]
    }

    fn predictives(
        &self,
        theta: &[f64],
        sample: &Sample,
        range: Range<usize>,
    ) -> Result<Vec<ConditionalPredictive>> {
        check_dim(theta, 1, "gaussian-mean")?;
        check_range(sample, &range)?;
        Ok(range
            .map(|_| ConditionalPredictive::Gaussian {
                mean: theta[0],
                var: self.var,
            })
            .collect())
    }

    fn criterion_gradient(
        &self,
        rule: &ResolvedRule,
        theta: &[f64],
        sample: &Sample,
    ) -> Result<(f64, Vec<f64>)> {
        check_dim(theta, 1, "gaussian-mean")?;
        sample.validate()?;
        let mut value = 0.0;
        let mut grad = 0.0;
        for (t, &y) in sample.observations().iter().enumerate() {
            let s = rule.gaussian(theta[0], self.var, y).map_err(|e| e.at_term(t))?;
            value += s.value;
            grad += s.d_mean;
        }
        Ok((value, vec![grad]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posterior_shrinks_toward_prior() {
        let m = GaussianMeanModel::new(1.0, 0.0, 1.0).unwrap();
        let (mean, var) = m.posterior(&[2.0]);
        assert!((mean - 1.0).abs() < 1e-15);
        assert!((var - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ls_gradient_is_sum_of_residuals() {
        let m = GaussianMeanModel::new(2.0, 0.0, 100.0).unwrap();
        let y = [0.0, 1.0, 3.0];
        let (_, g) = m
            .criterion_gradient(&ResolvedRule::Ls, &[0.5], &Sample::univariate(&y))
            .unwrap();
        assert!((g[0] - (0.5 + 2.5) / 2.0).abs() < 1e-15);
    }
}
