//! Gaussian GARCH(1,1) predictive class.
//!
//! `y_t | F_{t-1} ~ N(theta1, sigma_t^2)` with
//! `sigma_t^2 = theta2 + theta3 (y_{t-1} - theta1)^2 + theta4 sigma_{t-1}^2`.
//! Transformed coordinates: `(theta1, log theta2, Phi^-1(theta3), Phi^-1(theta4))`.

use super::{check_dim, check_range, PredictiveModel};
use crate::error::{GvpError, Result};
use crate::predictive::ConditionalPredictive;
use crate::scoring::ResolvedRule;
use crate::series::Sample;
use crate::special::{mean_var, norm_cdf, norm_pdf, norm_quantile};
use std::ops::Range;

/// Raw (constrained) GARCH(1,1) parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParams {
    pub mean: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchParams {
    pub fn new(mean: f64, omega: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = GarchParams {
            mean,
            omega,
            alpha,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(GvpError::Domain(format!(
                "GARCH needs finite mean and positive intercept, got {self:?}"
            )));
        }
        // The box constraints are closed at the boundary in floating point:
        // Phi(theta) rounds to 0 or 1 for |theta| beyond ~8.
        for v in [self.alpha, self.beta] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GvpError::Domain(format!(
                    "GARCH coefficients must lie in (0,1), got {self:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_transformed(theta: &[f64]) -> Self {
        GarchParams {
            mean: theta[0],
            omega: theta[1].exp(),
            alpha: norm_cdf(theta[2]),
            beta: norm_cdf(theta[3]),
        }
    }

    pub fn to_transformed(&self) -> [f64; 4] {
        [
            self.mean,
            self.omega.ln(),
            norm_quantile(self.alpha),
            norm_quantile(self.beta),
        ]
    }
}

/// Conditional variances and their derivatives with respect to the raw
/// parameters `(mean, omega, alpha, beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GarchFilter {
    /// `var[i]` is `sigma_{i+1}^2`; the last entry is the one-step-ahead variance.
    pub var: Vec<f64>,
    pub dvar: Vec<[f64; 4]>,
}

/// Runs the variance recursion over `y = (y_0, ..., y_n)`, returning
/// `sigma_1^2 ..= sigma_{n+1}^2` and the derivative recursions, all seeded at
/// zero since `sigma_0^2` is a constant.
pub fn garch_filter(p: &GarchParams, sigma0_sq: f64, y: &[f64]) -> Result<GarchFilter> {
    check_filter_inputs(sigma0_sq, y)?;
    let mut var = Vec::with_capacity(y.len());
    let mut dvar = Vec::with_capacity(y.len());
    let mut prev = sigma0_sq;
    let mut dprev = [0.0; 4];
    for &yl in y {
        let e = yl - p.mean;
        let v = p.omega + p.alpha * e * e + p.beta * prev;
        let d = [
            -2.0 * p.alpha * e + p.beta * dprev[0],
            1.0 + p.beta * dprev[1],
            e * e + p.beta * dprev[2],
            p.beta * dprev[3] + prev,
        ];
        var.push(v);
        dvar.push(d);
        prev = v;
        dprev = d;
    }
    Ok(GarchFilter { var, dvar })
}

/// Variance recursion without derivatives.
pub fn garch_variances(p: &GarchParams, sigma0_sq: f64, y: &[f64]) -> Result<Vec<f64>> {
    check_filter_inputs(sigma0_sq, y)?;
    let mut prev = sigma0_sq;
    Ok(y.iter()
        .map(|&yl| {
            let e = yl - p.mean;
            prev = p.omega + p.alpha * e * e + p.beta * prev;
            prev
        })
        .collect())
}

fn check_filter_inputs(sigma0_sq: f64, y: &[f64]) -> Result<()> {
    if !(sigma0_sq > 0.0 && sigma0_sq.is_finite()) {
        return Err(GvpError::Domain(format!(
            "GARCH variance seed must be positive, got {sigma0_sq}"
        )));
    }
    if let Some(t) = y.iter().position(|v| !v.is_finite()) {
        return Err(GvpError::Input(format!("non-finite observation at index {t}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarchModel {
    /// Seed of the variance recursion, held fixed for the whole run.
    pub sigma0_sq: f64,
}

impl GarchModel {
    pub fn new(sigma0_sq: f64) -> Result<Self> {
        if !(sigma0_sq > 0.0 && sigma0_sq.is_finite()) {
            return Err(GvpError::Domain(format!(
                "GARCH variance seed must be positive, got {sigma0_sq}"
            )));
        }
        Ok(Self { sigma0_sq })
    }

    /// Seeds the recursion with the sample variance of the estimation window.
    pub fn from_window(window: &[f64]) -> Result<Self> {
        let (_, var) = mean_var(window);
        if !(var > 0.0) {
            return Err(GvpError::degenerate(
                None,
                "estimation window has zero variance",
            ));
        }
        Self::new(var)
    }

    fn params(&self, theta: &[f64]) -> Result<GarchParams> {
        check_dim(theta, 4, "garch")?;
        let p = GarchParams::from_transformed(theta);
        if !(p.omega > 0.0 && p.omega.is_finite()) {
            return Err(GvpError::Domain(format!(
                "GARCH intercept exp({}) is not a positive finite number",
                theta[1]
            )));
        }
        Ok(p)
    }
}

impl PredictiveModel for GarchModel {
    fn name(&self) -> String {
        "garch".into()
    }

    fn dim(&self) -> usize {
        4
    }

    fn param_names(&self) -> Vec<String> {
        ["theta1", "log_theta2", "probit_theta3", "probit_theta4"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        -0.5 * (theta[2] * theta[2] + theta[3] * theta[3])
    }

    fn grad_log_prior(&self, theta: &[f64]) -> Vec<f64> {
        vec![0.0, 0.0, -theta[2], -theta[3]]
    }

    fn initial_theta(&self, sample: &Sample) -> Vec<f64> {
        let (mean, var) = mean_var(sample.observations());
        let var = if var > 0.0 { var } else { 1.0 };
        GarchParams {
            mean,
            omega: 0.1 * var,
            alpha: 0.1,
            beta: 0.8,
        }
        .to_transformed()
        .to_vec()
    }

    fn predictives(
        &self,
        theta: &[f64],
        sample: &Sample,
        range: Range<usize>,
    ) -> Result<Vec<ConditionalPredictive>> {
        check_range(sample, &range)?;
        let p = self.params(theta)?;
        let var = garch_variances(&p, self.sigma0_sq, &sample.y[..range.end])?;
        Ok(var[range]
            .iter()
            .map(|&v| ConditionalPredictive::Gaussian { mean: p.mean, var: v })
            .collect())
    }

    fn criterion(&self, rule: &ResolvedRule, theta: &[f64], sample: &Sample) -> Result<f64> {
        sample.validate()?;
        let p = self.params(theta)?;
        let n = sample.n();
        let var = garch_variances(&p, self.sigma0_sq, &sample.y[..n])?;
        let mut total = 0.0;
        for (t, &v) in var.iter().enumerate() {
            total += rule
                .gaussian(p.mean, v, sample.y[t + 1])
                .map_err(|e| e.at_term(t))?
                .value;
        }
        Ok(total)
    }

    fn criterion_gradient(
        &self,
        rule: &ResolvedRule,
        theta: &[f64],
        sample: &Sample,
    ) -> Result<(f64, Vec<f64>)> {
        sample.validate()?;
        let p = self.params(theta)?;
        let n = sample.n();
        let filt = garch_filter(&p, self.sigma0_sq, &sample.y[..n])?;
        let mut total = 0.0;
        let mut g = [0.0; 4];
        for t in 0..n {
            let s = rule
                .gaussian(p.mean, filt.var[t], sample.y[t + 1])
                .map_err(|e| e.at_term(t))?;
            total += s.value;
            let d = &filt.dvar[t];
            g[0] += s.d_mean + s.d_var * d[0];
            g[1] += s.d_var * d[1];
            g[2] += s.d_var * d[2];
            g[3] += s.d_var * d[3];
        }
        let grad = vec![
            g[0],
            g[1] * p.omega,
            g[2] * norm_pdf(theta[2]),
            g[3] * norm_pdf(theta[3]),
        ];
        Ok((total, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_step_variance_example() {
        let p = GarchParams::new(0.0, 0.1, 0.1, 0.8).unwrap();
        let f = garch_filter(&p, 1.0, &[1.0]).unwrap();
        assert!((f.var[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_variance_when_dynamics_vanish() {
        let p = GarchParams {
            mean: 0.3,
            omega: 0.7,
            alpha: 0.0,
            beta: 0.0,
        };
        let f = garch_filter(&p, 2.0, &[1.0, -2.0, 5.0]).unwrap();
        for (v, d) in f.var.iter().zip(&f.dvar) {
            assert_eq!(*v, 0.7);
            assert_eq!(d[0], 0.0);
        }
    }

    #[test]
    fn transform_round_trip() {
        let p = GarchParams::new(-0.4, 0.05, 0.12, 0.83).unwrap();
        let back = GarchParams::from_transformed(&p.to_transformed());
        assert!((back.mean - p.mean).abs() < 1e-12);
        assert!((back.omega - p.omega).abs() < 1e-12);
        assert!((back.alpha - p.alpha).abs() < 1e-12);
        assert!((back.beta - p.beta).abs() < 1e-12);
    }

    #[test]
    fn predictive_mean_is_location_parameter() {
        let m = GarchModel::new(1.0).unwrap();
        let y = [0.5, 1.0, -1.0];
        let s = Sample::univariate(&y);
        for theta in [[0.2, -1.0, 0.3, 0.1], [0.2, 0.5, -1.0, 2.0]] {
            let preds = m.predictives(&theta, &s, 0..3).unwrap();
            for pr in preds {
                assert_eq!(pr.mean(), 0.2);
            }
        }
    }

    #[test]
    fn hand_unrolled_two_step_log_score() {
        let m = GarchModel::new(1.5).unwrap();
        let p = GarchParams::new(0.1, 0.2, 0.3, 0.4).unwrap();
        let theta = p.to_transformed();
        let y = [0.7, -0.2, 1.1];
        let s1 = 0.2 + 0.3 * (0.7f64 - 0.1).powi(2) + 0.4 * 1.5;
        let s2 = 0.2 + 0.3 * (-0.2f64 - 0.1).powi(2) + 0.4 * s1;
        let ls = |v: f64, x: f64| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - 0.1f64).powi(2) / (2.0 * v);
        let expected = ls(s1, -0.2) + ls(s2, 1.1);
        let got = m
            .criterion(&ResolvedRule::Ls, &theta, &Sample::univariate(&y))
            .unwrap();
        assert!((got - expected).abs() < 1e-12);
    }
}
