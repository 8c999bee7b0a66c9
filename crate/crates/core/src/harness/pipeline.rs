//! Interval forecasting pipeline: difference the series, fit a Gaussian
//! AR(1) mixture under the MSIS update, push variational draws through the
//! predictive, undo the differencing and read the interval off a kernel
//! density estimate of the level draws.

use super::differencing::{difference, undifference};
use super::kde::kde_predictive;
use crate::error::{GvpError, Result};
use crate::models::{MixtureModel, PredictiveModel};
use crate::rng::{derive_seed, label_id, rng_from_seed};
use crate::scoring::{interval_score, ScoringRuleSpec};
use crate::series::Sample;
use crate::special::{mean_var, sorted_quantile};
use crate::vb::{calibrate, sample_variational, VbConfig};
use serde::{Deserialize, Serialize};

/// Minimum length of the differenced fitting series.
pub const MIN_PIPELINE_OBS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Differencing order.
    pub d: usize,
    /// Nominal non-coverage of the central interval.
    pub alpha: f64,
    /// Mixture components.
    pub k: usize,
    /// Predictive draws.
    pub draws: usize,
    /// Hold back the final observation and score the interval on it.
    pub holdout: bool,
    pub seed: u64,
    pub vb: VbConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            d: 1,
            alpha: 0.05,
            k: 3,
            draws: 5000,
            holdout: false,
            seed: 0,
            vb: VbConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Holdout {
    pub y: f64,
    pub covered: bool,
    /// Negated interval score of the forecast interval.
    pub interval_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub lower: f64,
    pub upper: f64,
    /// Median of the level draws.
    pub median: f64,
    /// Observations used for fitting (levels).
    pub fitted_obs: usize,
    pub vb_skipped: usize,
    pub resampled_draws: usize,
    pub holdout: Option<Holdout>,
}

pub fn run_pipeline(levels: &[f64], config: &PipelineConfig) -> Result<PipelineResult> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(GvpError::Input(format!(
            "alpha must lie in (0,1), got {}",
            config.alpha
        )));
    }
    if config.draws < super::kde::MIN_KDE_SAMPLES {
        return Err(GvpError::Input(format!(
            "pipeline needs at least {} draws",
            super::kde::MIN_KDE_SAMPLES
        )));
    }
    if levels.iter().any(|v| !v.is_finite()) {
        return Err(GvpError::Input("series contains non-finite values".into()));
    }
    let (fit, target) = if config.holdout {
        match levels.split_last() {
            Some((last, rest)) => (rest, Some(*last)),
            None => (levels, None),
        }
    } else {
        (levels, None)
    };
    let z = difference(fit, config.d)?;
    // z[0] plays the role of the presample value.
    if z.len() < MIN_PIPELINE_OBS + 1 {
        return Err(GvpError::Input(format!(
            "{} observations after differencing, at least {} needed",
            z.len(),
            MIN_PIPELINE_OBS + 1
        )));
    }
    let (_, var) = mean_var(&z);
    if !(var > 0.0) {
        return Err(GvpError::degenerate(None, "differenced series has zero variance"));
    }

    let model = MixtureModel::new(config.k)?;
    let sample = Sample::univariate(&z);
    let n = sample.n();
    let rule = ScoringRuleSpec::msis(config.alpha)?.resolve(sample.observations())?;
    let vb = VbConfig {
        seed: derive_seed(config.seed, &[label_id("pipeline-vb")]),
        ..config.vb.clone()
    };
    let cal = calibrate(&model, &rule, &sample, &vb, None)?;

    let mut rng = rng_from_seed(derive_seed(config.seed, &[label_id("pipeline-draws")]));
    let limit = config.draws / 100;
    let mut z_draws = Vec::with_capacity(config.draws);
    let mut resampled = 0;
    while z_draws.len() < config.draws {
        let theta = sample_variational(&cal.lambda, 1, &mut rng).remove(0);
        match model.predictives(&theta, &sample, n..n + 1) {
            Ok(pred) => z_draws.push(pred[0].sample(&mut rng)),
            Err(e @ (GvpError::Degenerate { .. } | GvpError::Domain(_) | GvpError::Numerical(_))) => {
                resampled += 1;
                if resampled > limit {
                    return Err(GvpError::degenerate(
                        None,
                        format!("too many invalid variational draws ({resampled}): {e}"),
                    ));
                }
            }
            Err(e) => return Err(e),
        }
    }
    let y_draws = undifference(fit, config.d, &z_draws)?;
    let kde = kde_predictive(&y_draws)?;
    let lower = kde.quantile(config.alpha / 2.0)?;
    let upper = kde.quantile(1.0 - config.alpha / 2.0)?;
    if !(lower < upper) {
        return Err(GvpError::degenerate(None, "interval collapsed to a point"));
    }
    let mut sorted = y_draws;
    sorted.sort_by(f64::total_cmp);
    let median = sorted_quantile(&sorted, 0.5);
    let holdout = target.map(|y| Holdout {
        y,
        covered: lower <= y && y <= upper,
        interval_score: interval_score(lower, upper, y, config.alpha),
    });
    Ok(PipelineResult {
        lower,
        upper,
        median,
        fitted_obs: fit.len(),
        vb_skipped: cal.skipped,
        resampled_draws: resampled,
        holdout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_degenerate() {
        let config = PipelineConfig {
            d: 0,
            ..Default::default()
        };
        let err = run_pipeline(&[2.0; 200], &config).unwrap_err();
        assert!(err.is_degenerate());
    }

    #[test]
    fn short_series_rejected() {
        let y: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        assert!(matches!(
            run_pipeline(&y, &PipelineConfig::default()),
            Err(GvpError::Input(_))
        ));
    }
}
