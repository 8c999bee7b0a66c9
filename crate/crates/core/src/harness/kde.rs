//! Gaussian kernel density estimate of a predictive from draws.

use crate::error::{GvpError, Result};
use crate::predictive::{ConditionalPredictive, GaussianMixture};
use crate::special::{mean_var, sorted_quantile};

pub const MIN_KDE_SAMPLES: usize = 30;

/// Silverman's rule `0.9 min(sd, IQR/1.34) M^(-1/5)`, falling back to the
/// standard deviation when the interquartile range is zero.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(GvpError::Input("bandwidth needs at least two samples".into()));
    }
    let (_, var) = mean_var(samples);
    let sd = var.sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(GvpError::degenerate(None, "samples have zero variance"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Equal-weight Gaussian kernels centred on the draws.
pub fn kde_predictive(samples: &[f64]) -> Result<ConditionalPredictive> {
    if samples.len() < MIN_KDE_SAMPLES {
        return Err(GvpError::Input(format!(
            "kernel density needs at least {MIN_KDE_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(GvpError::Input("kernel density samples must be finite".into()));
    }
    let h = silverman_bandwidth(samples)?;
    let mix = GaussianMixture::equal_weights(samples.to_vec(), vec![h * h; samples.len()])?;
    Ok(ConditionalPredictive::Mixture(mix))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_value_is_degenerate() {
        let err = kde_predictive(&[1.5; 50]).unwrap_err();
        assert!(err.is_degenerate());
    }

    #[test]
    fn too_few_samples() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(kde_predictive(&xs).is_err());
    }
}
