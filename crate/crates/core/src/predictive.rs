//! One-step-ahead predictive distributions.
//!
//! Every predictive used by the crate is a (possibly degenerate) finite
//! mixture of Gaussians: a single Gaussian, a weighted mixture, or an
//! equal-weight ensemble of other predictives. All three expose density,
//! distribution and quantile functions.

use crate::error::{GvpError, Result};
use crate::special::{log_sum_exp, norm_cdf, norm_ln_pdf, norm_pdf, norm_quantile, norm_sf};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Tolerance on |cdf(q) - level| achieved by [`GaussianMixture::quantile`].
pub const QUANTILE_TOL: f64 = 1e-12;
const MAX_BRACKET_DOUBLINGS: usize = 200;
const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConditionalPredictive {
    Gaussian { mean: f64, var: f64 },
    Mixture(GaussianMixture),
    Ensemble(Vec<ConditionalPredictive>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl GaussianMixture {
    /// Builds a mixture from weights on the simplex, component means and variances.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || vars.len() != k {
            return Err(GvpError::Input(format!(
                "mixture needs matching non-empty weights/means/vars, got {}/{}/{}",
                k,
                means.len(),
                vars.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(GvpError::Domain("mixture weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(GvpError::Domain(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        if vars.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(GvpError::Domain("mixture variances must be positive".into()));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(GvpError::Domain("mixture means must be finite".into()));
        }
        Ok(Self {
            weights,
            means,
            sds: vars.into_iter().map(f64::sqrt).collect(),
        })
    }

    /// Builds a mixture from unnormalized log weights, normalizing with log-sum-exp.
    pub fn from_log_weights(log_weights: &[f64], means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        let lse = log_sum_exp(log_weights);
        if !lse.is_finite() {
            return Err(GvpError::Numerical(
                "all mixture weights vanish analytically".into(),
            ));
        }
        let mut weights: Vec<f64> = log_weights.iter().map(|lw| (lw - lse).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(weights, means, vars)
    }

    pub fn equal_weights(means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        let k = means.len();
        Self::new(vec![1.0 / k as f64; k], means, vars)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.iter()
            .map(|(w, m, s)| w * norm_pdf((x - m) / s) / s)
            .sum()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .iter()
            .map(|(w, m, s)| w.ln() + norm_ln_pdf((x - m) / s) - s.ln())
            .collect();
        log_sum_exp(&terms)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.iter().map(|(w, m, s)| w * norm_cdf((x - m) / s)).sum()
    }

    pub fn sf(&self, x: f64) -> f64 {
        self.iter().map(|(w, m, s)| w * norm_sf((x - m) / s)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(w, m, _)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.iter()
            .map(|(w, m, s)| w * (s * s + (m - mean).powi(2)))
            .sum()
    }

    /// One draw: a component picked by weight, then a Gaussian variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        self.means[pick] + self.sds[pick] * z
    }

    fn iter(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, m), s)| (*w, *m, *s))
    }

    /// Quantile by a safeguarded Newton iteration inside an expanding bracket.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(GvpError::Domain(format!(
                "quantile level must lie in (0,1), got {level}"
            )));
        }
        if self.len() == 1 {
            return Ok(self.means[0] + self.sds[0] * norm_quantile(level));
        }
        // Signed gap, increasing in x; the upper half is measured on the
        // survival function to keep precision near level = 1.
        let gap = |x: f64| {
            if level <= 0.5 {
                self.cdf(x) - level
            } else {
                (1.0 - level) - self.sf(x)
            }
        };
        let centre = self.mean();
        let spread = self.variance().sqrt().max(f64::MIN_POSITIVE);
        let z = norm_quantile(level);
        let mut x = centre + spread * z;

        let mut lo = x - spread;
        let mut hi = x + spread;
        let mut step = spread;
        let mut doublings = 0;
        while gap(lo) > 0.0 {
            step *= 2.0;
            lo -= step;
            doublings += 1;
            if doublings > MAX_BRACKET_DOUBLINGS {
                return Err(GvpError::Numerical(format!(
                    "quantile bracket expansion failed for level {level}"
                )));
            }
        }
        step = spread;
        while gap(hi) < 0.0 {
            step *= 2.0;
            hi += step;
            doublings += 1;
            if doublings > MAX_BRACKET_DOUBLINGS {
                return Err(GvpError::Numerical(format!(
                    "quantile bracket expansion failed for level {level}"
                )));
            }
        }
        if !(lo..=hi).contains(&x) {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let g = gap(x);
            if g.abs() <= QUANTILE_TOL {
                return Ok(x);
            }
            if g < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let density = self.pdf(x);
            let newton = x - g / density;
            x = if density > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                return Ok(x);
            }
        }
        let residual = gap(x);
        Err(GvpError::Numerical(format!(
            "quantile iteration for level {level} stalled at x={x} with residual {residual:e}; \
             bracket [{lo}, {hi}]"
        )))
    }
}

impl ConditionalPredictive {
    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        if !(var.is_finite() && var > 0.0) {
            return Err(GvpError::Domain(format!(
                "Gaussian predictive variance must be positive, got {var}"
            )));
        }
        if !mean.is_finite() {
            return Err(GvpError::Domain("Gaussian predictive mean must be finite".into()));
        }
        Ok(ConditionalPredictive::Gaussian { mean, var })
    }

    pub fn ensemble(members: Vec<ConditionalPredictive>) -> Result<Self> {
        if members.is_empty() {
            return Err(GvpError::Input("ensemble needs at least one member".into()));
        }
        Ok(ConditionalPredictive::Ensemble(members))
    }

    /// Flattens any predictive into a single weighted Gaussian mixture.
    pub fn to_mixture(&self) -> GaussianMixture {
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut sds = Vec::new();
        self.push_components(1.0, &mut weights, &mut means, &mut sds);
        GaussianMixture {
            weights,
            means,
            sds,
        }
    }

    fn push_components(&self, scale: f64, w: &mut Vec<f64>, m: &mut Vec<f64>, s: &mut Vec<f64>) {
        match self {
            ConditionalPredictive::Gaussian { mean, var } => {
                w.push(scale);
                m.push(*mean);
                s.push(var.sqrt());
            }
            ConditionalPredictive::Mixture(mix) => {
                for (wk, mk, sk) in mix.iter() {
                    w.push(scale * wk);
                    m.push(mk);
                    s.push(sk);
                }
            }
            ConditionalPredictive::Ensemble(members) => {
                let each = scale / members.len() as f64;
                for member in members {
                    member.push_components(each, w, m, s);
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            ConditionalPredictive::Gaussian { mean, var } => {
                let sd = var.sqrt();
                norm_pdf((x - mean) / sd) / sd
            }
            ConditionalPredictive::Mixture(mix) => mix.pdf(x),
            ConditionalPredictive::Ensemble(members) => {
                members.iter().map(|m| m.pdf(x)).sum::<f64>() / members.len() as f64
            }
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            ConditionalPredictive::Gaussian { mean, var } => {
                let sd = var.sqrt();
                norm_ln_pdf((x - mean) / sd) - sd.ln()
            }
            ConditionalPredictive::Mixture(mix) => mix.ln_pdf(x),
            ConditionalPredictive::Ensemble(members) => {
                let terms: Vec<f64> = members.iter().map(|m| m.ln_pdf(x)).collect();
                log_sum_exp(&terms) - (members.len() as f64).ln()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ConditionalPredictive::Gaussian { mean, var } => norm_cdf((x - mean) / var.sqrt()),
            ConditionalPredictive::Mixture(mix) => mix.cdf(x),
            ConditionalPredictive::Ensemble(members) => {
                members.iter().map(|m| m.cdf(x)).sum::<f64>() / members.len() as f64
            }
        }
    }

    pub fn sf(&self, x: f64) -> f64 {
        match self {
            ConditionalPredictive::Gaussian { mean, var } => norm_sf((x - mean) / var.sqrt()),
            ConditionalPredictive::Mixture(mix) => mix.sf(x),
            ConditionalPredictive::Ensemble(members) => {
                members.iter().map(|m| m.sf(x)).sum::<f64>() / members.len() as f64
            }
        }
    }

    pub fn quantile(&self, level: f64) -> Result<f64> {
        match self {
            ConditionalPredictive::Gaussian { mean, var } => {
                if !(level > 0.0 && level < 1.0) {
                    return Err(GvpError::Domain(format!(
                        "quantile level must lie in (0,1), got {level}"
                    )));
                }
                Ok(mean + var.sqrt() * norm_quantile(level))
            }
            ConditionalPredictive::Mixture(mix) => mix.quantile(level),
            ConditionalPredictive::Ensemble(_) => self.to_mixture().quantile(level),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ConditionalPredictive::Gaussian { mean, var } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * z
            }
            ConditionalPredictive::Mixture(mix) => mix.sample(rng),
            ConditionalPredictive::Ensemble(members) => {
                let i = rng.random_range(0..members.len());
                members[i].sample(rng)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ConditionalPredictive::Gaussian { mean, .. } => *mean,
            _ => self.to_mixture().mean(),
        }
    }
}
