//! Positively oriented scoring rules: log score, CRPS, censored log score and
//! the negated interval score. Larger is always better.
//!
//! A [`ScoringRuleSpec`] names a rule. CLS thresholds are given as quantile
//! levels and must be turned into a [`ResolvedRule`] against training data
//! before scoring, which fixes `y_q` for the rest of the run.

use crate::error::{GvpError, Result};
use crate::predictive::{ConditionalPredictive, GaussianMixture};
use crate::quadrature::integrate;
use crate::special::{
    empirical_quantile, norm_cdf, norm_hazard_lower, norm_ln_cdf, norm_ln_pdf, norm_ln_sf,
    norm_pdf, norm_quantile, FRAC_1_SQRT_PI,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// Region of interest is `y < y_q`.
    Lower,
    /// Region of interest is `y > y_q`.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ScoringRuleSpec {
    #[serde(rename = "LS")]
    Ls,
    #[serde(rename = "CRPS")]
    Crps,
    #[serde(rename = "CLS")]
    Cls { tail: Tail, threshold_quantile: f64 },
    #[serde(rename = "MSIS")]
    Msis { alpha: f64 },
}

pub const DEFAULT_MSIS_ALPHA: f64 = 0.05;

impl ScoringRuleSpec {
    pub fn cls(tail: Tail, threshold_quantile: f64) -> Result<Self> {
        if !(threshold_quantile > 0.0 && threshold_quantile < 1.0) {
            return Err(GvpError::Domain(format!(
                "CLS threshold quantile must lie in (0,1), got {threshold_quantile}"
            )));
        }
        Ok(ScoringRuleSpec::Cls {
            tail,
            threshold_quantile,
        })
    }

    pub fn msis(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GvpError::Domain(format!(
                "MSIS alpha must lie in (0,1), got {alpha}"
            )));
        }
        Ok(ScoringRuleSpec::Msis { alpha })
    }

    /// The seven rules used throughout the experiments, in table order:
    /// LS, CLS10, CLS20, CLS80, CLS90, CRPS, MSIS.
    pub fn standard_set() -> Vec<Self> {
        vec![
            ScoringRuleSpec::Ls,
            ScoringRuleSpec::Cls {
                tail: Tail::Lower,
                threshold_quantile: 0.10,
            },
            ScoringRuleSpec::Cls {
                tail: Tail::Lower,
                threshold_quantile: 0.20,
            },
            ScoringRuleSpec::Cls {
                tail: Tail::Upper,
                threshold_quantile: 0.80,
            },
            ScoringRuleSpec::Cls {
                tail: Tail::Upper,
                threshold_quantile: 0.90,
            },
            ScoringRuleSpec::Crps,
            ScoringRuleSpec::Msis {
                alpha: DEFAULT_MSIS_ALPHA,
            },
        ]
    }

    /// The standard set without CRPS, for model classes with no closed-form CRPS.
    pub fn standard_set_without_crps() -> Vec<Self> {
        Self::standard_set()
            .into_iter()
            .filter(|r| !matches!(r, ScoringRuleSpec::Crps))
            .collect()
    }

    pub fn label(&self) -> String {
        match self {
            ScoringRuleSpec::Ls => "LS".into(),
            ScoringRuleSpec::Crps => "CRPS".into(),
            ScoringRuleSpec::Cls {
                tail,
                threshold_quantile,
            } => {
                let pct = threshold_quantile * 100.0;
                // Tail is implied by the level for the usual 10/20/80/90 labels;
                // make it explicit when it is not.
                let implied = if pct < 50.0 { Tail::Lower } else { Tail::Upper };
                let suffix = match (*tail == implied, tail) {
                    (true, _) => "",
                    (false, Tail::Lower) => "L",
                    (false, Tail::Upper) => "U",
                };
                if (pct - pct.round()).abs() < 1e-9 {
                    format!("CLS{}{}", pct.round() as i64, suffix)
                } else {
                    format!("CLS{pct}{suffix}")
                }
            }
            ScoringRuleSpec::Msis { alpha } => {
                if (*alpha - DEFAULT_MSIS_ALPHA).abs() < 1e-15 {
                    "MSIS".into()
                } else {
                    format!("MSIS{}", alpha * 100.0)
                }
            }
        }
    }

    /// Fixes data-dependent constants (the CLS threshold) using the
    /// training sample.
    pub fn resolve(&self, training: &[f64]) -> Result<ResolvedRule> {
        Ok(match *self {
            ScoringRuleSpec::Ls => ResolvedRule::Ls,
            ScoringRuleSpec::Crps => ResolvedRule::Crps,
            ScoringRuleSpec::Cls {
                tail,
                threshold_quantile,
            } => {
                if training.is_empty() {
                    return Err(GvpError::Input(
                        "CLS threshold needs a non-empty training sample".into(),
                    ));
                }
                ResolvedRule::Cls {
                    tail,
                    y_q: empirical_quantile(training, threshold_quantile),
                }
            }
            ScoringRuleSpec::Msis { alpha } => ResolvedRule::Msis { alpha },
        })
    }
}

impl fmt::Display for ScoringRuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ScoringRuleSpec {
    type Err = GvpError;

    /// Parses labels such as `LS`, `CRPS`, `CLS10`, `CLS90`, `CLS30U`, `MSIS`, `MSIS10`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let bad = || GvpError::Input(format!("unknown scoring rule '{s}'"));
        match t.as_str() {
            "LS" => return Ok(ScoringRuleSpec::Ls),
            "CRPS" => return Ok(ScoringRuleSpec::Crps),
            "MSIS" => return ScoringRuleSpec::msis(DEFAULT_MSIS_ALPHA),
            _ => {}
        }
        if let Some(rest) = t.strip_prefix("CLS") {
            let (num, tail) = if let Some(n) = rest.strip_suffix('L') {
                (n, Some(Tail::Lower))
            } else if let Some(n) = rest.strip_suffix('U') {
                (n, Some(Tail::Upper))
            } else {
                (rest, None)
            };
            let pct: f64 = num.parse().map_err(|_| bad())?;
            let q = pct / 100.0;
            let tail = tail.unwrap_or(if q < 0.5 { Tail::Lower } else { Tail::Upper });
            return ScoringRuleSpec::cls(tail, q);
        }
        if let Some(rest) = t.strip_prefix("MSIS") {
            let pct: f64 = rest.parse().map_err(|_| bad())?;
            return ScoringRuleSpec::msis(pct / 100.0);
        }
        Err(bad())
    }
}

/// A scoring rule with every data-dependent constant fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ResolvedRule {
    Ls,
    Crps,
    Cls { tail: Tail, y_q: f64 },
    Msis { alpha: f64 },
}

/// Score of a Gaussian predictive and its partial derivatives with respect
/// to the predictive mean and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianScore {
    pub value: f64,
    pub d_mean: f64,
    pub d_var: f64,
}

impl ResolvedRule {
    pub fn score(&self, pred: &ConditionalPredictive, y: f64) -> Result<f64> {
        if let ConditionalPredictive::Gaussian { mean, var } = pred {
            return self.gaussian(*mean, *var, y).map(|s| s.value);
        }
        match *self {
            ResolvedRule::Ls => log_score(pred, y),
            ResolvedRule::Crps => crps(pred, y),
            ResolvedRule::Cls { tail, y_q } => censored_log_score(pred, y, y_q, tail),
            ResolvedRule::Msis { alpha } => msis_score(pred, y, alpha),
        }
    }

    /// Closed-form score of `N(mean, var)` at `y` together with its mean and
    /// variance partials.
    pub fn gaussian(&self, mean: f64, var: f64, y: f64) -> Result<GaussianScore> {
        if !(var > 0.0 && var.is_finite()) {
            return Err(GvpError::Domain(format!(
                "predictive variance must be positive, got {var}"
            )));
        }
        let sd = var.sqrt();
        let (value, d_mean, d_sd_or_var, is_var) = match *self {
            ResolvedRule::Ls => ls_parts(mean, var, y),
            ResolvedRule::Crps => {
                let z = (y - mean) / sd;
                let (phi, cdf) = (norm_pdf(z), norm_cdf(z));
                let b = z * (2.0 * cdf - 1.0) + 2.0 * phi - FRAC_1_SQRT_PI;
                (-sd * b, 2.0 * cdf - 1.0, -(2.0 * phi - FRAC_1_SQRT_PI), false)
            }
            ResolvedRule::Cls { tail, y_q } => {
                let in_region = match tail {
                    Tail::Upper => y > y_q,
                    Tail::Lower => y < y_q,
                };
                if in_region {
                    ls_parts(mean, var, y)
                } else {
                    let a = (y_q - mean) / sd;
                    match tail {
                        // log Phi(a)
                        Tail::Upper => {
                            let h = norm_hazard_lower(a);
                            (norm_ln_cdf(a), -h / sd, -a * h / sd, false)
                        }
                        // log(1 - Phi(a)) = log Phi(-a)
                        Tail::Lower => {
                            let h = norm_hazard_lower(-a);
                            (norm_ln_sf(a), h / sd, a * h / sd, false)
                        }
                    }
                }
            }
            ResolvedRule::Msis { alpha } => {
                let zc = norm_quantile(1.0 - alpha / 2.0);
                let (l, u) = (mean - zc * sd, mean + zc * sd);
                let k = 2.0 / alpha;
                let below = y < l;
                let above = y > u;
                let mut value = u - l;
                if below {
                    value += k * (l - y);
                }
                if above {
                    value += k * (y - u);
                }
                let hits = below as u8 as f64 + above as u8 as f64;
                let d_mean = if below { -k } else if above { k } else { 0.0 };
                (-value, d_mean, -2.0 * zc + k * zc * hits, false)
            }
        };
        let d_var = if is_var {
            d_sd_or_var
        } else {
            d_sd_or_var / (2.0 * sd)
        };
        if !value.is_finite() {
            return Err(GvpError::degenerate(
                None,
                format!("{self:?} score of N({mean}, {var}) at y={y} is {value}"),
            ));
        }
        Ok(GaussianScore {
            value,
            d_mean,
            d_var,
        })
    }

    pub fn is_crps(&self) -> bool {
        matches!(self, ResolvedRule::Crps)
    }
}

fn ls_parts(mean: f64, var: f64, y: f64) -> (f64, f64, f64, bool) {
    let e = y - mean;
    let value = -0.5 * (2.0 * std::f64::consts::PI * var).ln() - e * e / (2.0 * var);
    (value, e / var, -0.5 / var + e * e / (2.0 * var * var), true)
}

fn degenerate_if_infinite(value: f64, what: &str, y: f64) -> Result<f64> {
    if value == f64::NEG_INFINITY || value.is_nan() {
        Err(GvpError::degenerate(None, format!("{what} at y={y} is {value}")))
    } else {
        Ok(value)
    }
}

/// Log predictive density at `y`.
pub fn log_score(pred: &ConditionalPredictive, y: f64) -> Result<f64> {
    degenerate_if_infinite(pred.ln_pdf(y), "log score", y)
}

/// Closed-form CRPS of a Gaussian predictive.
pub fn crps_score(mean: f64, var: f64, y: f64) -> Result<f64> {
    ResolvedRule::Crps.gaussian(mean, var, y).map(|s| s.value)
}

/// Censored log score: log density inside the region of interest, log of
/// the predictive mass of its complement otherwise. `y == y_q` lies in the
/// complement for both tails.
pub fn censored_log_score(
    pred: &ConditionalPredictive,
    y: f64,
    y_q: f64,
    tail: Tail,
) -> Result<f64> {
    if let ConditionalPredictive::Gaussian { mean, var } = pred {
        return ResolvedRule::Cls { tail, y_q }
            .gaussian(*mean, *var, y)
            .map(|s| s.value);
    }
    let value = match tail {
        Tail::Upper if y > y_q => pred.ln_pdf(y),
        Tail::Lower if y < y_q => pred.ln_pdf(y),
        Tail::Upper => pred.cdf(y_q).ln(),
        Tail::Lower => pred.sf(y_q).ln(),
    };
    degenerate_if_infinite(value, "censored log score", y)
}

/// Negated interval score of the central `(1 - alpha)` predictive interval.
pub fn msis_score(pred: &ConditionalPredictive, y: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GvpError::Domain(format!(
            "MSIS alpha must lie in (0,1), got {alpha}"
        )));
    }
    let l = pred.quantile(alpha / 2.0)?;
    let u = pred.quantile(1.0 - alpha / 2.0)?;
    Ok(interval_score(l, u, y, alpha))
}

/// Negated interval score for given bounds.
pub fn interval_score(l: f64, u: f64, y: f64, alpha: f64) -> f64 {
    let k = 2.0 / alpha;
    let mut loss = u - l;
    if y < l {
        loss += k * (l - y);
    }
    if y > u {
        loss += k * (y - u);
    }
    -loss
}

/// CRPS of any predictive: closed form for a Gaussian, otherwise the
/// mixture representation `E|X - y| - int F(1 - F)`.
pub fn crps(pred: &ConditionalPredictive, y: f64) -> Result<f64> {
    match pred {
        ConditionalPredictive::Gaussian { mean, var } => crps_score(*mean, *var, y),
        ConditionalPredictive::Mixture(mix) => crps_mixture(mix, y),
        ConditionalPredictive::Ensemble(_) => crps_mixture(&pred.to_mixture(), y),
    }
}

/// E|N(mu, s^2)|
fn abs_moment(mu: f64, s: f64) -> f64 {
    let z = mu / s;
    mu * (2.0 * norm_cdf(z) - 1.0) + 2.0 * s * norm_pdf(z)
}

pub fn crps_mixture(mix: &GaussianMixture, y: f64) -> Result<f64> {
    if mix.len() == 1 {
        return crps_score(mix.means()[0], mix.sds()[0].powi(2), y);
    }
    let expected_abs: f64 = mix
        .weights()
        .iter()
        .zip(mix.means())
        .zip(mix.sds())
        .map(|((w, m), s)| w * abs_moment(y - m, *s))
        .sum();
    Ok(-(expected_abs - mixture_spread(mix)?))
}

/// `int F(x)(1 - F(x)) dx`, i.e. half the mean absolute difference of two
/// independent draws.
pub fn mixture_spread(mix: &GaussianMixture) -> Result<f64> {
    let (lo, hi) = support_range(mix, 10.0);
    let scale = mix.sds().iter().copied().fold(0.0, f64::max);
    integrate(
        |x| {
            // One pass over the components; the complement is taken on the
            // side where it does not cancel.
            let f = mix.cdf(x);
            if f < 0.5 {
                f * (1.0 - f)
            } else {
                let s = mix.sf(x);
                s * (1.0 - s)
            }
        },
        lo,
        hi,
        1e-9 * scale.max(1e-3),
        2000,
    )
    .map(|r| r.value)
}

fn support_range(mix: &GaussianMixture, width: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (m, s) in mix.means().iter().zip(mix.sds()) {
        lo = lo.min(m - width * s);
        hi = hi.max(m + width * s);
    }
    (lo, hi)
}

/// Reference CRPS by adaptive quadrature of `-int (F(x) - 1{x >= y})^2 dx`
/// over twelve standard deviations around every component (extended to
/// cover `y`). Used to check the closed forms.
pub fn crps_numeric_oracle(pred: &ConditionalPredictive, y: f64) -> Result<f64> {
    let mix = pred.to_mixture();
    let (mut lo, mut hi) = support_range(&mix, 12.0);
    lo = lo.min(y);
    hi = hi.max(y);
    let left = integrate(|x| mix.cdf(x).powi(2), lo, y, 1e-10, 4000)?;
    let right = integrate(|x| mix.sf(x).powi(2), y, hi, 1e-10, 4000)?;
    Ok(-(left.value + right.value))
}

/// Log-density of a Gaussian, exposed for models assembling their own terms.
pub fn gaussian_ln_pdf(mean: f64, var: f64, y: f64) -> f64 {
    let sd = var.sqrt();
    norm_ln_pdf((y - mean) / sd) - sd.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal() -> ConditionalPredictive {
        ConditionalPredictive::gaussian(0.0, 1.0).unwrap()
    }

    #[test]
    fn log_score_examples() {
        assert!((log_score(&std_normal(), 0.0).unwrap() + 0.918_938_5).abs() < 1e-7);
        assert!((log_score(&std_normal(), 1.0).unwrap() + 1.418_938_5).abs() < 1e-7);
        let mix = ConditionalPredictive::Mixture(
            GaussianMixture::new(vec![1.0], vec![0.0], vec![1.0]).unwrap(),
        );
        for &y in &[-3.0, 0.0, 0.7] {
            assert_eq!(
                log_score(&mix, y).unwrap(),
                log_score(&std_normal(), y).unwrap()
            );
        }
    }

    #[test]
    fn crps_examples() {
        assert!((crps_score(0.0, 1.0, 0.0).unwrap() + 0.233_695_0).abs() < 1e-7);
        for &y in &[0.3, 1.7, 4.0] {
            assert!((crps_score(0.0, 1.0, y).unwrap() - crps_score(0.0, 1.0, -y).unwrap()).abs() < 1e-14);
        }
        let (m, s, y) = (1.5, 2.5, -0.4);
        let scaled = s * crps_score(0.0, 1.0, (y - m) / s).unwrap();
        assert!((crps_score(m, s * s, y).unwrap() - scaled).abs() < 1e-12);
        assert!(crps_score(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn cls_examples() {
        let p = std_normal();
        let up = censored_log_score(&p, -1.0, 0.0, Tail::Upper).unwrap();
        assert!((up + 0.693_147_2).abs() < 1e-7);
        let lo = censored_log_score(&p, 1.0, 0.0, Tail::Lower).unwrap();
        assert!((lo + 0.693_147_2).abs() < 1e-7);
        let inside = censored_log_score(&p, 2.0, 0.5, Tail::Upper).unwrap();
        assert_eq!(inside, log_score(&p, 2.0).unwrap());
    }

    #[test]
    fn msis_examples() {
        let p = std_normal();
        assert!((msis_score(&p, 0.0, 0.05).unwrap() + 3.919_928_0).abs() < 1e-6);
        assert!((msis_score(&p, 3.0, 0.05).unwrap() + 45.5213).abs() < 1e-4);
        let (l, u) = (p.quantile(0.025).unwrap(), p.quantile(0.975).unwrap());
        assert_eq!(msis_score(&p, u, 0.05).unwrap(), -(u - l));
        assert_eq!(msis_score(&p, l, 0.05).unwrap(), -(u - l));
    }

    #[test]
    fn gaussian_fast_path_matches_generic_functions() {
        let g = ConditionalPredictive::gaussian(0.3, 2.0).unwrap();
        let as_mix = ConditionalPredictive::Mixture(g.to_mixture());
        let rules = [
            ResolvedRule::Ls,
            ResolvedRule::Crps,
            ResolvedRule::Cls { tail: Tail::Upper, y_q: 0.5 },
            ResolvedRule::Cls { tail: Tail::Lower, y_q: -0.5 },
            ResolvedRule::Msis { alpha: 0.05 },
        ];
        for rule in rules {
            for &y in &[-4.0, -0.5, 0.0, 0.5, 3.0] {
                let a = rule.score(&g, y).unwrap();
                let b = rule.score(&as_mix, y).unwrap();
                assert!((a - b).abs() < 1e-9, "{rule:?} y={y}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn mixture_crps_matches_oracle() {
        let mix = GaussianMixture::new(vec![0.3, 0.7], vec![-1.0, 2.0], vec![0.5, 1.5]).unwrap();
        let pred = ConditionalPredictive::Mixture(mix.clone());
        for &y in &[-3.0, 0.0, 1.0, 6.0] {
            let closed = crps_mixture(&mix, y).unwrap();
            let oracle = crps_numeric_oracle(&pred, y).unwrap();
            assert!((closed - oracle).abs() < 1e-7, "y={y}: {closed} vs {oracle}");
            assert!(oracle <= 0.0);
        }
    }

    #[test]
    fn labels_round_trip() {
        for rule in ScoringRuleSpec::standard_set() {
            let parsed: ScoringRuleSpec = rule.label().parse().unwrap();
            assert_eq!(parsed, rule);
        }
        let odd: ScoringRuleSpec = "CLS30U".parse().unwrap();
        assert_eq!(odd, ScoringRuleSpec::cls(Tail::Upper, 0.3).unwrap());
        assert_eq!(odd.label(), "CLS30U");
        assert!("CLS0".parse::<ScoringRuleSpec>().is_err());
        assert!("XYZ".parse::<ScoringRuleSpec>().is_err());
    }
}
