//! Standard normal density, distribution and quantile functions with
//! tail-stable logarithms.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// ln(sqrt(2 pi))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// 1 / sqrt(pi)
pub const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Below this argument `erfc` underflows and asymptotic series take over.
const LOG_TAIL_CUTOFF: f64 = -37.0;

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[inline]
pub fn norm_ln_pdf(x: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * x * x
}

/// Derivative of the standard normal density.
#[inline]
pub fn norm_pdf_prime(x: f64) -> f64 {
    -x * norm_pdf(x)
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 - Phi(x), accurate for large positive x.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// ln Phi(x), finite for every finite x.
pub fn norm_ln_cdf(x: f64) -> f64 {
    if x > LOG_TAIL_CUTOFF {
        let c = norm_cdf(x);
        if c > 0.5 {
            (-norm_sf(x)).ln_1p()
        } else {
            c.ln()
        }
    } else {
        // Mills-ratio expansion: Phi(x) ~ phi(x)/(-x) * (1 - 1/x^2 + 3/x^4 - 15/x^6)
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        norm_ln_pdf(x) - (-x).ln() + series.ln()
    }
}

/// ln(1 - Phi(x)).
#[inline]
pub fn norm_ln_sf(x: f64) -> f64 {
    norm_ln_cdf(-x)
}

/// phi(x) / Phi(x), stable in the far lower tail.
pub fn norm_hazard_lower(x: f64) -> f64 {
    if x > LOG_TAIL_CUTOFF {
        norm_pdf(x) / norm_cdf(x)
    } else {
        (norm_ln_pdf(x) - norm_ln_cdf(x)).exp()
    }
}

/// Standard normal quantile. Returns +-inf at the endpoints.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// log-sum-exp of a slice; `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Sample mean and (n - 1)-denominator variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" definition).
pub fn empirical_quantile(xs: &[f64], level: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted_quantile(&sorted, level)
}

pub fn sorted_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * level.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
