//! Mixture of K Gaussian AR(1) components with state-dependent weights.
//!
//! Writing `e_t = y_t - mu`, component k predicts
//! `e_t = beta0_k + beta1_k e_{t-1} + sigma_k eps`, and its weight at time t
//! is proportional to `tau_k` times the stationary density of component k
//! evaluated at `e_{t-1}` (mean `beta0_k / (1 - beta1_k)`, variance
//! `sigma_k^2 / (1 - beta1_k^2)`). The base weights `tau` come from stick
//! breaking.
//!
//! Transformed parameter layout (dimension 4K):
//! `[beta0 (K), eta (K), psi (K-1), kappa (K), mu]` with
//! `beta1 = 2 Phi(eta) - 1`, `v = Phi(psi)`, `sigma = exp(kappa)`.

use super::{check_dim, check_range, PredictiveModel};
use crate::error::{GvpError, Result};
use crate::predictive::{ConditionalPredictive, GaussianMixture};
use crate::scoring::{ResolvedRule, Tail};
use crate::series::Sample;
use crate::special::{
    empirical_quantile, log_sum_exp, mean_var, norm_cdf, norm_hazard_lower, norm_ln_cdf,
    norm_ln_sf, norm_pdf, norm_quantile, LN_SQRT_2PI,
};
use std::ops::Range;

const BETA0_PRIOR_VAR: f64 = 1e8;
const MU_PRIOR_VAR: f64 = 1e4;
/// Below this predictive density at an interval bound, the bound's
/// sensitivity `1 / p` is not trusted and the term is left out of the gradient.
const MIN_QUANTILE_DENSITY: f64 = 1e-300;

/// Stick-breaking weights from fractions `v_1..v_{K-1}` (with `v_K = 1`),
/// together with the Jacobian `d tau / d v` (K rows, K-1 columns).
pub fn stick_breaking(v: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if let Some(bad) = v.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        return Err(GvpError::Domain(format!(
            "stick-breaking fractions must lie in (0,1), got {bad}"
        )));
    }
    let k = v.len() + 1;
    let mut tau = Vec::with_capacity(k);
    let mut remaining = 1.0;
    for j in 0..k {
        let vj = if j < k - 1 { v[j] } else { 1.0 };
        tau.push(vj * remaining);
        if j < k - 1 {
            remaining *= 1.0 - v[j];
        }
    }
    let mut jac = vec![vec![0.0; k - 1]; k];
    let mut prefix = 1.0;
    for row in 0..k {
        if row < k - 1 {
            jac[row][row] = prefix;
            prefix *= 1.0 - v[row];
        }
        for s in 0..row.min(k - 1) {
            jac[row][s] = -tau[row] / (1.0 - v[s]);
        }
    }
    Ok((tau, jac))
}

/// Mixture parameters in natural coordinates, with the few derived
/// quantities that need care near the boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub beta0: Vec<f64>,
    pub beta1: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Stick-breaking fractions, length K with the last fixed at 1.
    pub v: Vec<f64>,
    pub mu: f64,
    log_tau: Vec<f64>,
    one_minus_beta1: Vec<f64>,
    one_minus_beta1_sq: Vec<f64>,
}

impl MixtureParams {
    pub fn k(&self) -> usize {
        self.beta0.len()
    }

    pub fn tau(&self) -> Vec<f64> {
        self.log_tau.iter().map(|l| l.exp()).collect()
    }

    pub fn log_tau(&self) -> &[f64] {
        &self.log_tau
    }

    pub fn from_transformed(theta: &[f64], k: usize) -> Result<Self> {
        check_dim(theta, 4 * k, "mixture")?;
        let (b0, rest) = theta.split_at(k);
        let (eta, rest) = rest.split_at(k);
        let (psi, rest) = rest.split_at(k - 1);
        let (kappa, mu) = rest.split_at(k);

        let mut beta1 = Vec::with_capacity(k);
        let mut one_minus_beta1 = Vec::with_capacity(k);
        let mut one_minus_beta1_sq = Vec::with_capacity(k);
        for &e in eta {
            let (lo, hi) = (norm_cdf(-e), norm_cdf(e));
            let omb_sq = 4.0 * lo * hi;
            if !(omb_sq > 0.0) {
                return Err(GvpError::Domain(format!(
                    "AR coefficient transform eta={e} reaches |beta1| = 1"
                )));
            }
            beta1.push(hi - lo);
            one_minus_beta1.push(2.0 * lo);
            one_minus_beta1_sq.push(omb_sq);
        }
        let sigma: Vec<f64> = kappa.iter().map(|c| c.exp()).collect();
        if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(GvpError::Domain("component scale exp(kappa) out of range".into()));
        }
        let mut log_tau = Vec::with_capacity(k);
        let mut log_remaining = 0.0;
        for j in 0..k {
            if j < k - 1 {
                log_tau.push(norm_ln_cdf(psi[j]) + log_remaining);
                log_remaining += norm_ln_sf(psi[j]);
            } else {
                log_tau.push(log_remaining);
            }
        }
        let mut v: Vec<f64> = psi.iter().map(|p| norm_cdf(*p)).collect();
        v.push(1.0);
        Ok(MixtureParams {
            beta0: b0.to_vec(),
            beta1,
            sigma,
            v,
            mu: mu[0],
            log_tau,
            one_minus_beta1,
            one_minus_beta1_sq,
        })
    }

    /// Builds parameters from natural values; `v` has length K-1.
    pub fn from_natural(
        beta0: Vec<f64>,
        beta1: Vec<f64>,
        sigma: Vec<f64>,
        v: Vec<f64>,
        mu: f64,
    ) -> Result<Self> {
        let k = beta0.len();
        if beta1.len() != k || sigma.len() != k || v.len() + 1 != k {
            return Err(GvpError::Input("inconsistent mixture parameter lengths".into()));
        }
        if beta1.iter().any(|b| !(b.abs() < 1.0)) {
            return Err(GvpError::Domain("AR coefficients must lie in (-1,1)".into()));
        }
        if sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(GvpError::Domain("component scales must be positive".into()));
        }
        stick_breaking(&v)?;
        let mut theta = beta0.clone();
        theta.extend(beta1.iter().map(|b| norm_quantile((b + 1.0) / 2.0)));
        theta.extend(v.iter().map(|x| norm_quantile(*x)));
        theta.extend(sigma.iter().map(|s| s.ln()));
        theta.push(mu);
        Self::from_transformed(&theta, k)
    }

    pub fn to_transformed(&self) -> Vec<f64> {
        let k = self.k();
        let mut theta = self.beta0.clone();
        theta.extend(self.beta1.iter().map(|b| norm_quantile((b + 1.0) / 2.0)));
        theta.extend(self.v[..k - 1].iter().map(|x| norm_quantile(*x)));
        theta.extend(self.sigma.iter().map(|s| s.ln()));
        theta.push(self.mu);
        theta
    }

    /// Predictive of `y_t` given the lagged value `y_{t-1}`.
    pub fn predictive(&self, y_lag: f64) -> Result<GaussianMixture> {
        let terms = self.terms(y_lag);
        let log_w: Vec<f64> = terms.iter().map(|c| c.log_c1).collect();
        GaussianMixture::from_log_weights(
            &log_w,
            terms.iter().map(|c| c.mean).collect(),
            self.sigma.iter().map(|s| s * s).collect(),
        )
    }

    fn terms(&self, y_lag: f64) -> Vec<Component> {
        let e_prev = y_lag - self.mu;
        (0..self.k())
            .map(|k| {
                let (b0, b1, sig) = (self.beta0[k], self.beta1[k], self.sigma[k]);
                let omb = self.one_minus_beta1[k];
                let omb_sq = self.one_minus_beta1_sq[k];
                let stat_mean = b0 / omb;
                let s = sig / omb_sq.sqrt();
                let w = (e_prev - stat_mean) / s;
                let dlog_s_db1 = b1 / omb_sq;
                let dw_db1 = -(b0 / (omb * omb)) / s - w * dlog_s_db1;
                Component {
                    mean: self.mu + b0 + b1 * e_prev,
                    sd: sig,
                    e_prev,
                    beta1: b1,
                    log_c1: self.log_tau[k] - s.ln() - LN_SQRT_2PI - 0.5 * w * w,
                    dlog_c1: [
                        w / (omb * s),
                        -dlog_s_db1 - w * dw_db1,
                        (w * w - 1.0) / sig,
                        w / s,
                    ],
                }
            })
            .collect()
    }
}

/// Per-component quantities at one time step.
struct Component {
    mean: f64,
    sd: f64,
    e_prev: f64,
    beta1: f64,
    log_c1: f64,
    /// d log c1 / d (beta0, beta1, sigma, mu); d log c1 / d log tau = 1.
    dlog_c1: [f64; 4],
}

impl Component {
    /// d zeta / d (beta0, beta1, sigma, mu) for `zeta = (z - mean) / sd`.
    fn dzeta(&self, zeta: f64) -> [f64; 4] {
        let s = self.sd;
        [-1.0 / s, -self.e_prev / s, -zeta / s, (self.beta1 - 1.0) / s]
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Mass {
    Density,
    Cdf,
    Sf,
}

/// Gradient in natural coordinates, laid out as
/// `[beta0 (K), beta1 (K), sigma (K), log tau (K), mu]`.
struct NaturalGrad {
    k: usize,
    g: Vec<f64>,
}

impl NaturalGrad {
    fn new(k: usize) -> Self {
        NaturalGrad {
            k,
            g: vec![0.0; 4 * k + 1],
        }
    }

    fn add_component(&mut self, k: usize, d: &[f64; 4], dlog_tau: f64, scale: f64) {
        let kk = self.k;
        self.g[k] += scale * d[0];
        self.g[kk + k] += scale * d[1];
        self.g[2 * kk + k] += scale * d[2];
        self.g[3 * kk + k] += scale * dlog_tau;
        self.g[4 * kk] += scale * d[3];
    }
}

/// Adds `scale * grad` of `log( sum_k c1_k m_k(z) / sum_k c1_k )` and returns
/// the log value, where `m_k` is the component density, cdf or survival
/// function at `z`.
fn add_log_ratio(
    comps: &[Component],
    lse_c1: f64,
    z: f64,
    mass: Mass,
    scale: f64,
    grad: &mut NaturalGrad,
) -> f64 {
    let mut log_terms = Vec::with_capacity(comps.len());
    let mut dlog_m = Vec::with_capacity(comps.len());
    for c in comps {
        let zeta = (z - c.mean) / c.sd;
        let dz = c.dzeta(zeta);
        let (log_m, factor, extra_sigma) = match mass {
            Mass::Density => (-c.sd.ln() - LN_SQRT_2PI - 0.5 * zeta * zeta, -zeta, -1.0 / c.sd),
            Mass::Cdf => (norm_ln_cdf(zeta), norm_hazard_lower(zeta), 0.0),
            Mass::Sf => (norm_ln_sf(zeta), -norm_hazard_lower(-zeta), 0.0),
        };
        log_terms.push(c.log_c1 + log_m);
        dlog_m.push([
            factor * dz[0],
            factor * dz[1],
            factor * dz[2] + extra_sigma,
            factor * dz[3],
        ]);
    }
    let lse_num = log_sum_exp(&log_terms);
    if scale != 0.0 {
        for (k, c) in comps.iter().enumerate() {
            let rho = (log_terms[k] - lse_num).exp();
            let tau_t = (c.log_c1 - lse_c1).exp();
            let dm = &dlog_m[k];
            let combined = [
                rho * (dm[0] + c.dlog_c1[0]) - tau_t * c.dlog_c1[0],
                rho * (dm[1] + c.dlog_c1[1]) - tau_t * c.dlog_c1[1],
                rho * (dm[2] + c.dlog_c1[2]) - tau_t * c.dlog_c1[2],
                rho * (dm[3] + c.dlog_c1[3]) - tau_t * c.dlog_c1[3],
            ];
            grad.add_component(k, &combined, rho - tau_t, scale);
        }
    }
    lse_num - lse_c1
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub k: usize,
}

impl MixtureModel {
    pub fn new(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(GvpError::Input("mixture needs at least one component".into()));
        }
        Ok(Self { k })
    }

    /// Moment-based starting point from an arbitrary set of observations.
    pub fn initial_from_observations(&self, obs: &[f64]) -> Vec<f64> {
        let k = self.k;
        let (mean, var) = mean_var(obs);
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        let centred: Vec<f64> = obs.iter().map(|y| y - mean).collect();
        let mut theta = Vec::with_capacity(4 * k);
        for j in 0..k {
            let level = (j as f64 + 0.5) / k as f64;
            theta.push(if centred.is_empty() {
                0.0
            } else {
                empirical_quantile(&centred, level)
            });
        }
        theta.extend(std::iter::repeat_n(0.0, k));
        // Equal base weights: v_j = 1 / (K - j).
        theta.extend((0..k - 1).map(|j| norm_quantile(1.0 / (k - j) as f64)));
        let scale = if k == 1 { sd } else { 0.5 * sd };
        theta.extend(std::iter::repeat_n(scale.ln(), k));
        theta.push(mean);
        theta
    }

    fn transformed_gradient(&self, theta: &[f64], p: &MixtureParams, nat: &NaturalGrad) -> Vec<f64> {
        let k = self.k;
        let g = &nat.g;
        let mut out = Vec::with_capacity(4 * k);
        out.extend_from_slice(&g[..k]);
        out.extend((0..k).map(|j| g[k + j] * 2.0 * norm_pdf(theta[k + j])));
        let glog_tau = &g[3 * k..4 * k];
        let mut tail_sum: f64 = glog_tau.iter().sum();
        for s in 0..k - 1 {
            let psi = theta[2 * k + s];
            tail_sum -= glog_tau[s];
            out.push(glog_tau[s] * norm_hazard_lower(psi) - norm_hazard_lower(-psi) * tail_sum);
        }
        out.extend((0..k).map(|j| g[2 * k + j] * p.sigma[j]));
        out.push(g[4 * k]);
        out
    }

    fn term_gradient(
        &self,
        rule: &ResolvedRule,
        p: &MixtureParams,
        y_lag: f64,
        y: f64,
        t: usize,
        grad: &mut NaturalGrad,
    ) -> Result<f64> {
        let comps = p.terms(y_lag);
        let log_c1: Vec<f64> = comps.iter().map(|c| c.log_c1).collect();
        let lse_c1 = log_sum_exp(&log_c1);
        let value = match *rule {
            ResolvedRule::Ls => add_log_ratio(&comps, lse_c1, y, Mass::Density, 1.0, grad),
            ResolvedRule::Cls { tail, y_q } => {
                let mass = match tail {
                    Tail::Upper if y > y_q => None,
                    Tail::Lower if y < y_q => None,
                    Tail::Upper => Some(Mass::Cdf),
                    Tail::Lower => Some(Mass::Sf),
                };
                match mass {
                    None => add_log_ratio(&comps, lse_c1, y, Mass::Density, 1.0, grad),
                    Some(m) => add_log_ratio(&comps, lse_c1, y_q, m, 1.0, grad),
                }
            }
            ResolvedRule::Msis { alpha } => {
                let mix = GaussianMixture::from_log_weights(
                    &log_c1,
                    comps.iter().map(|c| c.mean).collect(),
                    comps.iter().map(|c| c.sd * c.sd).collect(),
                )?;
                let l = mix.quantile(alpha / 2.0).map_err(|e| e.at_term(t))?;
                let u = mix.quantile(1.0 - alpha / 2.0).map_err(|e| e.at_term(t))?;
                let kpen = 2.0 / alpha;
                let ds_du = -1.0 + if y > u { kpen } else { 0.0 };
                let ds_dl = 1.0 - if y < l { kpen } else { 0.0 };
                // du/dtheta = -dP(u)/dtheta / p(u) = (1 - P(u)) dlog S(u) / p(u)
                let pu = mix.pdf(u);
                let pl = mix.pdf(l);
                if pu < MIN_QUANTILE_DENSITY || pl < MIN_QUANTILE_DENSITY {
                    log::warn!(
                        "term {t}: predictive density at interval bound below {MIN_QUANTILE_DENSITY:e}; \
                         dropping its MSIS gradient"
                    );
                } else {
                    let su = mix.sf(u);
                    add_log_ratio(&comps, lse_c1, u, Mass::Sf, ds_du * su / pu, grad);
                    let fl = mix.cdf(l);
                    add_log_ratio(&comps, lse_c1, l, Mass::Cdf, -ds_dl * fl / pl, grad);
                }
                crate::scoring::interval_score(l, u, y, alpha)
            }
            ResolvedRule::Crps => {
                return Err(GvpError::Input(
                    "CRPS has no closed form for the mixture class".into(),
                ))
            }
        };
        if !value.is_finite() {
            return Err(GvpError::degenerate(Some(t), format!("mixture score is {value}")));
        }
        Ok(value)
    }
}

impl PredictiveModel for MixtureModel {
    fn name(&self) -> String {
        format!("mixture(K={})", self.k)
    }

    fn dim(&self) -> usize {
        4 * self.k
    }

    fn param_names(&self) -> Vec<String> {
        let k = self.k;
        let mut names: Vec<String> = (1..=k).map(|j| format!("beta0_{j}")).collect();
        names.extend((1..=k).map(|j| format!("eta_{j}")));
        names.extend((1..k).map(|j| format!("psi_{j}")));
        names.extend((1..=k).map(|j| format!("kappa_{j}")));
        names.push("mu".into());
        names
    }

    fn supports(&self, rule: &ResolvedRule) -> bool {
        !rule.is_crps()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let k = self.k;
        let mut lp = 0.0;
        for j in 0..k {
            lp -= 0.5 * theta[j] * theta[j] / BETA0_PRIOR_VAR;
            lp -= 0.5 * theta[k + j] * theta[k + j];
            let kappa = theta[3 * k - 1 + j];
            lp += -2.0 * kappa - (-2.0 * kappa).exp();
        }
        for s in 0..k - 1 {
            let psi = theta[2 * k + s];
            lp += norm_ln_sf(psi) - 0.5 * psi * psi;
        }
        let mu = theta[4 * k - 1];
        lp - 0.5 * mu * mu / MU_PRIOR_VAR
    }

    fn grad_log_prior(&self, theta: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut g = Vec::with_capacity(4 * k);
        g.extend(theta[..k].iter().map(|b| -b / BETA0_PRIOR_VAR));
        g.extend(theta[k..2 * k].iter().map(|e| -e));
        g.extend(
            theta[2 * k..3 * k - 1]
                .iter()
                .map(|&psi| -norm_hazard_lower(-psi) - psi),
        );
        g.extend(
            theta[3 * k - 1..4 * k - 1]
                .iter()
                .map(|&kappa| 2.0 * (-2.0 * kappa).exp() - 2.0),
        );
        g.push(-theta[4 * k - 1] / MU_PRIOR_VAR);
        g
    }

    fn initial_theta(&self, sample: &Sample) -> Vec<f64> {
        self.initial_from_observations(sample.observations())
    }

    fn predictives(
        &self,
        theta: &[f64],
        sample: &Sample,
        range: Range<usize>,
    ) -> Result<Vec<ConditionalPredictive>> {
        check_range(sample, &range)?;
        let p = MixtureParams::from_transformed(theta, self.k)?;
        range
            .map(|t| p.predictive(sample.y[t]).map(ConditionalPredictive::Mixture))
            .collect()
    }

    fn criterion_gradient(
        &self,
        rule: &ResolvedRule,
        theta: &[f64],
        sample: &Sample,
    ) -> Result<(f64, Vec<f64>)> {
        sample.validate()?;
        let p = MixtureParams::from_transformed(theta, self.k)?;
        let mut nat = NaturalGrad::new(self.k);
        let mut total = 0.0;
        for t in 0..sample.n() {
            total += self.term_gradient(rule, &p, sample.y[t], sample.y[t + 1], t, &mut nat)?;
        }
        Ok((total, self.transformed_gradient(theta, &p, &nat)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stick_breaking_example() {
        let (tau, _) = stick_breaking(&[0.5, 0.5]).unwrap();
        assert_eq!(tau, vec![0.5, 0.25, 0.25]);
        assert!(stick_breaking(&[0.5, 1.0]).is_err());
    }

    #[test]
    fn stick_breaking_jacobian_matches_differences() {
        let v = [0.3, 0.6, 0.2];
        let (_, jac) = stick_breaking(&v).unwrap();
        let h = 1e-6;
        for s in 0..v.len() {
            let mut up = v;
            let mut dn = v;
            up[s] += h;
            dn[s] -= h;
            let (tu, _) = stick_breaking(&up).unwrap();
            let (td, _) = stick_breaking(&dn).unwrap();
            for k in 0..tu.len() {
                let fd = (tu[k] - td[k]) / (2.0 * h);
                assert!((fd - jac[k][s]).abs() < 1e-8, "k={k} s={s}");
            }
        }
    }

    #[test]
    fn single_component_is_plain_ar1() {
        let p = MixtureParams::from_natural(vec![0.5], vec![0.3], vec![2.0], vec![], 1.0).unwrap();
        let mix = p.predictive(3.0).unwrap();
        assert_eq!(mix.weights(), &[1.0]);
        assert!((mix.means()[0] - (1.0 + 0.5 + 0.3 * 2.0)).abs() < 1e-12);
        assert!((mix.sds()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_components_keep_base_weights() {
        let p = MixtureParams::from_natural(
            vec![0.1; 3],
            vec![0.4; 3],
            vec![1.5; 3],
            vec![0.2, 0.7],
            0.0,
        )
        .unwrap();
        let mix = p.predictive(5.0).unwrap();
        for (w, t) in mix.weights().iter().zip(p.tau()) {
            assert!((w - t).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_round_trip() {
        let theta = vec![0.3, -1.2, 0.4, -0.7, 1.1, 0.2, -0.5, 0.1, -0.3, 0.25, 0.0, 2.0];
        let p = MixtureParams::from_transformed(&theta, 3).unwrap();
        let back = p.to_transformed();
        for (a, b) in theta.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn extreme_lag_weights_stay_normalized() {
        let p = MixtureParams::from_natural(
            vec![-1.0, 0.0, 1.0],
            vec![0.9, 0.0, -0.5],
            vec![0.1, 0.2, 0.3],
            vec![0.3, 0.3],
            0.0,
        )
        .unwrap();
        let mix = p.predictive(1e4).unwrap();
        let sum: f64 = mix.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_prior_gradient_example() {
        let m = MixtureModel::new(2).unwrap();
        let theta = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.3, -0.4, 0.0];
        let g = m.grad_log_prior(&theta);
        assert!((g[5] - (2.0 * (-0.6f64).exp() - 2.0)).abs() < 1e-15);
        assert!((g[6] - (2.0 * (0.8f64).exp() - 2.0)).abs() < 1e-15);
    }
}
