//! Mean-field Gaussian variational approximation of the Gibbs posterior
//! `pi_w(theta | y) ∝ exp(w S_n(theta)) pi(theta)`, calibrated by stochastic
//! gradient ascent on the reparameterized ELBO with ADADELTA steps.

use crate::error::{GvpError, Result};
use crate::models::PredictiveModel;
use crate::rng::{rng_from_seed, Rng};
use crate::scoring::ResolvedRule;
use crate::series::Sample;
use crate::special::LN_SQRT_2PI;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams {
    pub mu: Vec<f64>,
    /// Componentwise scale. Only `d^2` matters, so the sign is free.
    pub d: Vec<f64>,
}

impl VariationalParams {
    pub fn new(mu: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if mu.len() != d.len() {
            return Err(GvpError::Input(format!(
                "variational mean has {} entries, scale has {}",
                mu.len(),
                d.len()
            )));
        }
        Ok(Self { mu, d })
    }

    pub fn with_scale(mu: Vec<f64>, d0: f64) -> Self {
        let d = vec![d0; mu.len()];
        Self { mu, d }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Log density of `q_lambda` at `theta`.
    pub fn log_q(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.mu)
            .zip(&self.d)
            .map(|((t, m), d)| {
                let z = (t - m) / d;
                -LN_SQRT_2PI - d.abs().ln() - 0.5 * z * z
            })
            .sum()
    }

    /// Same distribution with every scale reported as non-negative.
    pub fn normalized(mut self) -> Self {
        self.d.iter_mut().for_each(|d| *d = d.abs());
        self
    }
}

/// `theta = mu + d * eps`.
pub fn draw_theta(lambda: &VariationalParams, eps: &[f64]) -> Vec<f64> {
    lambda
        .mu
        .iter()
        .zip(&lambda.d)
        .zip(eps)
        .map(|((m, d), e)| m + d * e)
        .collect()
}

/// `-(theta - mu) / d^2`, componentwise.
pub fn grad_log_q(lambda: &VariationalParams, theta: &[f64]) -> Result<Vec<f64>> {
    if lambda.d.iter().any(|d| *d == 0.0) {
        return Err(GvpError::Domain(
            "variational scale has a zero entry; log q is not differentiable".into(),
        ));
    }
    Ok(theta
        .iter()
        .zip(&lambda.mu)
        .zip(&lambda.d)
        .map(|((t, m), d)| -(t - m) / (d * d))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaState {
    pub accum_grad_sq: Vec<f64>,
    pub accum_step_sq: Vec<f64>,
    pub rho: f64,
    pub eps: f64,
}

impl AdadeltaState {
    pub fn new(len: usize, rho: f64, eps: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) || !(eps > 0.0) {
            return Err(GvpError::Input(format!(
                "ADADELTA needs decay in (0,1) and positive epsilon, got {rho} and {eps}"
            )));
        }
        Ok(Self {
            accum_grad_sq: vec![0.0; len],
            accum_step_sq: vec![0.0; len],
            rho,
            eps,
        })
    }

    /// Ascent step for gradient `grad`; the state is left untouched when
    /// the gradient has non-finite entries.
    pub fn update(&mut self, grad: &[f64]) -> Result<Vec<f64>> {
        if grad.len() != self.accum_grad_sq.len() {
            return Err(GvpError::Input("gradient length does not match optimizer state".into()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(GvpError::Numerical("non-finite gradient rejected".into()));
        }
        let (rho, eps) = (self.rho, self.eps);
        let mut step = Vec::with_capacity(grad.len());
        for (i, &g) in grad.iter().enumerate() {
            let eg = rho * self.accum_grad_sq[i] + (1.0 - rho) * g * g;
            let dx = ((self.accum_step_sq[i] + eps).sqrt() / (eg + eps).sqrt()) * g;
            self.accum_grad_sq[i] = eg;
            self.accum_step_sq[i] = rho * self.accum_step_sq[i] + (1.0 - rho) * dx * dx;
            step.push(dx);
        }
        Ok(step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbConfig {
    pub iterations: usize,
    /// Learning rate on the sample criterion.
    pub w: f64,
    pub mc_draws_per_gradient: usize,
    pub seed: u64,
    pub elbo_monitor_window: usize,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    /// Initial variational scale `d`.
    pub init_scale: f64,
}

impl Default for VbConfig {
    fn default() -> Self {
        VbConfig {
            iterations: 10_000,
            w: 1.0,
            mc_draws_per_gradient: 1,
            seed: 0,
            elbo_monitor_window: 500,
            adadelta_rho: 0.95,
            adadelta_eps: 1e-6,
            init_scale: 0.1,
        }
    }
}

impl VbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.mc_draws_per_gradient == 0 {
            return Err(GvpError::Input(
                "VB needs at least one iteration and one draw per gradient".into(),
            ));
        }
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(GvpError::Input(format!("w must be positive, got {}", self.w)));
        }
        if self.elbo_monitor_window == 0 {
            return Err(GvpError::Input("ELBO monitor window must be positive".into()));
        }
        Ok(())
    }
}

/// Single-draw ELBO value and its gradient with respect to `(mu, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGradient {
    pub elbo: f64,
    pub grad: Vec<f64>,
}

/// Reparameterized gradient estimate
/// `(d theta / d lambda)' [w grad S_n + grad log pi - grad log q]` at
/// `theta = mu + d * eps`, with one shared `eps` for all three terms.
pub fn elbo_gradient_estimate(
    lambda: &VariationalParams,
    model: &dyn PredictiveModel,
    rule: &ResolvedRule,
    sample: &Sample,
    eps: &[f64],
    w: f64,
) -> Result<ElboGradient> {
    let theta = draw_theta(lambda, eps);
    let (s_n, grad_s) = model.criterion_gradient(rule, &theta, sample)?;
    let grad_prior = model.grad_log_prior(&theta);
    let grad_q = grad_log_q(lambda, &theta)?;
    let elbo = w * s_n + model.log_prior(&theta) - lambda.log_q(&theta);
    let r = lambda.dim();
    let mut grad = vec![0.0; 2 * r];
    for i in 0..r {
        let g = w * grad_s[i] + grad_prior[i] - grad_q[i];
        grad[i] = g;
        grad[r + i] = g * eps[i];
    }
    if !elbo.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(GvpError::degenerate(None, "non-finite ELBO gradient estimate"));
    }
    Ok(ElboGradient { elbo, grad })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lambda: VariationalParams,
    /// Noisy single-draw ELBO per completed iteration.
    pub elbo_trace: Vec<f64>,
    pub skipped: usize,
    pub iterations: usize,
}

impl Calibration {
    /// Trailing moving average of the ELBO trace.
    pub fn smoothed_elbo(&self, window: usize) -> Vec<f64> {
        moving_average(&self.elbo_trace, window)
    }
}

pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for (i, x) in xs.iter().enumerate() {
        acc += x;
        if i >= window {
            acc -= xs[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

fn standard_normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Runs `config.iterations` ADADELTA ascent steps on the ELBO.
///
/// Iterations whose gradient estimate is degenerate are skipped and logged;
/// more than half skipped is a calibration failure.
pub fn calibrate(
    model: &dyn PredictiveModel,
    rule: &ResolvedRule,
    sample: &Sample,
    config: &VbConfig,
    init: Option<VariationalParams>,
) -> Result<Calibration> {
    config.validate()?;
    sample.validate()?;
    if !model.supports(rule) {
        return Err(GvpError::Input(format!(
            "{} cannot be updated with {rule:?}",
            model.name()
        )));
    }
    let mut lambda = match init {
        Some(l) => l,
        None => VariationalParams::with_scale(model.initial_theta(sample), config.init_scale),
    };
    let r = model.dim();
    if lambda.dim() != r {
        return Err(GvpError::Input(format!(
            "initial variational parameters have dimension {}, model needs {r}",
            lambda.dim()
        )));
    }
    let mut state = AdadeltaState::new(2 * r, config.adadelta_rho, config.adadelta_eps)?;
    let mut rng = rng_from_seed(config.seed);
    let mut trace = Vec::with_capacity(config.iterations);
    let mut skipped = 0;
    let draws = config.mc_draws_per_gradient;

    for iter in 0..config.iterations {
        let mut total = vec![0.0; 2 * r];
        let mut elbo = 0.0;
        let mut failure = None;
        for _ in 0..draws {
            let eps = standard_normals(&mut rng, r);
            match elbo_gradient_estimate(&lambda, model, rule, sample, &eps, config.w) {
                Ok(est) => {
                    elbo += est.elbo / draws as f64;
                    for (t, g) in total.iter_mut().zip(&est.grad) {
                        *t += g / draws as f64;
                    }
                }
                Err(e @ (GvpError::Degenerate { .. } | GvpError::Domain(_) | GvpError::Numerical(_))) => {
                    failure = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        let step = match failure {
            Some(e) => Err(e),
            None => state.update(&total),
        };
        match step {
            Ok(step) => {
                for i in 0..r {
                    lambda.mu[i] += step[i];
                    lambda.d[i] += step[r + i];
                }
                trace.push(elbo);
            }
            Err(e) => {
                skipped += 1;
                log::warn!("VB iteration {iter} skipped: {e}");
            }
        }
    }
    if 2 * skipped > config.iterations {
        return Err(GvpError::CalibrationFailed {
            skipped,
            iterations: config.iterations,
            elbo_trace: trace,
        });
    }
    Ok(Calibration {
        lambda,
        elbo_trace: trace,
        skipped,
        iterations: config.iterations,
    })
}

/// `m` independent draws from `q_lambda`.
pub fn sample_variational(lambda: &VariationalParams, m: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| {
            let eps = standard_normals(rng, lambda.dim());
            draw_theta(lambda, &eps)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draw_theta_degenerate_cases() {
        let lam = VariationalParams::new(vec![1.0, -2.0], vec![0.5, 3.0]).unwrap();
        assert_eq!(draw_theta(&lam, &[0.0, 0.0]), vec![1.0, -2.0]);
        let flat = VariationalParams::new(vec![1.0, -2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(draw_theta(&flat, &[0.7, -1.1]), vec![1.0, -2.0]);
    }

    #[test]
    fn grad_log_q_matches_differences() {
        let lam = VariationalParams::new(vec![0.3, -1.0], vec![0.7, -1.9]).unwrap();
        let theta = [0.9, -0.2];
        let g = grad_log_q(&lam, &theta).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut up = theta;
            let mut dn = theta;
            up[i] += h;
            dn[i] -= h;
            let fd = (lam.log_q(&up) - lam.log_q(&dn)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
        assert_eq!(grad_log_q(&lam, &lam.mu.clone()).unwrap(), vec![0.0, 0.0]);
        let zero = VariationalParams::new(vec![0.0], vec![0.0]).unwrap();
        assert!(grad_log_q(&zero, &[1.0]).is_err());
    }

    #[test]
    fn adadelta_first_step() {
        let mut st = AdadeltaState::new(3, 0.95, 1e-6).unwrap();
        let g = [2.0, -0.5, 0.0];
        let step = st.update(&g).unwrap();
        for (s, gi) in step.iter().zip(g) {
            let expected = (1e-6 / (gi * gi * 0.05 + 1e-6)).sqrt() * gi.abs();
            assert!((s.abs() - expected).abs() < 1e-15);
            assert_eq!(s.signum() * gi.signum() >= 0.0, true);
        }
        assert_eq!(step[2], 0.0);
    }

    #[test]
    fn adadelta_rejects_non_finite() {
        let mut st = AdadeltaState::new(1, 0.95, 1e-6).unwrap();
        assert!(st.update(&[f64::NAN]).is_err());
        assert_eq!(st.accum_grad_sq[0], 0.0);
    }

    #[test]
    fn moving_average_warms_up() {
        let ma = moving_average(&[1.0, 3.0, 5.0, 7.0], 2);
        assert_eq!(ma, vec![1.0, 2.0, 4.0, 6.0]);
    }
}
