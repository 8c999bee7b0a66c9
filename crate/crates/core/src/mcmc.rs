//! Adaptive random-walk Metropolis sampler for the exact Gibbs posterior of
//! low-dimensional models.
//!
//! During burn-in the proposal scale follows a Robbins-Monro recursion on
//! its logarithm toward the target acceptance rate; optionally the proposal
//! covariance switches to the empirical covariance of the chain after
//! [`COVARIANCE_START`] burn-in draws. Everything is frozen after burn-in.

use crate::error::{GvpError, Result};
use crate::models::PredictiveModel;
use crate::predictive::ConditionalPredictive;
use crate::rng::{rng_from_seed, Rng};
use crate::scoring::ResolvedRule;
use crate::series::Sample;
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Burn-in draws collected before covariance adaptation starts.
pub const COVARIANCE_START: usize = 5000;
const COVARIANCE_REFRESH: usize = 500;
const MIN_TAIL_ACCEPTANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adaptation {
    #[default]
    ScaleOnly,
    FullCovariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub retained: usize,
    pub target_acceptance: f64,
    pub adaptation: Adaptation,
    pub seed: u64,
    /// Per-coordinate proposal standard deviation before adaptation.
    pub initial_scale: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            burn_in: 20_000,
            retained: 20_000,
            target_acceptance: 0.234,
            adaptation: Adaptation::ScaleOnly,
            seed: 0,
            initial_scale: 0.05,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in == 0 || self.retained == 0 {
            return Err(GvpError::Input("burn-in and retained draws must be >= 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(GvpError::Input("target acceptance must lie in (0,1)".into()));
        }
        if !(self.initial_scale > 0.0) {
            return Err(GvpError::Input("initial proposal scale must be positive".into()));
        }
        Ok(())
    }
}

/// Proposal `theta' = theta + exp(log_scale) * L z`, `z ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub log_scale: f64,
    /// Lower Cholesky factor, row-major; identity when absent.
    pub chol: Option<Vec<f64>>,
}

impl Proposal {
    fn step(&self, dim: usize, z: &[f64]) -> Vec<f64> {
        let s = self.log_scale.exp();
        match &self.chol {
            None => z.iter().map(|v| s * v).collect(),
            Some(l) => (0..dim)
                .map(|i| s * (0..=i).map(|j| l[i * dim + j] * z[j]).sum::<f64>())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcRun {
    pub draws: Vec<Vec<f64>>,
    /// Acceptance rate over the retained draws.
    pub acceptance_rate: f64,
    /// Acceptance rate over the last quarter of burn-in.
    pub burn_in_tail_acceptance: f64,
    /// Proposal log-scale at every iteration (burn-in followed by retained).
    pub log_scale_trace: Vec<f64>,
    pub proposal: Proposal,
    /// Proposals whose target was degenerate (always rejected).
    pub degenerate_proposals: usize,
}

/// Running mean and scatter matrix.
struct Welford {
    n: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford {
            n: 0,
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let x = DVector::from_column_slice(x);
        let delta = &x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = &x - &self.mean;
        self.scatter += &delta * delta2.transpose();
    }

    fn cholesky(&self) -> Option<Vec<f64>> {
        let dim = self.mean.len();
        let cov = &self.scatter / (self.n.max(2) - 1) as f64
            + DMatrix::<f64>::identity(dim, dim) * 1e-10;
        let l = cov.cholesky()?.l();
        let mut out = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                out[i * dim + j] = l[(i, j)];
            }
        }
        Some(out)
    }
}

fn evaluate<F: Fn(&[f64]) -> Result<f64>>(log_target: &F, theta: &[f64]) -> Result<Option<f64>> {
    match log_target(theta) {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(e @ (GvpError::Degenerate { .. } | GvpError::Domain(_) | GvpError::Numerical(_))) => {
            log::debug!("degenerate proposal: {e}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Random-walk Metropolis on `log_target`, starting at `theta_init` and
/// optionally from a previously adapted proposal.
pub fn rwm_sample<F: Fn(&[f64]) -> Result<f64>>(
    log_target: F,
    theta_init: &[f64],
    config: &McmcConfig,
    proposal_init: Option<Proposal>,
) -> Result<McmcRun> {
    config.validate()?;
    let dim = theta_init.len();
    let mut rng: Rng = rng_from_seed(config.seed);
    let mut theta = theta_init.to_vec();
    let mut current = evaluate(&log_target, &theta)?.ok_or_else(|| {
        GvpError::Input("log target is not finite at the initial point".into())
    })?;
    let mut proposal = proposal_init.unwrap_or(Proposal {
        log_scale: config.initial_scale.ln(),
        chol: None,
    });

    let total = config.burn_in + config.retained;
    let tail_start = config.burn_in - config.burn_in / 4;
    let mut tail_accepts = 0usize;
    let mut retained_accepts = 0usize;
    let mut degenerate = 0usize;
    let mut draws = Vec::with_capacity(config.retained);
    let mut scale_trace = Vec::with_capacity(total);
    let mut moments = Welford::new(dim);
    let covariance = config.adaptation == Adaptation::FullCovariance && dim > 1;

    for iter in 0..total {
        let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let step = proposal.step(dim, &z);
        let candidate: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + s).collect();
        let u: f64 = rng.random();
        let accepted = match evaluate(&log_target, &candidate)? {
            Some(value) => {
                // Symmetric proposal: the ratio involves the target only.
                if u.ln() < value - current {
                    theta = candidate;
                    current = value;
                    true
                } else {
                    false
                }
            }
            None => {
                degenerate += 1;
                false
            }
        };

        if iter < config.burn_in {
            let gain = (iter as f64 + 1.0).powf(-0.6);
            proposal.log_scale += gain * ((accepted as u8) as f64 - config.target_acceptance);
            if iter >= tail_start && accepted {
                tail_accepts += 1;
            }
            if covariance {
                moments.push(&theta);
                if moments.n >= COVARIANCE_START && moments.n % COVARIANCE_REFRESH == 0 {
                    if let Some(chol) = moments.cholesky() {
                        if proposal.chol.is_none() {
                            // Switch to the optimal-scaling rule for a Gaussian target.
                            proposal.log_scale = (2.38 / (dim as f64).sqrt()).ln();
                        }
                        proposal.chol = Some(chol);
                    }
                }
            }
        } else {
            if accepted {
                retained_accepts += 1;
            }
            draws.push(theta.clone());
        }
        scale_trace.push(proposal.log_scale);
    }

    let tail_len = config.burn_in - tail_start;
    let tail_rate = tail_accepts as f64 / tail_len.max(1) as f64;
    if tail_len > 0 && tail_rate < MIN_TAIL_ACCEPTANCE {
        return Err(GvpError::Diagnostics(format!(
            "acceptance rate {tail_rate:.4} over the last quarter of burn-in is below {MIN_TAIL_ACCEPTANCE}"
        )));
    }
    Ok(McmcRun {
        draws,
        acceptance_rate: retained_accepts as f64 / config.retained as f64,
        burn_in_tail_acceptance: tail_rate,
        log_scale_trace: scale_trace,
        proposal,
        degenerate_proposals: degenerate,
    })
}

/// Log Gibbs-posterior kernel `w S_n(theta) + log pi(theta)`.
pub fn gibbs_log_target<'a>(
    model: &'a dyn PredictiveModel,
    rule: &'a ResolvedRule,
    sample: &'a Sample<'a>,
    w: f64,
) -> impl Fn(&[f64]) -> Result<f64> + 'a {
    move |theta: &[f64]| Ok(w * model.criterion(rule, theta, sample)? + model.log_prior(theta))
}

/// Equal-weight ensemble of the per-draw predictives for `y_{n+1}`.
pub fn gibbs_predictive_estimate(
    draws: &[Vec<f64>],
    model: &dyn PredictiveModel,
    sample: &Sample,
    n: usize,
) -> Result<ConditionalPredictive> {
    if draws.is_empty() {
        return Err(GvpError::Input("no posterior draws".into()));
    }
    let members = draws
        .iter()
        .map(|theta| {
            model
                .predictives(theta, sample, n..n + 1)
                .map(|mut v| v.remove(0))
        })
        .collect::<Result<Vec<_>>>()?;
    ConditionalPredictive::ensemble(members)
}
