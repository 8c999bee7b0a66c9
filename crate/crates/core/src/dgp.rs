//! Seeded simulators for the data generating processes used in the experiments.
//!
//! `simulate(spec, t, burn_in, seed)` returns `t + 1` values: a presample
//! value followed by `y_1..y_t` (see [`crate::series`]).

use crate::error::{GvpError, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::series::Series;
use crate::special::norm_cdf;
use nalgebra::{Matrix2, Matrix5, Vector5};
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

pub const DEFAULT_BURN_IN: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DgpSpec {
    /// `y_t = mean + sigma_t eps_t`, GARCH(1,1) variance.
    GarchGaussian {
        mean: f64,
        omega: f64,
        alpha: f64,
        beta: f64,
    },
    /// `h_t = mean + persistence (h_{t-1} - mean) + eta_t`,
    /// `y_t = exp(h_t / 2) eps_t`, `(eps_t, eta_t)` jointly Gaussian.
    SvLeverage {
        persistence: f64,
        mean: f64,
        /// Covariance of `(eps_t, eta_t)`.
        cov: [[f64; 2]; 2],
    },
    /// `h_t = coef g(h_{t-1}) h_{t-1} + eta_t` with `g(x) = 1 / (1 + exp(-2x))`.
    SvSmoothTransition { coef: f64, eta_var: f64 },
    /// Logistic smooth transition autoregression with standardized Student-t noise.
    LstarT {
        rho1: f64,
        rho2: f64,
        gamma: f64,
        c: f64,
        sigma_eps: f64,
        nu: f64,
    },
    /// `y_t = x_t' beta_t` with `beta_{i,t} = b_i + a_i F(x_{3,t})`.
    DynRegression {
        /// Covariance of `(x_1, x_2)`.
        sigma: [[f64; 2]; 2],
        /// Innovation variance of the AR(4) for `x_3`.
        ar_var: f64,
        ar: [f64; 4],
        a: [f64; 3],
        b: [f64; 3],
    },
}

impl DgpSpec {
    pub fn garch_default() -> Self {
        DgpSpec::GarchGaussian {
            mean: 0.0,
            omega: 0.1,
            alpha: 0.1,
            beta: 0.8,
        }
    }

    pub fn sv_leverage_default() -> Self {
        DgpSpec::SvLeverage {
            persistence: 0.7,
            mean: -2.0,
            cov: [[1.0, -0.35], [-0.35, 0.25]],
        }
    }

    pub fn sv_smooth_transition_default() -> Self {
        DgpSpec::SvSmoothTransition {
            coef: 0.9,
            eta_var: 0.25,
        }
    }

    pub fn lstar_default() -> Self {
        DgpSpec::LstarT {
            rho1: 0.0,
            rho2: 0.9,
            gamma: 5.0,
            c: 0.0,
            sigma_eps: 1.0,
            nu: 3.0,
        }
    }

    pub fn dyn_regression_default() -> Self {
        DgpSpec::DynRegression {
            sigma: [[1.0, 0.5], [0.5, 1.25]],
            ar_var: 0.2,
            ar: [0.5, 0.2, 0.15, 0.1],
            a: [1.3, -2.6, -1.5],
            b: [0.0, 1.3, 1.5],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DgpSpec::GarchGaussian { .. } => "garch-gaussian",
            DgpSpec::SvLeverage { .. } => "sv-leverage",
            DgpSpec::SvSmoothTransition { .. } => "sv-smooth-transition",
            DgpSpec::LstarT { .. } => "lstar-t",
            DgpSpec::DynRegression { .. } => "dyn-regression",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DgpSpec::GarchGaussian {
                omega, alpha, beta, ..
            } => {
                if !(*omega > 0.0 && (0.0..1.0).contains(alpha) && (0.0..1.0).contains(beta)) {
                    return Err(GvpError::Input(format!(
                        "GARCH DGP needs omega > 0 and alpha, beta in [0,1), got {omega}, {alpha}, {beta}"
                    )));
                }
            }
            DgpSpec::SvLeverage { cov, .. } => {
                cholesky2(cov)?;
            }
            DgpSpec::SvSmoothTransition { eta_var, .. } => {
                if !(*eta_var >= 0.0) {
                    return Err(GvpError::Input("volatility shock variance must be >= 0".into()));
                }
            }
            DgpSpec::LstarT { nu, sigma_eps, .. } => {
                if !(*nu > 2.0) {
                    return Err(GvpError::Input(format!(
                        "standardized Student-t needs nu > 2, got {nu}"
                    )));
                }
                if !(*sigma_eps >= 0.0) {
                    return Err(GvpError::Input("noise scale must be >= 0".into()));
                }
            }
            DgpSpec::DynRegression {
                sigma, ar, ar_var, ..
            } => {
                cholesky2(sigma)?;
                ar4_stationary_variance(ar, *ar_var)?;
            }
        }
        Ok(())
    }
}

fn cholesky2(cov: &[[f64; 2]; 2]) -> Result<Matrix2<f64>> {
    let m = Matrix2::new(cov[0][0], cov[0][1], cov[1][0], cov[1][1]);
    if (cov[0][1] - cov[1][0]).abs() > 1e-12 {
        return Err(GvpError::Input("covariance matrix must be symmetric".into()));
    }
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| GvpError::Input(format!("covariance {cov:?} is not positive definite")))
}

/// Stationarity of `x_t = sum_j a_j x_{t-j} + e_t` via the step-down
/// recursion: stationary iff every partial autocorrelation lies in (-1, 1).
pub fn ar_is_stationary(coefs: &[f64]) -> bool {
    let mut phi = coefs.to_vec();
    while let Some(&kappa) = phi.last() {
        if !(kappa.abs() < 1.0) {
            return false;
        }
        let k = phi.len();
        let denom = 1.0 - kappa * kappa;
        phi = (0..k - 1)
            .map(|j| (phi[j] + kappa * phi[k - 2 - j]) / denom)
            .collect();
    }
    true
}

/// Stationary variance of an AR(4) from its Yule-Walker equations.
pub fn ar4_stationary_variance(ar: &[f64; 4], innovation_var: f64) -> Result<f64> {
    if !(innovation_var >= 0.0) {
        return Err(GvpError::Input("innovation variance must be >= 0".into()));
    }
    if !ar_is_stationary(ar) {
        return Err(GvpError::Input(format!("AR(4) coefficients {ar:?} are not stationary")));
    }
    // Unknowns gamma_0..gamma_4. Row 0: gamma_0 - sum_j a_j gamma_j = s2;
    // row k: gamma_k - sum_j a_j gamma_{|k-j|} = 0.
    let mut m = Matrix5::<f64>::identity();
    let mut rhs = Vector5::zeros();
    rhs[0] = innovation_var;
    for k in 0..5usize {
        for (j, a) in ar.iter().enumerate() {
            let lag = (k as i64 - (j as i64 + 1)).unsigned_abs() as usize;
            m[(k, lag)] -= a;
        }
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| GvpError::Numerical("singular Yule-Walker system".into()))?;
    Ok(sol[0])
}

/// GARCH path with the conditional variances: `var[t]` is `sigma_t^2` for
/// `t = 0..=T`, `y[0]` drawn with the seed variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GarchPath {
    pub y: Vec<f64>,
    pub var: Vec<f64>,
}

pub fn simulate_garch_path(
    mean: f64,
    omega: f64,
    alpha: f64,
    beta: f64,
    sigma0_sq: f64,
    t_len: usize,
    rng: &mut Rng,
) -> GarchPath {
    let mut y = Vec::with_capacity(t_len + 1);
    let mut var = Vec::with_capacity(t_len + 1);
    let mut v = sigma0_sq;
    for t in 0..=t_len {
        if t > 0 {
            let e = y[t - 1] - mean;
            v = omega + alpha * e * e + beta * v;
        }
        let eps: f64 = StandardNormal.sample(rng);
        y.push(mean + v.sqrt() * eps);
        var.push(v);
    }
    GarchPath { y, var }
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Simulates `t_len + 1` values after discarding `burn_in` draws.
pub fn simulate(spec: &DgpSpec, t_len: usize, burn_in: usize, seed: u64) -> Result<Series> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let total = burn_in + t_len + 1;
    let keep = |v: Vec<f64>| v[burn_in..].to_vec();
    match spec {
        DgpSpec::GarchGaussian {
            mean,
            omega,
            alpha,
            beta,
        } => {
            let stationary = omega / (1.0 - alpha - beta);
            let seed_var = if stationary.is_finite() && stationary > 0.0 {
                stationary
            } else {
                *omega
            };
            let path = simulate_garch_path(
                *mean,
                *omega,
                *alpha,
                *beta,
                seed_var,
                total - 1,
                &mut rng,
            );
            Ok(Series::univariate(keep(path.y)))
        }
        DgpSpec::SvLeverage {
            persistence,
            mean,
            cov,
        } => {
            let l = cholesky2(cov)?;
            let mut h = *mean;
            let y = (0..total)
                .map(|_| {
                    let (z1, z2) = (normal(&mut rng), normal(&mut rng));
                    let eps = l[(0, 0)] * z1;
                    let eta = l[(1, 0)] * z1 + l[(1, 1)] * z2;
                    h = mean + persistence * (h - mean) + eta;
                    (h / 2.0).exp() * eps
                })
                .collect();
            Ok(Series::univariate(keep(y)))
        }
        DgpSpec::SvSmoothTransition { coef, eta_var } => {
            let sd = eta_var.sqrt();
            let mut h = 0.0f64;
            let y = (0..total)
                .map(|_| {
                    let g = 1.0 / (1.0 + (-2.0 * h).exp());
                    h = coef * g * h + sd * normal(&mut rng);
                    (h / 2.0).exp() * normal(&mut rng)
                })
                .collect();
            Ok(Series::univariate(keep(y)))
        }
        DgpSpec::LstarT {
            rho1,
            rho2,
            gamma,
            c,
            sigma_eps,
            nu,
        } => {
            let t_dist = StudentT::new(*nu)
                .map_err(|e| GvpError::Input(format!("Student-t with nu={nu}: {e}")))?;
            let scale = ((nu - 2.0) / nu).sqrt();
            let mut prev = 0.0f64;
            let y = (0..total)
                .map(|_| {
                    let eps = scale * t_dist.sample(&mut rng);
                    let transition = 1.0 / (1.0 + (-gamma * (prev - c)).exp());
                    prev = rho1 * prev + rho2 * transition * prev + sigma_eps * eps;
                    prev
                })
                .collect();
            Ok(Series::univariate(keep(y)))
        }
        DgpSpec::DynRegression {
            sigma,
            ar_var,
            ar,
            a,
            b,
        } => {
            let l = cholesky2(sigma)?;
            let gamma0 = ar4_stationary_variance(ar, *ar_var)?;
            let f_sd = gamma0.sqrt();
            let sd = ar_var.sqrt();
            let mut lags = [0.0f64; 4];
            let mut ys = Vec::with_capacity(total);
            let mut x1s = Vec::with_capacity(total);
            let mut x2s = Vec::with_capacity(total);
            let mut x3s = Vec::with_capacity(total);
            for _ in 0..total {
                let (z1, z2) = (normal(&mut rng), normal(&mut rng));
                let x1 = l[(0, 0)] * z1;
                let x2 = l[(1, 0)] * z1 + l[(1, 1)] * z2;
                let x3 = ar.iter().zip(&lags).map(|(a, x)| a * x).sum::<f64>() + sd * normal(&mut rng);
                lags = [x3, lags[0], lags[1], lags[2]];
                let f = norm_cdf(x3 / f_sd);
                let beta: Vec<f64> = (0..3).map(|i| b[i] + a[i] * f).collect();
                ys.push(x1 * beta[0] + x2 * beta[1] + x3 * beta[2]);
                x1s.push(x1);
                x2s.push(x2);
                x3s.push(x3);
            }
            Series::with_covariates(
                keep(ys),
                vec!["x1".into(), "x2".into(), "x3".into()],
                vec![keep(x1s), keep(x2s), keep(x3s)],
            )
        }
    }
}
