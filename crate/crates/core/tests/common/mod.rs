//! Helpers shared by the integration tests: a central-difference gradient
//! oracle, simulated samples and random parameter points.
#![allow(dead_code)]

use gvp_core::dgp::{simulate, DgpSpec};
use gvp_core::models::{GarchModel, MixtureModel, ModelSpec, PredictiveModel};
use gvp_core::rng::rng_from_seed;
use gvp_core::{ResolvedRule, ScoringRuleSpec, Series, Tail};
use rand_distr::{Distribution, Normal};

pub const FD_STEP: f64 = 1e-5;

/// Central differences of `f` at `x`, step `h` in every coordinate.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, 1)`: relative once the magnitude exceeds one.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| rel_error(*x, *y))
        .fold(0.0, f64::max)
}

/// Rules resolved on the first `n` observations: LS, CRPS, upper and lower
/// CLS and MSIS (CRPS omitted when `with_crps` is false).
pub fn gradient_rules(obs: &[f64], with_crps: bool) -> Vec<(String, ResolvedRule)> {
    let mut specs = vec![
        ScoringRuleSpec::Ls,
        ScoringRuleSpec::cls(Tail::Upper, 0.9).unwrap(),
        ScoringRuleSpec::cls(Tail::Lower, 0.1).unwrap(),
        ScoringRuleSpec::msis(0.2).unwrap(),
    ];
    if with_crps {
        specs.insert(1, ScoringRuleSpec::Crps);
    }
    specs
        .into_iter()
        .map(|s| (s.label(), s.resolve(obs).unwrap()))
        .collect()
}

pub fn garch_series(n: usize, seed: u64) -> Series {
    simulate(&DgpSpec::garch_default(), n, 500, seed).unwrap()
}

pub fn lstar_series(n: usize, seed: u64) -> Series {
    simulate(&DgpSpec::lstar_default(), n, 500, seed).unwrap()
}

pub fn regression_series(n: usize, seed: u64) -> Series {
    simulate(&DgpSpec::dyn_regression_default(), n, 500, seed).unwrap()
}

/// Random transformed GARCH parameters around a stationary configuration.
pub fn garch_point(rng: &mut gvp_core::rng::Rng) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).unwrap();
    vec![
        0.1 * n.sample(rng),
        (0.1f64).ln() + 0.3 * n.sample(rng),
        -1.3 + 0.2 * n.sample(rng),
        0.7 + 0.2 * n.sample(rng),
    ]
}

/// Perturbation of `base` by independent `N(0, sd^2)` noise.
pub fn jitter(base: &[f64], sd: f64, rng: &mut gvp_core::rng::Rng) -> Vec<f64> {
    let n = Normal::new(0.0, sd).unwrap();
    base.iter().map(|b| b + n.sample(rng)).collect()
}

/// Worst relative error between the analytic criterion gradient and central
/// differences of the criterion over `points` parameter vectors.
pub fn criterion_gradient_error(
    model: &dyn PredictiveModel,
    rule: &ResolvedRule,
    series: &Series,
    points: &[Vec<f64>],
) -> f64 {
    let sample = series.sample();
    let mut worst: f64 = 0.0;
    for theta in points {
        let (value, grad) = model.criterion_gradient(rule, theta, &sample).unwrap();
        let direct = model.criterion(rule, theta, &sample).unwrap();
        worst = worst.max(rel_error(value, direct));
        let fd = central_difference(
            |x| model.criterion(rule, x, &sample).unwrap(),
            theta,
            FD_STEP,
        );
        worst = worst.max(max_rel_error(&grad, &fd));
    }
    worst
}

pub struct GradientCase {
    pub label: String,
    pub max_rel_error: f64,
}

/// Every implemented (model, rule) pair at `points` random parameter
/// vectors on `n` simulated observations.
pub fn gradient_suite(n: usize, points: usize, seed: u64) -> Vec<GradientCase> {
    let mut rng = rng_from_seed(seed);
    let mut cases = Vec::new();

    let series = garch_series(n, seed);
    let garch = GarchModel::from_window(&series.y[1..]).unwrap();
    let pts: Vec<Vec<f64>> = (0..points).map(|_| garch_point(&mut rng)).collect();
    for (label, rule) in gradient_rules(&series.y[1..], true) {
        cases.push(GradientCase {
            label: format!("garch x {label}"),
            max_rel_error: criterion_gradient_error(&garch, &rule, &series, &pts),
        });
    }

    let series = lstar_series(n, seed + 1);
    let mixture = MixtureModel::new(3).unwrap();
    let base = mixture.initial_theta(&series.sample());
    let pts: Vec<Vec<f64>> = (0..points).map(|_| jitter(&base, 0.3, &mut rng)).collect();
    for (label, rule) in gradient_rules(&series.y[1..], false) {
        cases.push(GradientCase {
            label: format!("mixture(K=3) x {label}"),
            max_rel_error: criterion_gradient_error(&mixture, &rule, &series, &pts),
        });
    }

    let series = regression_series(n, seed + 2);
    let bnn = ModelSpec::Bnn {
        inputs: vec![],
        activation: Default::default(),
    }
    .build(&series, n)
    .unwrap();
    let base = bnn.initial_theta(&series.sample());
    let pts: Vec<Vec<f64>> = (0..points).map(|_| jitter(&base, 0.3, &mut rng)).collect();
    for (label, rule) in gradient_rules(&series.y[1..], true) {
        cases.push(GradientCase {
            label: format!("bnn(p=1) x {label}"),
            max_rel_error: criterion_gradient_error(bnn.as_ref(), &rule, &series, &pts),
        });
    }
    cases
}
