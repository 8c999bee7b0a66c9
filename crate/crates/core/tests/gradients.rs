//! Analytic gradients of priors, the variational density and individual
//! criteria against central differences.

mod common;

use common::*;
use gvp_core::models::{GarchModel, MixtureModel, ModelSpec, PredictiveModel};
use gvp_core::rng::rng_from_seed;
use gvp_core::series::Sample;
use gvp_core::ScoringRuleSpec;

fn check_prior(model: &dyn PredictiveModel, points: &[Vec<f64>]) {
    for theta in points {
        let fd = central_difference(|x| model.log_prior(x), theta, FD_STEP);
        let err = max_rel_error(&model.grad_log_prior(theta), &fd);
        assert!(err < 1e-6, "{}: prior gradient error {err:e}", model.name());
    }
}

#[test]
fn prior_gradients_match_differences() {
    let mut rng = rng_from_seed(3);
    let garch = GarchModel::new(1.0).unwrap();
    let pts: Vec<_> = (0..10).map(|_| garch_point(&mut rng)).collect();
    check_prior(&garch, &pts);

    let series = lstar_series(200, 4);
    let mixture = MixtureModel::new(4).unwrap();
    let base = mixture.initial_theta(&series.sample());
    let pts: Vec<_> = (0..10).map(|_| jitter(&base, 0.5, &mut rng)).collect();
    check_prior(&mixture, &pts);
}

#[test]
fn garch_gradient_survives_short_samples() {
    // A single scored term exercises the seeded derivative recursion.
    let series = garch_series(1, 8);
    let model = GarchModel::from_window(&series.y[..]).unwrap();
    let theta = vec![0.05, (0.1f64).ln(), -1.2, 0.8];
    for (label, rule) in gradient_rules(&series.y[..], true) {
        let err = criterion_gradient_error(&model, &rule, &series, &[theta.clone()]);
        assert!(err < 1e-5, "{label}: {err:e}");
    }
}

#[test]
fn mixture_gradient_with_many_components() {
    let series = lstar_series(80, 12);
    let model = MixtureModel::new(6).unwrap();
    let mut rng = rng_from_seed(13);
    let base = model.initial_theta(&series.sample());
    let pts: Vec<_> = (0..3).map(|_| jitter(&base, 0.4, &mut rng)).collect();
    for (label, rule) in gradient_rules(&series.y[1..], false) {
        let err = criterion_gradient_error(&model, &rule, &series, &pts);
        assert!(err < 1e-4, "{label}: {err:e}");
    }
}

#[test]
fn bnn_gradient_with_covariates() {
    let series = regression_series(100, 21);
    let model = ModelSpec::Bnn {
        inputs: vec!["x1".into(), "x2".into()],
        activation: Default::default(),
    }
    .build(&series, 100)
    .unwrap();
    let mut rng = rng_from_seed(22);
    let base = model.initial_theta(&series.sample());
    let pts: Vec<_> = (0..3).map(|_| jitter(&base, 0.3, &mut rng)).collect();
    for (label, rule) in gradient_rules(&series.y[1..], true) {
        let err = criterion_gradient_error(model.as_ref(), &rule, &series, &pts);
        assert!(err < 1e-4, "{label}: {err:e}");
    }
}

#[test]
fn sigmoid_network_gradient() {
    let series = regression_series(60, 31);
    let model = ModelSpec::Bnn {
        inputs: vec!["x1".into()],
        activation: gvp_core::models::Activation::Sigmoid,
    }
    .build(&series, 60)
    .unwrap();
    let theta = model.initial_theta(&series.sample());
    let rule = ScoringRuleSpec::Ls.resolve(&series.y[1..]).unwrap();
    let err = criterion_gradient_error(model.as_ref(), &rule, &series, &[theta]);
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn truncated_samples_ignore_later_data() {
    let series = garch_series(50, 40);
    let model = GarchModel::from_window(&series.y[1..]).unwrap();
    let theta = vec![0.0, (0.1f64).ln(), -1.3, 0.8];
    let rule = ScoringRuleSpec::Ls.resolve(&series.y[1..]).unwrap();
    let mut altered = series.y.clone();
    altered[40] += 100.0;
    let a = model.criterion(&rule, &theta, &series.sample().truncated(30)).unwrap();
    let b = model.criterion(&rule, &theta, &Sample::univariate(&altered).truncated(30)).unwrap();
    assert_eq!(a, b);
}
