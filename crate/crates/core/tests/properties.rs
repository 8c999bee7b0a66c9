//! Property and statistical checks on predictive objects, scoring rules,
//! samplers, simulators and file round trips.

use gvp_core::dgp::{ar4_stationary_variance, simulate, simulate_garch_path, DgpSpec};
use gvp_core::harness::rolling::entries_from_log;
use gvp_core::harness::{kde_predictive, rolling_evaluate, Engine, EngineKind, ExperimentConfig};
use gvp_core::io::{load_series, read_score_log, write_score_log, write_series, ColumnSelection};
use gvp_core::mcmc::{rwm_sample, McmcConfig};
use gvp_core::models::garch::{garch_filter, GarchParams};
use gvp_core::models::ModelSpec;
use gvp_core::rng::rng_from_seed;
use gvp_core::{ConditionalPredictive, GaussianMixture, GvpError, ScoringRuleSpec, Tail};
use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

fn mixture_strategy() -> impl Strategy<Value = GaussianMixture> {
    prop::collection::vec((0.05f64..1.0, -3.0f64..3.0, 0.05f64..2.0), 1..6).prop_map(|parts| {
        let (w, (m, s)): (Vec<f64>, (Vec<f64>, Vec<f64>)) =
            parts.into_iter().map(|(w, m, s)| (w, (m, s * s))).unzip();
        let total: f64 = w.iter().sum();
        GaussianMixture::new(w.iter().map(|x| x / total).collect(), m, s).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantile_inverts_cdf(mix in mixture_strategy(), level in 0.001f64..0.999) {
        let q = mix.quantile(level).unwrap();
        prop_assert!((mix.cdf(q) - level).abs() <= 1e-8);
    }

    #[test]
    fn cdf_is_monotone(mix in mixture_strategy(), a in -10.0f64..10.0, step in 0.0f64..5.0) {
        prop_assert!(mix.cdf(a) <= mix.cdf(a + step));
        prop_assert!((mix.cdf(a) + mix.sf(a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_has_unit_mass(mix in mixture_strategy()) {
        let mass = simpson(|x| mix.pdf(x), -20.0, 20.0, 40_000);
        prop_assert!((mass - 1.0).abs() <= 1e-6, "mass {}", mass);
    }

    #[test]
    fn ensemble_cdf_averages_members(
        a in mixture_strategy(),
        b in mixture_strategy(),
        m in -2.0f64..2.0,
        x in -6.0f64..6.0,
    ) {
        let members = vec![
            ConditionalPredictive::Mixture(a.clone()),
            ConditionalPredictive::Mixture(b.clone()),
            ConditionalPredictive::gaussian(m, 1.0).unwrap(),
        ];
        let expected = members.iter().map(|p| p.cdf(x)).sum::<f64>() / 3.0;
        let ensemble = ConditionalPredictive::ensemble(members).unwrap();
        prop_assert!((ensemble.cdf(x) - expected).abs() < 1e-14);
        prop_assert!((ensemble.to_mixture().cdf(x) - expected).abs() < 1e-13);
    }

    /// Expected score under `N(m, s^2)` is largest for the true distribution.
    #[test]
    fn gaussian_scores_are_proper(
        m in -1.0f64..1.0,
        s in 0.3f64..2.0,
        dm in -1.0f64..1.0,
        ds in 0.5f64..2.0,
    ) {
        let training: Vec<f64> = (0..200).map(|i| -2.5 + 0.025 * i as f64).collect();
        let rules = [
            ScoringRuleSpec::Ls,
            ScoringRuleSpec::Crps,
            ScoringRuleSpec::cls(Tail::Upper, 0.8).unwrap(),
            ScoringRuleSpec::cls(Tail::Lower, 0.2).unwrap(),
            ScoringRuleSpec::msis(0.2).unwrap(),
        ];
        let density = |y: f64| (-(y - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        for spec in rules {
            let rule = spec.resolve(&training).unwrap();
            let expected = |mean: f64, sd: f64| {
                simpson(
                    |y| density(y) * rule.gaussian(mean, sd * sd, y).unwrap().value,
                    m - 12.0 * s,
                    m + 12.0 * s,
                    20_000,
                )
            };
            let truth = expected(m, s);
            let other = expected(m + dm, s * ds);
            prop_assert!(truth >= other - 1e-6, "{}: {} < {}", spec.label(), truth, other);
        }
    }
}

#[test]
fn metropolis_reproduces_a_step_density() {
    // Piecewise-constant density on [0, 5) with bin masses 1:2:4:2:1.
    let weights: [f64; 5] = [0.1, 0.2, 0.4, 0.2, 0.1];
    let log_target = |x: &[f64]| {
        if (0.0..5.0).contains(&x[0]) {
            Ok(weights[x[0] as usize].ln())
        } else {
            Err(GvpError::Domain("outside support".into()))
        }
    };
    let config = McmcConfig {
        burn_in: 5_000,
        retained: 500_000,
        seed: 17,
        initial_scale: 1.0,
        ..Default::default()
    };
    let run = rwm_sample(log_target, &[2.5], &config, None).unwrap();
    let mut counts = [0usize; 5];
    for d in run.draws.iter().step_by(50) {
        counts[d[0] as usize] += 1;
    }
    let total: usize = counts.iter().sum();
    let chi2: f64 = counts
        .iter()
        .zip(weights)
        .map(|(&c, w)| {
            let e = w * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    // 99.9% point of chi-square with 4 degrees of freedom.
    assert!(chi2 < 18.47, "chi-square {chi2}, counts {counts:?}");
}

#[test]
fn kde_quantile_of_standard_normal() {
    let mut rng = rng_from_seed(5);
    let n = Normal::new(0.0, 1.0).unwrap();
    let draws: Vec<f64> = (0..5000).map(|_| n.sample(&mut rng)).collect();
    let q = kde_predictive(&draws).unwrap().quantile(0.975).unwrap();
    assert!((1.85..=2.10).contains(&q), "{q}");
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

#[test]
fn sv_leverage_moments() {
    // With h = a + eta, a independent of (eps, eta), a ~ N(mu, phi^2 v),
    // v = s_eta^2 / (1 - phi^2):
    //   E[y]   = E[e^{a/2}] cov(eps, eta) / 2 e^{s_eta^2 / 8}
    //   E[y^2] = e^{mu + v/2} (1 + cov(eps, eta)^2)
    let (phi, mu, c, s2): (f64, f64, f64, f64) = (0.7, -2.0, -0.35, 0.25);
    let v = s2 / (1.0 - phi * phi);
    let va = phi * phi * v;
    let mean = (mu / 2.0 + va / 8.0).exp() * (c / 2.0) * (s2 / 8.0).exp();
    let second = (mu + v / 2.0).exp() * (1.0 + c * c);

    let s = simulate(&DgpSpec::sv_leverage_default(), 400_000, 1000, 3).unwrap();
    let (m, _) = mean_var(&s.y);
    let sq = s.y.iter().map(|y| y * y).sum::<f64>() / s.y.len() as f64;
    assert!((m - mean).abs() < 0.004, "mean {m} vs {mean}");
    assert!((sq - second).abs() / second < 0.03, "E[y^2] {sq} vs {second}");
}

#[test]
fn standardized_t_innovations_have_unit_variance() {
    let spec = DgpSpec::LstarT {
        rho1: 0.0,
        rho2: 0.0,
        gamma: 5.0,
        c: 0.0,
        sigma_eps: 1.0,
        nu: 6.0,
    };
    let s = simulate(&spec, 400_000, 0, 8).unwrap();
    let (m, v) = mean_var(&s.y);
    assert!(m.abs() < 0.01, "{m}");
    assert!((v - 1.0).abs() < 0.02, "{v}");
}

#[test]
fn ar4_variance_matches_ma_weights_and_simulation() {
    let ar = [0.5, 0.2, 0.15, 0.1];
    let sigma2 = 0.2;
    // psi_j = sum_i ar_i psi_{j-i}, psi_0 = 1.
    let mut psi = vec![1.0f64];
    for j in 1..2000 {
        let next = (1..=4)
            .filter(|i| *i <= j)
            .map(|i| ar[i - 1] * psi[j - i])
            .sum();
        psi.push(next);
    }
    let oracle = sigma2 * psi.iter().map(|p| p * p).sum::<f64>();
    let lib = ar4_stationary_variance(&ar, sigma2).unwrap();
    assert!((lib - oracle).abs() < 1e-10, "{lib} vs {oracle}");

    let s = simulate(&DgpSpec::dyn_regression_default(), 400_000, 1000, 4).unwrap();
    let (_, v) = mean_var(&s.covariates[2]);
    assert!((v - oracle).abs() / oracle < 0.04, "{v} vs {oracle}");
}

#[test]
fn garch_filter_recovers_simulated_variances() {
    let mut rng = rng_from_seed(12);
    let path = simulate_garch_path(0.05, 0.1, 0.1, 0.8, 0.5, 500, &mut rng);
    let p = GarchParams::new(0.05, 0.1, 0.1, 0.8).unwrap();
    let filtered = garch_filter(&p, path.var[0], &path.y[..500]).unwrap();
    for (a, b) in filtered.var.iter().zip(&path.var[1..]) {
        assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
    }
}

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        "small",
        DgpSpec::garch_default(),
        ModelSpec::Garch,
        vec![ScoringRuleSpec::Ls, ScoringRuleSpec::Crps, ScoringRuleSpec::msis(0.2).unwrap()],
    );
    c.t_len = 300;
    c.n0 = 200;
    c.refit_every = 50;
    c.m_predictive = 40;
    c.engine = Engine::Vb;
    c.vb.iterations = 300;
    c.warm_iterations = 100;
    c
}

#[test]
fn score_log_reproduces_the_matrix() {
    let run = rolling_evaluate(&small_config()).unwrap();
    let m = run.matrix(EngineKind::Vb).unwrap();
    assert_eq!(run.log.len(), 3 * 3 * 100);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    write_score_log(&path, &run.log).unwrap();
    let log = read_score_log(&path).unwrap();
    assert_eq!(log, run.log);
    let rebuilt = entries_from_log(&log, EngineKind::Vb, &m.update_labels, &m.eval_labels);
    assert_eq!(rebuilt, m.entries);
}

#[test]
fn parallel_cells_match_serial_run() {
    let serial = rolling_evaluate(&small_config()).unwrap();
    let mut config = small_config();
    config.workers = 3;
    let parallel = rolling_evaluate(&config).unwrap();
    assert_eq!(serial.matrices, parallel.matrices);
}

#[test]
fn simulated_series_round_trips_through_csv() {
    let s = simulate(&DgpSpec::dyn_regression_default(), 500, 100, 21).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    write_series(&path, &s).unwrap();
    let back = load_series(&path, &ColumnSelection::default()).unwrap();
    assert_eq!(back.covariate_names, s.covariate_names);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.y), bits(&s.y));
    for (a, b) in back.covariates.iter().zip(&s.covariates) {
        assert_eq!(bits(a), bits(b));
    }
}
