use crate::{Cli, Command, GlobalArgs};
use gvp_core::config::{self, Scale, Target};
use gvp_core::dgp::{simulate, DgpSpec};
use gvp_core::harness::rolling::{thin, EngineKind};
use gvp_core::harness::{
    coherence_report, estimate_gvp_predictive, merging_report, rolling_evaluate,
    rolling_evaluate_series, run_pipeline, Engine, EvaluationRun, ExperimentConfig, PipelineConfig,
};
use gvp_core::io::{self, ColumnSelection};
use gvp_core::mcmc::{gibbs_log_target, gibbs_predictive_estimate, rwm_sample};
use gvp_core::models::ModelSpec;
use gvp_core::rng::{derive_seed, label_id};
use gvp_core::vb::{calibrate, VariationalParams};
use gvp_core::{GvpError, Result, ScoringRuleSpec, Series};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub enum Outcome {
    Complete,
    Partial(usize),
}

/// Everything needed to re-run a command bitwise identically.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    args: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a ExperimentConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pipeline: Option<&'a PipelineConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<serde_json::Value>,
}

fn write_manifest(
    out: &Path,
    file: &str,
    command: &str,
    config: Option<&ExperimentConfig>,
    pipeline: Option<&PipelineConfig>,
    details: Option<serde_json::Value>,
) -> Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args: std::env::args().collect(),
        config,
        pipeline,
        details,
    };
    io::write_json(&out.join(file), &manifest)
}

fn base_config(global: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut config = match &global.config {
        Some(path) => config::load_experiment(path)?,
        None => config::parse_experiment("")?,
    };
    apply_overrides(&mut config, global)?;
    Ok(config)
}

fn apply_overrides(config: &mut ExperimentConfig, global: &GlobalArgs) -> Result<()> {
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(engine) = &global.engine {
        config.engine = engine.parse()?;
    }
    if let Some(workers) = global.workers {
        config.workers = workers;
    }
    config.validate()
}

fn out_dir(global: &GlobalArgs) -> Result<PathBuf> {
    std::fs::create_dir_all(&global.out)?;
    Ok(global.out.clone())
}

fn selection_for(model: &ModelSpec) -> ColumnSelection {
    match model {
        ModelSpec::Bnn { inputs, .. } => ColumnSelection {
            y: "y".into(),
            covariates: Some(inputs.clone()),
        },
        _ => ColumnSelection::default(),
    }
}

fn series_for(config: &ExperimentConfig, data: Option<&Path>) -> Result<Series> {
    match data {
        Some(path) => io::load_series(path, &selection_for(&config.model)),
        None => simulate(&config.dgp, config.t_len, config.dgp_burn_in, config.series_seed()),
    }
}

fn default_dgp(name: &str) -> Result<DgpSpec> {
    Ok(match name {
        "garch-gaussian" | "garch" => DgpSpec::garch_default(),
        "sv-leverage" => DgpSpec::sv_leverage_default(),
        "sv-smooth-transition" => DgpSpec::sv_smooth_transition_default(),
        "lstar-t" | "lstar" => DgpSpec::lstar_default(),
        "dyn-regression" => DgpSpec::dyn_regression_default(),
        _ => return Err(GvpError::Input(format!("unknown DGP '{name}'"))),
    })
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { dgp, t, burn_in } => {
            let mut config = base_config(g)?;
            if let Some(name) = dgp {
                config.dgp = default_dgp(name)?;
            }
            if let Some(t) = t {
                config.t_len = *t;
            }
            if let Some(b) = burn_in {
                config.dgp_burn_in = *b;
            }
            let out = out_dir(g)?;
            let series =
                simulate(&config.dgp, config.t_len, config.dgp_burn_in, config.series_seed())?;
            io::write_series(&out.join("series.csv"), &series)?;
            write_manifest(
                &out,
                "manifest.json",
                "simulate",
                Some(&config),
                None,
                Some(serde_json::json!({ "series_seed": config.series_seed() })),
            )?;
            println!("wrote {} values to {}", series.y.len(), out.join("series.csv").display());
            Ok(Outcome::Complete)
        }
        Command::Fit { data, rule, n } => fit(g, data.as_deref(), rule, *n),
        Command::Predict { fit, data, n, m } => predict(g, fit, data.as_deref(), *n, *m),
        Command::Evaluate { data } => {
            let config = base_config(g)?;
            let out = out_dir(g)?;
            let run = match data {
                Some(path) => rolling_evaluate_series(&config, &series_for(&config, Some(path))?)?,
                None => rolling_evaluate(&config)?,
            };
            report_run(&out, &config, &run, "evaluate")
        }
        Command::Replicate { target } => {
            let target: Target = target.parse()?;
            let scale: Scale = g.scale.parse()?;
            let out = out_dir(g)?;
            let mut failed = 0;
            for mut config in config::preset(target, scale) {
                apply_overrides(&mut config, g)?;
                println!("== {} ({:?} scale) ==", config.name, scale);
                let run = rolling_evaluate(&config)?;
                if let Outcome::Partial(n) = report_run(&out, &config, &run, "replicate")? {
                    failed += n;
                }
            }
            Ok(if failed > 0 { Outcome::Partial(failed) } else { Outcome::Complete })
        }
        Command::Pipeline {
            data,
            column,
            d,
            alpha,
            k,
            holdout,
        } => {
            let mut pc = match &g.config {
                Some(path) => config::parse_pipeline(&std::fs::read_to_string(path)?)?,
                None => PipelineConfig::default(),
            };
            if let Some(d) = d {
                pc.d = *d;
            }
            if let Some(a) = alpha {
                pc.alpha = *a;
            }
            if let Some(k) = k {
                pc.k = *k;
            }
            if let Some(seed) = g.seed {
                pc.seed = seed;
            }
            pc.holdout |= holdout;
            let series = io::load_series(
                data,
                &ColumnSelection {
                    y: column.clone(),
                    covariates: Some(vec![]),
                },
            )?;
            let out = out_dir(g)?;
            let result = run_pipeline(&series.y, &pc)?;
            io::write_json(&out.join("interval.json"), &result)?;
            write_manifest(&out, "manifest.json", "pipeline", None, Some(&pc), None)?;
            println!(
                "{:.0}% interval for the next value: [{}, {}] (median of draws {})",
                100.0 * (1.0 - pc.alpha),
                io::format_sig(result.lower, 6),
                io::format_sig(result.upper, 6),
                io::format_sig(result.median, 6)
            );
            if let Some(h) = &result.holdout {
                println!(
                    "holdout y = {}: covered = {}, interval score = {}",
                    io::format_sig(h.y, 6),
                    h.covered,
                    io::format_sig(h.interval_score, 6)
                );
            }
            Ok(Outcome::Complete)
        }
    }
}

fn report_run(out: &Path, config: &ExperimentConfig, run: &EvaluationRun, command: &str) -> Result<Outcome> {
    let name = &config.name;
    let mut coherence = Vec::new();
    for m in &run.matrices {
        let engine = m.engine.label();
        io::write_score_matrix(&out.join(format!("{name}_{engine}_matrix.csv")), m)?;
        let rep = coherence_report(m);
        io::write_json(&out.join(format!("{name}_{engine}_coherence.json")), &rep)?;
        println!("[{engine}] average out-of-sample scores (rows: update rule)");
        print!("{}", io::render_matrix(m));
        print!("{}", io::render_coherence(&rep));
        coherence.push(rep);
    }
    let merging = match (run.matrix(EngineKind::Vb), run.matrix(EngineKind::Mcmc)) {
        (Some(vb), Some(mcmc)) => {
            let rep = merging_report(vb, mcmc)?;
            io::write_json(&out.join(format!("{name}_merging.json")), &rep)?;
            print!("{}", io::render_merging(&rep));
            Some(rep)
        }
        _ => None,
    };
    io::write_score_log(&out.join(format!("{name}_scores_log.csv")), &run.log)?;
    let seeds: Vec<_> = config
        .update_rules
        .iter()
        .map(|r| (r.label(), config.cell_seed(r)))
        .collect();
    write_manifest(
        out,
        &format!("{name}_manifest.json"),
        command,
        Some(config),
        None,
        Some(serde_json::json!({
            "series_seed": config.series_seed(),
            "cell_seeds": seeds,
            "cells": run.cells,
            "matrices": run.matrices,
            "merging_max_abs_diff": merging.and_then(|m| m.max_abs_diff),
        })),
    )?;
    let failed = run.failed_cells();
    Ok(if failed > 0 { Outcome::Partial(failed) } else { Outcome::Complete })
}

/// Output of `fit`, consumed by `predict`.
#[derive(Debug, Serialize, Deserialize)]
struct FitArtifact {
    model: ModelSpec,
    /// Window that fixed the data-dependent constants.
    n0: usize,
    n: usize,
    rule: String,
    data: Option<PathBuf>,
    param_names: Vec<String>,
    seed: u64,
    vb: Option<VariationalParams>,
    /// Thinned exact-posterior draws.
    mcmc_draws: Option<Vec<Vec<f64>>>,
}

fn fit(g: &GlobalArgs, data: Option<&Path>, rule: &str, n: Option<usize>) -> Result<Outcome> {
    let config = base_config(g)?;
    let series = series_for(&config, data)?;
    let n = n.unwrap_or(series.n());
    if n < 2 || n > series.n() {
        return Err(GvpError::Input(format!("n must lie in [2, {}]", series.n())));
    }
    let n0 = config.n0.min(n);
    let spec: ScoringRuleSpec = rule.parse()?;
    let model = config.model.build(&series, n0)?;
    let resolved = spec.resolve(&series.y[1..=n0])?;
    let sample = series.sample().truncated(n);
    let out = out_dir(g)?;
    let seed = derive_seed(config.seed, &[label_id("fit"), label_id(&spec.label())]);

    let mut vb = None;
    if config.engine.runs_vb() || config.engine == Engine::Both {
        let vb_config = gvp_core::vb::VbConfig {
            w: config.w,
            seed: derive_seed(seed, &[label_id("vb")]),
            ..config.vb.clone()
        };
        let cal = calibrate(model.as_ref(), &resolved, &sample, &vb_config, None)?;
        let smooth = cal.smoothed_elbo(config.vb.elbo_monitor_window);
        let rows: Vec<Vec<f64>> = cal
            .elbo_trace
            .iter()
            .zip(&smooth)
            .map(|(e, s)| vec![*e, *s])
            .collect();
        io::write_draws(&out.join("elbo.csv"), &["elbo".into(), "smoothed".into()], &rows)?;
        println!(
            "VB: {} iterations, {} skipped, final smoothed ELBO {}",
            cal.iterations,
            cal.skipped,
            smooth.last().map(|v| io::format_sig(*v, 6)).unwrap_or_default()
        );
        vb = Some(cal.lambda);
    }
    let mut mcmc_draws = None;
    if config.engine.runs_mcmc() {
        let init = vb
            .as_ref()
            .map(|l| l.mu.clone())
            .unwrap_or_else(|| model.initial_theta(&sample));
        let mcmc = gvp_core::mcmc::McmcConfig {
            seed: derive_seed(seed, &[label_id("mcmc")]),
            ..config.mcmc.clone()
        };
        let target = gibbs_log_target(model.as_ref(), &resolved, &sample, config.w);
        let run = rwm_sample(target, &init, &mcmc, None)?;
        io::write_draws(&out.join("draws.csv"), &model.param_names(), &run.draws)?;
        println!("MCMC: acceptance {:.3}", run.acceptance_rate);
        mcmc_draws = Some(thin(&run.draws, config.m_predictive));
    }
    let artifact = FitArtifact {
        model: config.model.clone(),
        n0,
        n,
        rule: spec.label(),
        data: data.map(Path::to_path_buf),
        param_names: model.param_names(),
        seed,
        vb,
        mcmc_draws,
    };
    io::write_json(&out.join("fit.json"), &artifact)?;
    write_manifest(&out, "manifest.json", "fit", Some(&config), None, None)?;
    println!("wrote {}", out.join("fit.json").display());
    Ok(Outcome::Complete)
}

#[derive(Debug, Serialize)]
struct PredictionSummary {
    engine: EngineKind,
    n: usize,
    mean: f64,
    quantiles: Vec<(f64, f64)>,
    observed: Option<f64>,
}

fn predict(
    g: &GlobalArgs,
    fit_path: &Path,
    data: Option<&Path>,
    n: Option<usize>,
    m: Option<usize>,
) -> Result<Outcome> {
    let config = base_config(g)?;
    let artifact: FitArtifact = serde_json::from_reader(std::fs::File::open(fit_path)?)?;
    let data = data.map(Path::to_path_buf).or(artifact.data.clone());
    let mut config = config;
    config.model = artifact.model.clone();
    let series = series_for(&config, data.as_deref())?;
    let n = n.unwrap_or(artifact.n);
    if n >= series.y.len() {
        return Err(GvpError::Input(format!("n={n} is beyond the series")));
    }
    let model = artifact.model.build(&series, artifact.n0)?;
    let sample = series.sample();
    let m = m.unwrap_or(config.m_predictive);
    let (engine, pred) = match (&artifact.vb, &artifact.mcmc_draws) {
        (_, Some(draws)) if config.engine == Engine::Mcmc || artifact.vb.is_none() => (
            EngineKind::Mcmc,
            gibbs_predictive_estimate(&thin(draws, m), model.as_ref(), &sample, n)?,
        ),
        (Some(lambda), _) => (
            EngineKind::Vb,
            estimate_gvp_predictive(
                lambda,
                model.as_ref(),
                &sample,
                n,
                m,
                derive_seed(artifact.seed, &[label_id("predict"), n as u64]),
            )?,
        ),
        _ => return Err(GvpError::Input("fit artifact holds no posterior".into())),
    };
    let levels = [0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975];
    let quantiles = levels
        .iter()
        .map(|&a| pred.quantile(a).map(|q| (a, q)))
        .collect::<Result<Vec<_>>>()?;
    let summary = PredictionSummary {
        engine,
        n,
        mean: pred.mean(),
        quantiles,
        observed: series.y.get(n + 1).copied(),
    };
    let out = out_dir(g)?;
    io::write_json(&out.join("predictive.json"), &summary)?;
    write_manifest(&out, "manifest.json", "predict", Some(&config), None, None)?;
    println!("predictive for y_{} ({}): mean {}", n + 1, engine.label(), io::format_sig(summary.mean, 6));
    for (a, q) in &summary.quantiles {
        println!("  q{a:<6} {}", io::format_sig(*q, 6));
    }
    Ok(Outcome::Complete)
}
