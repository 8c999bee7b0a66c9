//! Expanding-window out-of-sample evaluation.
//!
//! For every update rule the Gibbs posterior is approximated on `y_{1:n}`,
//! the draw-averaged predictive for `y_{n+1}` is scored under every
//! evaluation rule, and `n` advances to `T - 1`. Posteriors are refitted
//! every `refit_every` steps; between refits the draws are held fixed while
//! the information set keeps growing.

use crate::dgp::{simulate, DgpSpec, DEFAULT_BURN_IN};
use crate::error::{GvpError, Result};
use crate::mcmc::{gibbs_log_target, rwm_sample, McmcConfig, Proposal};
use crate::models::{ModelSpec, PredictiveModel};
use crate::predictive::ConditionalPredictive;
use crate::rng::{derive_seed, label_id, rng_from_seed};
use crate::scoring::{ResolvedRule, ScoringRuleSpec};
use crate::series::{Sample, Series};
use crate::vb::{calibrate, sample_variational, VariationalParams, VbConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Share of variational draws that may be resampled before giving up.
pub const MAX_RESAMPLED_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Vb,
    Mcmc,
    Both,
}

impl Engine {
    pub fn runs_vb(self) -> bool {
        matches!(self, Engine::Vb | Engine::Both)
    }

    pub fn runs_mcmc(self) -> bool {
        matches!(self, Engine::Mcmc | Engine::Both)
    }
}

impl std::str::FromStr for Engine {
    type Err = GvpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vb" => Ok(Engine::Vb),
            "mcmc" => Ok(Engine::Mcmc),
            "both" => Ok(Engine::Both),
            _ => Err(GvpError::Input(format!("unknown engine '{s}'"))),
        }
    }
}

/// The engine that produced a particular matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Vb,
    Mcmc,
}

impl EngineKind {
    pub fn label(self) -> &'static str {
        match self {
            EngineKind::Vb => "vb",
            EngineKind::Mcmc => "mcmc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dgp: DgpSpec,
    pub dgp_burn_in: usize,
    pub model: ModelSpec,
    #[serde(with = "crate::config::rule_labels")]
    pub update_rules: Vec<ScoringRuleSpec>,
    #[serde(with = "crate::config::rule_labels")]
    pub eval_rules: Vec<ScoringRuleSpec>,
    /// Number of observations `T`; evaluation covers `n = n0..T-1`.
    pub t_len: usize,
    pub n0: usize,
    pub refit_every: usize,
    pub warm_start: bool,
    /// VB iterations on warm-started refits.
    pub warm_iterations: usize,
    /// Burn-in on warm-started MCMC refits.
    pub warm_burn_in: usize,
    /// Draws averaged into each predictive.
    pub m_predictive: usize,
    pub engine: Engine,
    /// Learning rate; overrides the value inside `vb`.
    pub w: f64,
    pub seed: u64,
    pub workers: usize,
    pub vb: VbConfig,
    pub mcmc: McmcConfig,
}

impl ExperimentConfig {
    /// Defaults for everything except the data and model.
    pub fn new(name: &str, dgp: DgpSpec, model: ModelSpec, rules: Vec<ScoringRuleSpec>) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            dgp,
            dgp_burn_in: DEFAULT_BURN_IN,
            model,
            update_rules: rules.clone(),
            eval_rules: rules,
            t_len: 6000,
            n0: 1000,
            refit_every: 1,
            warm_start: true,
            warm_iterations: 1000,
            warm_burn_in: 5000,
            m_predictive: 1000,
            engine: Engine::Vb,
            w: 1.0,
            seed: 0,
            workers: 1,
            vb: VbConfig::default(),
            mcmc: McmcConfig::default(),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.t_len.saturating_sub(self.n0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 < 2 || self.n0 >= self.t_len {
            return Err(GvpError::Input(format!(
                "initial window n0={} must satisfy 2 <= n0 < T={}",
                self.n0, self.t_len
            )));
        }
        if self.update_rules.is_empty() || self.eval_rules.is_empty() {
            return Err(GvpError::Input("rule lists must be non-empty".into()));
        }
        for rules in [&self.update_rules, &self.eval_rules] {
            let mut labels: Vec<String> = rules.iter().map(|r| r.label()).collect();
            labels.sort();
            labels.dedup();
            if labels.len() != rules.len() {
                return Err(GvpError::Input("rule lists must not repeat a rule".into()));
            }
        }
        if !self.model.supports_crps()
            && self
                .update_rules
                .iter()
                .chain(&self.eval_rules)
                .any(|r| matches!(r, ScoringRuleSpec::Crps))
        {
            return Err(GvpError::Input(format!(
                "{} has no closed-form CRPS; remove CRPS from the rule lists",
                self.model.label()
            )));
        }
        if self.refit_every == 0 || self.m_predictive == 0 || self.warm_iterations == 0 {
            return Err(GvpError::Input(
                "refit_every, m_predictive and warm_iterations must be >= 1".into(),
            ));
        }
        if self.workers == 0 {
            return Err(GvpError::Input("workers must be >= 1".into()));
        }
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(GvpError::Input(format!("w must be positive, got {}", self.w)));
        }
        self.dgp.validate()?;
        self.vb_config().validate()?;
        if self.engine.runs_mcmc() {
            self.mcmc.validate()?;
        }
        Ok(())
    }

    pub(crate) fn vb_config(&self) -> VbConfig {
        VbConfig {
            w: self.w,
            ..self.vb.clone()
        }
    }

    /// Seed of the simulated series.
    pub fn series_seed(&self) -> u64 {
        derive_seed(self.seed, &[label_id("series")])
    }

    /// Seed owned by the cell of one update rule.
    pub fn cell_seed(&self, rule: &ScoringRuleSpec) -> u64 {
        derive_seed(self.seed, &[label_id("cell"), label_id(&rule.label())])
    }
}

/// Average out-of-sample scores: rows are update rules, columns evaluation
/// rules. Entries of failed rows are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub engine: EngineKind,
    pub update_labels: Vec<String>,
    pub eval_labels: Vec<String>,
    pub entries: Vec<Vec<Option<f64>>>,
    /// Observations scored per cell (`H`).
    pub evaluations: usize,
    /// Observations whose score was degenerate, excluded from the average.
    pub degenerate: Vec<Vec<usize>>,
    pub failures: Vec<Option<String>>,
    pub master_seed: u64,
    pub refit_every: usize,
}

impl ScoreMatrix {
    pub fn failed_cells(&self) -> usize {
        self.failures.iter().filter(|f| f.is_some()).count()
    }

    pub fn entry(&self, update: &str, eval: &str) -> Option<f64> {
        let i = self.update_labels.iter().position(|l| l == update)?;
        let j = self.eval_labels.iter().position(|l| l == eval)?;
        self.entries[i][j]
    }

    /// Index of the best row in column `j`, ignoring failed rows.
    pub fn column_best(&self, j: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in self.entries.iter().enumerate() {
            if let Some(v) = row[j] {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

/// One per-observation score, the unit of the persisted log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLogRow {
    pub engine: EngineKind,
    pub update_rule: String,
    pub n: usize,
    pub eval_rule: String,
    /// `None` when the score was degenerate.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitDiagnostics {
    pub engine: EngineKind,
    pub n: usize,
    pub vb_skipped: usize,
    pub mcmc_acceptance: Option<f64>,
    pub resampled_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub update_rule: String,
    pub seed: u64,
    pub refits: Vec<RefitDiagnostics>,
    pub failures: Vec<(EngineKind, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub matrices: Vec<ScoreMatrix>,
    pub log: Vec<ScoreLogRow>,
    pub cells: Vec<CellReport>,
}

impl EvaluationRun {
    pub fn matrix(&self, engine: EngineKind) -> Option<&ScoreMatrix> {
        self.matrices.iter().find(|m| m.engine == engine)
    }

    pub fn failed_cells(&self) -> usize {
        self.matrices.iter().map(ScoreMatrix::failed_cells).sum()
    }
}

/// Draws from `q_lambda` whose predictives over `range` are all valid,
/// together with those predictive paths. Invalid draws are replaced.
pub fn valid_variational_paths(
    lambda: &VariationalParams,
    model: &dyn PredictiveModel,
    sample: &Sample,
    range: Range<usize>,
    m: usize,
    seed: u64,
) -> Result<(Vec<Vec<ConditionalPredictive>>, usize)> {
    let mut rng = rng_from_seed(seed);
    let limit = (MAX_RESAMPLED_SHARE * m as f64).floor() as usize;
    let mut paths = Vec::with_capacity(m);
    let mut resampled = 0;
    while paths.len() < m {
        let theta = sample_variational(lambda, 1, &mut rng).remove(0);
        match model.predictives(&theta, sample, range.clone()) {
            Ok(p) => paths.push(p),
            Err(e @ (GvpError::Degenerate { .. } | GvpError::Domain(_) | GvpError::Numerical(_))) => {
                resampled += 1;
                log::debug!("variational draw resampled: {e}");
                if resampled > limit {
                    return Err(GvpError::degenerate(
                        None,
                        format!("{resampled} of {m} variational draws gave invalid predictives"),
                    ));
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok((paths, resampled))
}

/// GVP predictive for `y_{n+1}`: `m` variational draws mapped through the
/// model's conditional predictive and averaged with equal weights.
pub fn estimate_gvp_predictive(
    lambda: &VariationalParams,
    model: &dyn PredictiveModel,
    sample: &Sample,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<ConditionalPredictive> {
    let (paths, _) = valid_variational_paths(lambda, model, sample, n..n + 1, m, seed)?;
    ConditionalPredictive::ensemble(paths.into_iter().map(|mut p| p.remove(0)).collect())
}

/// `m` evenly spaced draws out of `draws` (all of them if fewer).
pub fn thin(draws: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    if draws.len() <= m {
        return draws.to_vec();
    }
    (0..m).map(|i| draws[i * draws.len() / m].clone()).collect()
}

fn mcmc_paths(
    draws: &[Vec<f64>],
    model: &dyn PredictiveModel,
    sample: &Sample,
    range: Range<usize>,
) -> Result<Vec<Vec<ConditionalPredictive>>> {
    draws
        .iter()
        .map(|theta| model.predictives(theta, sample, range.clone()))
        .collect()
}

/// Scores the draw-averaged predictive at every `n` of a refit segment.
fn score_segment(
    paths: &[Vec<ConditionalPredictive>],
    range: Range<usize>,
    y: &[f64],
    eval: &[ResolvedRule],
) -> Result<Vec<Vec<Option<f64>>>> {
    let mut out = Vec::with_capacity(range.len());
    for (offset, n) in range.enumerate() {
        let members: Vec<ConditionalPredictive> = paths.iter().map(|p| p[offset].clone()).collect();
        let mix = ConditionalPredictive::Mixture(ConditionalPredictive::ensemble(members)?.to_mixture());
        let target = y[n + 1];
        let row = eval
            .iter()
            .map(|rule| match rule.score(&mix, target) {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                Ok(_) => Ok(None),
                Err(GvpError::Degenerate { .. } | GvpError::Domain(_) | GvpError::Numerical(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

struct CellOutput {
    report: CellReport,
    /// Per engine: per-n score rows, or the failure message.
    results: Vec<(EngineKind, std::result::Result<Vec<Vec<Option<f64>>>, String>)>,
}

struct CellContext<'a> {
    config: &'a ExperimentConfig,
    model: &'a dyn PredictiveModel,
    series: &'a Series,
    eval: &'a [ResolvedRule],
    training: &'a [f64],
}

fn refit_points(config: &ExperimentConfig) -> Vec<Range<usize>> {
    (config.n0..config.t_len)
        .step_by(config.refit_every)
        .map(|start| start..(start + config.refit_every).min(config.t_len))
        .collect()
}

fn run_cell(ctx: &CellContext, rule: &ScoringRuleSpec) -> CellOutput {
    let config = ctx.config;
    let seed = config.cell_seed(rule);
    let mut report = CellReport {
        update_rule: rule.label(),
        seed,
        refits: Vec::new(),
        failures: Vec::new(),
    };
    let mut vb_scores: std::result::Result<Vec<_>, String> = Ok(Vec::new());
    let mut mcmc_scores: std::result::Result<Vec<_>, String> = Ok(Vec::new());
    let resolved = match rule.resolve(ctx.training) {
        Ok(r) => r,
        Err(e) => {
            let msg = e.to_string();
            vb_scores = Err(msg.clone());
            mcmc_scores = Err(msg);
            return finish(config, report, vb_scores, mcmc_scores);
        }
    };
    let full = ctx.series.sample();
    let mut lambda: Option<VariationalParams> = None;
    let mut proposal: Option<Proposal> = None;
    let mut chain_state: Option<Vec<f64>> = None;

    for (r, segment) in refit_points(config).into_iter().enumerate() {
        let fit_sample = full.truncated(segment.start);
        let warm = r > 0 && config.warm_start;
        let r64 = r as u64;

        // The VB fit also seeds the chain when both engines run.
        let mut vb_mean = None;
        if config.engine.runs_vb() && vb_scores.is_ok() || config.engine == Engine::Both {
            let vb = VbConfig {
                iterations: if warm { config.warm_iterations } else { config.vb.iterations },
                seed: derive_seed(seed, &[label_id("vb"), r64]),
                ..config.vb_config()
            };
            let init = if warm { lambda.clone() } else { None };
            let fitted = calibrate(ctx.model, &resolved, &fit_sample, &vb, init).and_then(|cal| {
                let (paths, resampled) = valid_variational_paths(
                    &cal.lambda,
                    ctx.model,
                    &full,
                    segment.clone(),
                    config.m_predictive,
                    derive_seed(seed, &[label_id("vb-draws"), r64]),
                )?;
                let scores = score_segment(&paths, segment.clone(), &full.y, ctx.eval)?;
                Ok((cal, resampled, scores))
            });
            match fitted {
                Ok((cal, resampled, scores)) => {
                    report.refits.push(RefitDiagnostics {
                        engine: EngineKind::Vb,
                        n: segment.start,
                        vb_skipped: cal.skipped,
                        mcmc_acceptance: None,
                        resampled_draws: resampled,
                    });
                    vb_mean = Some(cal.lambda.mu.clone());
                    lambda = Some(cal.lambda);
                    if let Ok(rows) = vb_scores.as_mut() {
                        rows.extend(scores);
                    }
                }
                Err(e) => {
                    log::warn!("{} VB cell failed at n={}: {e}", rule.label(), segment.start);
                    if vb_scores.is_ok() {
                        vb_scores = Err(format!("n={}: {e}", segment.start));
                    }
                    lambda = None;
                }
            }
        }

        if config.engine.runs_mcmc() && mcmc_scores.is_ok() {
            let theta_init = if warm { chain_state.clone() } else { None }
                .or(vb_mean)
                .unwrap_or_else(|| ctx.model.initial_theta(&fit_sample));
            let mcmc = McmcConfig {
                burn_in: if warm { config.warm_burn_in } else { config.mcmc.burn_in },
                seed: derive_seed(seed, &[label_id("mcmc"), r64]),
                ..config.mcmc.clone()
            };
            let target = gibbs_log_target(ctx.model, &resolved, &fit_sample, config.w);
            let init_proposal = if warm { proposal.clone() } else { None };
            let sampled = rwm_sample(target, &theta_init, &mcmc, init_proposal).and_then(|run| {
                let draws = thin(&run.draws, config.m_predictive);
                let paths = mcmc_paths(&draws, ctx.model, &full, segment.clone())?;
                let scores = score_segment(&paths, segment.clone(), &full.y, ctx.eval)?;
                Ok((run, scores))
            });
            match sampled {
                Ok((run, scores)) => {
                    report.refits.push(RefitDiagnostics {
                        engine: EngineKind::Mcmc,
                        n: segment.start,
                        vb_skipped: 0,
                        mcmc_acceptance: Some(run.acceptance_rate),
                        resampled_draws: 0,
                    });
                    chain_state = run.draws.last().cloned();
                    proposal = Some(run.proposal);
                    if let Ok(rows) = mcmc_scores.as_mut() {
                        rows.extend(scores);
                    }
                }
                Err(e) => {
                    log::warn!("{} MCMC cell failed at n={}: {e}", rule.label(), segment.start);
                    mcmc_scores = Err(format!("n={}: {e}", segment.start));
                }
            }
        }
    }
    finish(config, report, vb_scores, mcmc_scores)
}

fn finish(
    config: &ExperimentConfig,
    mut report: CellReport,
    vb: std::result::Result<Vec<Vec<Option<f64>>>, String>,
    mcmc: std::result::Result<Vec<Vec<Option<f64>>>, String>,
) -> CellOutput {
    let mut results = Vec::new();
    if config.engine.runs_vb() {
        results.push((EngineKind::Vb, vb));
    }
    if config.engine.runs_mcmc() {
        results.push((EngineKind::Mcmc, mcmc));
    }
    for (engine, res) in &results {
        if let Err(msg) = res {
            report.failures.push((*engine, msg.clone()));
        }
    }
    CellOutput { report, results }
}

/// Simulates the configured series and runs the evaluation on it.
pub fn rolling_evaluate(config: &ExperimentConfig) -> Result<EvaluationRun> {
    config.validate()?;
    let series = simulate(&config.dgp, config.t_len, config.dgp_burn_in, config.series_seed())?;
    rolling_evaluate_series(config, &series)
}

/// Runs the evaluation on a given series (`y[0]` presample, `y[1..=T]`).
/// The `dgp` field of the config is ignored.
pub fn rolling_evaluate_series(config: &ExperimentConfig, series: &Series) -> Result<EvaluationRun> {
    config.validate()?;
    if series.n() < config.t_len {
        return Err(GvpError::Input(format!(
            "series has {} observations, T={} requested",
            series.n(),
            config.t_len
        )));
    }
    let model = config.model.build(series, config.n0)?;
    let training = &series.y[1..=config.n0];
    let eval = config
        .eval_rules
        .iter()
        .map(|r| r.resolve(training))
        .collect::<Result<Vec<_>>>()?;
    for rule in &eval {
        if !model.supports(rule) {
            return Err(GvpError::Input(format!("{} cannot evaluate {rule:?}", model.name())));
        }
    }
    let ctx = CellContext {
        config,
        model: model.as_ref(),
        series,
        eval: &eval,
        training,
    };

    let outputs: Vec<CellOutput> = if config.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| GvpError::Input(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            config
                .update_rules
                .par_iter()
                .map(|rule| run_cell(&ctx, rule))
                .collect()
        })
    } else {
        config.update_rules.iter().map(|rule| run_cell(&ctx, rule)).collect()
    };
    Ok(assemble(config, outputs))
}

fn assemble(config: &ExperimentConfig, outputs: Vec<CellOutput>) -> EvaluationRun {
    let update_labels: Vec<String> = config.update_rules.iter().map(|r| r.label()).collect();
    let eval_labels: Vec<String> = config.eval_rules.iter().map(|r| r.label()).collect();
    let mut engines = Vec::new();
    if config.engine.runs_vb() {
        engines.push(EngineKind::Vb);
    }
    if config.engine.runs_mcmc() {
        engines.push(EngineKind::Mcmc);
    }
    let mut log = Vec::new();
    let mut matrices = Vec::new();
    for engine in engines {
        let mut entries = Vec::new();
        let mut degenerate = Vec::new();
        let mut failures = Vec::new();
        for (out, label) in outputs.iter().zip(&update_labels) {
            let res = out
                .results
                .iter()
                .find(|(e, _)| *e == engine)
                .map(|(_, r)| r)
                .expect("engine result present");
            match res {
                Ok(rows) => {
                    for (offset, row) in rows.iter().enumerate() {
                        for (score, eval) in row.iter().zip(&eval_labels) {
                            log.push(ScoreLogRow {
                                engine,
                                update_rule: label.clone(),
                                n: config.n0 + offset,
                                eval_rule: eval.clone(),
                                score: *score,
                            });
                        }
                    }
                    let (avg, bad) = column_averages(rows, eval_labels.len());
                    entries.push(avg);
                    degenerate.push(bad);
                    failures.push(None);
                }
                Err(msg) => {
                    entries.push(vec![None; eval_labels.len()]);
                    degenerate.push(vec![0; eval_labels.len()]);
                    failures.push(Some(msg.clone()));
                }
            }
        }
        matrices.push(ScoreMatrix {
            engine,
            update_labels: update_labels.clone(),
            eval_labels: eval_labels.clone(),
            entries,
            evaluations: config.evaluations(),
            degenerate,
            failures,
            master_seed: config.seed,
            refit_every: config.refit_every,
        });
    }
    EvaluationRun {
        matrices,
        log,
        cells: outputs.into_iter().map(|o| o.report).collect(),
    }
}

/// Mean of the finite scores in each column, summed in order of `n`, and
/// the count of degenerate scores.
fn column_averages(rows: &[Vec<Option<f64>>], cols: usize) -> (Vec<Option<f64>>, Vec<usize>) {
    let mut avg = Vec::with_capacity(cols);
    let mut bad = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut sum = 0.0;
        let mut count = 0usize;
        for row in rows {
            if let Some(v) = row[j] {
                sum += v;
                count += 1;
            }
        }
        avg.push((count > 0).then(|| sum / count as f64));
        bad.push(rows.len() - count);
    }
    (avg, bad)
}

/// Rebuilds matrix entries from a score log, summing in log order.
pub fn entries_from_log(
    log: &[ScoreLogRow],
    engine: EngineKind,
    update_labels: &[String],
    eval_labels: &[String],
) -> Vec<Vec<Option<f64>>> {
    update_labels
        .iter()
        .map(|u| {
            eval_labels
                .iter()
                .map(|e| {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for row in log.iter().filter(|r| {
                        r.engine == engine && &r.update_rule == u && &r.eval_rule == e
                    }) {
                        if let Some(v) = row.score {
                            sum += v;
                            count += 1;
                        }
                    }
                    (count > 0).then(|| sum / count as f64)
                })
                .collect()
        })
        .collect()
}
