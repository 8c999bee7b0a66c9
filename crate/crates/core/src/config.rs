//! Experiment configuration files and the built-in experiment presets.
//!
//! Configuration files are TOML. A file may start from a preset
//! (`preset = "toy-garch"`, `scale = "desk"`; the network experiments are
//! `bnn-model1`..`bnn-model4`) and override any field;
//! without a preset, fields default to those of [`ExperimentConfig::new`]
//! with the GARCH DGP and model. `dgp` and `model` tables replace the
//! default wholesale when their `kind`/`class` differs. Rule lists are
//! written as labels, e.g. `update_rules = ["LS", "CLS10", "MSIS"]`.
//!
//! ```toml
//! preset = "lstar-mixture"
//! scale = "desk"
//! seed = 7
//! [vb]
//! iterations = 5000
//! ```

use crate::dgp::DgpSpec;
use crate::error::{GvpError, Result};
use crate::harness::pipeline::PipelineConfig;
use crate::harness::rolling::{Engine, ExperimentConfig};
use crate::models::{Activation, ModelSpec};
use crate::scoring::ScoringRuleSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// The constants of the original experiments.
    Paper,
    /// Reduced constants that run on a desktop.
    Desk,
}

impl FromStr for Scale {
    type Err = GvpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            _ => Err(GvpError::Input(format!("unknown scale '{s}' (paper|desk)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// GARCH(1,1) predictive, stochastic volatility with leverage as truth.
    ToyGarch,
    /// Gaussian AR(1) mixture, LSTAR truth.
    LstarMixture,
    /// Neural network under four information sets, dynamic regression truth.
    BnnModels,
}

impl FromStr for Target {
    type Err = GvpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy-garch" => Ok(Target::ToyGarch),
            "lstar-mixture" => Ok(Target::LstarMixture),
            "bnn-models" => Ok(Target::BnnModels),
            _ => Err(GvpError::Input(format!(
                "unknown target '{s}' (toy-garch|lstar-mixture|bnn-models)"
            ))),
        }
    }
}

/// Covariate sets of the four network specifications, next to `y_{t-1}`.
pub fn bnn_input_sets() -> Vec<(&'static str, Vec<String>)> {
    vec![
        ("model1", vec![]),
        ("model2", vec!["x1".into()]),
        ("model3", vec!["x2".into()]),
        ("model4", vec!["x1".into(), "x2".into()]),
    ]
}

/// Toy GARCH experiment with a chosen true DGP.
pub fn toy_garch(dgp: DgpSpec, scale: Scale) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        "toy-garch",
        dgp,
        ModelSpec::Garch,
        ScoringRuleSpec::standard_set(),
    );
    c.engine = Engine::Both;
    match scale {
        Scale::Paper => {
            c.t_len = 6000;
            c.n0 = 1000;
            c.refit_every = 1;
        }
        Scale::Desk => {
            c.t_len = 3000;
            c.n0 = 1000;
            c.refit_every = 250;
        }
    }
    c
}

pub fn lstar_mixture(scale: Scale) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        "lstar-mixture",
        DgpSpec::lstar_default(),
        ModelSpec::Mixture { k: 20 },
        ScoringRuleSpec::standard_set_without_crps(),
    );
    match scale {
        Scale::Paper => {
            c.t_len = 2500;
            c.n0 = 500;
            c.refit_every = 1;
        }
        Scale::Desk => {
            c.model = ModelSpec::Mixture { k: 5 };
            c.t_len = 1200;
            c.n0 = 400;
            c.refit_every = 200;
        }
    }
    c
}

/// One configuration per information set.
pub fn bnn_models(scale: Scale) -> Vec<ExperimentConfig> {
    bnn_input_sets()
        .into_iter()
        .map(|(label, inputs)| {
            let mut c = ExperimentConfig::new(
                &format!("bnn-{label}"),
                DgpSpec::dyn_regression_default(),
                ModelSpec::Bnn {
                    inputs,
                    activation: Activation::Tanh,
                },
                ScoringRuleSpec::standard_set(),
            );
            match scale {
                Scale::Paper => {
                    c.t_len = 4000;
                    c.n0 = 2000;
                    c.refit_every = 1;
                }
                Scale::Desk => {
                    c.t_len = 1500;
                    c.n0 = 750;
                    c.refit_every = 250;
                }
            }
            c
        })
        .collect()
}

pub fn preset(target: Target, scale: Scale) -> Vec<ExperimentConfig> {
    match target {
        Target::ToyGarch => vec![toy_garch(DgpSpec::sv_leverage_default(), scale)],
        Target::LstarMixture => vec![lstar_mixture(scale)],
        Target::BnnModels => bnn_models(scale),
    }
}

/// A single experiment by name: a target, or `bnn-model1`..`bnn-model4`.
pub fn named_preset(name: &str, scale: Scale) -> Result<ExperimentConfig> {
    if let Some(i) = name.strip_prefix("bnn-model").and_then(|d| d.parse::<usize>().ok()) {
        if (1..=4).contains(&i) {
            return Ok(bnn_models(scale).remove(i - 1));
        }
    }
    match name.parse::<Target>()? {
        Target::BnnModels => Err(GvpError::Input(
            "bnn-models expands to four experiments; name one of bnn-model1..bnn-model4".into(),
        )),
        target => Ok(preset(target, scale).remove(0)),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_error(text: &str, err: toml::de::Error) -> GvpError {
    GvpError::Parse {
        line: err.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: err.message().to_string(),
    }
}

fn to_table<T: Serialize>(value: &T) -> Result<toml::Table> {
    toml::Table::try_from(value).map_err(|e| GvpError::Input(format!("cannot encode config: {e}")))
}

/// Overlays `over` on `base`; nested tables merge unless their variant tag differs.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let tag_differs = ["kind", "class"]
                    .iter()
                    .any(|t| o.contains_key(*t) && o.get(*t) != b.get(*t));
                if tag_differs {
                    *b = o;
                } else {
                    merge(b, o);
                }
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

/// Parses an experiment file, with every omitted field filled in.
pub fn parse_experiment(text: &str) -> Result<ExperimentConfig> {
    let mut user: toml::Table = text.parse().map_err(|e| parse_error(text, e))?;
    let scale = match user.remove("scale") {
        Some(toml::Value::String(s)) => s.parse()?,
        None => Scale::Desk,
        Some(_) => return Err(GvpError::Input("'scale' must be a string".into())),
    };
    let base = match user.remove("preset") {
        Some(toml::Value::String(s)) => named_preset(&s, scale)?,
        None => ExperimentConfig::new(
            "experiment",
            DgpSpec::garch_default(),
            ModelSpec::Garch,
            ScoringRuleSpec::standard_set(),
        ),
        Some(_) => return Err(GvpError::Input("'preset' must be a string".into())),
    };
    let mut table = to_table(&base)?;
    let pipeline = user.remove("pipeline");
    if pipeline.is_some() {
        log::debug!("ignoring [pipeline] section in an experiment config");
    }
    merge(&mut table, user);
    let merged = toml::to_string(&table).map_err(|e| GvpError::Input(e.to_string()))?;
    let config: ExperimentConfig = toml::from_str(&merged).map_err(|e| GvpError::Parse {
        line: 0,
        message: e.message().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    parse_experiment(&std::fs::read_to_string(path)?)
}

/// Pipeline settings from the optional `[pipeline]` section of a file.
pub fn parse_pipeline(text: &str) -> Result<PipelineConfig> {
    let mut user: toml::Table = text.parse().map_err(|e| parse_error(text, e))?;
    let mut table = to_table(&PipelineConfig::default())?;
    if let Some(toml::Value::Table(section)) = user.remove("pipeline") {
        merge(&mut table, section);
    }
    let merged = toml::to_string(&table).map_err(|e| GvpError::Input(e.to_string()))?;
    toml::from_str(&merged).map_err(|e| GvpError::Parse {
        line: 0,
        message: e.message().to_string(),
    })
}

/// Serializes rule lists as their labels.
pub mod rule_labels {
    use crate::scoring::ScoringRuleSpec;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(rules: &[ScoringRuleSpec], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(rules.iter().map(|r| r.label()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<ScoringRuleSpec>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(D::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_experiment("").unwrap();
        assert_eq!(c.model, ModelSpec::Garch);
        assert_eq!(c.update_rules.len(), 7);
        assert_eq!(c.vb.iterations, 10_000);
    }

    #[test]
    fn preset_with_overrides() {
        let c = parse_experiment(
            "preset = \"lstar-mixture\"\nscale = \"desk\"\nseed = 9\n[vb]\niterations = 50\n",
        )
        .unwrap();
        assert_eq!(c.model, ModelSpec::Mixture { k: 5 });
        assert_eq!(c.seed, 9);
        assert_eq!(c.vb.iterations, 50);
        assert_eq!(c.vb.adadelta_rho, 0.95);
    }

    #[test]
    fn mixture_with_crps_rejected() {
        let err = parse_experiment(
            "preset = \"lstar-mixture\"\nupdate_rules = [\"LS\", \"CRPS\"]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("CRPS"));
    }

    #[test]
    fn dgp_kind_replaces_table() {
        let c = parse_experiment(
            "[dgp]\nkind = \"sv-smooth-transition\"\ncoef = 0.9\neta_var = 0.25\n",
        )
        .unwrap();
        assert_eq!(c.dgp, DgpSpec::sv_smooth_transition_default());
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_experiment("seed = 1\nn0 = = 3\n").unwrap_err();
        assert!(matches!(err, GvpError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn presets_validate() {
        for target in [Target::ToyGarch, Target::LstarMixture, Target::BnnModels] {
            for scale in [Scale::Paper, Scale::Desk] {
                for c in preset(target, scale) {
                    c.validate().unwrap();
                }
            }
        }
    }
}
