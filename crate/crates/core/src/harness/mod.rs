//! Out-of-sample evaluation: the expanding-window protocol, score matrix
//! reports, kernel density predictives and the interval forecasting
//! pipeline.

pub mod differencing;
pub mod kde;
pub mod pipeline;
pub mod reports;
pub mod rolling;

pub use differencing::{difference, undifference};
pub use kde::{kde_predictive, silverman_bandwidth};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineResult};
pub use reports::{coherence_report, merging_report, CoherenceReport, MergingReport};
pub use rolling::{
    estimate_gvp_predictive, rolling_evaluate, rolling_evaluate_series, Engine, EngineKind,
    EvaluationRun, ExperimentConfig, ScoreLogRow, ScoreMatrix,
};
