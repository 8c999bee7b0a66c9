//! Gibbs variational prediction.
//!
//! A predictive model's parameters are updated through an exponentiated,
//! score-based sample criterion (a Gibbs posterior) instead of a likelihood.
//! The posterior is approximated by mean-field Gaussian variational Bayes,
//! or sampled exactly by random-walk Metropolis for small models, and the
//! resulting predictives are compared out of sample under several proper
//! scoring rules.
//!
//! Module map:
//! - [`scoring`]: scoring rules and the sample criterion
//! - [`predictive`]: Gaussian, mixture and ensemble predictive distributions
//! - [`models`]: GARCH(1,1), Gaussian AR(1) mixture, small neural network
//! - [`vb`] and [`mcmc`]: the two posterior engines
//! - [`dgp`]: data generating processes used in the experiments
//! - [`harness`]: expanding-window evaluation, reports, interval pipeline
//! - [`config`] and [`io`]: experiment configuration and file formats

pub mod config;
pub mod dgp;
pub mod error;
pub mod harness;
pub mod io;
pub mod mcmc;
pub mod models;
pub mod predictive;
pub mod quadrature;
pub mod rng;
pub mod scoring;
pub mod series;
pub mod special;
pub mod vb;

pub use error::{GvpError, Result};
pub use predictive::{ConditionalPredictive, GaussianMixture};
pub use scoring::{ResolvedRule, ScoringRuleSpec, Tail};
pub use series::{Sample, Series};
