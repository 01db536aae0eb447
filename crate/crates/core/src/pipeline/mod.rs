//! Configuration, training orchestration, evaluation and reporting.

pub mod config;
pub mod commands;
pub mod experiment;
pub mod models;
pub mod plot;
pub mod report;
pub mod train;

pub use config::RunConfig;
pub use experiment::{Arch, Experiment, Layout, Stage};
pub use report::{compare_models, evaluate_outputs, EvalReport, ModelReport};
