//! Experiment orchestration: configuration, reproducible replication,
//! aggregation into reports, distribution comparisons and the acceptance
//! checks.

pub mod compare;
pub mod config;
pub mod run;
pub mod validate;

pub use compare::{compare_distributions, compare_distributions_with, DistributionMetrics};
pub use config::{Analyses, ExperimentConfig};
pub use run::{run_experiment, run_experiment_rows, write_artifacts, EdgeworthReport, ExperimentOutput, NSummary};
pub use validate::{validate, CriterionResult, Scale, ValidationReport};
