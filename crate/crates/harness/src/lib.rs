//! Experiment drivers on top of `irk-core`: convergence tables, preconditioner
//! and partition studies, and the cost-model reconciliation.

pub mod cost;
pub mod output;
pub mod problem;
pub mod studies;

pub use cost::{cost_report, CostReport, CostRow};
pub use output::Format;
pub use problem::ProblemSpec;
pub use studies::{
    rate, run_convergence_study, run_partition_study, run_precond_study, ConvergenceConfig, ConvergenceRow,
    ConvergenceStudy, ConvergenceTable, ErrorRatio, Reference, StudyConfig, StudyRecord,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] irk_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
