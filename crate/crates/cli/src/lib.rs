//! Experiment runner: plans, parallel execution, traces, tables and certificate summaries.

pub mod output;
pub mod plan;
pub mod runner;

pub use plan::{Experiment, ExperimentPlan, Params, PlanError, PlanRequest};
pub use runner::{run, run_basis_pursuit, run_certify, run_custom, run_lasso, Report, RunRecord, RunStatus};

/// Exit status for a plan that fails to resolve.
pub const EXIT_INVALID_PLAN: i32 = 3;
