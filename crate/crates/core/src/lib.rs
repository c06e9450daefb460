//! Penalty dual-primal augmented Lagrangian solvers for
//!
//! ```text
//! min Σ θ_i(x_i)  s.t.  Σ A_i x_i = b (or ≥ b)
//! ```
//!
//! with the splitting and partial-proximal multi-block variants, balanced ALM
//! baselines, variational-inequality certificates and seeded benchmark
//! generators.

pub mod diagnostics;
pub mod error;
pub mod instances;
pub mod problem;
pub mod prox;
pub mod schema;
pub mod solvers;

pub use diagnostics::{
    apply_f, check_step_certificate, ergodic_gap_check, vi_residual, ErgodicReport, ErgodicTracker, HMetric,
    HVariant, StepCertificate,
};
pub use error::{Divergence, DivergenceReason, Error, Result};
pub use instances::{gen_basis_pursuit, gen_lasso, lasso_params, reference_solution};
pub use problem::{
    validate, Algorithm, BlockSpec, ConstraintSense, DualStepMode, Iterate, ProblemSpec, QMode, SolverConfig,
    TraceRecord, Violation,
};
pub use prox::{project_nonneg, prox_half_sq_dist, soft_threshold, spectral_norm_gram, FeasibleSet, Objective, ProxOracle};
pub use schema::InstanceMeta;
pub use solvers::{
    solve, solve_with, step_balanced_alm, step_dp_balm, step_linearized_admm, step_partial_prox_pdp, step_pdp_alm,
    step_penalty_alm, step_splitting_pdp, DualSystemFactor, SolveResult, StepMap,
};

pub use nalgebra::{DMatrix, DVector};
