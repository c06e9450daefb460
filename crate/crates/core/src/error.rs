use thiserror::Error;

use crate::problem::{Iterate, TraceRecord, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {}", join_violations(.0))]
    InvalidProblem(Vec<Violation>),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{0}")]
    Diverged(Box<Divergence>),

    #[error("invalid dimensions {m}x{n}: {reason}")]
    InvalidDimensions {
        m: usize,
        n: usize,
        reason: &'static str,
    },

    #[error("parameter outside its domain: {0}")]
    ParameterDomain(String),

    #[error("no reference solution: VI residual {residual:.3e} after {iterations} iterations")]
    NoReference { residual: f64, iterations: usize },

    #[error("malformed problem document: {0}")]
    Document(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Payload of a diverged solve: where it stopped and the finite history up to that point.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub iteration: usize,
    pub reason: DivergenceReason,
    pub trace: Vec<TraceRecord>,
    pub last_finite: Iterate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceReason {
    NonFinite,
    ResidualGrowth { residual: f64, minimum: f64 },
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.reason {
            DivergenceReason::NonFinite => {
                write!(f, "diverged at iteration {}: non-finite iterate", self.iteration)
            }
            DivergenceReason::ResidualGrowth { residual, minimum } => write!(
                f,
                "diverged at iteration {}: R(k) = {residual:.3e} exceeds running minimum {minimum:.3e}",
                self.iteration
            ),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
