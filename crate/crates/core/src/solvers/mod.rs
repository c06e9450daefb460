//! Step maps for every algorithm and the outer iteration loop.

mod step;

use std::time::{Duration, Instant};

pub use step::{
    dual_step_size, step_balanced_alm, step_dp_balm, step_linearized_admm, step_partial_prox_pdp,
    step_pdp_alm, step_penalty_alm, step_splitting_pdp, DualSystemFactor, StepMap,
};

use crate::error::{Divergence, DivergenceReason, Error, Result};
use crate::problem::{Iterate, ProblemSpec, SolverConfig, TraceRecord};

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub final_iterate: Iterate,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    pub iterations: usize,
    /// Mean of `ω^1, …, ω^{t+1}` when `cfg.ergodic` is set.
    pub ergodic_point: Option<Iterate>,
    /// Time spent in the iteration loop.
    pub elapsed: Duration,
}

impl SolveResult {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.trace.last()
    }
}

/// Runs the configured step map from `init` until `R(k) < tol` or `max_iter` steps.
pub fn solve(spec: &ProblemSpec, cfg: &SolverConfig, init: &Iterate) -> Result<SolveResult> {
    solve_with(spec, cfg, init, |_, _, _| {})
}

/// As [`solve`], calling `observer(prev, next, record)` after every step.
pub fn solve_with<F>(spec: &ProblemSpec, cfg: &SolverConfig, init: &Iterate, mut observer: F) -> Result<SolveResult>
where
    F: FnMut(&Iterate, &Iterate, &TraceRecord),
{
    let map = StepMap::new(spec, cfg)?;
    if !init.matches(spec) {
        return Err(Error::InvalidDimensions {
            m: spec.num_constraints(),
            n: spec.num_vars(),
            reason: "initial iterate does not match the problem",
        });
    }
    let mut state = map.state(init.clone());
    let mut trace = Vec::with_capacity(cfg.max_iter.min(1 << 16));
    let mut mean: Option<Iterate> = None;
    let mut min_residual = f64::INFINITY;
    let mut converged = false;
    let start = Instant::now();

    for k in 0..cfg.max_iter {
        let next = map.advance(&state);
        let residual = next.iterate.step_residual(&state.iterate);
        if !next.iterate.is_finite() || !residual.is_finite() {
            return Err(diverged(k, DivergenceReason::NonFinite, trace, state.iterate));
        }
        let mut r = -&spec.rhs;
        for p in &next.products {
            r += p;
        }
        let record = TraceRecord {
            iter: k,
            residual,
            cr: r.norm_squared(),
            objective: spec.objective_value(&next.iterate.x_blocks),
            step_h_norm_sq: map.step_h_norm_sq(&state, &next),
            wall_time: start.elapsed().as_secs_f64(),
        };
        observer(&state.iterate, &next.iterate, &record);
        trace.push(record);
        if cfg.ergodic {
            match mean.as_mut() {
                None => mean = Some(next.iterate.clone()),
                Some(m) => {
                    let diff = next.iterate.sub(m);
                    m.axpy(1.0 / (k as f64 + 1.0), &diff);
                }
            }
        }
        min_residual = min_residual.min(residual);
        if residual > cfg.divergence_ratio * min_residual {
            let reason = DivergenceReason::ResidualGrowth {
                residual,
                minimum: min_residual,
            };
            return Err(diverged(k, reason, trace, state.iterate));
        }
        state = next;
        if residual < cfg.tol {
            converged = true;
            break;
        }
        if cfg.time_limit.is_some_and(|t| start.elapsed() >= t) {
            break;
        }
    }

    Ok(SolveResult {
        iterations: trace.len(),
        final_iterate: state.iterate,
        trace,
        converged,
        ergodic_point: mean,
        elapsed: start.elapsed(),
    })
}

fn diverged(iteration: usize, reason: DivergenceReason, trace: Vec<TraceRecord>, last_finite: Iterate) -> Error {
    Error::Diverged(Box::new(Divergence {
        iteration,
        reason,
        trace,
        last_finite,
    }))
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::problem::{Algorithm, BlockSpec, ConstraintSense, QMode};
    use crate::prox::Objective;

    fn identity_spec(n: usize) -> ProblemSpec {
        let block = BlockSpec::new(Objective::Zero, DMatrix::identity(n, n), 1.0, QMode::IdentityMinusGram { tau: 2.0 });
        ProblemSpec::single(block, DVector::zeros(n), ConstraintSense::Equality)
    }

    #[test]
    fn huge_tol_stops_after_one_step() {
        let spec = identity_spec(1);
        let init = Iterate::single(DVector::from_element(1, 1.0), DVector::zeros(1));
        let res = solve(&spec, &SolverConfig::default().with_tol(1e9), &init).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.final_iterate, Iterate::single(DVector::zeros(1), DVector::from_element(1, -1.0)));
    }

    #[test]
    fn toy_run_converges_with_h_steps_recorded() {
        let spec = identity_spec(3);
        let init = Iterate::single(DVector::from_element(3, 1.0), DVector::from_element(3, -0.5));
        let res = solve(&spec, &SolverConfig::default().with_tol(1e-12), &init).unwrap();
        assert!(res.converged);
        assert!(res.final_iterate.norm_squared() < 1e-20);
        assert!(res.trace.iter().all(|t| t.step_h_norm_sq.unwrap() >= 0.0));
    }

    #[test]
    fn ergodic_point_is_running_mean() {
        let spec = identity_spec(2);
        let init = Iterate::single(DVector::from_element(2, 1.0), DVector::zeros(2));
        let cfg = SolverConfig::default().with_ergodic(true).with_max_iter(7).with_tol(1e-300);
        let mut seen = Vec::new();
        let res = solve_with(&spec, &cfg, &init, |_, next, _| seen.push(next.clone())).unwrap();
        let mut sum = seen[0].scale(0.0);
        for it in &seen {
            sum = sum.add(it);
        }
        let expected = sum.scale(1.0 / seen.len() as f64);
        let got = res.ergodic_point.unwrap();
        assert!(got.sub(&expected).norm_squared().sqrt() < 1e-14);
        assert!(!res.converged);
        assert_eq!(res.iterations, 7);
    }

    #[test]
    fn zero_time_limit_stops_after_one_step() {
        let spec = identity_spec(2);
        let init = Iterate::single(DVector::from_element(2, 1.0), DVector::zeros(2));
        let cfg = SolverConfig::default().with_tol(1e-300).with_time_limit(std::time::Duration::ZERO);
        let res = solve(&spec, &cfg, &init).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn inadmissible_step_is_flagged_as_divergence() {
        // τ far below β‖AᵀA‖
        let block = BlockSpec::new(Objective::Zero, DMatrix::identity(2, 2), 1.0, QMode::IdentityMinusGram { tau: 0.2 });
        let spec = ProblemSpec::single(block, DVector::zeros(2), ConstraintSense::Equality);
        let init = Iterate::single(DVector::from_element(2, 1.0), DVector::zeros(2));
        let err = solve(&spec, &SolverConfig::new(Algorithm::PdpAlm).with_max_iter(10_000), &init).unwrap_err();
        match err {
            Error::Diverged(d) => {
                assert!(d.last_finite.is_finite());
                assert_eq!(d.trace.len(), d.iteration + usize::from(matches!(d.reason, DivergenceReason::ResidualGrowth { .. })));
            }
            other => panic!("expected divergence, got {other}"),
        }
    }
}
