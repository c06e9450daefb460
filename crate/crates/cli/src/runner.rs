//! Runs the jobs of a plan in parallel and collects one record per run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use pdpalm_core::diagnostics::{check_step_certificate, ErgodicTracker, HMetric};
use pdpalm_core::instances::{gen_basis_pursuit, gen_lasso, random_init, reference_solution, Reference};
use pdpalm_core::{validate, Algorithm, DualStepMode, Error, Iterate, ProblemSpec, QMode, SolverConfig, TraceRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::plan::{Experiment, ExperimentPlan};

pub const TRACE_HEADER: [&str; 5] = ["k", "R", "CR", "objective", "step_h_norm_sq"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIter,
    Diverged,
    Error,
}

impl RunStatus {
    pub fn label(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIter => "max_iter",
            RunStatus::Diverged => "DIVERGED",
            RunStatus::Error => "ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub tau2: Option<f64>,
    pub algorithm: Algorithm,
    pub status: RunStatus,
    pub iterations: usize,
    pub time_s: f64,
    pub residual: f64,
    pub cr: f64,
    pub objective: f64,
    pub cert_pass: Option<bool>,
    /// Largest `slack / (1 + ‖ω⁰−ω*‖²_H)` over the run.
    pub cert_worst_slack: Option<f64>,
    pub cert_first_failure: Option<usize>,
    pub ergodic_pass: Option<bool>,
    pub ergodic_first_failure: Option<usize>,
    pub trace: String,
    pub message: String,
}

impl RunRecord {
    /// Group key: runs sharing it form one table row.
    pub fn row_key(&self) -> (String, usize, usize, u64, Option<u64>) {
        (self.experiment.clone(), self.m, self.n, self.seed, self.tau2.map(f64::to_bits))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub plan: ExperimentPlan,
    pub records: Vec<RunRecord>,
    /// Parameter findings from `validate`; the runs go ahead regardless.
    pub validation: Vec<String>,
    /// Problems that prevented a run or a certificate (e.g. no reference solution).
    pub errors: Vec<String>,
}

impl Report {
    /// 0 success, 1 divergence, 2 certificate failure.
    pub fn exit_code(&self) -> i32 {
        if self.plan.certify
            && (!self.errors.is_empty()
                || self
                    .records
                    .iter()
                    .any(|r| r.cert_pass != Some(true) || r.ergodic_pass != Some(true)))
        {
            return 2;
        }
        if self
            .records
            .iter()
            .any(|r| matches!(r.status, RunStatus::Diverged | RunStatus::Error))
        {
            return 1;
        }
        0
    }
}

struct Job {
    experiment: &'static str,
    m: usize,
    n: usize,
    seed: u64,
    tau2: Option<f64>,
    algorithm: Algorithm,
    spec: Arc<ProblemSpec>,
    init: Arc<Iterate>,
    cfg: SolverConfig,
    reference: Option<Arc<Reference>>,
    stem: String,
}

fn base_config(plan: &ExperimentPlan, algorithm: Algorithm) -> SolverConfig {
    SolverConfig::new(algorithm)
        .with_delta(plan.params.delta)
        .with_tol(plan.tol)
        .with_max_iter(plan.max_iter)
        .with_dual_step_mode(plan.dual_step_mode)
        .with_project_dual(plan.project_dual)
}

fn uses_balanced_spec(algorithm: Algorithm) -> bool {
    matches!(algorithm, Algorithm::BalancedAlm | Algorithm::DpBalm)
}

fn record_validation(out: &mut Vec<String>, label: &str, spec: &ProblemSpec) {
    for v in validate(spec) {
        out.push(format!("{label}: {v}"));
    }
}

/// Reference for certification, or the reason there is none.
fn certify_reference(plan: &ExperimentPlan, spec: &ProblemSpec, seed: u64, label: &str) -> Result<Option<Arc<Reference>>, String> {
    if !plan.certify {
        return Ok(None);
    }
    reference_solution(spec, seed)
        .map(|r| Some(Arc::new(r)))
        .map_err(|e| format!("{label}: {e}"))
}

pub fn run_basis_pursuit(plan: &ExperimentPlan) -> anyhow::Result<Report> {
    let pairs: Vec<_> = plan
        .dims
        .iter()
        .flat_map(|&d| plan.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let prepared: Vec<_> = pairs
        .par_iter()
        .map(|&((m, n), seed)| -> anyhow::Result<_> {
            let inst = gen_basis_pursuit(m, n, seed)?;
            let pdp = inst.spec_with(plan.params.beta, QMode::IdentityMinusGram { tau: plan.params.tau });
            let balanced = inst.balanced_spec(plan.params.tau);
            let label = format!("bp {m}x{n} seed {seed}");
            let reference = certify_reference(plan, &pdp, seed, &label);
            Ok((m, n, seed, pdp, balanced, reference))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut validation = Vec::new();
    let mut errors = Vec::new();
    let mut jobs = Vec::new();
    for (m, n, seed, pdp, balanced, reference) in prepared {
        let label = format!("bp {m}x{n} seed {seed}");
        let init = Arc::new(random_init(&pdp, seed));
        let (pdp, balanced) = (Arc::new(pdp), Arc::new(balanced));
        let reference = match reference {
            Ok(r) => r,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        if plan.algorithms.iter().any(|&a| !uses_balanced_spec(a)) {
            record_validation(&mut validation, &label, &pdp);
        }
        if plan.algorithms.iter().any(|&a| uses_balanced_spec(a)) {
            record_validation(&mut validation, &format!("{label} (balanced)"), &balanced);
        }
        for &algorithm in &plan.algorithms {
            let spec = if uses_balanced_spec(algorithm) { &balanced } else { &pdp };
            jobs.push(Job {
                experiment: "basis_pursuit",
                m,
                n,
                seed,
                tau2: None,
                algorithm,
                spec: spec.clone(),
                init: init.clone(),
                cfg: base_config(plan, algorithm),
                reference: reference.clone(),
                stem: format!("bp_{m}x{n}_s{seed}_{algorithm}"),
            });
        }
    }
    finish(plan, jobs, validation, errors)
}

pub fn run_lasso(plan: &ExperimentPlan) -> anyhow::Result<Report> {
    let pairs: Vec<_> = plan
        .dims
        .iter()
        .flat_map(|&d| plan.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let instances: Vec<_> = pairs
        .par_iter()
        .map(|&((m, n), seed)| -> anyhow::Result<_> {
            let inst = gen_lasso(m, n, seed)?;
            // the saddle set does not depend on τ₂, so one reference serves the whole sweep
            let first = inst.splitting_spec(plan.params.tau2_sweep[0], DualStepMode::ProofConsistent)?;
            let reference = certify_reference(plan, &first, seed, &format!("lasso {m}x{n} seed {seed}"));
            Ok((inst, seed, reference))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut validation = Vec::new();
    let mut errors = Vec::new();
    let mut jobs = Vec::new();
    for (inst, seed, reference) in instances {
        let (m, n) = (inst.a.nrows(), inst.a.ncols());
        let reference = match reference {
            Ok(r) => r,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let mut init = None;
        for &tau2 in &plan.params.tau2_sweep {
            let label = format!("lasso {m}x{n} seed {seed} tau2 {tau2}");
            let splitting = Arc::new(inst.splitting_spec(tau2, plan.dual_step_mode)?);
            let init = init.get_or_insert_with(|| Arc::new(random_init(&splitting, seed))).clone();
            let linearized = if plan.algorithms.contains(&Algorithm::LinearizedAdmm) {
                let spec = Arc::new(inst.linearized_admm_spec(tau2)?);
                record_validation(&mut validation, &format!("{label} (linearized)"), &spec);
                Some(spec)
            } else {
                None
            };
            if plan.algorithms.iter().any(|&a| a != Algorithm::LinearizedAdmm) {
                record_validation(&mut validation, &label, &splitting);
            }
            for &algorithm in &plan.algorithms {
                let spec = match (&linearized, algorithm) {
                    (Some(l), Algorithm::LinearizedAdmm) => l.clone(),
                    _ => splitting.clone(),
                };
                jobs.push(Job {
                    experiment: "lasso",
                    m,
                    n,
                    seed,
                    tau2: Some(tau2),
                    algorithm,
                    spec,
                    init: init.clone(),
                    cfg: base_config(plan, algorithm),
                    reference: reference.clone(),
                    stem: format!("lasso_{m}x{n}_s{seed}_t{tau2:.2}_{algorithm}"),
                });
            }
        }
    }
    finish(plan, jobs, validation, errors)
}

pub fn run_custom(plan: &ExperimentPlan, path: &Path) -> anyhow::Result<Report> {
    let (spec, _) = ProblemSpec::load(path).with_context(|| format!("loading {}", path.display()))?;
    let spec = Arc::new(spec);
    let (m, n) = (spec.num_constraints(), spec.num_vars());
    let mut validation = Vec::new();
    let mut errors = Vec::new();
    record_validation(&mut validation, "custom", &spec);
    let mut jobs = Vec::new();
    for &seed in &plan.seeds {
        let reference = match certify_reference(plan, &spec, seed, &format!("custom seed {seed}")) {
            Ok(r) => r,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let init = Arc::new(random_init(&spec, seed));
        for &algorithm in &plan.algorithms {
            jobs.push(Job {
                experiment: "custom",
                m,
                n,
                seed,
                tau2: None,
                algorithm,
                spec: spec.clone(),
                init: init.clone(),
                cfg: base_config(plan, algorithm),
                reference: reference.clone(),
                stem: format!("custom_s{seed}_{algorithm}"),
            });
        }
    }
    finish(plan, jobs, validation, errors)
}

/// Certification runs: the plan's certified configurations, checked against a reference.
pub fn run_certify(plan: &ExperimentPlan) -> anyhow::Result<Report> {
    anyhow::ensure!(plan.certify, "run_certify needs a plan with certify set");
    run_experiment(plan)
}

/// Dispatches on the experiment kind.
pub fn run(plan: &ExperimentPlan) -> anyhow::Result<Report> {
    run_experiment(plan)
}

fn run_experiment(plan: &ExperimentPlan) -> anyhow::Result<Report> {
    match &plan.experiment {
        Experiment::BasisPursuit => run_basis_pursuit(plan),
        Experiment::Lasso => run_lasso(plan),
        Experiment::Custom(path) => run_custom(plan, path),
    }
}

fn finish(plan: &ExperimentPlan, jobs: Vec<Job>, validation: Vec<String>, errors: Vec<String>) -> anyhow::Result<Report> {
    let traces = plan.output_dir.join("traces");
    fs::create_dir_all(&traces).with_context(|| format!("creating {}", traces.display()))?;
    if plan.certify {
        fs::create_dir_all(plan.output_dir.join("certificates"))?;
    }
    let records = jobs
        .par_iter()
        .map(|job| execute(plan, job))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Report {
        plan: plan.clone(),
        records,
        validation,
        errors,
    })
}

#[derive(Default)]
struct CertState {
    worst: f64,
    first_failure: Option<usize>,
    ergodic_failure: Option<usize>,
    io_error: Option<std::io::Error>,
}

fn execute(plan: &ExperimentPlan, job: &Job) -> anyhow::Result<RunRecord> {
    let trace_rel = format!("traces/{}.csv", job.stem);
    let metric = job
        .reference
        .as_ref()
        .and_then(|_| HMetric::for_algorithm(&job.spec, job.algorithm));
    let mut cert = CertState {
        worst: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut cert_out = match (&metric, plan.certify) {
        (Some(_), true) => {
            let path = plan.output_dir.join("certificates").join(format!("{}.jsonl", job.stem));
            Some(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
        }
        _ => None,
    };
    let outcome = match (&metric, &job.reference) {
        (Some(h), Some(reference)) => {
            let star = &reference.iterate;
            let d0 = h.dist_sq(&job.init, star);
            let mut tracker = ErgodicTracker::new(h, &job.init, star);
            pdpalm_core::solve_with(&job.spec, &job.cfg, &job.init, |prev, next, rec| {
                let c = check_step_certificate(h, prev, next, star).with_k(rec.iter);
                cert.worst = cert.worst.max(c.slack() / (1.0 + d0));
                if !c.pass && cert.first_failure.is_none() {
                    cert.first_failure = Some(rec.iter);
                }
                let e = tracker.push(next, rec.objective);
                if !e.pass && cert.ergodic_failure.is_none() {
                    cert.ergodic_failure = Some(e.t);
                }
                if let Some(out) = cert_out.as_mut() {
                    if let Err(err) = writeln!(out, "{}", c.to_json_line()) {
                        cert.io_error.get_or_insert(err);
                    }
                }
            })
        }
        _ => pdpalm_core::solve(&job.spec, &job.cfg, &job.init),
    };
    if let Some(mut out) = cert_out {
        out.flush()?;
    }
    if let Some(err) = cert.io_error {
        return Err(err).context("writing certificates");
    }

    let (status, trace, iterations, time_s, message, last_iterate) = match outcome {
        Ok(res) => {
            let status = if res.converged { RunStatus::Converged } else { RunStatus::MaxIter };
            (status, res.trace, res.iterations, res.elapsed.as_secs_f64(), String::new(), Some(res.final_iterate))
        }
        Err(Error::Diverged(d)) => {
            let time = d.trace.last().map_or(0.0, |r| r.wall_time);
            let msg = format!("diverged at iteration {}: {:?}", d.iteration, d.reason);
            (RunStatus::Diverged, d.trace, d.iteration + 1, time, msg, None)
        }
        Err(e) => (RunStatus::Error, Vec::new(), 0, 0.0, e.to_string(), None),
    };
    write_trace(&plan.output_dir.join(&trace_rel), &trace, plan.trace_every)?;

    let last = trace.last();
    let certified = metric.is_some() && status != RunStatus::Error;
    let objective = match &last_iterate {
        Some(it) => job.spec.objective_value(&it.x_blocks),
        None => last.map_or(f64::NAN, |r| r.objective),
    };
    Ok(RunRecord {
        experiment: job.experiment.to_string(),
        m: job.m,
        n: job.n,
        seed: job.seed,
        tau2: job.tau2,
        algorithm: job.algorithm,
        status,
        iterations,
        time_s,
        residual: last.map_or(f64::NAN, |r| r.residual),
        cr: last.map_or(f64::NAN, |r| r.cr),
        objective,
        cert_pass: certified.then(|| cert.first_failure.is_none() && status != RunStatus::Diverged),
        cert_worst_slack: (certified && cert.worst.is_finite()).then_some(cert.worst),
        cert_first_failure: cert.first_failure,
        ergodic_pass: certified.then(|| cert.ergodic_failure.is_none() && status != RunStatus::Diverged),
        ergodic_first_failure: cert.ergodic_failure,
        trace: trace_rel,
        message,
    })
}

/// Writes `k,R,CR,objective,step_h_norm_sq`, keeping every `every`-th record and the last one.
pub fn write_trace(path: &Path, trace: &[TraceRecord], every: usize) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(TRACE_HEADER)?;
    let last = trace.len().saturating_sub(1);
    for (i, r) in trace.iter().enumerate() {
        if i % every != 0 && i != last {
            continue;
        }
        let step = r.step_h_norm_sq.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            r.iter.to_string(),
            r.residual.to_string(),
            r.cr.to_string(),
            r.objective.to_string(),
            step,
        ])?;
    }
    w.flush()?;
    Ok(())
}
