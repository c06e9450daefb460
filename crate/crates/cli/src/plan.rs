//! Experiment plans: what to run, with every default made explicit.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use pdpalm_core::instances::{lasso_params, tau2_sweep, BP_BETA, BP_DELTA, BP_TAU, LASSO_SIGMA};
use pdpalm_core::{Algorithm, DualStepMode, ProblemSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Full-size basis-pursuit dimensions, smallest to largest.
pub const BP_FULL_DIMS: [(usize, usize); 14] = [
    (300, 500),
    (400, 600),
    (450, 750),
    (500, 900),
    (500, 1000),
    (600, 1150),
    (700, 1300),
    (800, 1450),
    (900, 1600),
    (1000, 1750),
    (1100, 1900),
    (1100, 2000),
    (1200, 2150),
    (1300, 2300),
];

pub const BP_DESK_DIMS: (usize, usize) = (300, 500);
pub const LASSO_DESK_DIMS: (usize, usize) = (105, 350);
pub const LASSO_FULL_DIMS: (usize, usize) = (1050, 3500);

pub const BP_TOL: f64 = 1e-7;
pub const BP_MAX_ITER: usize = 20_000;
pub const LASSO_TOL: f64 = 1e-10;
pub const LASSO_MAX_ITER: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    BasisPursuit,
    Lasso,
    /// A problem document on disk.
    Custom(PathBuf),
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Experiment::BasisPursuit => f.write_str("basis-pursuit"),
            Experiment::Lasso => f.write_str("lasso"),
            Experiment::Custom(p) => write!(f, "custom:{}", p.display()),
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(path) = s.strip_prefix("custom:").or_else(|| s.strip_prefix("custom=")) {
            if path.is_empty() {
                return Err("custom experiment needs a path, e.g. custom:problem.json".into());
            }
            return Ok(Experiment::Custom(path.into()));
        }
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "basis-pursuit" | "bp" => Ok(Experiment::BasisPursuit),
            "lasso" => Ok(Experiment::Lasso),
            other => Err(format!(
                "unknown experiment '{other}' (expected basis-pursuit, lasso or custom:PATH)"
            )),
        }
    }
}

/// Parses `300x500` (also `300×500`).
pub fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (m, n) = s
        .split_once(['x', 'X', '×'])
        .ok_or_else(|| format!("dimensions '{s}' must look like MxN"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("dimensions '{s}': {e}"));
    Ok((parse(m)?, parse(n)?))
}

/// Parses a seed or an inclusive range `a-b`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let parse = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("seed '{t}': {e}"));
    match s.split_once('-') {
        Some((a, b)) => {
            let (a, b) = (parse(a)?, parse(b)?);
            if a > b {
                return Err(format!("empty seed range '{s}'"));
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![parse(s)?]),
    }
}

/// Reads seeds from a JSON array or an object with a `seeds` array.
pub fn read_seed_manifest(path: &std::path::Path) -> anyhow::Result<Vec<u64>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Manifest {
        List(Vec<u64>),
        Object { seeds: Vec<u64> },
    }
    let text = std::fs::read_to_string(path)?;
    Ok(match serde_json::from_str(&text)? {
        Manifest::List(s) | Manifest::Object { seeds: s } => s,
    })
}

/// What the user asked for; `None` means "use the experiment's default".
#[derive(Debug, Clone, Default)]
pub struct PlanRequest {
    pub experiment: Option<Experiment>,
    pub dims: Option<Vec<(usize, usize)>>,
    pub seeds: Option<Vec<u64>>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub delta: Option<f64>,
    pub tau2_sweep: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub dual_step_mode: Option<DualStepMode>,
    pub project_dual: Option<bool>,
    pub full_scale: bool,
    pub certify: bool,
    pub trace_every: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

/// Resolved scalar parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Penalty of the basis-pursuit PDP runs.
    pub beta: f64,
    /// Proximal weight of the basis-pursuit PDP runs, and `ρ` of the balanced baselines.
    pub tau: f64,
    pub delta: f64,
    pub tau2_sweep: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub experiment: Experiment,
    /// Empty for custom problems.
    pub dims: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    pub params: Params,
    pub tol: f64,
    pub max_iter: usize,
    pub dual_step_mode: DualStepMode,
    pub project_dual: bool,
    pub full_scale: bool,
    pub certify: bool,
    /// Write every k-th trace record (the last record is always written).
    pub trace_every: usize,
    pub output_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("the plan needs at least one algorithm")]
    NoAlgorithms,
    #[error("the plan needs at least one seed")]
    NoSeeds,
    #[error("the plan needs at least one dimension pair")]
    NoDims,
    #[error("basis pursuit needs 0 < m < n, got {m}x{n}")]
    BadDims { m: usize, n: usize },
    #[error("{0}")]
    Parameter(String),
    #[error("{algorithm} does not apply to the {experiment} experiment: {reason}")]
    Incompatible {
        algorithm: Algorithm,
        experiment: String,
        reason: &'static str,
    },
    #[error("cannot certify {algorithm}: {reason}")]
    Uncertified { algorithm: Algorithm, reason: String },
    #[error("cannot load custom problem: {0}")]
    Custom(#[from] pdpalm_core::Error),
}

const BP_ALGS: [Algorithm; 6] = [
    Algorithm::PdpAlm,
    Algorithm::DpBalm,
    Algorithm::BalancedAlm,
    Algorithm::PenaltyAlm,
    Algorithm::SplittingPdp,
    Algorithm::PartialProxPdp,
];
const LASSO_ALGS: [Algorithm; 3] = [Algorithm::SplittingPdp, Algorithm::PartialProxPdp, Algorithm::LinearizedAdmm];

impl ExperimentPlan {
    pub fn resolve(req: PlanRequest) -> Result<Self, PlanError> {
        let experiment = req.experiment.clone().unwrap_or(Experiment::BasisPursuit);
        let custom = match &experiment {
            Experiment::Custom(path) => Some(ProblemSpec::load(path)?.0),
            _ => None,
        };
        let (dims, algorithms, tol, max_iter, mode) = match (&experiment, &custom) {
            (Experiment::BasisPursuit, _) => (
                if req.full_scale { BP_FULL_DIMS.to_vec() } else { vec![BP_DESK_DIMS] },
                if req.certify {
                    vec![Algorithm::PdpAlm]
                } else {
                    vec![Algorithm::PdpAlm, Algorithm::DpBalm, Algorithm::BalancedAlm]
                },
                BP_TOL,
                BP_MAX_ITER,
                DualStepMode::ProofConsistent,
            ),
            (Experiment::Lasso, _) => (
                vec![if req.full_scale { LASSO_FULL_DIMS } else { LASSO_DESK_DIMS }],
                if req.certify {
                    vec![Algorithm::SplittingPdp, Algorithm::PartialProxPdp]
                } else {
                    vec![Algorithm::SplittingPdp, Algorithm::LinearizedAdmm]
                },
                LASSO_TOL,
                LASSO_MAX_ITER,
                // the LASSO comparison runs the literal dual step; certification needs the other one
                if req.certify { DualStepMode::ProofConsistent } else { DualStepMode::PaperLiteral },
            ),
            (Experiment::Custom(_), Some(spec)) => (
                Vec::new(),
                vec![if spec.num_blocks() == 1 { Algorithm::PdpAlm } else { Algorithm::SplittingPdp }],
                BP_TOL,
                BP_MAX_ITER,
                DualStepMode::ProofConsistent,
            ),
            (Experiment::Custom(_), None) => unreachable!("custom problem loaded above"),
        };
        let plan = ExperimentPlan {
            dims: req.dims.unwrap_or(dims),
            seeds: req.seeds.unwrap_or_else(|| vec![0]),
            algorithms: req.algorithms.unwrap_or(algorithms),
            params: Params {
                beta: req.beta.unwrap_or(BP_BETA),
                tau: req.tau.unwrap_or(BP_TAU),
                delta: req.delta.unwrap_or(BP_DELTA),
                tau2_sweep: req.tau2_sweep.unwrap_or_else(tau2_sweep),
                sigma: LASSO_SIGMA,
            },
            tol: req.tol.unwrap_or(tol),
            max_iter: req.max_iter.unwrap_or(max_iter),
            dual_step_mode: req.dual_step_mode.unwrap_or(mode),
            project_dual: req.project_dual.unwrap_or(true),
            full_scale: req.full_scale,
            certify: req.certify,
            trace_every: req.trace_every.unwrap_or(1),
            output_dir: req.output_dir.unwrap_or_else(|| PathBuf::from("results")),
            experiment,
        };
        plan.check(custom.as_ref())?;
        Ok(plan)
    }

    fn check(&self, custom: Option<&ProblemSpec>) -> Result<(), PlanError> {
        if self.algorithms.is_empty() {
            return Err(PlanError::NoAlgorithms);
        }
        if self.seeds.is_empty() {
            return Err(PlanError::NoSeeds);
        }
        if custom.is_none() && self.dims.is_empty() {
            return Err(PlanError::NoDims);
        }
        if !(self.tol > 0.0) {
            return Err(PlanError::Parameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(PlanError::Parameter("max_iter must be at least 1".into()));
        }
        if self.trace_every == 0 {
            return Err(PlanError::Parameter("trace_every must be at least 1".into()));
        }
        for (name, v) in [("beta", self.params.beta), ("tau", self.params.tau), ("delta", self.params.delta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlanError::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        match &self.experiment {
            Experiment::BasisPursuit => {
                if let Some(&(m, n)) = self.dims.iter().find(|&&(m, n)| m == 0 || m >= n) {
                    return Err(PlanError::BadDims { m, n });
                }
                self.check_algorithms(&BP_ALGS, "single-block problem")?;
            }
            Experiment::Lasso => {
                if let Some(&(m, n)) = self.dims.iter().find(|&&(m, n)| m == 0 || n == 0) {
                    return Err(PlanError::BadDims { m, n });
                }
                if self.params.tau2_sweep.is_empty() {
                    return Err(PlanError::Parameter("the tau2 sweep is empty".into()));
                }
                for &t in &self.params.tau2_sweep {
                    lasso_params(t).map_err(|e| PlanError::Parameter(e.to_string()))?;
                }
                self.check_algorithms(&LASSO_ALGS, "two-block problem")?;
            }
            Experiment::Custom(_) => {
                let spec = custom.expect("custom problem");
                let structural = spec.structural_violations();
                if !structural.is_empty() {
                    let msg = structural.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
                    return Err(PlanError::Parameter(msg));
                }
                if spec.num_blocks() == 1 {
                    self.check_algorithms(&BP_ALGS, "single-block problem")?;
                } else {
                    let allowed: &[Algorithm] = if spec.num_blocks() == 2 {
                        &LASSO_ALGS
                    } else {
                        &LASSO_ALGS[..2]
                    };
                    self.check_algorithms(allowed, "multi-block problem")?;
                }
            }
        }
        if self.certify {
            for &algorithm in &self.algorithms {
                let certified = matches!(
                    algorithm,
                    Algorithm::PdpAlm | Algorithm::SplittingPdp | Algorithm::PartialProxPdp
                );
                if !certified {
                    return Err(PlanError::Uncertified {
                        algorithm,
                        reason: "only the penalty dual-primal family carries a contraction certificate".into(),
                    });
                }
                let multi_block = !matches!(self.experiment, Experiment::BasisPursuit)
                    && custom.is_none_or(|s| s.num_blocks() > 1);
                if multi_block && self.dual_step_mode == DualStepMode::PaperLiteral {
                    return Err(PlanError::Uncertified {
                        algorithm,
                        reason: "the literal dual step Σβ_i is not covered by the contraction proof; \
                                 use --dual-step-mode proof"
                            .into(),
                    });
                }
            }
        }
        Ok(())
    }

    fn check_algorithms(&self, allowed: &[Algorithm], what: &'static str) -> Result<(), PlanError> {
        match self.algorithms.iter().find(|a| !allowed.contains(a)) {
            Some(&algorithm) => Err(PlanError::Incompatible {
                algorithm,
                experiment: self.experiment.to_string(),
                reason: what,
            }),
            None => Ok(()),
        }
    }
}
