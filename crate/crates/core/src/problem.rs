//! Problem, iterate and configuration types shared by every solver and
//! diagnostic.
//!
//! A [`ProblemSpec`] describes
//!
//! ```text
//! min  Σ θ_i(x_i)   s.t.  Σ A_i x_i = b  (or ≥ b),  x_i ∈ X_i
//! ```
//!
//! with per-block penalty `β_i` and proximal mode `Q_i`. Blocks `1..=p1`
//! carry the proximal term, blocks `p1+1..=p` use the pure penalty metric.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prox::{spectral_norm_gram, FeasibleSet, ProxOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ConstraintSense {
    /// `Σ A_i x_i = b`, multipliers in `R^m`.
    #[default]
    #[serde(rename = "eq")]
    Equality,
    /// `Σ A_i x_i ≥ b`, multipliers in the nonnegative orthant.
    #[serde(rename = "ge")]
    InequalityGe,
}

impl ConstraintSense {
    pub fn multipliers_nonnegative(&self) -> bool {
        matches!(self, ConstraintSense::InequalityGe)
    }
}

/// Proximal matrix `Q_i` of a block.
#[derive(Debug, Clone, PartialEq)]
pub enum QMode {
    /// An explicit symmetric positive definite `Q`.
    GeneralSpd(DMatrix<f64>),
    /// `Q = τI − βAᵀA`, admissible when `τ > β‖AᵀA‖`.
    IdentityMinusGram { tau: f64 },
    /// `Q = β(τI − AᵀA)`, admissible when `τ > ‖AᵀA‖`.
    BetaScaledIdentityMinusGram { tau: f64 },
}

impl QMode {
    /// Dense `Q` for a block with penalty `beta` and matrix `a`.
    pub fn matrix(&self, beta: f64, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.ncols();
        match self {
            QMode::GeneralSpd(q) => q.clone(),
            QMode::IdentityMinusGram { tau } => {
                DMatrix::identity(n, n) * *tau - a.tr_mul(a) * beta
            }
            QMode::BetaScaledIdentityMinusGram { tau } => {
                (DMatrix::identity(n, n) * *tau - a.tr_mul(a)) * beta
            }
        }
    }

    /// `‖x‖²_Q`, given `ax = A x`.
    pub fn norm_sq(&self, beta: f64, x: &DVector<f64>, ax: &DVector<f64>) -> f64 {
        match self {
            QMode::GeneralSpd(q) => x.dot(&(q * x)),
            QMode::IdentityMinusGram { tau } => tau * x.norm_squared() - beta * ax.norm_squared(),
            QMode::BetaScaledIdentityMinusGram { tau } => {
                beta * (tau * x.norm_squared() - ax.norm_squared())
            }
        }
    }

    /// The scalar `ρ` with `βAᵀA + Q = ρI`, when the metric collapses to a multiple of the identity.
    pub fn scalar_metric(&self, beta: f64) -> Option<f64> {
        match self {
            QMode::GeneralSpd(_) => None,
            QMode::IdentityMinusGram { tau } => Some(*tau),
            QMode::BetaScaledIdentityMinusGram { tau } => Some(beta * tau),
        }
    }
}

/// One block `(θ_i, A_i, X_i, β_i, Q_i)`.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub objective: Arc<dyn ProxOracle>,
    pub matrix: DMatrix<f64>,
    pub feasible_set: FeasibleSet,
    pub beta: f64,
    pub q_mode: QMode,
}

impl BlockSpec {
    pub fn new(
        objective: impl ProxOracle + 'static,
        matrix: DMatrix<f64>,
        beta: f64,
        q_mode: QMode,
    ) -> Self {
        Self {
            objective: Arc::new(objective),
            matrix,
            feasible_set: FeasibleSet::Whole,
            beta,
            q_mode,
        }
    }

    pub fn with_feasible_set(mut self, set: FeasibleSet) -> Self {
        self.feasible_set = set;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_q_mode(mut self, q_mode: QMode) -> Self {
        self.q_mode = q_mode;
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub blocks: Vec<BlockSpec>,
    pub rhs: DVector<f64>,
    pub sense: ConstraintSense,
    /// `p1`: number of leading blocks that carry the proximal term.
    pub proximal_count: usize,
}

impl ProblemSpec {
    /// A spec in which every block carries its proximal term (`p1 = p`).
    pub fn new(blocks: Vec<BlockSpec>, rhs: DVector<f64>, sense: ConstraintSense) -> Self {
        let p = blocks.len();
        Self {
            blocks,
            rhs,
            sense,
            proximal_count: p,
        }
    }

    pub fn single(block: BlockSpec, rhs: DVector<f64>, sense: ConstraintSense) -> Self {
        Self::new(vec![block], rhs, sense)
    }

    pub fn with_proximal_count(mut self, p1: usize) -> Self {
        self.proximal_count = p1;
        self
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_vars(&self) -> usize {
        self.blocks.iter().map(BlockSpec::dim).sum()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(BlockSpec::dim).collect()
    }

    /// `Σ A_i x_i − b`.
    pub fn residual(&self, x_blocks: &[DVector<f64>]) -> DVector<f64> {
        let mut r = -&self.rhs;
        for (block, x) in self.blocks.iter().zip(x_blocks) {
            r.gemv(1.0, &block.matrix, x, 1.0);
        }
        r
    }

    /// `Σ θ_i(x_i)`.
    pub fn objective_value(&self, x_blocks: &[DVector<f64>]) -> f64 {
        self.blocks
            .iter()
            .zip(x_blocks)
            .map(|(b, x)| b.objective.evaluate(x))
            .sum()
    }

    /// `CR = ‖Σ A_i x_i − b‖²`.
    pub fn constrained_residual(&self, x_blocks: &[DVector<f64>]) -> f64 {
        self.residual(x_blocks).norm_squared()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    /// Dimension findings only; every solver entry point requires these to be empty.
    pub fn structural_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let p = self.blocks.len();
        if p == 0 {
            out.push(Violation::NoBlocks);
        }
        if self.proximal_count > p {
            out.push(Violation::ProximalCountOutOfRange {
                p1: self.proximal_count,
                p,
            });
        }
        let m = self.rhs.len();
        for (i, block) in self.blocks.iter().enumerate() {
            if block.matrix.nrows() != m {
                out.push(Violation::RowMismatch {
                    block: i,
                    rows: block.matrix.nrows(),
                    expected: m,
                });
            }
            if let Some(d) = block.objective.dim() {
                if d != block.dim() {
                    out.push(Violation::ObjectiveDimension {
                        block: i,
                        expected: block.dim(),
                        found: d,
                    });
                }
            }
            if let QMode::GeneralSpd(q) = &block.q_mode {
                if q.nrows() != block.dim() || q.ncols() != block.dim() {
                    out.push(Violation::QDimension {
                        block: i,
                        rows: q.nrows(),
                        cols: q.ncols(),
                        expected: block.dim(),
                    });
                }
            }
        }
        out
    }
}

/// One finding of [`validate`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("problem has no blocks")]
    NoBlocks,
    #[error("proximal count p1 = {p1} exceeds block count p = {p}")]
    ProximalCountOutOfRange { p1: usize, p: usize },
    #[error("block {block}: matrix has {rows} rows, right-hand side has {expected}")]
    RowMismatch {
        block: usize,
        rows: usize,
        expected: usize,
    },
    #[error("block {block}: objective has dimension {found}, block has {expected}")]
    ObjectiveDimension {
        block: usize,
        expected: usize,
        found: usize,
    },
    #[error("block {block}: Q is {rows}x{cols}, expected {expected}x{expected}")]
    QDimension {
        block: usize,
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("block {block}: beta = {beta} must be positive")]
    NonPositiveBeta { block: usize, beta: f64 },
    #[error("block {block}: non-finite entries in problem data")]
    NonFiniteBlock { block: usize },
    #[error("right-hand side has non-finite entries")]
    NonFiniteRhs,
    #[error("block {block}: Q is not symmetric")]
    QNotSymmetric { block: usize },
    #[error("block {block}: Q is not positive definite")]
    QNotPositiveDefinite { block: usize },
    #[error("block {block}: tau = {tau} must exceed {bound} for Q to be positive definite")]
    TauTooSmall { block: usize, tau: f64, bound: f64 },
    #[error(
        "block {block}: non-proximal block needs AᵀA nonsingular (smallest eigenvalue {smallest:.3e}, largest {largest:.3e})"
    )]
    IllPosedBlock {
        block: usize,
        smallest: f64,
        largest: f64,
    },
}

/// Checks dimensions, positivity of every `β_i`, admissibility of every
/// proximal mode and well-posedness of the non-proximal blocks.
pub fn validate(spec: &ProblemSpec) -> Vec<Violation> {
    let mut out = spec.structural_violations();
    if !out.is_empty() {
        return out;
    }
    if spec.rhs.iter().any(|v| !v.is_finite()) {
        out.push(Violation::NonFiniteRhs);
    }
    for (i, block) in spec.blocks.iter().enumerate() {
        if !(block.beta > 0.0) || !block.beta.is_finite() {
            out.push(Violation::NonPositiveBeta {
                block: i,
                beta: block.beta,
            });
        }
        if block.matrix.iter().any(|v| !v.is_finite()) {
            out.push(Violation::NonFiniteBlock { block: i });
            continue;
        }
        if i < spec.proximal_count {
            check_q_mode(i, block, &mut out);
        } else {
            check_full_column_rank(i, block, &mut out);
        }
    }
    out
}

fn check_q_mode(i: usize, block: &BlockSpec, out: &mut Vec<Violation>) {
    match &block.q_mode {
        QMode::GeneralSpd(q) => {
            let scale = q.amax().max(1.0);
            if (q - q.transpose()).amax() > 1e-12 * scale {
                out.push(Violation::QNotSymmetric { block: i });
            } else if q.clone().cholesky().is_none() {
                out.push(Violation::QNotPositiveDefinite { block: i });
            }
        }
        QMode::IdentityMinusGram { tau } => {
            let bound = block.beta.max(0.0) * spectral_norm_gram(&block.matrix);
            if !(*tau > bound) {
                out.push(Violation::TauTooSmall {
                    block: i,
                    tau: *tau,
                    bound,
                });
            }
        }
        QMode::BetaScaledIdentityMinusGram { tau } => {
            let bound = spectral_norm_gram(&block.matrix);
            if !(*tau > bound) {
                out.push(Violation::TauTooSmall {
                    block: i,
                    tau: *tau,
                    bound,
                });
            }
        }
    }
}

fn check_full_column_rank(i: usize, block: &BlockSpec, out: &mut Vec<Violation>) {
    let gram = block.matrix.tr_mul(&block.matrix);
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let largest = eig.max();
    let smallest = eig.min();
    if !(smallest >= 1e-12 * largest) || largest == 0.0 {
        out.push(Violation::IllPosedBlock {
            block: i,
            smallest,
            largest,
        });
    }
}

/// The joint point `ω = (x_1, …, x_p, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x_blocks: Vec<DVector<f64>>,
    pub lambda: DVector<f64>,
}

impl Iterate {
    pub fn new(x_blocks: Vec<DVector<f64>>, lambda: DVector<f64>) -> Self {
        Self { x_blocks, lambda }
    }

    pub fn zeros(spec: &ProblemSpec) -> Self {
        Self {
            x_blocks: spec.blocks.iter().map(|b| DVector::zeros(b.dim())).collect(),
            lambda: DVector::zeros(spec.num_constraints()),
        }
    }

    /// Single-block convenience constructor.
    pub fn single(x: DVector<f64>, lambda: DVector<f64>) -> Self {
        Self::new(vec![x], lambda)
    }

    pub fn matches(&self, spec: &ProblemSpec) -> bool {
        self.lambda.len() == spec.num_constraints()
            && self.x_blocks.len() == spec.num_blocks()
            && self
                .x_blocks
                .iter()
                .zip(&spec.blocks)
                .all(|(x, b)| x.len() == b.dim())
    }

    pub fn len(&self) -> usize {
        self.x_blocks.iter().map(|x| x.len()).sum::<usize>() + self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.x_blocks
            .iter()
            .chain(std::iter::once(&self.lambda))
            .all(|v| v.iter().all(|t| t.is_finite()))
    }

    fn zip_map(&self, other: &Iterate, f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>) -> Iterate {
        Iterate {
            x_blocks: self
                .x_blocks
                .iter()
                .zip(&other.x_blocks)
                .map(|(a, b)| f(a, b))
                .collect(),
            lambda: f(&self.lambda, &other.lambda),
        }
    }

    pub fn sub(&self, other: &Iterate) -> Iterate {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Iterate) -> Iterate {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Iterate {
        Iterate {
            x_blocks: self.x_blocks.iter().map(|x| x * s).collect(),
            lambda: &self.lambda * s,
        }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &Iterate) {
        for (a, b) in self.x_blocks.iter_mut().zip(&other.x_blocks) {
            a.axpy(s, b, 1.0);
        }
        self.lambda.axpy(s, &other.lambda, 1.0);
    }

    pub fn dot(&self, other: &Iterate) -> f64 {
        self.x_blocks
            .iter()
            .zip(&other.x_blocks)
            .map(|(a, b)| a.dot(b))
            .sum::<f64>()
            + self.lambda.dot(&other.lambda)
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    /// `R = max{ max_i ‖x_i − y_i‖, ‖λ − μ‖ }`.
    pub fn step_residual(&self, other: &Iterate) -> f64 {
        self.x_blocks
            .iter()
            .zip(&other.x_blocks)
            .map(|(a, b)| (a - b).norm())
            .fold((&self.lambda - &other.lambda).norm(), f64::max)
    }

    /// Stacked `(x_1, …, x_p, λ)`.
    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.x_blocks
                .iter()
                .chain(std::iter::once(&self.lambda))
                .flat_map(|v| v.iter().copied()),
        )
    }

    pub fn from_flat(spec: &ProblemSpec, flat: &DVector<f64>) -> Self {
        let mut offset = 0;
        let x_blocks = spec
            .blocks
            .iter()
            .map(|b| {
                let v = flat.rows(offset, b.dim()).into_owned();
                offset += b.dim();
                v
            })
            .collect();
        let lambda = flat.rows(offset, spec.num_constraints()).into_owned();
        Self { x_blocks, lambda }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Penalty dual-primal ALM (single block).
    PdpAlm,
    /// Balanced ALM, primal-dual order with the regularized dual system.
    #[serde(rename = "b-alm", alias = "balanced-alm")]
    BalancedAlm,
    /// Dual-primal balanced ALM.
    DpBalm,
    /// Penalty ALM, primal-dual order.
    PenaltyAlm,
    /// Splitting penalty dual-primal ALM (every block proximal).
    SplittingPdp,
    /// Partial proximal penalty dual-primal ALM.
    PartialProxPdp,
    /// Two-block linearized ADMM baseline.
    LinearizedAdmm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::PdpAlm,
        Algorithm::BalancedAlm,
        Algorithm::DpBalm,
        Algorithm::PenaltyAlm,
        Algorithm::SplittingPdp,
        Algorithm::PartialProxPdp,
        Algorithm::LinearizedAdmm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::PdpAlm => "pdp-alm",
            Algorithm::BalancedAlm => "b-alm",
            Algorithm::DpBalm => "dp-balm",
            Algorithm::PenaltyAlm => "penalty-alm",
            Algorithm::SplittingPdp => "splitting-pdp",
            Algorithm::PartialProxPdp => "partial-prox-pdp",
            Algorithm::LinearizedAdmm => "linearized-admm",
        }
    }

    /// The dual-primal penalty family whose iterates contract in an H-metric.
    pub fn is_pdp_family(&self) -> bool {
        matches!(
            self,
            Algorithm::PdpAlm | Algorithm::SplittingPdp | Algorithm::PartialProxPdp
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match key.as_str() {
            "pdp-alm" | "pdp" => Algorithm::PdpAlm,
            "b-alm" | "balanced-alm" | "balm" => Algorithm::BalancedAlm,
            "dp-balm" | "dp-alm" => Algorithm::DpBalm,
            "penalty-alm" => Algorithm::PenaltyAlm,
            "splitting-pdp" | "splitting-pdp-alm" => Algorithm::SplittingPdp,
            "partial-prox-pdp" | "partial-pdp" => Algorithm::PartialProxPdp,
            "linearized-admm" | "pl-admm" | "ladmm" => Algorithm::LinearizedAdmm,
            _ => return Err(format!("unknown algorithm '{s}'")),
        })
    }
}

/// Dual step size of the multi-block variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualStepMode {
    /// `s = (Σ 1/β_i)^{-1}`, the step under which the H-contraction holds.
    #[default]
    ProofConsistent,
    /// `s = Σ β_i`, as displayed in the multi-block algorithm boxes.
    PaperLiteral,
}

impl FromStr for DualStepMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "proof" | "proof-consistent" => Ok(DualStepMode::ProofConsistent),
            "literal" | "paper" | "paper-literal" => Ok(DualStepMode::PaperLiteral),
            other => Err(format!("unknown dual step mode '{other}'")),
        }
    }
}

impl fmt::Display for DualStepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DualStepMode::ProofConsistent => "proof-consistent",
            DualStepMode::PaperLiteral => "paper-literal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Regularization of the balanced dual system `(1/β)AAᵀ + δI`.
    pub delta: f64,
    pub dual_step_mode: DualStepMode,
    pub tol: f64,
    pub max_iter: usize,
    /// Maintain the running mean of the iterates.
    pub ergodic: bool,
    /// Project λ onto the nonnegative orthant after the dual update for `≥` constraints.
    pub project_dual: bool,
    /// Abort when R(k) exceeds this multiple of its running minimum.
    pub divergence_ratio: f64,
    /// Stop unconverged once this much wall-clock time has passed.
    pub time_limit: Option<std::time::Duration>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::PdpAlm,
            delta: 1000.0,
            dual_step_mode: DualStepMode::ProofConsistent,
            tol: 1e-7,
            max_iter: 20_000,
            ergodic: false,
            project_dual: true,
            divergence_ratio: 1e6,
            time_limit: None,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_dual_step_mode(mut self, mode: DualStepMode) -> Self {
        self.dual_step_mode = mode;
        self
    }

    pub fn with_ergodic(mut self, ergodic: bool) -> Self {
        self.ergodic = ergodic;
        self
    }

    pub fn with_project_dual(mut self, project: bool) -> Self {
        self.project_dual = project;
        self
    }

    pub fn with_divergence_ratio(mut self, ratio: f64) -> Self {
        self.divergence_ratio = ratio;
        self
    }

    pub fn with_time_limit(mut self, limit: std::time::Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }

    pub fn check(&self) -> crate::Result<()> {
        if !(self.tol > 0.0) {
            return Err(crate::Error::InvalidConfig(format!("tol = {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(crate::Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if matches!(self.algorithm, Algorithm::BalancedAlm | Algorithm::DpBalm) && !(self.delta > 0.0) {
            return Err(crate::Error::InvalidConfig(format!(
                "delta = {} must be positive",
                self.delta
            )));
        }
        if !(self.divergence_ratio > 1.0) {
            return Err(crate::Error::InvalidConfig(
                "divergence_ratio must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// `R(k)`.
    pub residual: f64,
    /// `‖Σ A_i x_i − b‖²` at the new iterate.
    pub cr: f64,
    pub objective: f64,
    /// `‖ω^k − ω^{k+1}‖²_H`, recorded for the dual-primal penalty family.
    pub step_h_norm_sq: Option<f64>,
    /// Seconds since the iteration loop started.
    pub wall_time: f64,
}
