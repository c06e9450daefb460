//! One-step transition maps.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::problem::{
    Algorithm, BlockSpec, ConstraintSense, DualStepMode, Iterate, ProblemSpec, SolverConfig,
};
use crate::prox::{project_nonneg, MetricProx};

/// Triangular factorization of `(1/β)AAᵀ + δI`, computed once per solve.
///
/// Positive definiteness is confirmed by a Cholesky attempt; solves use the
/// pivoted LU factors, which avoid the square roots of the Cholesky factor and
/// so reproduce exactly representable small cases bit for bit.
#[derive(Debug, Clone)]
pub struct DualSystemFactor {
    factor: LU<f64, Dyn, Dyn>,
    m: usize,
    beta: f64,
    delta: f64,
}

impl DualSystemFactor {
    pub fn new(a: &DMatrix<f64>, beta: f64, delta: f64) -> Result<Self> {
        if !(beta > 0.0) || !(delta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dual system needs beta > 0 and delta > 0 (beta = {beta}, delta = {delta})"
            )));
        }
        let m = a.nrows();
        let mat = a * a.transpose() / beta + DMatrix::identity(m, m) * delta;
        if mat.clone().cholesky().is_none() {
            return Err(Error::Numerical("dual system is not positive definite".into()));
        }
        Ok(Self {
            factor: mat.lu(),
            m,
            beta,
            delta,
        })
    }

    pub fn for_spec(spec: &ProblemSpec, delta: f64) -> Result<Self> {
        let block = single_block(spec, "balanced dual system")?;
        Self::new(&block.matrix, block.beta, delta)
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(rhs).expect("nonsingular dual system")
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

}

/// `A_i`, with a shortcut for the identity.
#[derive(Debug, Clone)]
enum LinearMap {
    Identity,
    /// `A` and a cached `Aᵀ`; both products run as column dot products.
    Dense { a: DMatrix<f64>, at: DMatrix<f64> },
}

impl LinearMap {
    fn new(a: &DMatrix<f64>) -> Self {
        if a.is_square() && a.iter().enumerate().all(|(k, &v)| {
            let (i, j) = (k % a.nrows(), k / a.nrows());
            v == if i == j { 1.0 } else { 0.0 }
        }) {
            LinearMap::Identity
        } else {
            LinearMap::Dense {
                a: a.clone(),
                at: a.transpose(),
            }
        }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            LinearMap::Identity => x.clone(),
            LinearMap::Dense { at, .. } => at.tr_mul(x),
        }
    }

    fn apply_tr(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            LinearMap::Identity => y.clone(),
            LinearMap::Dense { a, .. } => a.tr_mul(y),
        }
    }

    fn is_identity(&self) -> bool {
        matches!(self, LinearMap::Identity)
    }
}

/// Solver of `argmin θ(x) − ⟨g, x⟩ + ½‖x − anchor‖²_M` for one fixed `M`.
enum Kernel {
    Scalar { rho: f64 },
    Metric {
        factor: LU<f64, Dyn, Dyn>,
        prox: MetricProx,
    },
}

impl Kernel {
    fn scalar(block: &BlockSpec, rho: f64) -> Result<Self> {
        if !block.feasible_set.is_whole() && !block.objective.is_separable() {
            return Err(Error::Unsupported(
                "projection onto X_i needs a separable objective".into(),
            ));
        }
        Ok(Kernel::Scalar { rho })
    }

    fn metric(block: &BlockSpec, metric: DMatrix<f64>) -> Result<Self> {
        if !block.feasible_set.is_whole() {
            return Err(Error::Unsupported(
                "a constrained block needs a scalar proximal metric".into(),
            ));
        }
        let prox = block.objective.metric_prox(&metric).ok_or_else(|| {
            Error::Unsupported(format!(
                "objective {:?} has no closed-form prox in a general metric",
                block.objective
            ))
        })?;
        if metric.clone().cholesky().is_none() {
            return Err(Error::Unsupported("subproblem metric is not positive definite".into()));
        }
        Ok(Kernel::Metric {
            factor: metric.lu(),
            prox,
        })
    }

    /// Kernel for `M = βAᵀA + Q` (`proximal`) or `M = βAᵀA`.
    fn for_block(block: &BlockSpec, map: &LinearMap, proximal: bool) -> Result<Self> {
        let beta = block.beta;
        if proximal {
            match block.q_mode.scalar_metric(beta) {
                Some(rho) => Self::scalar(block, rho),
                None => {
                    let m = block.matrix.tr_mul(&block.matrix) * beta + block.q_mode.matrix(beta, &block.matrix);
                    Self::metric(block, m)
                }
            }
        } else if map.is_identity() {
            Self::scalar(block, beta)
        } else {
            Self::metric(block, block.matrix.tr_mul(&block.matrix) * beta)
        }
    }

    fn solve(&self, block: &BlockSpec, anchor: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        match self {
            Kernel::Scalar { rho } => {
                let center = anchor + g / *rho;
                let mut out = block.objective.prox(&center, *rho);
                block.feasible_set.project(&mut out);
                out
            }
            Kernel::Metric { factor, prox } => prox(&(anchor + factor.solve(g).expect("nonsingular metric"))),
        }
    }
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kernel::Scalar { rho } => write!(f, "Scalar({rho})"),
            Kernel::Metric { factor, .. } => write!(f, "Metric({})", factor.l().nrows()),
        }
    }
}

fn single_block<'a>(spec: &'a ProblemSpec, what: &str) -> Result<&'a BlockSpec> {
    match spec.blocks.as_slice() {
        [b] => Ok(b),
        _ => Err(Error::Unsupported(format!(
            "{what} needs exactly one block, got {}",
            spec.blocks.len()
        ))),
    }
}

/// State carried between steps: the iterate and its products `A_i x_i`.
#[derive(Debug, Clone)]
pub(crate) struct StepState {
    pub iterate: Iterate,
    pub products: Vec<DVector<f64>>,
}

/// A prepared step map: kernels and factorizations built once, then applied repeatedly.
#[derive(Debug)]
pub struct StepMap<'a> {
    spec: &'a ProblemSpec,
    cfg: SolverConfig,
    maps: Vec<LinearMap>,
    kernels: Vec<Kernel>,
    dual_step: f64,
    factor: Option<DualSystemFactor>,
}

impl<'a> StepMap<'a> {
    pub fn new(spec: &'a ProblemSpec, cfg: &SolverConfig) -> Result<Self> {
        Self::build(spec, cfg, None)
    }

    /// As [`StepMap::new`], reusing an existing dual factorization for the balanced variants.
    pub fn with_factor(spec: &'a ProblemSpec, cfg: &SolverConfig, factor: DualSystemFactor) -> Result<Self> {
        Self::build(spec, cfg, Some(factor))
    }

    fn build(spec: &'a ProblemSpec, cfg: &SolverConfig, factor: Option<DualSystemFactor>) -> Result<Self> {
        let structural = spec.structural_violations();
        if !structural.is_empty() {
            return Err(Error::InvalidProblem(structural));
        }
        cfg.check()?;
        let p = spec.num_blocks();
        let p1 = spec.proximal_count;
        let maps: Vec<LinearMap> = spec.blocks.iter().map(|b| LinearMap::new(&b.matrix)).collect();
        let mut kernels = Vec::with_capacity(p);
        let mut dual_step = 0.0;
        let mut factor_out = None;
        match cfg.algorithm {
            Algorithm::PdpAlm | Algorithm::SplittingPdp | Algorithm::PartialProxPdp => {
                match cfg.algorithm {
                    Algorithm::PdpAlm if p != 1 => {
                        return Err(Error::Unsupported(format!("pdp-alm needs one block, got {p}")))
                    }
                    Algorithm::SplittingPdp if p1 != p => {
                        return Err(Error::Unsupported(format!(
                            "splitting-pdp needs every block proximal (p1 = {p1}, p = {p})"
                        )))
                    }
                    _ => {}
                }
                for (i, (block, map)) in spec.blocks.iter().zip(&maps).enumerate() {
                    kernels.push(Kernel::for_block(block, map, i < p1)?);
                }
                dual_step = dual_step_size(spec, cfg.dual_step_mode);
            }
            Algorithm::PenaltyAlm => {
                let block = single_block(spec, "penalty-alm")?;
                kernels.push(Kernel::for_block(block, &maps[0], p1 == 1)?);
                dual_step = block.beta;
            }
            Algorithm::BalancedAlm | Algorithm::DpBalm => {
                let block = single_block(spec, cfg.algorithm.name())?;
                kernels.push(Kernel::scalar(block, block.beta)?);
                let f = match factor {
                    Some(f) => {
                        if f.dim() != spec.num_constraints() {
                            return Err(Error::InvalidConfig("dual factor has the wrong size".into()));
                        }
                        f
                    }
                    None => DualSystemFactor::new(&block.matrix, block.beta, cfg.delta)?,
                };
                factor_out = Some(f);
            }
            Algorithm::LinearizedAdmm => {
                if p != 2 {
                    return Err(Error::Unsupported(format!("linearized-admm needs two blocks, got {p}")));
                }
                let (b1, b2) = (&spec.blocks[0], &spec.blocks[1]);
                if b1.beta != b2.beta {
                    return Err(Error::Unsupported(format!(
                        "linearized-admm uses one penalty; got beta = {} and {}",
                        b1.beta, b2.beta
                    )));
                }
                // exact first block, linearized second block
                kernels.push(Kernel::for_block(b1, &maps[0], false)?);
                kernels.push(Kernel::for_block(b2, &maps[1], true)?);
                dual_step = b1.beta;
            }
        }
        Ok(Self {
            spec,
            cfg: *cfg,
            maps,
            kernels,
            dual_step,
            factor: factor_out,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Dual step `s` of the penalty variants (0 for the balanced ones).
    pub fn dual_step(&self) -> f64 {
        self.dual_step
    }

    pub fn step(&self, cur: &Iterate) -> Result<Iterate> {
        if !cur.matches(self.spec) {
            return Err(Error::InvalidDimensions {
                m: self.spec.num_constraints(),
                n: self.spec.num_vars(),
                reason: "iterate does not match the problem",
            });
        }
        Ok(self.advance(&self.state(cur.clone())).iterate)
    }

    pub(crate) fn state(&self, iterate: Iterate) -> StepState {
        let products = self
            .maps
            .iter()
            .zip(&iterate.x_blocks)
            .map(|(m, x)| m.apply(x))
            .collect();
        StepState { iterate, products }
    }

    fn residual_from(&self, products: &[DVector<f64>]) -> DVector<f64> {
        let mut r = -&self.spec.rhs;
        for p in products {
            r += p;
        }
        r
    }

    fn finish_dual(&self, mut lambda: DVector<f64>) -> DVector<f64> {
        if self.spec.sense == ConstraintSense::InequalityGe && self.cfg.project_dual {
            lambda = project_nonneg(&lambda);
        }
        lambda
    }

    pub(crate) fn advance(&self, st: &StepState) -> StepState {
        let cur = &st.iterate;
        match self.cfg.algorithm {
            Algorithm::PdpAlm | Algorithm::SplittingPdp | Algorithm::PartialProxPdp => {
                let r = self.residual_from(&st.products);
                let lambda = self.finish_dual(&cur.lambda - &r * self.dual_step);
                let c = &lambda * 2.0 - &cur.lambda;
                self.primal_all(cur, &c, lambda)
            }
            Algorithm::PenaltyAlm => {
                let x = self.kernels[0].solve(&self.spec.blocks[0], &cur.x_blocks[0], &self.maps[0].apply_tr(&cur.lambda));
                let ax = self.maps[0].apply(&x);
                let r = &ax * 2.0 - &st.products[0] - &self.spec.rhs;
                let lambda = self.finish_dual(&cur.lambda - r * self.dual_step);
                StepState {
                    iterate: Iterate::single(x, lambda),
                    products: vec![ax],
                }
            }
            Algorithm::BalancedAlm => {
                let factor = self.factor.as_ref().expect("balanced factor");
                let x = self.kernels[0].solve(&self.spec.blocks[0], &cur.x_blocks[0], &self.maps[0].apply_tr(&cur.lambda));
                let ax = self.maps[0].apply(&x);
                let r = &ax * 2.0 - &st.products[0] - &self.spec.rhs;
                let lambda = self.finish_dual(&cur.lambda - factor.solve(&r));
                StepState {
                    iterate: Iterate::single(x, lambda),
                    products: vec![ax],
                }
            }
            Algorithm::DpBalm => {
                let factor = self.factor.as_ref().expect("balanced factor");
                let r = self.residual_from(&st.products);
                let lambda = self.finish_dual(&cur.lambda - factor.solve(&r));
                let c = &lambda * 2.0 - &cur.lambda;
                self.primal_all(cur, &c, lambda)
            }
            Algorithm::LinearizedAdmm => {
                let beta = self.dual_step;
                let (b1, b2) = (&self.spec.blocks[0], &self.spec.blocks[1]);
                // c1 = λ − β(A₂y − b), anchored at 0
                let c1 = &cur.lambda - (&st.products[1] - &self.spec.rhs) * beta;
                let zero = DVector::zeros(b1.dim());
                let x = self.kernels[0].solve(b1, &zero, &self.maps[0].apply_tr(&c1));
                let ax = self.maps[0].apply(&x);
                let c2 = &cur.lambda - (&ax + &st.products[1] - &self.spec.rhs) * beta;
                let y = self.kernels[1].solve(b2, &cur.x_blocks[1], &self.maps[1].apply_tr(&c2));
                let ay = self.maps[1].apply(&y);
                let lambda = self.finish_dual(&cur.lambda - (&ax + &ay - &self.spec.rhs) * beta);
                StepState {
                    iterate: Iterate::new(vec![x, y], lambda),
                    products: vec![ax, ay],
                }
            }
        }
    }

    fn primal_all(&self, cur: &Iterate, c: &DVector<f64>, lambda: DVector<f64>) -> StepState {
        let mut x_blocks = Vec::with_capacity(self.kernels.len());
        let mut products = Vec::with_capacity(self.kernels.len());
        for (((kernel, block), map), x) in self
            .kernels
            .iter()
            .zip(&self.spec.blocks)
            .zip(&self.maps)
            .zip(&cur.x_blocks)
        {
            let xn = kernel.solve(block, x, &map.apply_tr(c));
            products.push(map.apply(&xn));
            x_blocks.push(xn);
        }
        StepState {
            iterate: Iterate::new(x_blocks, lambda),
            products,
        }
    }

    /// `‖ω − ω⁺‖²_H` from cached products, for the dual-primal penalty family.
    pub(crate) fn step_h_norm_sq(&self, prev: &StepState, next: &StepState) -> Option<f64> {
        if !self.cfg.algorithm.is_pdp_family() {
            return None;
        }
        let dl = &prev.iterate.lambda - &next.iterate.lambda;
        let mut q = 0.0;
        for (i, block) in self.spec.blocks.iter().enumerate() {
            let sb = block.beta.sqrt();
            let dax = &prev.products[i] - &next.products[i];
            q += (&dl / sb - dax.clone() * sb).norm_squared();
            if i < self.spec.proximal_count {
                let dx = &prev.iterate.x_blocks[i] - &next.iterate.x_blocks[i];
                q += block.q_mode.norm_sq(block.beta, &dx, &dax);
            }
        }
        Some(q)
    }
}

/// Dual step of the penalty family. A single block gets `β` exactly in both modes.
pub fn dual_step_size(spec: &ProblemSpec, mode: DualStepMode) -> f64 {
    if let [block] = spec.blocks.as_slice() {
        return block.beta;
    }
    match mode {
        DualStepMode::ProofConsistent => 1.0 / spec.blocks.iter().map(|b| 1.0 / b.beta).sum::<f64>(),
        DualStepMode::PaperLiteral => spec.blocks.iter().map(|b| b.beta).sum(),
    }
}

fn run_one(spec: &ProblemSpec, cur: &Iterate, cfg: &SolverConfig, algorithm: Algorithm) -> Result<Iterate> {
    let cfg = SolverConfig { algorithm, ..*cfg };
    StepMap::new(spec, &cfg)?.step(cur)
}

fn run_with_factor(
    spec: &ProblemSpec,
    cur: &Iterate,
    cfg: &SolverConfig,
    algorithm: Algorithm,
    factor: &DualSystemFactor,
) -> Result<Iterate> {
    let cfg = SolverConfig { algorithm, ..*cfg };
    StepMap::with_factor(spec, &cfg, factor.clone())?.step(cur)
}

/// One step of the penalty dual-primal ALM (single block).
pub fn step_pdp_alm(spec: &ProblemSpec, cur: &Iterate, cfg: &SolverConfig) -> Result<Iterate> {
    run_one(spec, cur, cfg, Algorithm::PdpAlm)
}

/// One step of the balanced ALM.
pub fn step_balanced_alm(
    spec: &ProblemSpec,
    cur: &Iterate,
    cfg: &SolverConfig,
    factor: &DualSystemFactor,
) -> Result<Iterate> {
    run_with_factor(spec, cur, cfg, Algorithm::BalancedAlm, factor)
}

/// One step of the dual-primal balanced ALM.
pub fn step_dp_balm(
    spec: &ProblemSpec,
    cur: &Iterate,
    cfg: &SolverConfig,
    factor: &DualSystemFactor,
) -> Result<Iterate> {
    run_with_factor(spec, cur, cfg, Algorithm::DpBalm, factor)
}

/// One step of the penalty ALM (primal-dual order).
pub fn step_penalty_alm(spec: &ProblemSpec, cur: &Iterate, cfg: &SolverConfig) -> Result<Iterate> {
    run_one(spec, cur, cfg, Algorithm::PenaltyAlm)
}

/// One step of the splitting variant; every block proximal.
pub fn step_splitting_pdp(spec: &ProblemSpec, cur: &Iterate, cfg: &SolverConfig) -> Result<Iterate> {
    run_one(spec, cur, cfg, Algorithm::SplittingPdp)
}

/// One step of the partial proximal variant; blocks past `p1` use the metric `β_iA_iᵀA_i`.
pub fn step_partial_prox_pdp(spec: &ProblemSpec, cur: &Iterate, cfg: &SolverConfig) -> Result<Iterate> {
    run_one(spec, cur, cfg, Algorithm::PartialProxPdp)
}

/// One step of the two-block linearized ADMM baseline.
pub fn step_linearized_admm(spec: &ProblemSpec, cur: &Iterate, cfg: &SolverConfig) -> Result<Iterate> {
    run_one(spec, cur, cfg, Algorithm::LinearizedAdmm)
}
