//! Seeded instance generators for the basis-pursuit and LASSO experiments,
//! and long-run reference solutions.
//!
//! All randomness comes from `ChaCha20Rng::seed_from_u64` with standard
//! normals drawn through `rand_distr::StandardNormal`, so instances are a pure
//! function of `(m, n, seed)` within this implementation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::vi_residual;
use crate::error::{Error, Result};
use crate::problem::{
    Algorithm, BlockSpec, ConstraintSense, DualStepMode, Iterate, ProblemSpec, QMode, SolverConfig,
};
use crate::prox::{spectral_norm_gram, Objective};
use crate::schema::InstanceMeta;
use crate::solvers::solve;

pub const GENERATOR_VERSION: &str = "1";

/// Default penalty and proximal weight for the basis-pursuit runs.
pub const BP_BETA: f64 = 0.001;
pub const BP_TAU: f64 = 2.5;
pub const BP_DELTA: f64 = 1000.0;
/// Density of the planted solution `x₀` with `b = A·x₀`.
pub const BP_PLANT_DENSITY: f64 = 0.1;

pub const LASSO_SIGMA: f64 = 0.1;
pub const LASSO_NOISE_VAR: f64 = 1e-3;
/// Safety factor on strict inequalities `τ > β‖AᵀA‖`.
pub const SAFETY: f64 = 1.01;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn gaussian_matrix(rng: &mut ChaCha20Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

#[derive(Debug, Clone)]
pub struct BasisPursuitInstance {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// The planted point with `A·x₀ = b`.
    pub x0: DVector<f64>,
    /// `θ = ‖·‖₁`, equality sense, `β = 0.001`, `Q = τI − βAᵀA` with `τ = 2.5`.
    pub spec: ProblemSpec,
    pub meta: InstanceMeta,
}

impl BasisPursuitInstance {
    /// Same data with another penalty and proximal mode.
    pub fn spec_with(&self, beta: f64, q_mode: QMode) -> ProblemSpec {
        basis_pursuit_spec(&self.a, &self.b, beta, q_mode)
    }

    /// Spec for the balanced baselines, whose prox weight `ρ` is stored as the block's `β`.
    /// The proximal mode is unused by those methods; an admissible one is recorded.
    pub fn balanced_spec(&self, rho: f64) -> ProblemSpec {
        let tau = SAFETY * rho * spectral_norm_gram(&self.a);
        self.spec_with(rho, QMode::IdentityMinusGram { tau })
    }
}

pub fn basis_pursuit_spec(a: &DMatrix<f64>, b: &DVector<f64>, beta: f64, q_mode: QMode) -> ProblemSpec {
    let block = BlockSpec::new(Objective::l1(), a.clone(), beta, q_mode);
    ProblemSpec::single(block, b.clone(), ConstraintSense::Equality)
}

pub fn gen_basis_pursuit(m: usize, n: usize, seed: u64) -> Result<BasisPursuitInstance> {
    if m == 0 || m >= n {
        return Err(Error::InvalidDimensions {
            m,
            n,
            reason: "basis pursuit needs 0 < m < n",
        });
    }
    let mut r = rng(seed);
    let a = gaussian_matrix(&mut r, m, n);
    let x0 = DVector::from_fn(n, |_, _| {
        if r.random_bool(BP_PLANT_DENSITY) {
            r.sample(StandardNormal)
        } else {
            0.0
        }
    });
    let b = &a * &x0;
    let spec = basis_pursuit_spec(&a, &b, BP_BETA, QMode::IdentityMinusGram { tau: BP_TAU });
    Ok(BasisPursuitInstance {
        meta: InstanceMeta {
            kind: "basis_pursuit".into(),
            m,
            n,
            seed,
            generator_version: GENERATOR_VERSION.into(),
            extra: Default::default(),
        },
        a,
        b,
        x0,
        spec,
    })
}

#[derive(Debug, Clone)]
pub struct LassoInstance {
    /// Design matrix with unit-norm columns.
    pub a: DMatrix<f64>,
    pub y_star: DVector<f64>,
    pub noise: DVector<f64>,
    pub b: DVector<f64>,
    pub sigma: f64,
    /// `‖AᵀA‖`.
    pub gram_norm: f64,
    pub meta: InstanceMeta,
}

impl LassoInstance {
    /// Two-block form `min ½‖x−b‖² + σ‖y‖₁ s.t. x − Ay = 0` with proximal weights `τ₁`, `τ₂`.
    pub fn spec(&self, beta1: f64, beta2: f64, tau1: f64, tau2: f64) -> ProblemSpec {
        let m = self.a.nrows();
        let x = BlockSpec::new(
            Objective::half_sq_dist(self.b.clone()),
            DMatrix::identity(m, m),
            beta1,
            QMode::IdentityMinusGram { tau: tau1 },
        );
        let y = BlockSpec::new(
            Objective::scaled_l1(self.sigma),
            -&self.a,
            beta2,
            QMode::IdentityMinusGram { tau: tau2 },
        );
        ProblemSpec::new(vec![x, y], DVector::zeros(m), ConstraintSense::Equality)
    }

    /// Spec for the splitting method at one sweep point.
    ///
    /// `β₁ = β₂` come from [`lasso_params`]. The proximal weights are the smallest
    /// admissible ones for the dual step of `mode`: `τ_i = 1.01·p·s·‖A_iᵀA_i‖`
    /// with `s = Σβ_i` for the literal step, and `τ_i = 1.01·β_i‖A_iᵀA_i‖` otherwise.
    pub fn splitting_spec(&self, tau2: f64, mode: DualStepMode) -> Result<ProblemSpec> {
        let params = lasso_params(tau2)?;
        let beta = params.beta1;
        let scale = match mode {
            DualStepMode::PaperLiteral => 2.0 * (params.beta1 + params.beta2),
            DualStepMode::ProofConsistent => beta,
        };
        Ok(self.spec(
            params.beta1,
            params.beta2,
            SAFETY * scale,
            SAFETY * scale * self.gram_norm,
        ))
    }

    /// Spec for the linearized ADMM baseline: one penalty `β`, linearization weight `1.01·β‖AᵀA‖`.
    pub fn linearized_admm_spec(&self, tau2: f64) -> Result<ProblemSpec> {
        let beta = lasso_params(tau2)?.beta1;
        Ok(self.spec(beta, beta, SAFETY * beta, SAFETY * beta * self.gram_norm))
    }

    /// `½‖Ay−b‖² + σ‖y‖₁`.
    pub fn objective(&self, y: &DVector<f64>) -> f64 {
        0.5 * (&self.a * y - &self.b).norm_squared() + self.sigma * y.lp_norm(1)
    }
}

pub fn gen_lasso(m: usize, n: usize, seed: u64) -> Result<LassoInstance> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidDimensions {
            m,
            n,
            reason: "LASSO needs positive dimensions",
        });
    }
    let mut r = rng(seed);
    let mut a = gaussian_matrix(&mut r, m, n);
    for mut col in a.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }
    let nnz = n.min(100);
    let mut y_star = DVector::zeros(n);
    for idx in rand::seq::index::sample(&mut r, n, nnz) {
        y_star[idx] = r.sample(StandardNormal);
    }
    let sd = LASSO_NOISE_VAR.sqrt();
    let noise = DVector::from_fn(m, |_, _| sd * r.sample::<f64, _>(StandardNormal));
    let b = &a * &y_star + &noise;
    let gram_norm = spectral_norm_gram(&a);
    Ok(LassoInstance {
        meta: InstanceMeta {
            kind: "lasso".into(),
            m,
            n,
            seed,
            generator_version: GENERATOR_VERSION.into(),
            extra: Default::default(),
        },
        a,
        y_star,
        noise,
        b,
        sigma: LASSO_SIGMA,
        gram_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    pub beta1: f64,
    pub beta2: f64,
    pub tau1: f64,
}

/// `β₁ = β₂ = (2−τ₂)/(τ₂|τ₂−1|)`, `τ₁ = |τ₂−1|/(5β₁τ₂) + 4/5`.
pub fn lasso_params(tau2: f64) -> Result<LassoParams> {
    if !(tau2 > 0.0 && tau2 < 2.0) || tau2 == 1.0 {
        return Err(Error::ParameterDomain(format!(
            "tau2 = {tau2} must lie in (0, 1) or (1, 2)"
        )));
    }
    let d = (tau2 - 1.0).abs();
    let beta = (2.0 - tau2) / (tau2 * d);
    Ok(LassoParams {
        beta1: beta,
        beta2: beta,
        tau1: d / (5.0 * beta * tau2) + 4.0 / 5.0,
    })
}

/// The sweep `0.05, 0.10, …, 0.70`.
pub fn tau2_sweep() -> Vec<f64> {
    (1..=14).map(|k| k as f64 * 0.05).collect()
}

/// Standard-normal starting point.
pub fn random_init(spec: &ProblemSpec, seed: u64) -> Iterate {
    let mut r = rng(seed ^ 0x5DEE_CE66_D1CE_4E5B);
    let x_blocks = spec
        .blocks
        .iter()
        .map(|b| DVector::from_fn(b.dim(), |_, _| r.sample(StandardNormal)))
        .collect();
    let lambda = DVector::from_fn(spec.num_constraints(), |_, _| r.sample(StandardNormal));
    Iterate { x_blocks, lambda }
}

pub const REFERENCE_TOL: f64 = 1e-13;
pub const REFERENCE_MAX_ITER: usize = 1_000_000;
pub const REFERENCE_MAX_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Reference {
    pub iterate: Iterate,
    pub residual: f64,
    pub objective: f64,
    pub iterations: usize,
}

/// Long-run solve with the certified method (`tol 1e-13`, cap `10⁶`).
pub fn reference_solution(spec: &ProblemSpec, seed: u64) -> Result<Reference> {
    reference_solution_with(spec, seed, REFERENCE_TOL, REFERENCE_MAX_ITER)
}

/// The saddle set does not depend on `β` or `Q`, so the solve runs on a copy
/// whose scaled-identity proximal terms are tightened to `τ = 1.01·β‖AᵀA‖`.
/// A loose `τ` (basis pursuit at `β = 0.001`, `τ = 2.5`) can otherwise stall
/// above the residual threshold within the iteration cap.
pub fn reference_solution_with(spec: &ProblemSpec, seed: u64, tol: f64, max_iter: usize) -> Result<Reference> {
    let algorithm = if spec.num_blocks() == 1 {
        Algorithm::PdpAlm
    } else {
        Algorithm::PartialProxPdp
    };
    let cfg = SolverConfig::new(algorithm)
        .with_dual_step_mode(DualStepMode::ProofConsistent)
        .with_tol(tol)
        .with_max_iter(max_iter)
        .with_divergence_ratio(f64::INFINITY);
    let tuned = tightened(spec);
    let res = solve(&tuned, &cfg, &random_init(spec, seed))?;
    let residual = vi_residual(spec, &res.final_iterate);
    if !(residual <= REFERENCE_MAX_RESIDUAL) {
        return Err(Error::NoReference {
            residual,
            iterations: res.iterations,
        });
    }
    Ok(Reference {
        objective: spec.objective_value(&res.final_iterate.x_blocks),
        iterate: res.final_iterate,
        residual,
        iterations: res.iterations,
    })
}

fn tightened(spec: &ProblemSpec) -> ProblemSpec {
    let mut out = spec.clone();
    for block in out.blocks.iter_mut().take(spec.proximal_count) {
        if matches!(
            block.q_mode,
            QMode::IdentityMinusGram { .. } | QMode::BetaScaledIdentityMinusGram { .. }
        ) {
            let tau = SAFETY * block.beta * spectral_norm_gram(&block.matrix);
            if tau > 0.0 {
                block.q_mode = QMode::IdentityMinusGram { tau };
            }
        }
    }
    out
}
