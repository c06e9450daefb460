//! The operator `F`, the H metrics and the contraction / ergodic-rate certificates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::problem::{Algorithm, ConstraintSense, Iterate, ProblemSpec};

/// `F(ω) = (−A_1ᵀλ, …, −A_pᵀλ, Σ A_i x_i − b)`.
pub fn apply_f(spec: &ProblemSpec, omega: &Iterate) -> Iterate {
    Iterate {
        x_blocks: spec.blocks.iter().map(|b| -b.matrix.tr_mul(&omega.lambda)).collect(),
        lambda: spec.residual(&omega.x_blocks),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HVariant {
    /// `H = (βAᵀA+Q, −Aᵀ; −A, (1/β)I)`.
    SingleBlock,
    /// Every block carries `Q_i`.
    Splitting,
    /// Only the first `p1` blocks carry `Q_i`.
    PartialProx,
}

/// The quadratic form `q(ω) = ωᵀHω` attached to one algorithm.
#[derive(Debug, Clone, Copy)]
pub struct HMetric<'a> {
    pub spec: &'a ProblemSpec,
    pub variant: HVariant,
}

impl<'a> HMetric<'a> {
    pub fn new(spec: &'a ProblemSpec, variant: HVariant) -> Self {
        Self { spec, variant }
    }

    /// The metric the given algorithm contracts in, if it is a certified one.
    pub fn for_algorithm(spec: &'a ProblemSpec, algorithm: Algorithm) -> Option<Self> {
        let variant = match algorithm {
            Algorithm::PdpAlm => HVariant::SingleBlock,
            Algorithm::SplittingPdp => HVariant::Splitting,
            Algorithm::PartialProxPdp => HVariant::PartialProx,
            _ => return None,
        };
        Some(Self::new(spec, variant))
    }

    /// Number of leading blocks whose `Q_i` enters the metric.
    pub fn proximal_count(&self) -> usize {
        match self.variant {
            HVariant::SingleBlock => self.spec.proximal_count.min(1),
            HVariant::Splitting => self.spec.num_blocks(),
            HVariant::PartialProx => self.spec.proximal_count,
        }
    }

    /// `Σ_i ‖λ/√β_i − √β_i A_i x_i‖² + Σ_{i≤p1} ‖x_i‖²_{Q_i}`.
    pub fn quadratic_form(&self, omega: &Iterate) -> f64 {
        let p1 = self.proximal_count();
        let mut q = 0.0;
        for (i, (block, x)) in self.spec.blocks.iter().zip(&omega.x_blocks).enumerate() {
            let sb = block.beta.sqrt();
            let ax = &block.matrix * x;
            q += (&omega.lambda / sb - &ax * sb).norm_squared();
            if i < p1 {
                q += block.q_mode.norm_sq(block.beta, x, &ax);
            }
        }
        q
    }

    /// `‖a − b‖²_H`.
    pub fn dist_sq(&self, a: &Iterate, b: &Iterate) -> f64 {
        self.quadratic_form(&a.sub(b))
    }

    /// Dense `H` in the stacked ordering `(x_1, …, x_p, λ)`. Intended for small instances.
    pub fn dense(&self) -> DMatrix<f64> {
        let p1 = self.proximal_count();
        let n = self.spec.num_vars();
        let m = self.spec.num_constraints();
        let mut h = DMatrix::zeros(n + m, n + m);
        let mut off = 0;
        let mut inv_beta = 0.0;
        for (i, block) in self.spec.blocks.iter().enumerate() {
            let a = &block.matrix;
            let ni = block.dim();
            let mut diag = a.tr_mul(a) * block.beta;
            if i < p1 {
                diag += block.q_mode.matrix(block.beta, a);
            }
            h.view_mut((off, off), (ni, ni)).copy_from(&diag);
            h.view_mut((off, n), (ni, m)).copy_from(&(-a.transpose()));
            h.view_mut((n, off), (m, ni)).copy_from(&(-a));
            inv_beta += 1.0 / block.beta;
            off += ni;
        }
        for j in 0..m {
            h[(n + j, n + j)] = inv_beta;
        }
        h
    }

    /// `ωᵀHω` through the dense block matrix.
    pub fn block_quadratic_form(&self, omega: &Iterate) -> f64 {
        let v = omega.to_flat();
        v.dot(&(self.dense() * &v))
    }
}

/// One contraction check `‖ω⁺−ω*‖²_H ≤ ‖ω−ω*‖²_H − ‖ω−ω⁺‖²_H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCertificate {
    pub k: usize,
    pub dist_prev: f64,
    pub dist_next: f64,
    pub step: f64,
    pub pass: bool,
}

impl StepCertificate {
    /// `dist_next − (dist_prev − step)`; nonpositive when the inequality holds exactly.
    pub fn slack(&self) -> f64 {
        self.dist_next - (self.dist_prev - self.step)
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("certificate serializes")
    }
}

/// Contraction tolerance is `1e-9·(1 + ‖prev − ref‖²_H)`.
pub const CERTIFICATE_RTOL: f64 = 1e-9;

pub fn check_step_certificate(metric: &HMetric<'_>, prev: &Iterate, next: &Iterate, reference: &Iterate) -> StepCertificate {
    let dist_prev = metric.dist_sq(prev, reference);
    let dist_next = metric.dist_sq(next, reference);
    let step = metric.dist_sq(prev, next);
    let pass = dist_next <= dist_prev - step + CERTIFICATE_RTOL * (1.0 + dist_prev);
    StepCertificate {
        k: 0,
        dist_prev,
        dist_next,
        step,
        pass,
    }
}

/// Components of the saddle-point residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViResidual {
    /// `‖Ax−b‖`, or `‖min(Ax−b, 0)‖ + |λᵀ(Ax−b)|` for `≥` constraints.
    pub primal: f64,
    /// Prox fixed-point gap `‖x − P_X prox_θ(x + Aᵀλ, 1)‖` over all blocks.
    pub dual: f64,
    /// `‖min(λ, 0)‖` for `≥` constraints, else 0.
    pub sign: f64,
}

impl ViResidual {
    pub fn value(&self) -> f64 {
        self.primal.max(self.dual).max(self.sign)
    }
}

pub fn vi_residual_parts(spec: &ProblemSpec, omega: &Iterate) -> ViResidual {
    let r = spec.residual(&omega.x_blocks);
    let (primal, sign) = match spec.sense {
        ConstraintSense::Equality => (r.norm(), 0.0),
        ConstraintSense::InequalityGe => (
            r.map(|t| t.min(0.0)).norm() + omega.lambda.dot(&r).abs(),
            omega.lambda.map(|t| t.min(0.0)).norm(),
        ),
    };
    let dual = spec
        .blocks
        .iter()
        .zip(&omega.x_blocks)
        .map(|(block, x)| {
            let mut y = block.objective.prox(&(x + block.matrix.tr_mul(&omega.lambda)), 1.0);
            block.feasible_set.project(&mut y);
            (x - y).norm_squared()
        })
        .sum::<f64>()
        .sqrt();
    ViResidual { primal, dual, sign }
}

/// Computable saddle-point residual; zero exactly at saddle points.
pub fn vi_residual(spec: &ProblemSpec, omega: &Iterate) -> f64 {
    vi_residual_parts(spec, omega).value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicEntry {
    pub t: usize,
    /// `θ(x̃_t) − θ(x*) + (ω̃_t−ω*)ᵀF(ω*)`.
    pub gap: f64,
    /// Same with `θ(x̃_t)` replaced by the mean of `θ(x^{k+1})`.
    pub gap_mean_theta: f64,
    /// `‖ω*−ω⁰‖²_H / (2(t+1))`.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub entries: Vec<ErgodicEntry>,
    pub pass: bool,
    pub first_failure: Option<usize>,
}

pub const ERGODIC_ATOL: f64 = 1e-9;

/// Streaming form of [`ergodic_gap_check`]: feed `ω^{k+1}` and `θ(x^{k+1})` in order.
#[derive(Debug, Clone)]
pub struct ErgodicTracker<'a> {
    spec: &'a ProblemSpec,
    f_ref: Iterate,
    reference: Iterate,
    theta_ref: f64,
    initial_dist: f64,
    mean: Option<Iterate>,
    theta_sum: f64,
    t: usize,
    first_failure: Option<usize>,
}

impl<'a> ErgodicTracker<'a> {
    pub fn new(metric: &HMetric<'a>, initial: &Iterate, reference: &Iterate) -> Self {
        let spec = metric.spec;
        Self {
            spec,
            f_ref: apply_f(spec, reference),
            reference: reference.clone(),
            theta_ref: spec.objective_value(&reference.x_blocks),
            initial_dist: metric.dist_sq(reference, initial),
            mean: None,
            theta_sum: 0.0,
            t: 0,
            first_failure: None,
        }
    }

    pub fn push(&mut self, iterate: &Iterate, theta: f64) -> ErgodicEntry {
        let t = self.t;
        match self.mean.as_mut() {
            None => self.mean = Some(iterate.clone()),
            Some(m) => {
                let diff = iterate.sub(m);
                m.axpy(1.0 / (t as f64 + 1.0), &diff);
            }
        }
        self.theta_sum += theta;
        let mean = self.mean.as_ref().expect("mean set");
        let linear = mean.sub(&self.reference).dot(&self.f_ref);
        let gap = self.spec.objective_value(&mean.x_blocks) - self.theta_ref + linear;
        let gap_mean_theta = self.theta_sum / (t as f64 + 1.0) - self.theta_ref + linear;
        let bound = self.initial_dist / (2.0 * (t as f64 + 1.0));
        let pass = gap <= bound + ERGODIC_ATOL && gap_mean_theta <= bound + ERGODIC_ATOL;
        if !pass && self.first_failure.is_none() {
            self.first_failure = Some(t);
        }
        self.t += 1;
        ErgodicEntry {
            t,
            gap,
            gap_mean_theta,
            bound,
            pass,
        }
    }

    pub fn first_failure(&self) -> Option<usize> {
        self.first_failure
    }

    pub fn count(&self) -> usize {
        self.t
    }
}

/// Checks the `O(1/t)` ergodic bound at every prefix of `iterates = ω^1, …, ω^T`.
pub fn ergodic_gap_check(
    metric: &HMetric<'_>,
    initial: &Iterate,
    iterates: &[Iterate],
    reference: &Iterate,
    theta_values: &[f64],
) -> ErgodicReport {
    assert_eq!(iterates.len(), theta_values.len(), "one θ value per iterate");
    let mut tracker = ErgodicTracker::new(metric, initial, reference);
    let entries: Vec<ErgodicEntry> = iterates
        .iter()
        .zip(theta_values)
        .map(|(it, &th)| tracker.push(it, th))
        .collect();
    ErgodicReport {
        pass: tracker.first_failure().is_none(),
        first_failure: tracker.first_failure(),
        entries,
    }
}

/// `(ω − ω̃)ᵀ(F(ω) − F(ω̃))`, identically zero by skew-symmetry.
pub fn monotonicity_product(spec: &ProblemSpec, omega: &Iterate, other: &Iterate) -> f64 {
    let d = omega.sub(other);
    d.dot(&apply_f(spec, omega).sub(&apply_f(spec, other)))
}
