//! Proximal operators, projections and the spectral-norm estimate used to size
//! proximal weights.
//!
//! Every objective block is represented only through its prox oracle
//! `prox(v, rho) = argmin_y { theta(y) + (rho/2)||y - v||^2 }`; no subgradient
//! access is assumed.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// `y ↦ argmin_z { θ(z) + ½‖z − y‖²_M }` for one fixed metric `M`.
pub type MetricProx = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A closed proper convex function accessed through its proximity operator.
pub trait ProxOracle: fmt::Debug + Send + Sync {
    /// Dimension the oracle is tied to, if any (e.g. the centre of a distance term).
    fn dim(&self) -> Option<usize> {
        None
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64;

    /// `argmin_y { θ(y) + (rho/2)‖y − v‖² }`, `rho > 0`.
    fn prox(&self, v: &DVector<f64>, rho: f64) -> DVector<f64>;

    /// Prepares the prox in a general SPD metric, or `None` when θ has no
    /// closed form for it.
    fn metric_prox(&self, _metric: &DMatrix<f64>) -> Option<MetricProx> {
        None
    }

    /// Separable across coordinates. Needed to compose the prox with a
    /// coordinatewise projection exactly.
    fn is_separable(&self) -> bool {
        false
    }

    /// Serializable description, when the oracle is one of the built-in kinds.
    fn descriptor(&self) -> Option<Objective> {
        None
    }
}

/// The built-in objective kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// θ ≡ 0.
    Zero,
    /// θ(y) = scale·‖y‖₁.
    L1 { scale: f64 },
    /// θ(y) = ½‖y − center‖².
    HalfSqDist { center: DVector<f64> },
}

impl Objective {
    pub fn l1() -> Self {
        Objective::L1 { scale: 1.0 }
    }

    pub fn scaled_l1(scale: f64) -> Self {
        Objective::L1 { scale }
    }

    pub fn half_sq_dist(center: DVector<f64>) -> Self {
        Objective::HalfSqDist { center }
    }
}

impl ProxOracle for Objective {
    fn dim(&self) -> Option<usize> {
        match self {
            Objective::HalfSqDist { center } => Some(center.len()),
            _ => None,
        }
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        match self {
            Objective::Zero => 0.0,
            Objective::L1 { scale } => scale * x.lp_norm(1),
            Objective::HalfSqDist { center } => 0.5 * (x - center).norm_squared(),
        }
    }

    fn prox(&self, v: &DVector<f64>, rho: f64) -> DVector<f64> {
        match self {
            Objective::Zero => v.clone(),
            Objective::L1 { scale } if *scale == 0.0 => v.clone(),
            Objective::L1 { scale } => soft_threshold(v, scale / rho),
            Objective::HalfSqDist { center } => prox_half_sq_dist(v, rho, center),
        }
    }

    fn metric_prox(&self, metric: &DMatrix<f64>) -> Option<MetricProx> {
        match self {
            Objective::Zero => Some(Box::new(|v: &DVector<f64>| v.clone())),
            Objective::HalfSqDist { center } => {
                // (y − c) + M(y − v) = 0  ⇔  (I + M) y = c + M v
                let n = metric.nrows();
                let shifted = metric + DMatrix::<f64>::identity(n, n);
                let factor = shifted.cholesky()?;
                let metric = metric.clone();
                let center = center.clone();
                Some(Box::new(move |v: &DVector<f64>| {
                    factor.solve(&(&center + &metric * v))
                }))
            }
            Objective::L1 { scale } => {
                // Closed form only when the metric is diagonal.
                let n = metric.nrows();
                let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || metric[(i, j)] == 0.0));
                if !diagonal || (0..n).any(|i| metric[(i, i)] <= 0.0) {
                    return None;
                }
                let weights: DVector<f64> = metric.diagonal();
                let scale = *scale;
                Some(Box::new(move |v: &DVector<f64>| {
                    DVector::from_iterator(
                        v.len(),
                        v.iter()
                            .zip(weights.iter())
                            .map(|(&t, &w)| shrink(t, scale / w)),
                    )
                }))
            }
        }
    }

    fn is_separable(&self) -> bool {
        true
    }

    fn descriptor(&self) -> Option<Objective> {
        Some(self.clone())
    }
}

/// Closed convex set `X_i` of a block, applied as a projection after the prox.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeasibleSet {
    #[default]
    Whole,
    #[serde(rename = "nonneg")]
    NonNegative,
}

impl FeasibleSet {
    pub fn project(&self, v: &mut DVector<f64>) {
        if let FeasibleSet::NonNegative = self {
            v.iter_mut().for_each(|t| *t = t.max(0.0));
        }
    }

    pub fn is_whole(&self) -> bool {
        matches!(self, FeasibleSet::Whole)
    }
}

#[inline]
fn shrink(t: f64, delta: f64) -> f64 {
    // (1 − δ/|t|)_+ · t, with the continuous extension 0 at t = 0
    let a = t.abs();
    if a <= delta {
        0.0
    } else {
        (1.0 - delta / a) * t
    }
}

/// Componentwise soft thresholding `(S_δ(t))_i = (1 − δ/|t_i|)_+ · t_i`.
pub fn soft_threshold(t: &DVector<f64>, delta: f64) -> DVector<f64> {
    debug_assert!(delta > 0.0, "soft_threshold requires delta > 0");
    t.map(|ti| shrink(ti, delta))
}

/// Minimizer of `½‖y − b‖² + (rho/2)‖y − v‖²`, i.e. `(b + rho·v) / (1 + rho)`.
pub fn prox_half_sq_dist(v: &DVector<f64>, rho: f64, b: &DVector<f64>) -> DVector<f64> {
    (b + v * rho) / (1.0 + rho)
}

/// Projection onto the nonnegative orthant.
pub fn project_nonneg(v: &DVector<f64>) -> DVector<f64> {
    v.map(|t| t.max(0.0))
}

const POWER_MAX_ITER: usize = 5000;
const POWER_REL_TOL: f64 = 1e-10;

/// Largest eigenvalue of `AᵀA` (the squared spectral norm of `A`) by power
/// iteration on the smaller of the two Gram matrices.
///
/// Returns the final Rayleigh quotient, which never exceeds the true value.
pub fn spectral_norm_gram(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() || a.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let gram = if a.nrows() <= a.ncols() {
        a * a.transpose()
    } else {
        a.tr_mul(a)
    };
    power_iteration(&gram)
}

/// Dominant eigenvalue of a symmetric positive semidefinite matrix.
pub(crate) fn power_iteration(gram: &DMatrix<f64>) -> f64 {
    let k = gram.nrows();
    // All-ones start, perturbed deterministically so it is not orthogonal to a
    // structured dominant eigenvector such as (1, -1).
    let golden = 0.618_033_988_749_894_9_f64;
    let mut v = DVector::from_fn(k, |j, _| 1.0 + 0.5 * ((j as f64 + 1.0) * golden).fract());
    v.normalize_mut();
    let mut rayleigh = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = gram * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        let done = (next - rayleigh).abs() < POWER_REL_TOL * next.abs();
        rayleigh = next;
        if done {
            break;
        }
    }
    v.dot(&(gram * &v)).max(rayleigh)
}
