//! Benchmark fixtures shared by the criterion targets.

use pdpalm_core::instances::{gen_basis_pursuit, gen_lasso, random_init, BasisPursuitInstance, LassoInstance};
use pdpalm_core::{DualStepMode, Iterate, ProblemSpec};

pub fn basis_pursuit(m: usize, n: usize) -> (BasisPursuitInstance, Iterate) {
    let inst = gen_basis_pursuit(m, n, 0).expect("valid dims");
    let init = random_init(&inst.spec, 0);
    (inst, init)
}

/// Splitting spec at `τ₂ = 0.5` and a random start.
pub fn lasso(m: usize, n: usize, mode: DualStepMode) -> (LassoInstance, ProblemSpec, Iterate) {
    let inst = gen_lasso(m, n, 0).expect("valid dims");
    let spec = inst.splitting_spec(0.5, mode).expect("admissible τ₂");
    let init = random_init(&spec, 0);
    (inst, spec, init)
}
