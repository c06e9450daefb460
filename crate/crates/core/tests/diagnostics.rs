mod common;

use common::*;
use pdpalm_core::diagnostics::{
    apply_f, check_step_certificate, ergodic_gap_check, monotonicity_product, vi_residual, ErgodicTracker, HMetric,
    HVariant,
};
use pdpalm_core::instances::{gen_basis_pursuit, gen_lasso, random_init, reference_solution, reference_solution_with};
use pdpalm_core::*;
use proptest::prelude::*;

const VARIANTS: [HVariant; 3] = [HVariant::SingleBlock, HVariant::Splitting, HVariant::PartialProx];

fn spec_for(variant: HVariant, seed: u64) -> ProblemSpec {
    match variant {
        HVariant::SingleBlock => random_spec(seed, &[6], 4, 1),
        HVariant::Splitting => random_spec(seed, &[3, 5, 2], 4, 3),
        // the non-proximal block is tall, so it has full column rank
        HVariant::PartialProx => random_spec(seed, &[5, 3], 4, 1),
    }
}

#[test]
fn h_block_form_matches_decomposition_and_is_positive() {
    for variant in VARIANTS {
        for seed in 0..5 {
            let spec = spec_for(variant, seed);
            assert!(validate(&spec).is_empty(), "{:?}", validate(&spec));
            let h = HMetric::new(&spec, variant);
            let mut r = rng(seed);
            for _ in 0..100 {
                let w = random_iterate(&mut r, &spec);
                let dec = h.quadratic_form(&w);
                let blk = h.block_quadratic_form(&w);
                assert!((dec - blk).abs() <= 1e-10 * blk.abs().max(1e-300), "{variant:?}: {dec} vs {blk}");
                assert!(dec > 0.0);
            }
            let eig = nalgebra::SymmetricEigen::new(h.dense()).eigenvalues.min();
            assert!(eig > 0.0, "{variant:?} smallest eigenvalue {eig}");
        }
    }
}

#[test]
fn partial_prox_h_is_singular_with_rank_deficient_free_block() {
    // a wide non-proximal block: AᵀA singular, so some direction has q = 0
    let spec = random_spec(3, &[4, 6], 3, 1);
    assert!(validate(&spec).iter().any(|v| matches!(v, Violation::IllPosedBlock { block: 1, .. })));
    let h = HMetric::new(&spec, HVariant::PartialProx);
    let eig = nalgebra::SymmetricEigen::new(h.dense()).eigenvalues.min();
    assert!(eig < 1e-9);
}

#[test]
fn h_toy_values() {
    let block = BlockSpec::new(
        Objective::Zero,
        DMatrix::from_element(1, 1, 1.0),
        1.0,
        QMode::GeneralSpd(DMatrix::from_element(1, 1, 1.0)),
    );
    let spec = ProblemSpec::single(block, DVector::zeros(1), ConstraintSense::Equality);
    let h = HMetric::new(&spec, HVariant::SingleBlock);
    let w = Iterate::single(DVector::from_element(1, 1.0), DVector::from_element(1, 1.0));
    assert_eq!(h.quadratic_form(&w), 1.0);
    assert_eq!(h.block_quadratic_form(&w), 1.0);
    assert_eq!(h.quadratic_form(&Iterate::zeros(&spec)), 0.0);
}

#[test]
fn apply_f_zero_point_and_identity() {
    let spec = random_spec(1, &[3, 2], 3, 2);
    let f0 = apply_f(&spec, &Iterate::zeros(&spec));
    assert!(f0.x_blocks.iter().all(|v| v.iter().all(|&t| t == 0.0)));
    assert_eq!(f0.lambda, -&spec.rhs);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f_is_skew(seed in 0u64..1000, pair_seed in 0u64..1000) {
        let spec = random_spec(seed, &[4, 3], 5, 2);
        let mut r = rng(pair_seed);
        let a = random_iterate(&mut r, &spec);
        let b = random_iterate(&mut r, &spec);
        let prod = monotonicity_product(&spec, &a, &b);
        prop_assert!(prod.abs() <= 1e-10 * a.sub(&b).norm_squared());
    }

    #[test]
    fn h_decomposition_identity(seed in 0u64..1000, v in 0usize..3) {
        let spec = spec_for(VARIANTS[v], seed);
        let h = HMetric::new(&spec, VARIANTS[v]);
        let mut r = rng(seed ^ 0xabc);
        let w = random_iterate(&mut r, &spec);
        let (dec, blk) = (h.quadratic_form(&w), h.block_quadratic_form(&w));
        prop_assert!((dec - blk).abs() <= 1e-10 * blk.abs());
    }
}

#[test]
fn basis_pursuit_contraction_and_quasi_fejer() {
    let inst = gen_basis_pursuit(10, 20, 2).unwrap();
    let reference = reference_solution(&inst.spec, 2).unwrap();
    assert!(reference.residual < 1e-8);
    let h = HMetric::new(&inst.spec, HVariant::SingleBlock);
    let init = random_init(&inst.spec, 5);
    let d0 = h.dist_sq(&init, &reference.iterate);
    let mut worst: f64 = f64::NEG_INFINITY;
    let cfg = SolverConfig::new(Algorithm::PdpAlm).with_tol(1e-9).with_max_iter(50_000);
    solve_with(&inst.spec, &cfg, &init, |prev, next, rec| {
        let c = check_step_certificate(&h, prev, next, &reference.iterate);
        assert!(c.pass, "iteration {}: {c:?}", rec.iter);
        worst = worst.max(c.slack() / (1.0 + d0));
        assert!(c.dist_next.sqrt() <= c.dist_prev.sqrt() + 1e-9);
        let step = rec.step_h_norm_sq.unwrap();
        assert!((step - c.step).abs() <= 1e-9 * (1.0 + c.step));
    })
    .unwrap();
    assert!(worst <= 1e-9);
}

#[test]
fn splitting_and_partial_contractions_on_lasso() {
    let inst = gen_lasso(8, 20, 6).unwrap();
    let spec = inst.splitting_spec(0.3, DualStepMode::ProofConsistent).unwrap();
    let reference = reference_solution(&spec, 1).unwrap();
    for (alg, variant) in [(Algorithm::SplittingPdp, HVariant::Splitting), (Algorithm::PartialProxPdp, HVariant::PartialProx)] {
        let h = HMetric::new(&spec, variant);
        let cfg = SolverConfig::new(alg).with_tol(1e-9).with_max_iter(5_000);
        solve_with(&spec, &cfg, &random_init(&spec, 3), |prev, next, rec| {
            let c = check_step_certificate(&h, prev, next, &reference.iterate);
            assert!(c.pass, "{alg} iteration {}: {c:?}", rec.iter);
        })
        .unwrap();
    }
}

#[test]
fn partial_prox_contraction_with_free_block() {
    // block 2: square, nonsingular, no proximal term
    let spec = random_spec(9, &[6, 4], 4, 1);
    assert!(validate(&spec).is_empty());
    let reference = reference_solution(&spec, 0).unwrap();
    let h = HMetric::new(&spec, HVariant::PartialProx);
    let init = random_init(&spec, 8);
    let mut tracker = ErgodicTracker::new(&h, &init, &reference.iterate);
    let cfg = SolverConfig::new(Algorithm::PartialProxPdp).with_tol(1e-10).with_max_iter(20_000);
    solve_with(&spec, &cfg, &init, |prev, next, rec| {
        assert!(check_step_certificate(&h, prev, next, &reference.iterate).pass, "{}", rec.iter);
        assert!(tracker.push(next, rec.objective).pass, "ergodic bound at {}", rec.iter);
    })
    .unwrap();
}

#[test]
fn toy_ergodic_bound_holds_for_fifty_steps() {
    let block = BlockSpec::new(
        Objective::Zero,
        DMatrix::from_element(1, 1, 1.0),
        1.0,
        QMode::GeneralSpd(DMatrix::from_element(1, 1, 1.0)),
    );
    let spec = ProblemSpec::single(block, DVector::zeros(1), ConstraintSense::Equality);
    let init = Iterate::single(DVector::from_element(1, 1.0), DVector::zeros(1));
    let mut iterates = Vec::new();
    let mut thetas = Vec::new();
    let cfg = SolverConfig::default().with_max_iter(50).with_tol(1e-300);
    solve_with(&spec, &cfg, &init, |_, next, rec| {
        iterates.push(next.clone());
        thetas.push(rec.objective);
    })
    .unwrap();
    assert_eq!(iterates.len(), 50);
    let h = HMetric::new(&spec, HVariant::SingleBlock);
    let report = ergodic_gap_check(&h, &init, &iterates, &Iterate::zeros(&spec), &thetas);
    assert!(report.pass);
    assert_eq!(report.entries.len(), 50);
    // constant trace at the reference has zero gap
    let star = Iterate::zeros(&spec);
    let flat = ergodic_gap_check(&h, &init, &vec![star.clone(); 5], &star, &[0.0; 5]);
    assert!(flat.entries.iter().all(|e| e.gap == 0.0 && e.pass));
}

#[test]
fn vi_residual_small_at_long_run_solution_and_grows_with_perturbation() {
    let inst = gen_basis_pursuit(10, 20, 7).unwrap();
    let reference = reference_solution_with(&inst.spec, 1, 1e-12, 1_000_000).unwrap();
    assert!(vi_residual(&inst.spec, &reference.iterate) < 1e-8);
    let mut moved = reference.iterate.clone();
    moved.lambda[0] += 1.0;
    // the prox gap sees Aᵀe₁, whose entries are O(1)
    assert!(vi_residual(&inst.spec, &moved) > 0.1);
}

#[test]
fn vi_residual_inequality_parts() {
    let block = BlockSpec::new(Objective::Zero, DMatrix::identity(2, 2), 1.0, QMode::IdentityMinusGram { tau: 2.0 });
    let spec = ProblemSpec::single(block, DVector::zeros(2), ConstraintSense::InequalityGe);
    let w = Iterate::single(DVector::from_column_slice(&[1.0, -2.0]), DVector::from_column_slice(&[0.0, -1.0]));
    let parts = pdpalm_core::diagnostics::vi_residual_parts(&spec, &w);
    assert_eq!(parts.sign, 1.0);
    // negative part ‖(0, −2)‖ = 2 plus |λᵀr| = 2
    assert_eq!(parts.primal, 4.0);
}
