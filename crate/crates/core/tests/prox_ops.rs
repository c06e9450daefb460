mod common;

use common::*;
use pdpalm_core::prox::FeasibleSet;
use pdpalm_core::{prox_half_sq_dist, soft_threshold, spectral_norm_gram, DMatrix, DVector, Objective, ProxOracle};
use proptest::prelude::*;
use rand::Rng;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[test]
fn soft_threshold_matches_grid_search() {
    let cases = [(dv(&[2.0, -0.5, 1.0]), 1.0), (dv(&[-3.0]), 0.5)];
    for (t, delta) in cases {
        let got = soft_threshold(&t, delta);
        for (i, &ti) in t.iter().enumerate() {
            let y = grid_min_1d(|y| 0.5 * (y - ti).powi(2) + delta * y.abs(), -5.0, 5.0, 1e-4);
            assert!((got[i] - y).abs() < 1e-6, "t = {ti}: {} vs {y}", got[i]);
        }
    }
    assert_eq!(soft_threshold(&dv(&[2.0, -0.5, 1.0]), 1.0), dv(&[1.0, 0.0, 0.0]));
    assert_eq!(soft_threshold(&dv(&[-3.0]), 0.5), dv(&[-2.5]));
}

#[test]
fn half_sq_dist_matches_stationarity_and_grid() {
    let y = prox_half_sq_dist(&dv(&[2.0]), 1.0, &dv(&[0.0]));
    assert_eq!(y, dv(&[1.0]));
    let g = grid_min_1d(|t| 0.5 * t * t + 0.5 * (t - 2.0).powi(2), -5.0, 5.0, 1e-4);
    assert!((g - 1.0).abs() < 1e-6);
}

#[test]
fn soft_threshold_is_l1_prox_at_unit_weight() {
    let mut r = rng(11);
    for _ in 0..20 {
        let v = normal_vec(&mut r, 7);
        let delta = 0.1 + r.random::<f64>();
        assert_eq!(Objective::scaled_l1(delta).prox(&v, 1.0), soft_threshold(&v, delta));
        let rho = 0.5 + 3.0 * r.random::<f64>();
        assert_eq!(Objective::scaled_l1(delta).prox(&v, rho), soft_threshold(&v, delta / rho));
    }
}

#[test]
fn spectral_norm_matches_dense_eigensolver() {
    let mut r = rng(5);
    for _ in 0..10 {
        let a = normal_mat(&mut r, 5, 8);
        let truth = dense_lambda_max(&a);
        let est = spectral_norm_gram(&a);
        assert!((est - truth).abs() <= 1e-6 * truth, "{est} vs {truth}");
        assert!(est <= truth * (1.0 + 1e-12));
        assert!(truth <= est * (1.0 + 1e-8));
    }
}

#[test]
fn spectral_norm_known_spectrum() {
    // A = U diag(s) Vᵀ with orthogonal U, V from QR
    let mut r = rng(21);
    let u = normal_mat(&mut r, 6, 6).qr().q();
    let v = normal_mat(&mut r, 9, 9).qr().q();
    let mut s = DMatrix::zeros(6, 9);
    for (i, sv) in [3.0, 2.5, 2.0, 1.0, 0.5, 0.1].iter().enumerate() {
        s[(i, i)] = *sv;
    }
    let a = u * s * v.transpose();
    let est = spectral_norm_gram(&a);
    assert!(est <= 9.0 * (1.0 + 1e-12));
    assert!(9.0 <= est * (1.0 + 1e-8), "{est}");
}

fn oracles() -> Vec<Objective> {
    vec![
        Objective::Zero,
        Objective::l1(),
        Objective::scaled_l1(0.37),
        Objective::half_sq_dist(dv(&[0.5, -1.0, 2.0, 0.0])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn prox_is_firmly_nonexpansive(
        u in prop::collection::vec(-10.0f64..10.0, 4),
        v in prop::collection::vec(-10.0f64..10.0, 4),
        rho in 0.01f64..100.0,
    ) {
        let (u, v) = (dv(&u), dv(&v));
        for theta in oracles() {
            let (pu, pv) = (theta.prox(&u, rho), theta.prox(&v, rho));
            let d = &pu - &pv;
            prop_assert!(d.norm() <= (&u - &v).norm() + 1e-10);
            // firm: ‖Pu − Pv‖² ≤ ⟨Pu − Pv, u − v⟩
            prop_assert!(d.norm_squared() <= d.dot(&(&u - &v)) + 1e-10);
        }
    }

    #[test]
    fn soft_threshold_random_inputs_match_grid(t in -4.0f64..4.0, delta in 0.05f64..2.0) {
        let got = soft_threshold(&dv(&[t]), delta)[0];
        let y = grid_min_1d(|y| 0.5 * (y - t).powi(2) + delta * y.abs(), -5.0, 5.0, 1e-4);
        prop_assert!((got - y).abs() < 1e-6);
        if t.abs() <= delta {
            prop_assert_eq!(got, 0.0);
        } else {
            prop_assert_eq!(got.signum(), t.signum());
        }
    }

    #[test]
    fn half_sq_dist_random_inputs_match_grid(v in -4.0f64..4.0, b in -4.0f64..4.0, rho in 0.1f64..10.0) {
        let got = prox_half_sq_dist(&dv(&[v]), rho, &dv(&[b]))[0];
        let y = grid_min_1d(|y| 0.5 * (y - b).powi(2) + 0.5 * rho * (y - v).powi(2), -5.0, 5.0, 1e-4);
        prop_assert!((got - y).abs() < 1e-6);
    }

    #[test]
    fn nonneg_projection_composes_with_separable_prox(v in prop::collection::vec(-3.0f64..3.0, 5), rho in 0.1f64..5.0) {
        // prox of ‖·‖₁ + ι_{≥0} per coordinate is max(v − 1/ρ, 0)
        let mut y = Objective::l1().prox(&dv(&v), rho);
        FeasibleSet::NonNegative.project(&mut y);
        for (yi, vi) in y.iter().zip(&v) {
            prop_assert!((yi - (vi - 1.0 / rho).max(0.0)).abs() < 1e-14);
        }
    }
}
