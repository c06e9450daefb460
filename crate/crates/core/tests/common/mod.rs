//! Test-side oracles, written independently of the library code paths.
#![allow(dead_code)]

use pdpalm_core::{BlockSpec, ConstraintSense, DMatrix, DVector, Iterate, Objective, ProblemSpec, QMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, kept separate from the library's sampler
    let u1: f64 = r.random_range(1e-300..1.0);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn normal_vec(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(r))
}

pub fn normal_mat(r: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| normal(r))
}

/// Minimizer of a 1-D function on `[lo, hi]`: grid of step `h`, then golden-section refinement.
pub fn grid_min_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, h: f64) -> f64 {
    let steps = ((hi - lo) / h).ceil() as usize;
    let mut best = lo;
    let mut best_val = f(lo);
    for k in 1..=steps {
        let t = (lo + k as f64 * h).min(hi);
        let v = f(t);
        if v < best_val {
            best_val = v;
            best = t;
        }
    }
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mid = 0.5 * (a + b);
    // keep exact kinks (e.g. 0 for |y|) when the grid hit them
    if best_val <= f(mid) {
        best
    } else {
        mid
    }
}

/// Gaussian elimination with partial pivoting on plain arrays.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &bi)| {
        let mut row = r.clone();
        row.push(bi);
        row
    }).collect();
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    Some(x)
}

fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `min ‖x‖₁ s.t. Ax = b` by enumerating basic solutions: every vertex of the
/// split LP has its support inside some column basis of size `m`.
pub fn lp_min_l1(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let (m, n) = a.shape();
    let mut best = f64::INFINITY;
    for_each_subset(n, m, |cols| {
        let sub: Vec<Vec<f64>> = (0..m).map(|i| cols.iter().map(|&j| a[(i, j)]).collect()).collect();
        if let Some(x) = gauss_solve(&sub, b.as_slice()) {
            let v: f64 = x.iter().map(|t| t.abs()).sum();
            if v < best {
                best = v;
            }
        }
    });
    best
}

/// Largest eigenvalue of `AᵀA` by the dense symmetric eigensolver.
pub fn dense_lambda_max(a: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(a.transpose() * a).eigenvalues.max()
}

fn shrink(t: f64, d: f64) -> f64 {
    if t > d {
        t - d
    } else if t < -d {
        t + d
    } else {
        0.0
    }
}

/// Line-by-line transcription of the basis-pursuit PDP iteration with `Q = τI − βAᵀA`.
pub fn bp_pdp_step(a: &DMatrix<f64>, b: &DVector<f64>, beta: f64, tau: f64, x: &[f64], lam: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = a.shape();
    let mut lam_new = vec![0.0; m];
    for i in 0..m {
        let mut ax = 0.0;
        for j in 0..n {
            ax += a[(i, j)] * x[j];
        }
        lam_new[i] = lam[i] - beta * (ax - b[i]);
    }
    let mut x_new = vec![0.0; n];
    for j in 0..n {
        let mut g = 0.0;
        for i in 0..m {
            g += a[(i, j)] * (2.0 * lam_new[i] - lam[i]);
        }
        x_new[j] = shrink(x[j] + g / tau, 1.0 / tau);
    }
    (x_new, lam_new)
}

/// Transcription of the basis-pursuit DP-BALM display.
pub fn bp_dp_balm_step(a: &DMatrix<f64>, b: &DVector<f64>, tau: f64, delta: f64, x: &[f64], lam: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = a.shape();
    let mut sys = vec![vec![0.0; m]; m];
    for i in 0..m {
        for k in 0..m {
            let mut s = 0.0;
            for j in 0..n {
                s += a[(i, j)] * a[(k, j)];
            }
            sys[i][k] = s / tau + if i == k { delta } else { 0.0 };
        }
    }
    let r: Vec<f64> = (0..m)
        .map(|i| (0..n).map(|j| a[(i, j)] * x[j]).sum::<f64>() - b[i])
        .collect();
    let d = gauss_solve(&sys, &r).expect("regularized system");
    let lam_new: Vec<f64> = (0..m).map(|i| lam[i] - d[i]).collect();
    let x_new = (0..n)
        .map(|j| {
            let g: f64 = (0..m).map(|i| a[(i, j)] * (2.0 * lam_new[i] - lam[i])).sum();
            shrink(x[j] + g / tau, 1.0 / tau)
        })
        .collect();
    (x_new, lam_new)
}

/// Transcription of the two-block LASSO splitting step with the literal dual
/// coefficient `β₁ + β₂`, the `½‖x−b‖²` term kept and `A₂ = −A`:
/// `x⁺ = (b + τ₁(x + c/τ₁))/(1+τ₁)`, `y⁺ = S_{σ/τ₂}(y − Aᵀc/τ₂)` with `c = 2λ⁺ − λ`.
#[allow(clippy::too_many_arguments)]
pub fn lasso_literal_step(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    sigma: f64,
    beta1: f64,
    beta2: f64,
    tau1: f64,
    tau2: f64,
    x: &[f64],
    y: &[f64],
    lam: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (m, n) = a.shape();
    let mut lam_new = vec![0.0; m];
    for i in 0..m {
        let ay: f64 = (0..n).map(|j| a[(i, j)] * y[j]).sum();
        let r = x[i] - ay;
        lam_new[i] = lam[i] - beta1 * r - beta2 * r;
    }
    let c: Vec<f64> = (0..m).map(|i| 2.0 * lam_new[i] - lam[i]).collect();
    let x_new = (0..m).map(|i| (b[i] + tau1 * (x[i] + c[i] / tau1)) / (1.0 + tau1)).collect();
    let y_new = (0..n)
        .map(|j| {
            let g: f64 = (0..m).map(|i| a[(i, j)] * c[i]).sum();
            shrink(y[j] - g / tau2, sigma / tau2)
        })
        .collect();
    (x_new, y_new, lam_new)
}

/// A block whose objective and matrix are built so that `(x*, λ*)` is a saddle point.
pub struct Planted {
    pub block: BlockSpec,
    pub x: DVector<f64>,
}

/// `θ = ½‖x − c‖²` with `c = x* − Aᵀλ*`, so `Aᵀλ* ∈ ∂θ(x*)`.
pub fn planted_quadratic(r: &mut ChaCha8Rng, m: usize, n: usize, lambda: &DVector<f64>, beta: f64, q: QMode) -> Planted {
    let a = normal_mat(r, m, n);
    let x = normal_vec(r, n);
    let c = &x - a.transpose() * lambda;
    Planted {
        block: BlockSpec::new(Objective::half_sq_dist(c), a, beta, q),
        x,
    }
}

/// `θ = ‖·‖₁` with columns rescaled so that `a_jᵀλ* = sign(x*_j)` on the support
/// and `|a_jᵀλ*| ≤ 1/2` off it.
pub fn planted_l1(r: &mut ChaCha8Rng, m: usize, n: usize, lambda: &DVector<f64>, beta: f64, q: QMode) -> Planted {
    let mut a = normal_mat(r, m, n);
    let mut x = DVector::zeros(n);
    for j in 0..n {
        let dot = a.column(j).dot(lambda);
        if j % 3 == 0 {
            x[j] = normal(r);
            if x[j] == 0.0 {
                x[j] = 1.0;
            }
            let s = x[j].signum() / dot;
            a.column_mut(j).scale_mut(s);
        } else {
            let s = 0.5 * r.random::<f64>() / dot.abs();
            a.column_mut(j).scale_mut(s);
        }
    }
    Planted {
        block: BlockSpec::new(Objective::l1(), a, beta, q),
        x,
    }
}

/// Assembles planted blocks into a spec with `b = Σ A_i x_i*`.
pub fn assemble(planted: Vec<Planted>, lambda: DVector<f64>, sense: ConstraintSense) -> (ProblemSpec, Iterate) {
    let m = lambda.len();
    let mut b = DVector::zeros(m);
    for p in &planted {
        b += &p.block.matrix * &p.x;
    }
    let (blocks, xs): (Vec<_>, Vec<_>) = planted.into_iter().map(|p| (p.block, p.x)).unzip();
    (ProblemSpec::new(blocks, b, sense), Iterate::new(xs, lambda))
}

/// Admissible `IdentityMinusGram` weight for a block.
pub fn safe_tau(a: &DMatrix<f64>, beta: f64) -> f64 {
    1.5 * beta * dense_lambda_max(a) + 0.1
}

/// Random basis-pursuit-like spec with an arbitrary number of blocks.
pub fn random_spec(seed: u64, dims: &[usize], m: usize, p1: usize) -> ProblemSpec {
    let mut r = rng(seed);
    let blocks = dims
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let a = normal_mat(&mut r, m, n);
            let beta = 0.2 + 2.0 * r.random::<f64>();
            // ℓ₁ has no closed-form prox in a dense metric, so GeneralSpd and free blocks get a quadratic
            let kind = r.random_range(0..3);
            if i >= p1 {
                let tau = safe_tau(&a, beta);
                return BlockSpec::new(Objective::half_sq_dist(normal_vec(&mut r, n)), a, beta, QMode::IdentityMinusGram { tau });
            }
            match kind {
                0 => BlockSpec::new(Objective::l1(), a.clone(), beta, QMode::IdentityMinusGram { tau: safe_tau(&a, beta) }),
                1 => {
                    let tau = 1.5 * dense_lambda_max(&a) + 0.1;
                    BlockSpec::new(Objective::l1(), a, beta, QMode::BetaScaledIdentityMinusGram { tau })
                }
                _ => {
                    let l = normal_mat(&mut r, n, n);
                    let q = QMode::GeneralSpd(&l * l.transpose() + DMatrix::identity(n, n) * 0.5);
                    BlockSpec::new(Objective::half_sq_dist(normal_vec(&mut r, n)), a, beta, q)
                }
            }
        })
        .collect();
    ProblemSpec::new(blocks, normal_vec(&mut r, m), ConstraintSense::Equality).with_proximal_count(p1)
}

pub fn random_iterate(r: &mut ChaCha8Rng, spec: &ProblemSpec) -> Iterate {
    Iterate::new(
        spec.blocks.iter().map(|b| normal_vec(r, b.dim())).collect(),
        normal_vec(r, spec.num_constraints()),
    )
}

pub fn max_abs_diff(a: &Iterate, b: &Iterate) -> f64 {
    a.to_flat().iter().zip(b.to_flat().iter()).fold(0.0, |s, (x, y)| s.max((x - y).abs()))
}

/// Saddle points planted in one- and two-block problems.
pub fn planted_saddles(seed: u64) -> Vec<(ProblemSpec, Iterate)> {
    let mut r = rng(seed);
    let m = 5;
    let lam = normal_vec(&mut r, m);
    let mut out = Vec::new();
    let beta = 0.5 + r.random::<f64>();
    // single block, ℓ₁ and quadratic
    for planted in [
        planted_l1(&mut r, m, 9, &lam, beta, QMode::IdentityMinusGram { tau: 100.0 }),
        planted_quadratic(&mut r, m, 7, &lam, beta, QMode::IdentityMinusGram { tau: 100.0 }),
    ] {
        let (mut spec, w) = assemble(vec![planted], lam.clone(), ConstraintSense::Equality);
        let tau = safe_tau(&spec.blocks[0].matrix, beta);
        spec.blocks[0].q_mode = QMode::IdentityMinusGram { tau };
        out.push((spec, w));
    }
    // two blocks sharing one β
    let p1 = planted_quadratic(&mut r, m, 5, &lam, beta, QMode::IdentityMinusGram { tau: 0.0 });
    let p2 = planted_l1(&mut r, m, 8, &lam, beta, QMode::IdentityMinusGram { tau: 0.0 });
    let (mut spec, w) = assemble(vec![p1, p2], lam.clone(), ConstraintSense::Equality);
    for b in spec.blocks.iter_mut() {
        b.q_mode = QMode::IdentityMinusGram { tau: safe_tau(&b.matrix, beta) };
    }
    out.push((spec, w));
    out
}
