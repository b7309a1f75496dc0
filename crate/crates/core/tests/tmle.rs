use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvae_core::datasets::{generate_linear, generate_tvaesynth, CausalDataset, ColumnKind};
use tvae_core::tmle::{
    self, clever_covariate, fluctuate, target, FitOptions, Link, LinearModel, OutcomeKind, TmleError, TmleOptions,
};
use tvae_core::Tensor;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Binary-outcome SCM: `x ~ N(0,1)²`, `t ~ Bern(σ(0.5 x0 − 0.4 x1))`,
/// `y ~ Bern(σ(−0.3 + 0.8 t + 0.6 x0))`.
fn binary_scm(n: usize, seed: u64) -> CausalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let (mut t, mut y, mut mu0, mut mu1) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let a: f64 = rng.sample(rand_distr::StandardNormal);
        let b: f64 = rng.sample(rand_distr::StandardNormal);
        let ti = (rng.random::<f64>() < sigmoid(0.5 * a - 0.4 * b)) as u8 as f64;
        let p0 = sigmoid(-0.3 + 0.6 * a);
        let p1 = sigmoid(0.5 + 0.6 * a);
        let yi = (rng.random::<f64>() < if ti == 1.0 { p1 } else { p0 }) as u8 as f64;
        x.extend([a, b]);
        t.push(ti);
        y.push(yi);
        mu0.push(p0);
        mu1.push(p1);
    }
    CausalDataset {
        x: Tensor::new(vec![n, 2], x).unwrap(),
        kinds: vec![ColumnKind::Continuous; 2],
        t,
        y,
        truth: Some(tvae_core::datasets::PotentialOutcomes { mu0, mu1 }),
        rct: None,
        latents: None,
    }
}

#[test]
fn linear_scm_ate_within_three_se_of_truth() {
    let ds = generate_linear(5000, 17);
    let est = tmle::run(&ds, &TmleOptions::default()).unwrap();
    assert!((est.ate - 1.0).abs() < 3.0 * est.se, "ate {} se {}", est.ate, est.se);
    assert!(est.mean_ic().abs() <= 1e-6);
    let diff: f64 = est.q1_star.iter().zip(&est.q0_star).map(|(a, b)| a - b).sum::<f64>() / ds.n() as f64;
    assert!((diff - est.ate).abs() < 1e-12);
}

#[test]
fn doubly_robust_with_constant_outcome_model() {
    let ds = generate_linear(5000, 23);
    let n = ds.n();
    let g = LinearModel::fit(&ds.x, &ds.t, Link::Logistic, &FitOptions::default()).unwrap();
    let g1 = g.predict(&ds.x);
    let ybar = ds.y.iter().sum::<f64>() / n as f64;
    let q = vec![ybar; n];
    let est = target(&q, &q, &g1, &ds.t, &ds.y, OutcomeKind::UnboundedContinuous).unwrap();
    assert!((est.ate - 1.0).abs() < 3.0 * est.se, "ate {} se {}", est.ate, est.se);
    assert!(est.mean_ic().abs() <= 1e-6);
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn identity_fluctuation_matches_closed_form_and_direct_minimization() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = 50;
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| (rng.random::<bool>()) as u8 as f64).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.9)).collect();
        let h = clever_covariate(&t, &g);
        let eps = fluctuate(&q, &h, &y, Link::Identity).unwrap();
        let closed = (0..n).map(|i| h[i] * (y[i] - q[i])).sum::<f64>() / h.iter().map(|v| v * v).sum::<f64>();
        assert!((eps - closed).abs() < 1e-8);
        let loss = |e: f64| (0..n).map(|i| (y[i] - q[i] - e * h[i]).powi(2)).sum::<f64>();
        assert!((golden_section(loss, -10.0, 10.0) - eps).abs() < 1e-6);
    }
}

#[test]
fn logistic_fluctuation_solves_the_score_equation() {
    for seed in 0..5 {
        let ds = binary_scm(3000, seed);
        let opts = TmleOptions {
            outcome_kind: OutcomeKind::Binary,
            ..TmleOptions::default()
        };
        let est = tmle::run(&ds, &opts).unwrap();
        let score: f64 = (0..ds.n())
            .map(|i| {
                let q = if ds.t[i] == 1.0 { est.q1_star[i] } else { est.q0_star[i] };
                est.h[i] * (ds.y[i] - q)
            })
            .sum();
        assert!(score.abs() / ds.n() as f64 <= 1e-6, "seed {seed}: score {score}");
        assert!(est.mean_ic().abs() <= 1e-6);
    }
}

#[test]
fn epsilon_sign_matches_a_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..25 {
        let n = 80;
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.9)).collect();
        let y: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() < 0.5) as u8 as f64).collect();
        let t: Vec<f64> = (0..n).map(|_| (rng.random::<bool>()) as u8 as f64).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..0.8)).collect();
        let h = clever_covariate(&t, &g);
        let eps = fluctuate(&q, &h, &y, Link::Logistic).unwrap();
        let loss = |e: f64| -> f64 {
            (0..n)
                .map(|i| {
                    let p = sigmoid(logit(q[i]) + e * h[i]);
                    -(y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln())
                })
                .sum()
        };
        let grid: Vec<f64> = (-2000..=2000).map(|k| k as f64 * 1e-3).collect();
        let best = grid.iter().copied().min_by(|a, b| loss(*a).total_cmp(&loss(*b))).unwrap();
        let corr: f64 = (0..n).map(|i| h[i] * (y[i] - q[i])).sum();
        assert_eq!(eps.signum(), best.signum());
        assert_eq!(eps.signum(), corr.signum());
        assert!((eps - best).abs() <= 1e-3);
    }
}

#[test]
fn logistic_coefficients_recovered_within_three_se() {
    let n = 5000;
    let (w_true, b_true) = ([1.2, -0.8], 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut x = Vec::new();
    let mut t = Vec::new();
    for _ in 0..n {
        let a: f64 = rng.sample(rand_distr::StandardNormal);
        let c: f64 = rng.sample(rand_distr::StandardNormal);
        x.extend([a, c]);
        t.push((rng.random::<f64>() < sigmoid(b_true + w_true[0] * a + w_true[1] * c)) as u8 as f64);
    }
    let x = Tensor::new(vec![n, 2], x).unwrap();
    let m = LinearModel::fit(&x, &t, Link::Logistic, &FitOptions::default()).unwrap();
    // observed Fisher information over (b, w0, w1) at the estimate
    let mut info = [[0.0f64; 3]; 3];
    let p = m.predict(&x);
    for i in 0..n {
        let f = [1.0, x.get(i, 0), x.get(i, 1)];
        let v = p[i] * (1.0 - p[i]);
        for r in 0..3 {
            for c in 0..3 {
                info[r][c] += v * f[r] * f[c];
            }
        }
    }
    let cov = invert3(info);
    let est = [m.b, m.w[0], m.w[1]];
    let truth = [b_true, w_true[0], w_true[1]];
    for k in 0..3 {
        let se = cov[k][k].sqrt();
        assert!((est[k] - truth[k]).abs() < 3.0 * se, "coef {k}: {} vs {} (se {se})", est[k], truth[k]);
    }
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            inv[r][c] = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
        }
    }
    inv
}

#[test]
fn constant_outcome_fits_the_mean() {
    let mut ds = generate_linear(2000, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    ds.y = (0..ds.n()).map(|_| rng.random_range(0.0..1.0)).collect();
    let q = LinearModel::fit(
        &Tensor::new(vec![ds.n(), 2], (0..ds.n()).flat_map(|i| [ds.x.get(i, 0), ds.t[i]]).collect()).unwrap(),
        &ds.y,
        Link::Identity,
        &FitOptions::default(),
    )
    .unwrap();
    let ybar = ds.y.iter().sum::<f64>() / ds.n() as f64;
    let xs = Tensor::new(vec![3, 2], vec![-1.0, 0.0, 0.0, 1.0, 1.5, 1.0]).unwrap();
    for p in q.predict(&xs) {
        assert!((p - ybar).abs() < 0.03, "{p} vs {ybar}");
    }
}

#[test]
fn separable_treatment_saturates_at_clamp_bounds() {
    let n = 200;
    let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
    let t: Vec<f64> = x.iter().map(|&v| (v > 0.0) as u8 as f64).collect();
    let y: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a + b).collect();
    let ds = CausalDataset {
        x: Tensor::new(vec![n, 1], x).unwrap(),
        kinds: vec![ColumnKind::Continuous],
        t,
        y,
        truth: None,
        rct: None,
        latents: None,
    };
    let est = tmle::run(&ds, &TmleOptions::default()).unwrap();
    assert!(est.truncated > 0);
    assert!(est.g1.iter().all(|&g| (0.01..=0.99).contains(&g)));
    assert!(est.g1.iter().any(|&g| g == 0.99) && est.g1.iter().any(|&g| g == 0.01));
}

#[test]
fn single_class_treatment_is_degenerate() {
    let mut ds = generate_linear(100, 1);
    ds.t = vec![1.0; 100];
    assert!(matches!(tmle::run(&ds, &TmleOptions::default()), Err(TmleError::Degenerate(_))));
}

#[test]
fn mean_ic_vanishes_after_update_on_every_fitted_dataset() {
    let kinds = [
        (OutcomeKind::UnboundedContinuous, generate_tvaesynth(1500, 1)),
        (OutcomeKind::BoundedContinuous, generate_tvaesynth(1500, 2)),
        (OutcomeKind::UnboundedContinuous, generate_linear(1500, 3)),
        (OutcomeKind::Binary, binary_scm(1500, 4)),
    ];
    for (kind, ds) in kinds {
        let opts = TmleOptions {
            outcome_kind: kind,
            ..TmleOptions::default()
        };
        let est = tmle::run(&ds, &opts).unwrap();
        assert!(est.mean_ic().abs() <= 1e-6, "{kind:?}: {}", est.mean_ic());
        // before the update the initial estimator leaves a nonzero mean IC
        let ate0 = est.q1_init.iter().zip(&est.q0_init).map(|(a, b)| a - b).sum::<f64>() / ds.n() as f64;
        let ic0 = tmle::efficient_ic(&ds.t, &ds.y, &est.q0_init, &est.q1_init, &est.g1, ate0);
        let m0 = ic0.iter().sum::<f64>() / ds.n() as f64;
        assert!(m0.abs() > 1e-6 || est.epsilon_hat.abs() < 1e-8, "{kind:?}: {m0}");
    }
}
