use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvae_core::metrics::{aggregate, eate, eatt, pehe, policy_risk, EffectTruth, ReplicationMetrics, Scope};

use EffectTruth::{PerUnit, Scalar};

const EXACT: f64 = 1e-12;

#[test]
fn hand_examples() {
    assert_eq!(eate(&[0.5, 1.5], PerUnit(&[1.0, 1.0])).unwrap(), 0.0);
    assert!((eate::<f64>(&[0.0, 0.0], Scalar(0.2)).unwrap() - 0.2).abs() < EXACT);
    assert!((pehe::<f64>(&[0.5, 1.5], PerUnit(&[1.0, 1.0])).unwrap() - 0.5).abs() < EXACT);
    assert!(pehe(&[0.5], Scalar(0.5)).is_err());
    assert!(eate::<f64>(&[], Scalar(0.0)).is_err());
}

#[test]
fn eatt_with_a_null_predictor_reports_the_att() {
    // treated mean 0.8, control mean 0.5
    let y = [0.9, 0.7, 0.8, 0.4, 0.6];
    let t = [1.0, 1.0, 1.0, 0.0, 0.0];
    let rct = [true; 5];
    let q = [0.3; 5];
    assert!((eatt::<f64>(&y, &t, &rct, &q, &q).unwrap() - 0.3).abs() < EXACT);
    // non-randomized units are ignored
    let y = [0.9, 0.7, 0.8, 0.4, 0.6, 100.0];
    let t = [1.0, 1.0, 1.0, 0.0, 0.0, 1.0];
    let rct = [true, true, true, true, true, false];
    let q = [0.3; 6];
    assert!((eatt::<f64>(&y, &t, &rct, &q, &q).unwrap() - 0.3).abs() < EXACT);
    assert!(eatt(&[1.0], &[1.0], &[true], &[0.0], &[0.0]).is_err());
}

#[test]
fn eatt_monte_carlo_on_an_additive_rct() {
    let n = 10_000;
    let c = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut y, mut t) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let ti = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let x: f64 = rng.random_range(-1.0..1.0);
        y.push(x + c * ti + 0.3 * rng.random_range(-1.0..1.0));
        t.push(ti);
    }
    let q1: Vec<f64> = vec![c; n];
    let q0 = vec![0.0; n];
    let e = eatt(&y, &t, &vec![true; n], &q1, &q0).unwrap();
    let group = |v: f64| y.iter().zip(&t).filter(|(_, &ti)| ti == v).map(|(&yi, _)| yi).collect::<Vec<_>>();
    let se = [group(1.0), group(0.0)]
        .iter()
        .map(|g| {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (g.len() as f64 - 1.0) / g.len() as f64
        })
        .sum::<f64>()
        .sqrt();
    assert!(e < 3.0 * se, "eATT {e} vs 3·SE {}", 3.0 * se);
}

#[test]
fn policy_risk_six_unit_fixture() {
    // policy treats when τ̂ > 0: units 1–3 treated, 4–6 not
    //   treated & t=1: units 1, 2 → mean y = 1.0
    //   control & t=0: units 4, 5 → mean y = 0.5
    //   P(π=1) = 3/6
    // risk = 1 − (1.0·0.5 + 0.5·0.5) = 0.25
    // unit 7 is observational and must be ignored
    let y = [1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0];
    let t = [1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0];
    let tau = [0.5, 0.2, 0.3, -0.1, -0.4, -0.2, 1.0];
    let rct = [true, true, true, true, true, true, false];
    let r = policy_risk::<f64>(&y, &t, &rct, &tau, 0.0).unwrap().unwrap();
    assert!((r - 0.25).abs() < EXACT);

    let ones = [1.0; 6];
    let zeros = [0.0; 6];
    let t6 = [1.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let tau6 = [0.5, 0.2, 0.3, -0.1, -0.4, -0.2];
    assert!(policy_risk::<f64>(&ones, &t6, &[true; 6], &tau6, 0.0).unwrap().unwrap().abs() < EXACT);
    assert!((policy_risk::<f64>(&zeros, &t6, &[true; 6], &tau6, 0.0).unwrap().unwrap() - 1.0).abs() < EXACT);
    // every unit treated by the policy, none observed untreated-and-agreeing
    assert_eq!(policy_risk(&ones, &t6, &[true; 6], &[1.0; 6], 5.0).unwrap(), None);
}

#[test]
fn pehe_and_eate_match_loop_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.random_range(1..200);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (mut sa, mut sb, mut sq) = (0.0, 0.0, 0.0);
        for i in 0..n {
            sa += a[i];
            sb += b[i];
            sq += (a[i] - b[i]) * (a[i] - b[i]);
        }
        let nf = n as f64;
        assert!((pehe(&a, PerUnit(&b)).unwrap() - (sq / nf).sqrt()).abs() < EXACT);
        assert!((eate(&a, PerUnit(&b)).unwrap() - (sa / nf - sb / nf).abs()).abs() < EXACT);
    }
}

#[test]
fn aggregate_examples_and_loop_oracle() {
    let rep = |v: f64| ReplicationMetrics {
        scope: Scope::OutOfSample,
        eate: Some(v),
        pehe: Some(2.0 * v),
        eatt: None,
        policy_risk: None,
    };
    let a = aggregate(&[rep(0.1), rep(0.3)]).unwrap();
    let e = a.eate.unwrap();
    assert!((e.mean - 0.2).abs() < EXACT && (e.se - 0.1).abs() < EXACT);
    assert!(a.eatt.is_none());
    let a = aggregate(&[rep(0.4); 5]).unwrap();
    assert!(a.eate.unwrap().se < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let reports: Vec<_> = (0..100).map(|_| rep(rng.random_range(0.0..1.0))).collect();
    let agg = aggregate(&reports).unwrap();
    let r = reports.len() as f64;
    let mut s = 0.0;
    for x in &reports {
        s += x.pehe.unwrap();
    }
    let m = s / r;
    let mut ss = 0.0;
    for x in &reports {
        ss += (x.pehe.unwrap() - m) * (x.pehe.unwrap() - m);
    }
    let se = (ss / (r - 1.0)).sqrt() / r.sqrt();
    let p = agg.pehe.unwrap();
    assert_eq!(p.n, 100);
    assert!((p.mean - m).abs() < EXACT && (p.se - se).abs() < EXACT);

    let mut mixed = reports.clone();
    mixed[3].scope = Scope::WithinSample;
    assert!(aggregate(&mixed).is_err());
}

#[test]
fn metrics_are_generic_over_f32() {
    let v = pehe::<f32>(&[0.5, 1.5], PerUnit(&[1.0, 1.0])).unwrap();
    assert!((v - 0.5).abs() < 1e-6);
}

fn vecs(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<usize>)> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        )
    })
}

proptest! {
    #[test]
    fn permutation_invariance((a, b, perm) in vecs(1..60)) {
        let pa: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
        let pb: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
        prop_assert!((pehe(&a, PerUnit(&b)).unwrap() - pehe(&pa, PerUnit(&pb)).unwrap()).abs() < 1e-12);
        prop_assert!((eate(&a, PerUnit(&b)).unwrap() - eate(&pa, PerUnit(&pb)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn scale_covariance((a, b, _) in vecs(1..60), k in 0.01..100.0f64) {
        let ka: Vec<f64> = a.iter().map(|v| k * v).collect();
        let kb: Vec<f64> = b.iter().map(|v| k * v).collect();
        let p = pehe(&a, PerUnit(&b)).unwrap();
        let e = eate(&a, PerUnit(&b)).unwrap();
        prop_assert!((pehe(&ka, PerUnit(&kb)).unwrap() - k * p).abs() <= 1e-10 * (1.0 + k * p));
        prop_assert!((eate(&ka, PerUnit(&kb)).unwrap() - k * e).abs() <= 1e-10 * (1.0 + k * e));
    }

    #[test]
    fn exact_units_give_exact_mean((a, _, _) in vecs(1..60)) {
        prop_assert_eq!(pehe(&a, PerUnit(&a)).unwrap(), 0.0);
        prop_assert_eq!(eate(&a, PerUnit(&a)).unwrap(), 0.0);
    }

    #[test]
    fn policy_risk_in_unit_interval(
        rows in prop::collection::vec((0.0..=1.0f64, any::<bool>(), -1.0..1.0f64), 2..80),
    ) {
        let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let t: Vec<f64> = rows.iter().map(|r| r.1 as u8 as f64).collect();
        let tau: Vec<f64> = rows.iter().map(|r| r.2).collect();
        if let Some(r) = policy_risk(&y, &t, &vec![true; y.len()], &tau, 0.0).unwrap() {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn eatt_permutation_invariant(
        rows in prop::collection::vec((-2.0..2.0f64, -1.0..1.0f64, -1.0..1.0f64), 4..40),
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let t: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let q1: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let q0: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let p = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let rct = vec![true; n];
        let a = eatt(&y, &t, &rct, &q1, &q0).unwrap();
        let b = eatt(&p(&y), &p(&t), &rct, &p(&q1), &p(&q0)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}
