use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvae_core::datasets::{generate_tvaesynth, split, SplitSpec};
use tvae_core::diffcore::gradcheck::{check_registered_ops, grads_agree, registered_ops, FD_ABS_TOL, FD_REL_TOL, FD_STEP};
use tvae_core::diffcore::nn::Mlp;
use tvae_core::distributions::standard_normal;
use tvae_core::{ParamSet, Tape, Tensor};
use tvae_core::tvae::{gradient_spot_check, init_model, Noise, TvaeConfig};

#[test]
fn every_registered_op_matches_finite_differences() {
    for seed in 0..3 {
        let checks = check_registered_ops(seed).unwrap();
        assert!(checks.len() >= 30, "only {} ops registered", checks.len());
        for c in &checks {
            assert!(c.passed, "seed {seed}: {} failed with max error {:e}", c.name, c.max_abs_err);
        }
    }
}

#[test]
fn registry_covers_each_op_once() {
    let names: Vec<_> = registered_ops(0).iter().map(|c| c.name).collect();
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), names.len());
    for op in ["matmul", "elu", "sigmoid_bce", "concat_cols", "add_row", "clamp", "stop_gradient", "logit"] {
        assert!(names.contains(&op), "{op} missing");
    }
}

#[test]
fn two_layer_mlp_parameters_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut params = ParamSet::new();
    let mlp = Mlp::new(&mut params, &mut rng, "net", 3, 5, 2, 1);
    let x = standard_normal::<f64, _>(&mut rng, &[4, 3]);
    let loss = |p: &ParamSet, tape: &mut Tape, frozen: bool| {
        let bound = if frozen { p.bind_frozen(tape) } else { p.bind(tape) };
        let xv = tape.constant(x.clone());
        let out = mlp.forward(tape, &bound, xv).unwrap();
        let sq = tape.square(out).unwrap();
        (tape.sum(sq, None).unwrap(), bound)
    };
    let mut tape = Tape::new();
    let (l, bound) = loss(&params, &mut tape, false);
    tape.backward(l).unwrap();
    let grads = params.gradients(&tape, &bound);

    let mut probe = params.clone();
    let mut checked = 0;
    for id in params.ids() {
        for j in 0..params.get(id).len() {
            let x0 = params.get(id).data()[j];
            let mut at = |v: f64| {
                probe.get_mut(id).data_mut()[j] = v;
                let mut t = Tape::new();
                let (l, _) = loss(&probe, &mut t, true);
                t.value(l).item().unwrap()
            };
            let numeric = (at(x0 + FD_STEP) - at(x0 - FD_STEP)) / (2.0 * FD_STEP);
            at(x0);
            let analytic = grads[id.index()].data()[j];
            assert!(
                grads_agree(analytic, numeric, FD_REL_TOL, FD_ABS_TOL),
                "{}[{j}]: {analytic} vs {numeric}",
                params.name(id)
            );
            checked += 1;
        }
    }
    assert_eq!(checked, params.total_elements());
}

#[test]
fn shared_subexpressions_accumulate_like_an_unrolled_tree() {
    // f(x) = u·u + exp(u), u = x·x: u is reused three times
    let x0 = 0.7f64;
    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(x0));
    let u = tape.mul(x, x).unwrap();
    let uu = tape.mul(u, u).unwrap();
    let eu = tape.exp(u).unwrap();
    let f = tape.add(uu, eu).unwrap();
    tape.backward(f).unwrap();
    let dag = tape.grad_or_zeros(x).item().unwrap();

    // same function with every use of u recomputed from x
    let mut tree = Tape::new();
    let x = tree.param(Tensor::scalar(x0));
    let u1 = tree.mul(x, x).unwrap();
    let u2 = tree.mul(x, x).unwrap();
    let u3 = tree.mul(x, x).unwrap();
    let uu = tree.mul(u1, u2).unwrap();
    let eu = tree.exp(u3).unwrap();
    let f = tree.add(uu, eu).unwrap();
    tree.backward(f).unwrap();
    let unrolled = tree.grad_or_zeros(x).item().unwrap();

    let closed = 4.0 * x0.powi(3) + 2.0 * x0 * (x0 * x0).exp();
    assert!((dag - unrolled).abs() < 1e-12);
    assert!((dag - closed).abs() < 1e-12);
}

#[test]
fn full_model_loss_gradient_spot_check() {
    let ds = generate_tvaesynth(200, 21);
    let (tr, _, _) = split(&ds, &SplitSpec::new(0.6, 0.3, 0.1, 21)).unwrap();
    // the propensity stop-gradient hides a real dependency from the reverse
    // pass, so the end-to-end comparison runs with it off
    let cfg = TvaeConfig {
        stop_propensity_gradient: false,
        ..TvaeConfig::default()
    };
    let mut model = init_model(&cfg, &tr).unwrap();
    // move ε off zero so the regularizer's ε path is exercised
    let eps = model.epsilon_id();
    model.params_mut().get_mut(eps).data_mut()[0] = 0.3;
    let batch = model.prepare(&tr).unwrap();
    let noise = Noise::sample(&cfg, batch.len(), &mut ChaCha8Rng::seed_from_u64(5));
    let checks = gradient_spot_check(&model, &batch, &noise, 5, 99).unwrap();
    assert_eq!(checks.len(), 5);
    for c in checks {
        assert!(c.passed, "{}: error {:e}", c.name, c.max_abs_err);
    }
}
