//! Central finite-difference checks against the tape's reverse pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BinaryOp, DiffError, ReduceOp, Tape, Tensor, UnaryOp, Var};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    pub max_abs_err: f64,
    pub passed: bool,
}

/// `|a − n| ≤ abs` or `|a − n| ≤ rel·max(|a|, |n|)`.
pub fn grads_agree(analytic: f64, numeric: f64, rel: f64, abs: f64) -> bool {
    let d = (analytic - numeric).abs();
    d <= abs || d <= rel * analytic.abs().max(numeric.abs())
}

pub type OpFn = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, DiffError>>;

/// One registered op with inputs placed away from kinks and domain edges.
pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor<f64>>,
    pub f: OpFn,
}

fn project(tape: &mut Tape<f64>, out: Var, w: &Tensor<f64>) -> Result<Var, DiffError> {
    let wv = tape.constant(w.clone());
    let p = tape.mul(out, wv)?;
    tape.sum(p, None)
}

/// Checks every input element of `f` by projecting its output onto fixed
/// random weights and comparing against central differences.
pub fn check_gradient<F>(name: &str, inputs: &[Tensor<f64>], f: F, seed: u64) -> Result<GradCheck, DiffError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, DiffError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let shape = tape.value(out).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|_| rng.random_range(0.5..1.5)).collect())?;
    let loss = project(&mut tape, out, &w)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| tape.grad_or_zeros(v)).collect();

    let eval = |xs: &[Tensor<f64>]| -> Result<f64, DiffError> {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let o = f(&mut t, &vs)?;
        let l = project(&mut t, o, &w)?;
        t.value(l).item()
    };
    let mut xs = inputs.to_vec();
    let (mut checked, mut max_err, mut passed) = (0, 0.0f64, true);
    for k in 0..xs.len() {
        for j in 0..xs[k].len() {
            let x0 = xs[k].data()[j];
            xs[k].data_mut()[j] = x0 + FD_STEP;
            let up = eval(&xs)?;
            xs[k].data_mut()[j] = x0 - FD_STEP;
            let down = eval(&xs)?;
            xs[k].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[k].data()[j];
            max_err = max_err.max((a - numeric).abs());
            passed &= grads_agree(a, numeric, FD_REL_TOL, FD_ABS_TOL);
            checked += 1;
        }
    }
    Ok(GradCheck {
        name: name.to_string(),
        checked,
        max_abs_err: max_err,
        passed,
    })
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Values in `±[0.2, 2]`, away from the kinks of `elu` and `clamp`.
fn signed(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = uniform(rng, shape, 0.2, 2.0);
    for v in t.data_mut() {
        if rng.random::<bool>() {
            *v = -*v;
        }
    }
    t
}

/// Every differentiable op the tape records.
pub fn registered_ops(seed: u64) -> Vec<OpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let m = [3, 4];
    let mut cases: Vec<OpCase> = Vec::new();
    let mut unary = |name, op: UnaryOp, x: Tensor<f64>| {
        cases.push(OpCase {
            name,
            inputs: vec![x],
            f: Box::new(move |t, v| t.unary(op, v[0])),
        })
    };
    unary("neg", UnaryOp::Neg, signed(r, &m));
    unary("exp", UnaryOp::Exp, signed(r, &m));
    unary("log", UnaryOp::Log, uniform(r, &m, 0.2, 3.0));
    unary("sigmoid", UnaryOp::Sigmoid, signed(r, &m));
    unary("softplus", UnaryOp::Softplus, signed(r, &m));
    unary("square", UnaryOp::Square, signed(r, &m));
    unary("sqrt", UnaryOp::Sqrt, uniform(r, &m, 0.2, 3.0));
    unary("logit", UnaryOp::Logit, uniform(r, &m, 0.05, 0.95));
    unary("log_sigmoid", UnaryOp::LogSigmoid, signed(r, &m));
    unary("elu", UnaryOp::Elu, signed(r, &m));

    for (name, op) in [
        ("add", BinaryOp::Add),
        ("sub", BinaryOp::Sub),
        ("mul", BinaryOp::Mul),
        ("div", BinaryOp::Div),
    ] {
        let b = if op == BinaryOp::Div {
            uniform(r, &m, 0.5, 2.0)
        } else {
            signed(r, &m)
        };
        cases.push(OpCase {
            name,
            inputs: vec![signed(r, &m), b],
            f: Box::new(move |t, v| t.binary(op, v[0], v[1])),
        });
    }
    for (name, op) in [
        ("add_scalar", BinaryOp::Add),
        ("sub_scalar", BinaryOp::Sub),
        ("mul_scalar", BinaryOp::Mul),
        ("div_scalar", BinaryOp::Div),
    ] {
        cases.push(OpCase {
            name,
            inputs: vec![signed(r, &m), Tensor::scalar(r.random_range(0.5..2.0))],
            f: Box::new(move |t, v| t.binary(op, v[0], v[1])),
        });
        cases.push(OpCase {
            name: match op {
                BinaryOp::Add => "scalar_add",
                BinaryOp::Sub => "scalar_sub",
                BinaryOp::Mul => "scalar_mul",
                BinaryOp::Div => "scalar_div",
            },
            inputs: vec![
                Tensor::scalar(r.random_range(0.5..2.0)),
                uniform(r, &m, 0.5, 2.0),
            ],
            f: Box::new(move |t, v| t.binary(op, v[0], v[1])),
        });
    }
    cases.push(OpCase {
        name: "scale",
        inputs: vec![signed(r, &m)],
        f: Box::new(|t, v| t.scale(v[0], -1.7)),
    });
    cases.push(OpCase {
        name: "matmul",
        inputs: vec![signed(r, &[3, 4]), signed(r, &[4, 2])],
        f: Box::new(|t, v| t.matmul(v[0], v[1])),
    });
    cases.push(OpCase {
        name: "add_row",
        inputs: vec![signed(r, &m), signed(r, &[4])],
        f: Box::new(|t, v| t.add_row(v[0], v[1])),
    });
    cases.push(OpCase {
        name: "clamp",
        inputs: vec![signed(r, &m)],
        f: Box::new(|t, v| Ok(t.clamp(v[0], -1.0, 1.0))),
    });
    for (name, op, axis) in [
        ("sum_all", ReduceOp::Sum, None),
        ("sum_axis0", ReduceOp::Sum, Some(0)),
        ("sum_axis1", ReduceOp::Sum, Some(1)),
        ("mean_all", ReduceOp::Mean, None),
        ("mean_axis0", ReduceOp::Mean, Some(0)),
        ("mean_axis1", ReduceOp::Mean, Some(1)),
    ] {
        cases.push(OpCase {
            name,
            inputs: vec![signed(r, &m)],
            f: Box::new(move |t, v| t.reduce(op, v[0], axis)),
        });
    }
    cases.push(OpCase {
        name: "stop_gradient",
        inputs: vec![signed(r, &m), signed(r, &m)],
        // sg(a)·b: zero gradient into a, value of a into b
        f: Box::new(|t, v| {
            let s = t.stop_gradient(v[0]);
            t.mul(s, v[1])
        }),
    });
    cases.push(OpCase {
        name: "sigmoid_bce",
        inputs: vec![signed(r, &m), uniform(r, &m, 0.05, 0.95)],
        f: Box::new(|t, v| t.sigmoid_bce(v[0], v[1])),
    });
    cases.push(OpCase {
        name: "concat_cols",
        inputs: vec![signed(r, &[3, 2]), signed(r, &[3, 1]), signed(r, &[3, 3])],
        f: Box::new(|t, v| t.concat_cols(v)),
    });
    cases
}

/// Runs [`check_gradient`] on every registered op, except that
/// `stop_gradient` must report an exactly zero gradient for its input.
pub fn check_registered_ops(seed: u64) -> Result<Vec<GradCheck>, DiffError> {
    let mut out = Vec::new();
    for case in registered_ops(seed) {
        if case.name == "stop_gradient" {
            out.push(check_stop_gradient(&case)?);
        } else {
            out.push(check_gradient(case.name, &case.inputs, &case.f, seed)?);
        }
    }
    Ok(out)
}

fn check_stop_gradient(case: &OpCase) -> Result<GradCheck, DiffError> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = (case.f)(&mut tape, &vars)?;
    let loss = tape.sum(out, None)?;
    tape.backward(loss)?;
    let stopped = tape.grad_or_zeros(vars[0]);
    let through = tape.grad_or_zeros(vars[1]);
    // the unstopped factor still sees the forward value of the stopped one
    let err = stopped.data().iter().map(|g| g.abs()).fold(0.0, f64::max);
    let fwd = through
        .data()
        .iter()
        .zip(case.inputs[0].data())
        .map(|(g, a)| (g - a).abs())
        .fold(0.0, f64::max);
    Ok(GradCheck {
        name: case.name.to_string(),
        checked: stopped.len() + through.len(),
        max_abs_err: err.max(fwd),
        passed: err == 0.0 && fwd <= FD_ABS_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agreement_rule() {
        assert!(grads_agree(1.0, 1.00005, 1e-4, 1e-7));
        assert!(grads_agree(0.0, 5e-8, 1e-4, 1e-7));
        assert!(!grads_agree(1.0, 1.001, 1e-4, 1e-7));
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // stop_gradient hides the dependency from the reverse pass
        let x = Tensor::new(vec![2], vec![0.3, -0.4]).unwrap();
        let c = check_gradient("hidden", &[x], |t, v| Ok(t.stop_gradient(v[0])), 0).unwrap();
        assert!(!c.passed);
    }
}
