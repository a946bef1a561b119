//! Every tape primitive checked against central differences.

use seco_inr::tensor::{Tape, Tensor, Var};
use seco_inr_oracles::{central_gradient, max_relative_error, SplitMix64};

/// Compares the tape gradient of `Σ w ⊙ f(x)` with a numeric one, where `w`
/// is a fixed random weighting so that every output element matters.
fn check(name: &str, inputs: &[(usize, usize)], f: impl Fn(&mut Tape, &[Var]) -> Var, seed: u64) {
    let mut rng = SplitMix64(seed);
    let values: Vec<Tensor> = inputs
        .iter()
        .map(|&(r, c)| Tensor::new(r, c, rng.vec(r * c, 0.2, 1.5)).unwrap())
        .collect();

    let probe = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).clone()
    };
    let weights = Tensor::new(probe.rows(), probe.cols(), rng.vec(probe.len(), -1.0, 1.0)).unwrap();

    let objective = |vals: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.constant(v.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = values.iter().map(|v| tape.param(v)).collect();
    let out = f(&mut tape, &vars);
    let w = tape.constant(weights.clone());
    let weighted = tape.mul(out, w).unwrap();
    let loss = tape.sum(weighted).unwrap();
    tape.backward(loss).unwrap();

    for (k, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).expect("gradient reaches every input").data().to_vec();
        let numeric = central_gradient(
            |x| {
                let mut vals = values.clone();
                vals[k].data_mut().copy_from_slice(x);
                objective(&vals)
            },
            values[k].data(),
            1e-6,
        );
        let err = max_relative_error(&analytic, &numeric, 1e-6);
        assert!(err < 1e-6, "{name}: input {k} relative error {err}");
    }
}

#[test]
fn matmul() {
    check("matmul", &[(3, 4), (4, 2)], |t, v| t.matmul(v[0], v[1]).unwrap(), 1);
}

#[test]
fn add_bias() {
    check("add_bias", &[(3, 4), (1, 4)], |t, v| t.add_bias(v[0], v[1]).unwrap(), 2);
}

#[test]
fn pointwise() {
    check("sin", &[(2, 3)], |t, v| t.sin(v[0]).unwrap(), 3);
    check("cos", &[(2, 3)], |t, v| t.cos(v[0]).unwrap(), 4);
    check("exp", &[(2, 3)], |t, v| t.exp(v[0]).unwrap(), 5);
    check("log", &[(2, 3)], |t, v| t.log(v[0]).unwrap(), 6);
    check("relu", &[(2, 3)], |t, v| t.relu(v[0]).unwrap(), 7);
    check("neg", &[(2, 3)], |t, v| t.neg(v[0]).unwrap(), 8);
    check("scale", &[(2, 3)], |t, v| t.scale(v[0], -2.5).unwrap(), 9);
    check("add_const", &[(2, 3)], |t, v| t.add_const(v[0], 0.7).unwrap(), 10);
    check("square", &[(2, 3)], |t, v| t.square(v[0]).unwrap(), 11);
}

#[test]
fn binary() {
    check("add", &[(2, 3), (2, 3)], |t, v| t.add(v[0], v[1]).unwrap(), 12);
    check("sub", &[(2, 3), (2, 3)], |t, v| t.sub(v[0], v[1]).unwrap(), 13);
    check("mul", &[(2, 3), (2, 3)], |t, v| t.mul(v[0], v[1]).unwrap(), 14);
}

#[test]
fn reshaping() {
    check("expand_cols", &[(3, 1)], |t, v| t.expand_cols(v[0], 4).unwrap(), 15);
    check("columns", &[(3, 5)], |t, v| t.columns(v[0], 1, 3).unwrap(), 16);
    check("concat_cols", &[(3, 2), (3, 1)], |t, v| t.concat_cols(v[0], v[1]).unwrap(), 17);
}

#[test]
fn reductions() {
    check("sum", &[(3, 2)], |t, v| t.sum(v[0]).unwrap(), 18);
    check("mean", &[(3, 2)], |t, v| t.mean(v[0]).unwrap(), 19);
    check("softmax_rows", &[(3, 4)], |t, v| t.softmax_rows(v[0]).unwrap(), 20);
}

#[test]
fn modulated_sine() {
    check(
        "modulated_sine",
        &[(3, 4), (3, 1), (3, 1), (3, 1), (3, 1)],
        |t, v| t.modulated_sine(v[0], 3.0, v[1], v[2], v[3], v[4]).unwrap(),
        21,
    );
}

#[test]
fn modulated_sine_with_identity_parameters_is_plain_sine() {
    let mut rng = SplitMix64(22);
    let x = Tensor::new(5, 7, rng.vec(35, -3.0, 3.0)).unwrap();
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let ones = tape.constant(Tensor::ones(5, 1));
    let zeros = tape.constant(Tensor::zeros(5, 1));
    let fused = tape.modulated_sine(xv, 30.0, ones, ones, zeros, zeros).unwrap();
    let u = tape.scale(xv, 30.0).unwrap();
    let plain = tape.sin(u).unwrap();
    assert_eq!(tape.value(fused), tape.value(plain));
}

#[test]
fn shared_node_accumulates_both_paths() {
    // d/dx (x·x + x) = 2x + 1
    let mut tape = Tape::new();
    let x = tape.param(&Tensor::scalar(1.5));
    let xx = tape.mul(x, x).unwrap();
    let y = tape.add(xx, x).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[4.0]);
}
