use rand::Rng;

use crate::tensor::{Tape, Tensor, TensorResult, Var};

/// Affine map `x · W + b` with `W` stored fan_in × fan_out.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(fan_in, fan_out),
            bias: Tensor::zeros(1, fan_out),
        }
    }

    /// Weights uniform in `±weight_limit`, biases uniform in `±1/√fan_in`.
    pub fn uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, weight_limit: f64) -> Self {
        let bias_limit = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: uniform_tensor(rng, fan_in, fan_out, weight_limit),
            bias: uniform_tensor(rng, 1, fan_out, bias_limit),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn apply(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> TensorResult<Var> {
        let z = tape.matmul(x, weight)?;
        tape.add_bias(z, bias)
    }
}

pub(crate) fn uniform_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, limit: f64) -> Tensor {
    if limit == 0.0 {
        return Tensor::zeros(rows, cols);
    }
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

/// SIREN initialisation bound: `1/fan_in` for the first layer and
/// `√(6/fan_in)/ω₀` afterwards.
pub fn siren_weight_limit(layer: usize, fan_in: usize, omega0: f64) -> f64 {
    if layer == 0 {
        1.0 / fan_in as f64
    } else {
        (6.0 / fan_in as f64).sqrt() / omega0
    }
}

/// Parameters bound to a tape, consumed in declaration order by the
/// forward passes.
pub(crate) struct Bound<'a> {
    vars: &'a [Var],
    next: usize,
}

impl<'a> Bound<'a> {
    pub(crate) fn new(vars: &'a [Var]) -> Self {
        Self { vars, next: 0 }
    }

    pub(crate) fn take(&mut self) -> Var {
        let v = self.vars[self.next];
        self.next += 1;
        v
    }

    pub(crate) fn linear(&mut self, tape: &mut Tape, x: Var) -> TensorResult<Var> {
        let w = self.take();
        let b = self.take();
        Linear::apply(tape, x, w, b)
    }
}

pub(crate) fn push_named<'a>(
    out: &mut Vec<(String, &'a Tensor)>,
    prefix: &str,
    layers: &'a [Linear],
) {
    for (i, l) in layers.iter().enumerate() {
        out.push((format!("{prefix}.{i}.weight"), &l.weight));
        out.push((format!("{prefix}.{i}.bias"), &l.bias));
    }
}

pub(crate) fn push_mut<'a>(
    out: &mut Vec<(String, &'a mut Tensor)>,
    prefix: &str,
    layers: &'a mut [Linear],
) {
    for (i, l) in layers.iter_mut().enumerate() {
        out.push((format!("{prefix}.{i}.weight"), &mut l.weight));
        out.push((format!("{prefix}.{i}.bias"), &mut l.bias));
    }
}
