use rand::Rng;

use super::layers::{push_mut, push_named, siren_weight_limit, uniform_tensor, Bound, Linear};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, TensorResult, Var};

/// Sine-activated MLP whose hidden activations can be modulated per
/// coordinate:
///
/// `y_l = p_l · sin(q_l · ω₀ · (y_{l-1} W_l + b_l) + r_l) + s_l`
///
/// for the `L−1` hidden layers, followed by a plain affine intensity head.
/// With `(p, q, r, s) = (1, 1, 0, 0)`, or with no modulation at all, it is
/// an ordinary SIREN.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveSirenNet {
    layers: Vec<Linear>,
    first_omega0: f64,
    hidden_omega0: f64,
}

impl AdaptiveSirenNet {
    /// `widths` lists every layer boundary, input first and output last,
    /// e.g. `[2, 256, 256, 256, 256, 1]` for five affine layers.
    pub fn new<R: Rng>(rng: &mut R, widths: &[usize], first_omega0: f64, hidden_omega0: f64) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::Validation(format!(
                "a sine network needs at least 2 layers, got {}",
                widths.len().saturating_sub(1)
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Validation(format!("zero width in {widths:?}")));
        }
        if !(first_omega0 > 0.0 && hidden_omega0 > 0.0) {
            return Err(Error::Validation("omega0 must be positive".into()));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let omega = if l == 0 { first_omega0 } else { hidden_omega0 };
                Linear::uniform(rng, w[0], w[1], siren_weight_limit(l, w[0], omega))
            })
            .collect();
        Ok(Self {
            layers,
            first_omega0,
            hidden_omega0,
        })
    }

    pub fn from_layers(layers: Vec<Linear>, first_omega0: f64, hidden_omega0: f64) -> Self {
        Self {
            layers,
            first_omega0,
            hidden_omega0,
        }
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    /// Total affine layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Hidden layers carrying a sine activation, `L − 1`.
    pub fn activated_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn omega0(&self, layer: usize) -> f64 {
        if layer == 0 {
            self.first_omega0
        } else {
            self.hidden_omega0
        }
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        push_named(out, prefix, &self.layers);
    }

    pub(crate) fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        push_mut(out, prefix, &mut self.layers);
    }

    pub(crate) fn forward_bound(
        &self,
        tape: &mut Tape,
        bound: &mut Bound<'_>,
        coords: Var,
        modulation: Option<&ActivationVars>,
    ) -> TensorResult<Var> {
        let mut y = coords;
        for l in 0..self.layers.len() {
            let z = bound.linear(tape, y)?;
            if l + 1 == self.layers.len() {
                return Ok(z);
            }
            y = match modulation {
                None => {
                    let u = tape.scale(z, self.omega0(l))?;
                    tape.sin(u)?
                }
                Some(m) => {
                    let [p, q, r, s] = m.layer(tape, l)?;
                    tape.modulated_sine(z, self.omega0(l), p, q, r, s)?
                }
            };
        }
        unreachable!("network has at least one layer")
    }

    /// Binds every parameter as a constant and evaluates the network.
    /// `params` of `None` runs the plain SIREN activation.
    pub fn forward(&self, coords: &Tensor, params: Option<&ActivationParams>) -> Result<Tensor> {
        if let Some(p) = params {
            p.check(coords.rows(), self.activated_layers())?;
        }
        let mut tape = Tape::new();
        let vars = bind_constants(&mut tape, self.layers.iter());
        let x = tape.constant(coords.clone());
        let modulation = params.map(|p| p.bind_constants(&mut tape));
        let out = self.forward_bound(&mut tape, &mut Bound::new(&vars), x, modulation.as_ref())?;
        Ok(tape.value(out).clone())
    }
}

pub(crate) fn bind_constants<'a>(tape: &mut Tape, layers: impl Iterator<Item = &'a Linear>) -> Vec<Var> {
    let mut vars = Vec::new();
    for l in layers {
        vars.push(tape.constant(l.weight.clone()));
        vars.push(tape.constant(l.bias.clone()));
    }
    vars
}

/// Per-coordinate activation parameters, one column per activated layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationParams {
    pub p: Tensor,
    pub q: Tensor,
    pub r: Tensor,
    pub s: Tensor,
}

impl ActivationParams {
    /// Parameters that reduce the adaptive activation to a plain sine.
    pub fn siren(coords: usize, layers: usize) -> Self {
        Self {
            p: Tensor::ones(coords, layers),
            q: Tensor::ones(coords, layers),
            r: Tensor::zeros(coords, layers),
            s: Tensor::zeros(coords, layers),
        }
    }

    pub fn rows(&self) -> usize {
        self.p.rows()
    }

    pub fn layers(&self) -> usize {
        self.p.cols()
    }

    pub fn components(&self) -> [&Tensor; 4] {
        [&self.p, &self.q, &self.r, &self.s]
    }

    /// Every entry of p, q, r and s in one pass.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.components().into_iter().flat_map(|t| t.data().iter().copied())
    }

    /// Share of all p, q, r, s entries strictly below `threshold`.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        let total = 4 * self.p.len();
        if total == 0 {
            return 0.0;
        }
        self.values().filter(|&v| v < threshold).count() as f64 / total as f64
    }

    fn check(&self, rows: usize, layers: usize) -> Result<()> {
        for (name, t) in ["p", "q", "r", "s"].iter().zip(self.components()) {
            if t.shape() != (rows, layers) {
                return Err(Error::contract(format!(
                    "activation parameter {name} is {}x{}, expected {rows}x{layers}",
                    t.rows(),
                    t.cols()
                )));
            }
        }
        Ok(())
    }

    fn bind_constants(&self, tape: &mut Tape) -> ActivationVars {
        ActivationVars {
            p: tape.constant(self.p.clone()),
            q: tape.constant(self.q.clone()),
            r: tape.constant(self.r.clone()),
            s: tape.constant(self.s.clone()),
        }
    }
}

/// [`ActivationParams`] living on a tape.
#[derive(Copy, Clone, Debug)]
pub struct ActivationVars {
    pub p: Var,
    pub q: Var,
    pub r: Var,
    pub s: Var,
}

impl ActivationVars {
    pub fn components(&self) -> [Var; 4] {
        [self.p, self.q, self.r, self.s]
    }

    /// Column `layer` of `block`, repeated across `width` neurons.
    /// Layer `layer`'s `[p, q, r, s]` as n×1 columns.
    fn layer(&self, tape: &mut Tape, layer: usize) -> TensorResult<[Var; 4]> {
        Ok([
            tape.columns(self.p, layer, 1)?,
            tape.columns(self.q, layer, 1)?,
            tape.columns(self.r, layer, 1)?,
            tape.columns(self.s, layer, 1)?,
        ])
    }

    pub fn values(&self, tape: &Tape) -> ActivationParams {
        ActivationParams {
            p: tape.value(self.p).clone(),
            q: tape.value(self.q).clone(),
            r: tape.value(self.r).clone(),
            s: tape.value(self.s).clone(),
        }
    }
}

/// Sine MLP with a softmax head: coordinates to class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelClassNet {
    backbone: Vec<Linear>,
    head: Linear,
    omega0: f64,
}

impl PixelClassNet {
    pub fn new<R: Rng>(
        rng: &mut R,
        input_dim: usize,
        hidden_layers: usize,
        width: usize,
        classes: usize,
        omega0: f64,
    ) -> Result<Self> {
        if hidden_layers == 0 || width == 0 || classes == 0 || input_dim == 0 {
            return Err(Error::Validation(format!(
                "pixel class network needs positive sizes (layers {hidden_layers}, width {width}, classes {classes})"
            )));
        }
        if omega0 <= 0.0 {
            return Err(Error::Validation("omega0 must be positive".into()));
        }
        let mut backbone = Vec::with_capacity(hidden_layers);
        let mut fan_in = input_dim;
        for l in 0..hidden_layers {
            backbone.push(Linear::uniform(rng, fan_in, width, siren_weight_limit(l, fan_in, omega0)));
            fan_in = width;
        }
        let head = Linear::uniform(rng, width, classes, siren_weight_limit(1, width, omega0));
        Ok(Self {
            backbone,
            head,
            omega0,
        })
    }

    pub fn from_parts(backbone: Vec<Linear>, head: Linear, omega0: f64) -> Self {
        Self {
            backbone,
            head,
            omega0,
        }
    }

    pub fn classes(&self) -> usize {
        self.head.fan_out()
    }

    pub fn head_mut(&mut self) -> &mut Linear {
        &mut self.head
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        push_named(out, &format!("{prefix}.backbone"), &self.backbone);
        push_named(out, &format!("{prefix}.head"), std::slice::from_ref(&self.head));
    }

    pub(crate) fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        push_mut(out, &format!("{prefix}.backbone"), &mut self.backbone);
        push_mut(out, &format!("{prefix}.head"), std::slice::from_mut(&mut self.head));
    }

    pub(crate) fn forward_bound(&self, tape: &mut Tape, bound: &mut Bound<'_>, coords: Var) -> TensorResult<Var> {
        let mut y = coords;
        for _ in &self.backbone {
            let z = bound.linear(tape, y)?;
            let u = tape.scale(z, self.omega0)?;
            y = tape.sin(u)?;
        }
        let logits = bound.linear(tape, y)?;
        tape.softmax_rows(logits)
    }

    /// n×classes probabilities.
    pub fn forward(&self, coords: &Tensor) -> Result<Tensor> {
        if coords.rows() == 0 {
            return Err(Error::contract("pixel class network needs at least one coordinate"));
        }
        let mut tape = Tape::new();
        let vars = bind_constants(&mut tape, self.backbone.iter().chain(std::iter::once(&self.head)));
        let x = tape.constant(coords.clone());
        let out = self.forward_bound(&mut tape, &mut Bound::new(&vars), x)?;
        Ok(tape.value(out).clone())
    }
}

/// ReLU MLP from class probabilities to the `4·(L−1)` activation
/// parameters, laid out as blocks `[p | q | r | s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionerNet {
    hidden: Vec<Linear>,
    head: Linear,
    activated_layers: usize,
}

impl ConditionerNet {
    /// Hidden weights uniform in `±1/√fan_in`, head weights shrunk by
    /// `head_scale`. All biases start at zero except the head, which starts
    /// at `(1, 1, 0, 0)` per layer so the initial modulation is close to
    /// the SIREN reduction.
    pub fn new<R: Rng>(
        rng: &mut R,
        classes: usize,
        hidden_layers: usize,
        width: usize,
        activated_layers: usize,
        head_scale: f64,
    ) -> Result<Self> {
        if classes == 0 || activated_layers == 0 || (hidden_layers > 0 && width == 0) {
            return Err(Error::Validation(format!(
                "conditioner needs positive sizes (classes {classes}, width {width}, layers {activated_layers})"
            )));
        }
        let mut hidden = Vec::with_capacity(hidden_layers);
        let mut fan_in = classes;
        for _ in 0..hidden_layers {
            hidden.push(Linear {
                weight: uniform_tensor(rng, fan_in, width, 1.0 / (fan_in as f64).sqrt()),
                bias: Tensor::zeros(1, width),
            });
            fan_in = width;
        }
        let out = 4 * activated_layers;
        let head = Linear {
            weight: uniform_tensor(rng, fan_in, out, head_scale / (fan_in as f64).sqrt()),
            bias: siren_bias(activated_layers),
        };
        Ok(Self {
            hidden,
            head,
            activated_layers,
        })
    }

    pub fn from_parts(hidden: Vec<Linear>, head: Linear) -> Result<Self> {
        if head.fan_out() % 4 != 0 || head.fan_out() == 0 {
            return Err(Error::contract(format!(
                "conditioner head width {} is not a positive multiple of 4",
                head.fan_out()
            )));
        }
        let activated_layers = head.fan_out() / 4;
        Ok(Self {
            hidden,
            head,
            activated_layers,
        })
    }

    pub fn input_width(&self) -> usize {
        self.hidden.first().unwrap_or(&self.head).fan_in()
    }

    pub fn output_width(&self) -> usize {
        4 * self.activated_layers
    }

    pub fn activated_layers(&self) -> usize {
        self.activated_layers
    }

    pub fn hidden_mut(&mut self) -> &mut [Linear] {
        &mut self.hidden
    }

    pub fn head_mut(&mut self) -> &mut Linear {
        &mut self.head
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        push_named(out, &format!("{prefix}.hidden"), &self.hidden);
        push_named(out, &format!("{prefix}.head"), std::slice::from_ref(&self.head));
    }

    pub(crate) fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        push_mut(out, &format!("{prefix}.hidden"), &mut self.hidden);
        push_mut(out, &format!("{prefix}.head"), std::slice::from_mut(&mut self.head));
    }

    pub(crate) fn forward_bound(&self, tape: &mut Tape, bound: &mut Bound<'_>, input: Var) -> TensorResult<ActivationVars> {
        let mut y = input;
        for _ in &self.hidden {
            let z = bound.linear(tape, y)?;
            y = tape.relu(z)?;
        }
        let out = bound.linear(tape, y)?;
        let n = self.activated_layers;
        Ok(ActivationVars {
            p: tape.columns(out, 0, n)?,
            q: tape.columns(out, n, n)?,
            r: tape.columns(out, 2 * n, n)?,
            s: tape.columns(out, 3 * n, n)?,
        })
    }

    pub fn forward(&self, class_probs: &Tensor) -> Result<ActivationParams> {
        if class_probs.cols() != self.input_width() {
            return Err(Error::contract(format!(
                "conditioner expects {} classes, got {}",
                self.input_width(),
                class_probs.cols()
            )));
        }
        let mut tape = Tape::new();
        let vars = bind_constants(&mut tape, self.hidden.iter().chain(std::iter::once(&self.head)));
        let x = tape.constant(class_probs.clone());
        let out = self.forward_bound(&mut tape, &mut Bound::new(&vars), x)?;
        Ok(out.values(&tape))
    }
}

/// Head bias `[1…1 | 1…1 | 0…0 | 0…0]`.
pub fn siren_bias(activated_layers: usize) -> Tensor {
    Tensor::from_fn(1, 4 * activated_layers, |_, c| {
        if c < 2 * activated_layers {
            1.0
        } else {
            0.0
        }
    })
}
