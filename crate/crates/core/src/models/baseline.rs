use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{push_mut, push_named, Bound, Linear};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, TensorResult, Var};

fn default_layers<R: Rng>(rng: &mut R, widths: &[usize]) -> Vec<Linear> {
    widths
        .windows(2)
        .map(|w| Linear::uniform(rng, w[0], w[1], 1.0 / (w[0] as f64).sqrt()))
        .collect()
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 3 || widths.contains(&0) {
        return Err(Error::Validation(format!(
            "MLP needs at least 2 layers of positive width, got {widths:?}"
        )));
    }
    Ok(())
}

/// Random Fourier features followed by a ReLU MLP.
///
/// Coordinates are projected through a fixed `M × (M·K)` Gaussian
/// frequency matrix `B` and encoded as `[sin(2π v B), cos(2π v B)]`.
/// With `K = 0` the MLP sees raw coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluPeNet {
    frequencies: Option<Tensor>,
    layers: Vec<Linear>,
}

impl ReluPeNet {
    /// `hidden` lists the hidden widths and output width, without the
    /// encoding width, which is derived from `k`.
    pub fn new<R: Rng, E: Rng>(
        weight_rng: &mut R,
        encoding_rng: &mut E,
        input_dim: usize,
        k: usize,
        scale: f64,
        hidden: &[usize],
    ) -> Result<Self> {
        let frequencies = if k == 0 {
            None
        } else {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::Validation(format!("encoding scale must be positive, got {scale}")));
            }
            let normal = Normal::new(0.0, scale).map_err(|e| Error::Validation(e.to_string()))?;
            Some(Tensor::from_fn(input_dim, input_dim * k, |_, _| normal.sample(encoding_rng)))
        };
        let encoded = if k == 0 { input_dim } else { 2 * input_dim * k };
        let mut widths = vec![encoded];
        widths.extend_from_slice(hidden);
        check_widths(&widths)?;
        Ok(Self {
            frequencies,
            layers: default_layers(weight_rng, &widths),
        })
    }

    pub fn from_parts(frequencies: Option<Tensor>, layers: Vec<Linear>) -> Self {
        Self { frequencies, layers }
    }

    pub fn encoding_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn frequencies(&self) -> Option<&Tensor> {
        self.frequencies.as_ref()
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    /// `γ(v)`, or `v` itself when no frequencies are configured.
    pub fn encode(&self, coords: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(coords.clone());
        let out = self.encode_on(&mut tape, x)?;
        Ok(tape.value(out).clone())
    }

    fn encode_on(&self, tape: &mut Tape, coords: Var) -> TensorResult<Var> {
        let Some(b) = &self.frequencies else {
            return Ok(coords);
        };
        let b = tape.constant(b.clone());
        let proj = tape.matmul(coords, b)?;
        let proj = tape.scale(proj, 2.0 * PI)?;
        let s = tape.sin(proj)?;
        let c = tape.cos(proj)?;
        tape.concat_cols(s, c)
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        if let Some(b) = &self.frequencies {
            out.push((format!("{prefix}.frequencies"), b));
        }
        push_named(out, prefix, &self.layers);
    }

    pub(crate) fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        if let Some(b) = &mut self.frequencies {
            out.push((format!("{prefix}.frequencies"), b));
        }
        push_mut(out, prefix, &mut self.layers);
    }

    pub(crate) fn forward_bound(&self, tape: &mut Tape, bound: &mut Bound<'_>, coords: Var) -> TensorResult<Var> {
        let mut y = self.encode_on(tape, coords)?;
        let last = self.layers.len() - 1;
        for l in 0..self.layers.len() {
            y = bound.linear(tape, y)?;
            if l < last {
                y = tape.relu(y)?;
            }
        }
        Ok(y)
    }
}

/// MLP with Gaussian activations `exp(−(σ x)²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussNet {
    sigma: f64,
    layers: Vec<Linear>,
}

impl GaussNet {
    pub fn new<R: Rng>(rng: &mut R, widths: &[usize], sigma: f64) -> Result<Self> {
        check_widths(widths)?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Validation(format!("gauss sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            sigma,
            layers: default_layers(rng, widths),
        })
    }

    pub fn from_parts(sigma: f64, layers: Vec<Linear>) -> Self {
        Self { sigma, layers }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        push_named(out, prefix, &self.layers);
    }

    pub(crate) fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        push_mut(out, prefix, &mut self.layers);
    }

    pub(crate) fn forward_bound(&self, tape: &mut Tape, bound: &mut Bound<'_>, coords: Var) -> TensorResult<Var> {
        let mut y = coords;
        let last = self.layers.len() - 1;
        for l in 0..self.layers.len() {
            y = bound.linear(tape, y)?;
            if l < last {
                let z = tape.scale(y, self.sigma)?;
                let z = tape.square(z)?;
                let z = tape.neg(z)?;
                y = tape.exp(z)?;
            }
        }
        Ok(y)
    }
}
