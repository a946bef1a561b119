//! Coordinate networks: the semantically conditioned model (adaptive SIREN,
//! pixel class network, conditioner) and the SIREN, ReLU+positional
//! encoding and Gaussian-activation baselines.

mod baseline;
mod layers;
mod seco;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{GaussNet, ReluPeNet};
pub use layers::{siren_weight_limit, Linear};
pub use seco::{siren_bias, ActivationParams, ActivationVars, AdaptiveSirenNet, ConditionerNet, PixelClassNet};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};
use layers::Bound;

/// Input coordinate dimension.
pub const COORD_DIM: usize = 2;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Adaptive SIREN conditioned on the learned segmentation.
    Seco,
    /// Same networks, but the conditioner sees a constant input.
    SecoNoSemantic,
    Siren,
    ReluPe,
    Gauss,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Seco,
        ModelKind::SecoNoSemantic,
        ModelKind::Siren,
        ModelKind::ReluPe,
        ModelKind::Gauss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Seco => "seco",
            ModelKind::SecoNoSemantic => "seco_no_semantic",
            ModelKind::Siren => "siren",
            ModelKind::ReluPe => "relu_pe",
            ModelKind::Gauss => "gauss",
        }
    }

    /// Whether training needs a ground-truth segmentation.
    pub fn needs_mask(self) -> bool {
        self == ModelKind::Seco
    }

    pub fn is_seco_family(self) -> bool {
        matches!(self, ModelKind::Seco | ModelKind::SecoNoSemantic)
    }

    pub fn default_epochs(self) -> usize {
        match self {
            ModelKind::ReluPe | ModelKind::Gauss => 2000,
            _ => 1000,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

/// Every knob that shapes a model's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub kind: ModelKind,
    /// Affine layers `L` of the intensity network (and of the baselines).
    pub layers: usize,
    pub hidden_width: usize,
    pub first_omega0: f64,
    pub hidden_omega0: f64,
    /// Segmentation classes `h`.
    pub classes: usize,
    /// Affine layers of the pixel class network, softmax head included.
    pub classnet_layers: usize,
    pub classnet_width: usize,
    pub classnet_omega0: f64,
    pub conditioner_layers: usize,
    pub conditioner_width: usize,
    pub conditioner_head_scale: f64,
    pub freeze_conditioner: bool,
    pub pe_frequencies: usize,
    pub pe_scale: f64,
    pub gauss_sigma: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            kind: ModelKind::Seco,
            layers: 5,
            hidden_width: 256,
            first_omega0: 30.0,
            hidden_omega0: 30.0,
            classes: 2,
            classnet_layers: 3,
            classnet_width: 128,
            classnet_omega0: 30.0,
            conditioner_layers: 2,
            conditioner_width: 64,
            conditioner_head_scale: 0.01,
            freeze_conditioner: false,
            pe_frequencies: 128,
            pe_scale: 10.0,
            gauss_sigma: 10.0,
        }
    }
}

impl Architecture {
    /// Layer boundaries of the intensity network, `[2, w, …, w, 1]`.
    pub fn image_widths(&self) -> Vec<usize> {
        let mut widths = vec![COORD_DIM];
        widths.extend(std::iter::repeat_n(self.hidden_width, self.layers.saturating_sub(1)));
        widths.push(1);
        widths
    }

    /// Every field as `(name, value)`, for comparisons and diagnostics.
    pub fn describe(&self) -> Vec<(&'static str, String)> {
        vec![
            ("kind", self.kind.to_string()),
            ("layers", self.layers.to_string()),
            ("hidden_width", self.hidden_width.to_string()),
            ("first_omega0", self.first_omega0.to_string()),
            ("hidden_omega0", self.hidden_omega0.to_string()),
            ("classes", self.classes.to_string()),
            ("classnet_layers", self.classnet_layers.to_string()),
            ("classnet_width", self.classnet_width.to_string()),
            ("classnet_omega0", self.classnet_omega0.to_string()),
            ("conditioner_layers", self.conditioner_layers.to_string()),
            ("conditioner_width", self.conditioner_width.to_string()),
            ("conditioner_head_scale", self.conditioner_head_scale.to_string()),
            ("freeze_conditioner", self.freeze_conditioner.to_string()),
            ("pe_frequencies", self.pe_frequencies.to_string()),
            ("pe_scale", self.pe_scale.to_string()),
            ("gauss_sigma", self.gauss_sigma.to_string()),
        ]
    }

    /// First field where `found` differs from `self`, as an error.
    pub fn ensure_matches(&self, found: &Architecture) -> Result<()> {
        for ((what, expected), (_, got)) in self.describe().into_iter().zip(found.describe()) {
            if expected != got {
                return Err(Error::Architecture {
                    what: what.to_string(),
                    expected,
                    found: got,
                });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::Validation(format!("layers must be at least 2, got {}", self.layers)));
        }
        if self.hidden_width == 0 {
            return Err(Error::Validation("hidden_width must be positive".into()));
        }
        if self.kind.is_seco_family() {
            if self.classes == 0 {
                return Err(Error::Validation("classes must be positive".into()));
            }
            if self.classnet_layers < 2 || self.classnet_width == 0 {
                return Err(Error::Validation(format!(
                    "pixel class network needs at least 2 layers and a positive width, got {} × {}",
                    self.classnet_layers, self.classnet_width
                )));
            }
            if self.conditioner_layers > 0 && self.conditioner_width == 0 {
                return Err(Error::Validation("conditioner_width must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Independent random streams derived from one run seed.
mod stream {
    pub const IMAGE: u64 = 1;
    pub const CLASSES: u64 = 2;
    pub const CONDITIONER: u64 = 3;
    pub const ENCODING: u64 = 4;
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The three jointly trained networks.
#[derive(Clone, Debug, PartialEq)]
pub struct SecoModel {
    pub image: AdaptiveSirenNet,
    pub classes: PixelClassNet,
    pub conditioner: ConditionerNet,
    /// When false the conditioner is fed zeros instead of class probabilities
    /// and the pixel class network is left out of the graph.
    pub semantic: bool,
    pub freeze_conditioner: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Seco(SecoModel),
    Siren(AdaptiveSirenNet),
    ReluPe(ReluPeNet),
    Gauss(GaussNet),
}

/// Values produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Prediction {
    /// n×1 intensities.
    pub intensity: Tensor,
    /// n×h class probabilities (semantic models only).
    pub classes: Option<Tensor>,
    pub activation: Option<ActivationParams>,
}

/// A forward pass recorded on a tape.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub intensity: Var,
    pub classes: Option<Var>,
    pub activation: Option<ActivationVars>,
    /// Trainable leaves, aligned with [`Model::trainable_mut`].
    pub trainable: Vec<Var>,
}

impl Model {
    /// Initialises a model from `seed`. Networks draw from separate streams,
    /// so the SIREN baseline and the adaptive intensity network built from
    /// one seed start with identical weights.
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let widths = arch.image_widths();
        let mut image_rng = rng_for(seed, stream::IMAGE);
        Ok(match arch.kind {
            ModelKind::Seco | ModelKind::SecoNoSemantic => {
                let image = AdaptiveSirenNet::new(&mut image_rng, &widths, arch.first_omega0, arch.hidden_omega0)?;
                let classes = PixelClassNet::new(
                    &mut rng_for(seed, stream::CLASSES),
                    COORD_DIM,
                    arch.classnet_layers - 1,
                    arch.classnet_width,
                    arch.classes,
                    arch.classnet_omega0,
                )?;
                let conditioner = ConditionerNet::new(
                    &mut rng_for(seed, stream::CONDITIONER),
                    arch.classes,
                    arch.conditioner_layers,
                    arch.conditioner_width,
                    image.activated_layers(),
                    arch.conditioner_head_scale,
                )?;
                Model::Seco(SecoModel {
                    image,
                    classes,
                    conditioner,
                    semantic: arch.kind == ModelKind::Seco,
                    freeze_conditioner: arch.freeze_conditioner,
                })
            }
            ModelKind::Siren => Model::Siren(AdaptiveSirenNet::new(
                &mut image_rng,
                &widths,
                arch.first_omega0,
                arch.hidden_omega0,
            )?),
            ModelKind::ReluPe => Model::ReluPe(ReluPeNet::new(
                &mut image_rng,
                &mut rng_for(seed, stream::ENCODING),
                COORD_DIM,
                arch.pe_frequencies,
                arch.pe_scale,
                &widths[1..],
            )?),
            ModelKind::Gauss => Model::Gauss(GaussNet::new(&mut image_rng, &widths, arch.gauss_sigma)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Seco(m) if m.semantic => ModelKind::Seco,
            Model::Seco(_) => ModelKind::SecoNoSemantic,
            Model::Siren(_) => ModelKind::Siren,
            Model::ReluPe(_) => ModelKind::ReluPe,
            Model::Gauss(_) => ModelKind::Gauss,
        }
    }

    /// Every stored tensor, trainable or not, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        match self {
            Model::Seco(m) => {
                m.image.named("image", &mut out);
                m.classes.named("classes", &mut out);
                m.conditioner.named("conditioner", &mut out);
            }
            Model::Siren(n) => n.named("siren", &mut out),
            Model::ReluPe(n) => n.named("relu_pe", &mut out),
            Model::Gauss(n) => n.named("gauss", &mut out),
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        match self {
            Model::Seco(m) => {
                m.image.named_mut("image", &mut out);
                m.classes.named_mut("classes", &mut out);
                m.conditioner.named_mut("conditioner", &mut out);
            }
            Model::Siren(n) => n.named_mut("siren", &mut out),
            Model::ReluPe(n) => n.named_mut("relu_pe", &mut out),
            Model::Gauss(n) => n.named_mut("gauss", &mut out),
        }
        out
    }

    /// Tensors the optimiser updates, in the order of
    /// [`ForwardPass::trainable`].
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        match self {
            Model::Seco(m) => {
                m.image.named_mut("image", &mut out);
                if m.semantic {
                    m.classes.named_mut("classes", &mut out);
                }
                if !m.freeze_conditioner {
                    m.conditioner.named_mut("conditioner", &mut out);
                }
            }
            Model::Siren(n) => n.named_mut("siren", &mut out),
            Model::ReluPe(n) => {
                n.named_mut("relu_pe", &mut out);
                out.retain(|(name, _)| !name.ends_with("frequencies"));
            }
            Model::Gauss(n) => n.named_mut("gauss", &mut out),
        }
        out.into_iter().map(|(_, t)| t).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Records a forward pass over `coords`. With `trainable` set, learnable
    /// tensors are bound as gradient-carrying leaves; otherwise everything is
    /// a constant.
    pub fn forward(&self, tape: &mut Tape, coords: Var, trainable: bool) -> Result<ForwardPass> {
        let n = tape.value(coords).rows();
        let mut leaves = Vec::new();
        let mut bind = |tape: &mut Tape, tensors: Vec<(String, &Tensor)>, learn: bool| -> Vec<Var> {
            tensors
                .into_iter()
                .map(|(name, t)| {
                    let learn = learn && !name.ends_with("frequencies");
                    let v = if learn { tape.param(t) } else { tape.constant(t.clone()) };
                    if learn {
                        leaves.push(v);
                    }
                    v
                })
                .collect()
        };
        let out = match self {
            Model::Seco(m) => {
                let mut named = Vec::new();
                m.image.named("image", &mut named);
                let image_vars = bind(tape, named, trainable);

                let (class_var, cond_in) = if m.semantic {
                    let mut named = Vec::new();
                    m.classes.named("classes", &mut named);
                    let vars = bind(tape, named, trainable);
                    let probs = m.classes.forward_bound(tape, &mut Bound::new(&vars), coords)?;
                    (Some(probs), probs)
                } else {
                    (None, tape.constant(Tensor::zeros(n, m.conditioner.input_width())))
                };

                let mut named = Vec::new();
                m.conditioner.named("conditioner", &mut named);
                let cond_vars = bind(tape, named, trainable && !m.freeze_conditioner);
                let act = m.conditioner.forward_bound(tape, &mut Bound::new(&cond_vars), cond_in)?;
                let intensity = m.image.forward_bound(tape, &mut Bound::new(&image_vars), coords, Some(&act))?;
                ForwardPass {
                    intensity,
                    classes: class_var,
                    activation: Some(act),
                    trainable: Vec::new(),
                }
            }
            Model::Siren(net) => {
                let mut named = Vec::new();
                net.named("siren", &mut named);
                let vars = bind(tape, named, trainable);
                let intensity = net.forward_bound(tape, &mut Bound::new(&vars), coords, None)?;
                plain(intensity)
            }
            Model::ReluPe(net) => {
                let mut named = Vec::new();
                net.named("relu_pe", &mut named);
                let vars = bind(tape, named, trainable);
                // The frequency matrix is re-bound inside the encoder; skip it here.
                let offset = usize::from(net.frequencies().is_some());
                let intensity = net.forward_bound(tape, &mut Bound::new(&vars[offset..]), coords)?;
                plain(intensity)
            }
            Model::Gauss(net) => {
                let mut named = Vec::new();
                net.named("gauss", &mut named);
                let vars = bind(tape, named, trainable);
                let intensity = net.forward_bound(tape, &mut Bound::new(&vars), coords)?;
                plain(intensity)
            }
        };
        Ok(ForwardPass {
            trainable: leaves,
            ..out
        })
    }

    /// Evaluates the model on an n×2 coordinate table without gradients.
    pub fn predict(&self, coords: &Tensor) -> Result<Prediction> {
        if coords.cols() != COORD_DIM {
            return Err(Error::contract(format!(
                "coordinates must have {COORD_DIM} columns, got {}",
                coords.cols()
            )));
        }
        let mut tape = Tape::new();
        let x = tape.constant(coords.clone());
        let pass = self.forward(&mut tape, x, false)?;
        Ok(Prediction {
            intensity: tape.value(pass.intensity).clone(),
            classes: pass.classes.map(|v| tape.value(v).clone()),
            activation: pass.activation.map(|a| a.values(&tape)),
        })
    }
}

fn plain(intensity: Var) -> ForwardPass {
    ForwardPass {
        intensity,
        classes: None,
        activation: None,
        trainable: Vec::new(),
    }
}

#[cfg(test)]
mod tests;
