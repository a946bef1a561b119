//! Run configuration: a flat TOML file of `key = value` lines.
//!
//! Every key is optional and unknown keys are rejected. The training data
//! comes from, in order of preference: `image` (plus `mask`); `ground_truth`
//! downsampled by `factor`; or a phantom — the chosen standard-suite member,
//! or a spec file, rendered at `phantom_size` and downsampled by `factor`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Architecture, ModelKind};
use crate::sampling::Resample;
use crate::training::{LossConfig, TrainConfig};

use super::{read_file, write_file};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,

    /// Training image; the phantom pipeline runs when absent.
    pub image: Option<PathBuf>,
    /// Label mask matching `image`.
    pub mask: Option<PathBuf>,
    /// High-resolution reference for `ablate` and `eval`.
    pub ground_truth: Option<PathBuf>,
    /// 1-based index into the standard phantom suite.
    pub phantom: usize,
    /// Phantom spec file (TOML), used instead of the suite when set.
    pub phantom_spec: Option<PathBuf>,
    /// Side of the ground-truth phantom render.
    pub phantom_size: usize,
    /// Downsampling factor from ground truth to training image.
    pub factor: f64,
    pub resample: Resample,

    pub layers: usize,
    pub hidden_width: usize,
    pub first_omega0: f64,
    pub hidden_omega0: f64,
    /// Segmentation classes; 0 infers them from the mask or phantom.
    pub classes: usize,
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

    /// Defaults to the model kind's usual budget when absent.
    pub epochs: Option<usize>,
    pub beta: f64,
    pub lambda_neg: f64,
    pub lr0: f64,
    pub gamma: f64,
    pub step_interval: Option<usize>,
    pub batch_size: Option<usize>,

    pub output_dir: PathBuf,
    /// Models trained by `bench`.
    pub bench_models: Vec<ModelKind>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let arch = Architecture::default();
        let loss = LossConfig::default();
        Self {
            model: arch.kind,
            seed: 0,
            image: None,
            mask: None,
            ground_truth: None,
            phantom: 1,
            phantom_spec: None,
            phantom_size: 64,
            factor: 2.0,
            resample: Resample::Box,
            layers: arch.layers,
            hidden_width: arch.hidden_width,
            first_omega0: arch.first_omega0,
            hidden_omega0: arch.hidden_omega0,
            classes: 0,
            classnet_layers: arch.classnet_layers,
            classnet_width: arch.classnet_width,
            classnet_omega0: arch.classnet_omega0,
            conditioner_layers: arch.conditioner_layers,
            conditioner_width: arch.conditioner_width,
            conditioner_head_scale: arch.conditioner_head_scale,
            freeze_conditioner: arch.freeze_conditioner,
            pe_frequencies: arch.pe_frequencies,
            pe_scale: arch.pe_scale,
            gauss_sigma: arch.gauss_sigma,
            epochs: None,
            beta: loss.beta,
            lambda_neg: loss.lambda_neg,
            lr0: loss.lr0,
            gamma: loss.gamma,
            step_interval: loss.step_interval,
            batch_size: None,
            output_dir: PathBuf::from("runs"),
            bench_models: vec![ModelKind::Seco, ModelKind::Siren],
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        Self::parse(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are plain TOML values")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.factor.is_finite() && self.factor >= 1.0) {
            return Err(Error::Config(format!("factor must be at least 1, got {}", self.factor)));
        }
        if self.image.is_none() && self.phantom_spec.is_none() && !(1..=5).contains(&self.phantom) {
            return Err(Error::Config(format!(
                "phantom must index the standard suite (1-5), got {}",
                self.phantom
            )));
        }
        if self.mask.is_some() && self.image.is_none() && self.ground_truth.is_none() {
            return Err(Error::Config("mask given without an image".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.loss().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.architecture(self.classes.max(1))
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or_else(|| self.model.default_epochs())
    }

    /// The model shape, with the class count resolved by the caller.
    pub fn architecture(&self, classes: usize) -> Architecture {
        Architecture {
            kind: self.model,
            layers: self.layers,
            hidden_width: self.hidden_width,
            first_omega0: self.first_omega0,
            hidden_omega0: self.hidden_omega0,
            classes,
            classnet_layers: self.classnet_layers,
            classnet_width: self.classnet_width,
            classnet_omega0: self.classnet_omega0,
            conditioner_layers: self.conditioner_layers,
            conditioner_width: self.conditioner_width,
            conditioner_head_scale: self.conditioner_head_scale,
            freeze_conditioner: self.freeze_conditioner,
            pe_frequencies: self.pe_frequencies,
            pe_scale: self.pe_scale,
            gauss_sigma: self.gauss_sigma,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            beta: self.beta,
            lambda_neg: self.lambda_neg,
            epochs: self.epochs(),
            lr0: self.lr0,
            gamma: self.gamma,
            step_interval: self.step_interval,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss(),
            batch_size: self.batch_size,
            seed: self.seed,
            halt_at_psnr: None,
        }
    }

    /// Resolves relative paths in the config against `base`, normally the
    /// directory holding the config file.
    pub fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.image,
            &mut self.mask,
            &mut self.ground_truth,
            &mut self.phantom_spec,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
