//! Persistence: images, masks, run configs, checkpoints, phantom specs, and
//! assembling a training set from a config.

mod checkpoint;
mod config;
mod image;
mod mask;

use std::path::Path;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::RunConfig;
pub use image::{
    decode_image, encode_pgm, encode_png16, encode_raw, load_image, save_inrd, save_inrf, save_png16, ImageFormat,
    Precision, INRD_MAGIC, INRF_MAGIC, MAX_SIDE,
};
pub use mask::{decode_labels, decode_mask, encode_label_png, load_mask, save_label_png};

use crate::error::{Error, Result};
use crate::field::{ClassField, ImageField};
use crate::phantom::{render, standard_suite, PhantomSpec};
use crate::sampling::downsample_with;

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn parse_phantom_spec(text: &str) -> Result<PhantomSpec> {
    let spec: PhantomSpec = toml::from_str(text).map_err(|e| Error::Config(e.message().trim().to_string()))?;
    spec.validate()?;
    Ok(spec)
}

pub fn phantom_spec_to_toml(spec: &PhantomSpec) -> String {
    toml::to_string(spec).expect("phantom specs are plain TOML values")
}

pub fn load_phantom_spec(path: impl AsRef<Path>) -> Result<PhantomSpec> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
    parse_phantom_spec(text)
}

/// Loads a mask; `classes == 0` takes the largest label plus one.
fn load_mask_inferring(path: &Path, classes: usize) -> Result<ClassField> {
    let bytes = read_file(path)?;
    let classes = if classes > 0 {
        classes
    } else {
        let (_, _, labels) = decode_labels(&bytes)?;
        labels.iter().max().map_or(1, |&m| m + 1)
    };
    decode_mask(&bytes, classes)
}

/// Everything a run trains and evaluates on.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub image: ImageField,
    /// Training-grid segmentation, when one is available.
    pub mask: Option<ClassField>,
    /// High-resolution reference image and, for phantoms, its segmentation.
    pub truth: Option<(ImageField, Option<ClassField>)>,
    pub classes: usize,
}

impl Dataset {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        match (&cfg.image, &cfg.ground_truth) {
            (Some(path), _) => Self::from_files(cfg, path),
            (None, Some(truth)) => Self::from_truth(cfg, truth),
            (None, None) => Self::from_phantom(cfg),
        }
    }

    /// Trains on the ground truth downsampled by `factor`. A mask may be
    /// given at either resolution.
    fn from_truth(cfg: &RunConfig, path: &Path) -> Result<Self> {
        let truth = load_image(path)?;
        let image = if cfg.factor > 1.0 {
            downsample_with(&truth, cfg.factor, cfg.resample)?
        } else {
            truth.clone()
        };
        let (mask, truth_mask) = match &cfg.mask {
            None => (None, None),
            Some(p) => {
                let m = load_mask_inferring(p, cfg.classes)?;
                if m.dims() == image.dims() {
                    (Some(m), None)
                } else if m.dims() == truth.dims() {
                    let low = if cfg.factor > 1.0 {
                        crate::sampling::downsample_mask(&m, cfg.factor)?
                    } else {
                        m.clone()
                    };
                    (Some(low), Some(m))
                } else {
                    return Err(Error::Config(format!(
                        "mask is {:?}, matching neither the ground truth {:?} nor the training grid {:?}",
                        m.dims(),
                        truth.dims(),
                        image.dims()
                    )));
                }
            }
        };
        let classes = mask.as_ref().map_or(cfg.classes.max(1), ClassField::classes);
        Ok(Self {
            image,
            mask,
            truth: Some((truth, truth_mask)),
            classes,
        })
    }

    fn from_files(cfg: &RunConfig, path: &Path) -> Result<Self> {
        let image = load_image(path)?;
        let mask = match &cfg.mask {
            None => None,
            Some(p) => Some(load_mask_inferring(p, cfg.classes)?),
        };
        if let Some(m) = &mask {
            if m.dims() != image.dims() {
                return Err(Error::Config(format!(
                    "mask is {:?} but image is {:?}",
                    m.dims(),
                    image.dims()
                )));
            }
        }
        let truth = cfg.ground_truth.as_ref().map(load_image).transpose()?.map(|t| (t, None));
        let classes = mask.as_ref().map_or(cfg.classes.max(1), ClassField::classes);
        Ok(Self {
            image,
            mask,
            truth,
            classes,
        })
    }

    fn from_phantom(cfg: &RunConfig) -> Result<Self> {
        let spec = match &cfg.phantom_spec {
            Some(p) => load_phantom_spec(p)?,
            None => standard_suite()
                .into_iter()
                .nth(cfg.phantom.wrapping_sub(1))
                .ok_or_else(|| Error::Config(format!("no standard phantom #{}", cfg.phantom)))?,
        };
        if cfg.classes != 0 && cfg.classes != spec.classes() {
            return Err(Error::Config(format!(
                "classes = {} but the phantom has {}",
                cfg.classes,
                spec.classes()
            )));
        }
        Self::phantom_pipeline(&spec, cfg.phantom_size, cfg.factor, cfg.resample)
    }

    /// Renders `spec` at `size`×`size` as ground truth, downsamples it by
    /// `factor` for training, and pairs it with the analytic mask on the
    /// training grid.
    pub fn phantom_pipeline(
        spec: &PhantomSpec,
        size: usize,
        factor: f64,
        method: crate::sampling::Resample,
    ) -> Result<Self> {
        let (truth, truth_mask) = render(spec, size, size)?;
        let image = if factor > 1.0 {
            downsample_with(&truth, factor, method)?
        } else {
            truth.clone()
        };
        let (_, mask) = render(spec, image.height(), image.width())?;
        Ok(Self {
            image,
            mask: Some(mask),
            truth: Some((truth, Some(truth_mask))),
            classes: spec.classes(),
        })
    }
}
