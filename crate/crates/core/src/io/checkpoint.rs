//! Single-file model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SECOCKPT"  u32 version
//! u32 len, config TOML (UTF-8)
//! u32 train height, u32 train width
//! u32 tensor count
//! per tensor: u16 name len, name, u32 rows, u32 cols, rows·cols f64
//! ```
//!
//! The embedded config, with its class count resolved, fully determines the
//! architecture; tensors are matched to it by name and shape on load.

use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{Architecture, Model};
use crate::tensor::Tensor;

use super::config::RunConfig;
use super::{read_file, write_file};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SECOCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Snapshot of the run's config; `classes` is always resolved.
    pub config: RunConfig,
    /// Pixel grid the model was fitted on.
    pub train_height: usize,
    pub train_width: usize,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn capture(config: &RunConfig, classes: usize, train_dims: (usize, usize), model: &Model) -> Self {
        let mut config = config.clone();
        config.classes = classes;
        config.model = model.kind();
        Self {
            config,
            train_height: train_dims.0,
            train_width: train_dims.1,
            tensors: model
                .named_tensors()
                .into_iter()
                .map(|(name, t)| (name, t.clone()))
                .collect(),
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture(self.config.classes)
    }

    /// Rebuilds the model described by the embedded config and fills in
    /// every tensor.
    pub fn model(&self) -> Result<Model> {
        let mut model = Model::new(&self.architecture(), self.config.seed)?;
        let mut slots = model.named_tensors_mut();
        if slots.len() != self.tensors.len() {
            return Err(Error::Architecture {
                what: "tensor count".into(),
                expected: slots.len().to_string(),
                found: self.tensors.len().to_string(),
            });
        }
        for ((name, slot), (stored_name, stored)) in slots.iter_mut().zip(&self.tensors) {
            if name != stored_name {
                return Err(Error::Architecture {
                    what: "tensor name".into(),
                    expected: name.clone(),
                    found: stored_name.clone(),
                });
            }
            if slot.shape() != stored.shape() {
                return Err(Error::Architecture {
                    what: format!("shape of {name}"),
                    expected: format!("{:?}", slot.shape()),
                    found: format!("{:?}", stored.shape()),
                });
            }
            **slot = stored.clone();
        }
        Ok(model)
    }

    /// Like [`Checkpoint::model`], but first insists the checkpoint was
    /// built for `expected`.
    pub fn model_for(&self, expected: &Architecture) -> Result<Model> {
        expected.ensure_matches(&self.architecture())?;
        self.model()
    }

    pub fn encode(&self) -> Vec<u8> {
        let config = self.config.to_toml();
        let payload: usize = self.tensors.iter().map(|(n, t)| 10 + n.len() + 8 * t.len()).sum();
        let mut out = Vec::with_capacity(32 + config.len() + payload);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        push_u32(&mut out, config.len());
        out.extend_from_slice(config.as_bytes());
        push_u32(&mut out, self.train_height);
        push_u32(&mut out, self.train_width);
        push_u32(&mut out, self.tensors.len());
        for (name, t) in &self.tensors {
            let len = u16::try_from(name.len()).expect("tensor names are short");
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            push_u32(&mut out, t.rows());
            push_u32(&mut out, t.cols());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "checkpoint magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32("checkpoint version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let len = r.u32("config length")? as usize;
        let text = std::str::from_utf8(r.take(len, "config")?)
            .map_err(|_| Error::Format("checkpoint config is not UTF-8".into()))?;
        let config = RunConfig::parse(text)?;
        if config.classes == 0 {
            return Err(Error::Format("checkpoint config leaves the class count unresolved".into()));
        }
        let train_height = r.u32("training height")? as usize;
        let train_width = r.u32("training width")? as usize;
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2, "tensor name length")?.try_into().expect("2 bytes")) as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rows = r.u32("tensor rows")? as usize;
            let cols = r.u32("tensor cols")? as usize;
            let n = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| Error::Format(format!("tensor {name} is impossibly large")))?;
            let data = r
                .take(n, "tensor data")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect::<Vec<f64>>();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("tensor {name} holds non-finite values")));
            }
            tensors.push((name, Tensor::new(rows, cols, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            config,
            train_height,
            train_width,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.encode())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&read_file(path.as_ref())?)
    }
}

fn push_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint fields fit in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            what,
            needed: self.pos.saturating_add(n),
            available: self.bytes.len(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}
