//! Semantically conditioned implicit neural representations for grayscale
//! images: a small reverse-mode autodiff engine, the coordinate networks,
//! training, resampling, metrics, synthetic phantoms and file formats.

pub mod error;
pub mod field;
pub mod io;
pub mod metrics;
pub mod models;
pub mod phantom;
pub mod sampling;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use field::{ClassField, ImageField};
pub use models::{Architecture, Model, ModelKind};
pub use tensor::{Tape, Tensor, Var};
