//! Label masks: 8-bit grayscale or indexed PNG, or PGM with maxval < 256,
//! one label per pixel.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::ClassField;

use super::image::{decode_pgm, decode_png_gray, encode_png, ImageFormat};
use super::{read_file, write_file};

pub fn load_mask(path: impl AsRef<Path>, classes: usize) -> Result<ClassField> {
    decode_mask(&read_file(path.as_ref())?, classes)
}

/// One-hot encodes a label image with `classes` classes.
pub fn decode_mask(bytes: &[u8], classes: usize) -> Result<ClassField> {
    let (height, width, labels) = decode_labels(bytes)?;
    ClassField::one_hot(height, width, classes, &labels)
}

/// Raw labels of a mask file, row-major.
pub fn decode_labels(bytes: &[u8]) -> Result<(usize, usize, Vec<usize>)> {
    let (height, width, samples) = match ImageFormat::detect(bytes)? {
        ImageFormat::Png => {
            let raw = decode_png_gray(bytes, true)?;
            if raw.bits != 8 {
                return Err(Error::Format("label PNGs must be 8-bit".into()));
            }
            (raw.height, raw.width, raw.samples)
        }
        ImageFormat::Pgm => {
            let raw = decode_pgm(bytes)?;
            if raw.maxval > 255 {
                return Err(Error::Format("label PGMs must use one byte per sample".into()));
            }
            (raw.height, raw.width, raw.samples)
        }
        other => return Err(Error::Format(format!("{other:?} files cannot hold label masks"))),
    };
    Ok((height, width, samples.into_iter().map(usize::from).collect()))
}

/// Distinct, stable colours for up to 256 labels; label 0 is black.
fn palette() -> Vec<u8> {
    const BASE: [[u8; 3]; 8] = [
        [0, 0, 0],
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
    ];
    (0..256usize)
        .flat_map(|k| {
            let [r, g, b] = BASE[k % BASE.len()];
            // Darken each successive cycle so labels past 7 stay distinct.
            let shade = 1.0 - 0.1 * (k / BASE.len()) as f64 / 4.0;
            [r, g, b].map(|c| (c as f64 * shade.max(0.2)) as u8)
        })
        .collect()
}

/// Indexed 8-bit PNG whose palette index is the label (the argmax class).
pub fn encode_label_png(mask: &ClassField) -> Result<Vec<u8>> {
    if mask.classes() > 256 {
        return Err(Error::Validation(format!(
            "{} classes do not fit an 8-bit label image",
            mask.classes()
        )));
    }
    let labels: Vec<u8> = mask.argmax().into_iter().map(|k| k as u8).collect();
    encode_png(
        mask.height(),
        mask.width(),
        png::BitDepth::Eight,
        png::ColorType::Indexed,
        Some(palette()),
        &labels,
    )
}

pub fn save_label_png(path: impl AsRef<Path>, mask: &ClassField) -> Result<()> {
    write_file(path.as_ref(), &encode_label_png(mask)?)
}
