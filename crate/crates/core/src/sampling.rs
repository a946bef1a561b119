//! Coordinate grids, retrospective low-resolution generation, and
//! super-resolution by evaluating fitted networks on a denser grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ClassField, ImageField};
use crate::models::Model;
use crate::tensor::Tensor;

/// Smallest side length `downsample` will produce.
pub const MIN_DOWNSAMPLED_SIDE: usize = 8;

/// Pixel-centre coordinates in `[-1, 1]²`, row-major, columns `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateGrid {
    height: usize,
    width: usize,
    coords: Tensor,
}

impl CoordinateGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.rows() == 0
    }

    /// n×2 tensor of `(x, y)` rows.
    pub fn coords(&self) -> &Tensor {
        &self.coords
    }

    pub fn into_tensor(self) -> Tensor {
        self.coords
    }
}

/// Centre of pixel `index` along an axis of `size` pixels.
pub fn pixel_center(index: usize, size: usize) -> f64 {
    -1.0 + (2 * index + 1) as f64 / size as f64
}

pub fn make_grid(height: usize, width: usize) -> Result<CoordinateGrid> {
    if height == 0 || width == 0 {
        return Err(Error::contract(format!(
            "grid dimensions must be positive, got {height}x{width}"
        )));
    }
    let xs: Vec<f64> = (0..width).map(|j| pixel_center(j, width)).collect();
    let mut data = Vec::with_capacity(height * width * 2);
    for i in 0..height {
        let y = pixel_center(i, height);
        for &x in &xs {
            data.push(x);
            data.push(y);
        }
    }
    Ok(CoordinateGrid {
        height,
        width,
        coords: Tensor::new(height * width, 2, data)?,
    })
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    /// Area average over the (possibly fractional) source footprint.
    #[default]
    Box,
    /// Bilinear interpolation at output pixel centres.
    Bilinear,
}

fn downsampled_dims(height: usize, width: usize, factor: f64) -> Result<(usize, usize)> {
    if !(factor.is_finite() && factor > 1.0) {
        return Err(Error::contract(format!(
            "downsampling factor must be > 1, got {factor}"
        )));
    }
    let out_h = (height as f64 / factor).round() as usize;
    let out_w = (width as f64 / factor).round() as usize;
    if out_h < MIN_DOWNSAMPLED_SIDE || out_w < MIN_DOWNSAMPLED_SIDE {
        return Err(Error::contract(format!(
            "{height}x{width} downsampled by {factor} gives {out_h}x{out_w}, below the \
             {MIN_DOWNSAMPLED_SIDE}x{MIN_DOWNSAMPLED_SIDE} minimum"
        )));
    }
    Ok((out_h, out_w))
}

/// Sparse overlap weights between `out` equal bins and `input` unit pixels.
/// Each output's weights sum to one.
fn box_weights(input: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = input as f64 / out as f64;
    (0..out)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(input);
            (first..last)
                .filter_map(|k| {
                    let overlap = (hi.min((k + 1) as f64) - lo.max(k as f64)).max(0.0);
                    (overlap > 0.0).then_some((k, overlap / scale))
                })
                .collect()
        })
        .collect()
}

fn bilinear_weights(input: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = input as f64 / out as f64;
    (0..out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let k0 = src.floor() as usize;
            let k1 = (k0 + 1).min(input - 1);
            let t = src - k0 as f64;
            if k1 == k0 || t == 0.0 {
                vec![(k0, 1.0)]
            } else {
                vec![(k0, 1.0 - t), (k1, t)]
            }
        })
        .collect()
}

pub fn downsample(image: &ImageField, factor: f64) -> Result<ImageField> {
    downsample_with(image, factor, Resample::Box)
}

pub fn downsample_with(image: &ImageField, factor: f64, method: Resample) -> Result<ImageField> {
    let (h, w) = image.dims();
    let (out_h, out_w) = downsampled_dims(h, w, factor)?;
    let (rw, cw) = match method {
        Resample::Box => (box_weights(h, out_h), box_weights(w, out_w)),
        Resample::Bilinear => (bilinear_weights(h, out_h), bilinear_weights(w, out_w)),
    };
    let mut data = Vec::with_capacity(out_h * out_w);
    for row in &rw {
        for col in &cw {
            let mut acc = 0.0;
            for &(k, wr) in row {
                let mut line = 0.0;
                for &(l, wc) in col {
                    line += wc * image.get(k, l);
                }
                acc += wr * line;
            }
            data.push(acc.clamp(0.0, 1.0));
        }
    }
    ImageField::new(out_h, out_w, data)
}

/// Categorical downsampling: each output pixel takes the class with the
/// largest area share of its footprint (ties go to the lower label), then
/// the result is one-hot encoded.
pub fn downsample_mask(mask: &ClassField, factor: f64) -> Result<ClassField> {
    let (h, w) = mask.dims();
    let (out_h, out_w) = downsampled_dims(h, w, factor)?;
    let (rw, cw) = (box_weights(h, out_h), box_weights(w, out_w));
    let classes = mask.classes();
    let mut labels = Vec::with_capacity(out_h * out_w);
    let mut votes = vec![0.0; classes];
    for row in &rw {
        for col in &cw {
            votes.fill(0.0);
            for &(k, wr) in row {
                for &(l, wc) in col {
                    let dist = mask.row(k * w + l);
                    for (v, &p) in votes.iter_mut().zip(dist) {
                        *v += wr * wc * p;
                    }
                }
            }
            let mut best = 0;
            for c in 1..classes {
                if votes[c] > votes[best] {
                    best = c;
                }
            }
            labels.push(best);
        }
    }
    ClassField::one_hot(out_h, out_w, classes, &labels)
}

/// Output of super-resolution inference. Intensities are raw network
/// values; clamp only when exporting.
#[derive(Clone, Debug)]
pub struct SuperResolved {
    pub image: ImageField,
    /// Upscaled class distributions, for semantically conditioned models.
    pub classes: Option<ClassField>,
}

/// Evaluates a fitted model on the pixel centres of a `height`×`width` grid.
pub fn superresolve(model: &Model, height: usize, width: usize) -> Result<SuperResolved> {
    let grid = make_grid(height, width)?;
    let out = model.predict(grid.coords())?;
    Ok(SuperResolved {
        image: ImageField::from_tensor(height, width, &out.intensity)?,
        classes: out
            .classes
            .map(|c| ClassField::from_tensor(height, width, &c))
            .transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_grid_is_origin() {
        let g = make_grid(1, 1).unwrap();
        assert_eq!(g.coords().data(), &[0.0, 0.0]);
    }

    #[test]
    fn one_by_two_grid() {
        let g = make_grid(1, 2).unwrap();
        assert_eq!(g.coords().data(), &[-0.5, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(make_grid(0, 4).is_err());
        assert!(make_grid(4, 0).is_err());
    }

    #[test]
    fn doubled_grid_interleaves_original_range() {
        let coarse = make_grid(4, 4).unwrap();
        let fine = make_grid(8, 8).unwrap();
        // Each coarse centre is the midpoint of a pair of fine centres.
        for j in 0..4 {
            let c = coarse.coords().get(j, 0);
            let a = fine.coords().get(2 * j, 0);
            let b = fine.coords().get(2 * j + 1, 0);
            assert!(((a + b) / 2.0 - c).abs() < 1e-15);
            assert!((b - a - 2.0 / 8.0).abs() < 1e-15);
        }
        assert!((fine.coords().get(0, 0) + 1.0 - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn grid_is_symmetric_and_bounded() {
        let g = make_grid(5, 7).unwrap();
        let n = g.len();
        for r in 0..n {
            let (x, y) = (g.coords().get(r, 0), g.coords().get(r, 1));
            assert!(x.abs() <= 1.0 && y.abs() <= 1.0);
            let mirror = n - 1 - r;
            assert!((x + g.coords().get(mirror, 0)).abs() < 1e-15);
            assert!((y + g.coords().get(mirror, 1)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = ImageField::filled(30, 30, 0.37).unwrap();
        for factor in [1.5, 2.0, 2.5, 3.0] {
            let d = downsample(&img, factor).unwrap();
            assert!(d.data().iter().all(|v| (v - 0.37).abs() < 1e-12), "{factor}");
        }
    }

    #[test]
    fn factor_two_is_block_mean() {
        let img = ImageField::from_fn(16, 16, |i, j| ((i * 16 + j) % 7) as f64 / 7.0).unwrap();
        let d = downsample(&img, 2.0).unwrap();
        assert_eq!(d.dims(), (8, 8));
        for i in 0..8 {
            for j in 0..8 {
                let mean = (img.get(2 * i, 2 * j)
                    + img.get(2 * i, 2 * j + 1)
                    + img.get(2 * i + 1, 2 * j)
                    + img.get(2 * i + 1, 2 * j + 1))
                    / 4.0;
                assert!((d.get(i, j) - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn checkerboard_averages_to_half() {
        let img = ImageField::from_fn(16, 16, |i, j| ((i + j) % 2) as f64).unwrap();
        let d = downsample(&img, 2.0).unwrap();
        assert!(d.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn fractional_factor_dims_round() {
        let img = ImageField::filled(32, 30, 0.5).unwrap();
        let d = downsample(&img, 2.5).unwrap();
        assert_eq!(d.dims(), (13, 12));
    }

    #[test]
    fn fractional_box_weights_sum_to_one() {
        for (input, out) in [(32, 13), (30, 12), (64, 43)] {
            for w in box_weights(input, out) {
                let total: f64 = w.iter().map(|(_, v)| v).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_small_or_bad_factor_is_rejected() {
        let img = ImageField::filled(16, 16, 0.0).unwrap();
        assert!(downsample(&img, 4.0).is_err());
        assert!(downsample(&img, 1.0).is_err());
        assert!(downsample(&img, 0.5).is_err());
    }

    #[test]
    fn bilinear_keeps_constants() {
        let img = ImageField::filled(20, 20, 0.8).unwrap();
        let d = downsample_with(&img, 2.0, Resample::Bilinear).unwrap();
        assert!(d.data().iter().all(|v| (v - 0.8).abs() < 1e-12));
    }

    #[test]
    fn mask_majority_vote() {
        // Left 3 columns class 1 in a 16-wide field: block (0..2) and (2..4)
        // see 2/2 and 1/2 class-1 area respectively.
        let labels: Vec<usize> = (0..16 * 16).map(|p| usize::from(p % 16 < 3)).collect();
        let mask = ClassField::one_hot(16, 16, 2, &labels).unwrap();
        let d = downsample_mask(&mask, 2.0).unwrap();
        let out = d.argmax();
        assert_eq!(out[0], 1);
        assert_eq!(out[1], 0, "tie resolves to the lower label");
        assert_eq!(out[2], 0);
        assert!(d.is_distribution(0.0));
    }
}
