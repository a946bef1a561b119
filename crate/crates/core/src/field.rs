//! Pixel-grid value types: grayscale images and per-pixel class distributions.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Grayscale image, row-major. Intensities are nominally in `[0, 1]`;
/// network predictions stored here may stray outside that range.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::contract(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::contract(format!(
                "image data has {} values, expected {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self::new(height, width, data)
    }

    /// Builds an image from an n×1 tensor of per-pixel values.
    pub fn from_tensor(height: usize, width: usize, t: &Tensor) -> Result<Self> {
        if t.cols() != 1 {
            return Err(Error::contract(format!(
                "expected a single-column tensor, got {} columns",
                t.cols()
            )));
        }
        Self::new(height, width, t.data().to_vec())
    }

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
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Copy with every value clamped to `[0, 1]`, for export.
    pub fn clamped(&self) -> ImageField {
        ImageField {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// n×1 column of intensities.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.data.len(), 1, self.data.clone()).expect("length matches")
    }
}

/// Per-pixel probability distribution over `classes` labels, stored as an
/// n×classes row-major table.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassField {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ClassField {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || classes == 0 {
            return Err(Error::contract(format!(
                "class field needs positive dims and class count, got {height}x{width}x{classes}"
            )));
        }
        if data.len() != height * width * classes {
            return Err(Error::contract(format!(
                "class field has {} values, expected {height}x{width}x{classes}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            classes,
            data,
        })
    }

    /// One-hot encoding of integer labels. Labels must be `< classes`.
    pub fn one_hot(height: usize, width: usize, classes: usize, labels: &[usize]) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::contract(format!(
                "{} labels for a {height}x{width} grid",
                labels.len()
            )));
        }
        let mut bad: Vec<usize> = labels.iter().copied().filter(|&l| l >= classes).collect();
        if !bad.is_empty() {
            bad.sort_unstable();
            bad.dedup();
            return Err(Error::Validation(format!(
                "labels {bad:?} out of range for {classes} classes"
            )));
        }
        let mut data = vec![0.0; labels.len() * classes];
        for (i, &l) in labels.iter().enumerate() {
            data[i * classes + l] = 1.0;
        }
        Self::new(height, width, classes, data)
    }

    pub fn from_tensor(height: usize, width: usize, t: &Tensor) -> Result<Self> {
        Self::new(height, width, t.cols(), t.data().to_vec())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.classes..(pixel + 1) * self.classes]
    }

    /// Most probable class per pixel; ties go to the lower index.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.pixels())
            .map(|p| {
                let row = self.row(p);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    /// True when every row is non-negative and sums to 1 within `tol`.
    pub fn is_distribution(&self, tol: f64) -> bool {
        (0..self.pixels()).all(|p| {
            let row = self.row(p);
            row.iter().all(|&v| v >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.pixels(), self.classes, self.data.clone()).expect("length matches")
    }
}
