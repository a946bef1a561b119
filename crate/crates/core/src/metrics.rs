//! RMSE, PSNR and SSIM between a reconstruction and its reference.
//!
//! Conventions follow the common fastMRI evaluation code: the data range
//! defaults to the maximum of the reference image, and SSIM averages a 7×7
//! uniform-window map over the valid region with sample covariances.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ImageField;

pub const SSIM_WINDOW: usize = 7;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// PSNR in decibels. Identical images have no finite PSNR.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn finite(self) -> Option<f64> {
        match self {
            Psnr::Finite(v) => Some(v),
            Psnr::Infinite => None,
        }
    }

    /// `+∞` for the identical-image case, for sorting and comparisons.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

/// How the peak value for PSNR/SSIM is chosen.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataRange {
    /// Maximum intensity of the reference image.
    #[default]
    ReferenceMax,
    Fixed(f64),
}

impl DataRange {
    pub fn resolve(self, reference: &ImageField) -> f64 {
        match self {
            DataRange::ReferenceMax => reference.max(),
            DataRange::Fixed(v) => v,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DataRange::ReferenceMax => "reference_max",
            DataRange::Fixed(_) => "fixed",
        }
    }
}

fn same_dims(a: &ImageField, b: &ImageField) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::contract(format!(
            "image dimensions differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

fn check_range(data_range: f64) -> Result<()> {
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::contract(format!("data range must be positive, got {data_range}")));
    }
    Ok(())
}

pub fn mse(a: &ImageField, b: &ImageField) -> Result<f64> {
    same_dims(a, b)?;
    let total: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(total / a.len() as f64)
}

pub fn rmse(a: &ImageField, b: &ImageField) -> Result<f64> {
    Ok(mse(a, b)?.sqrt())
}

/// `20·log10(data_range / rmse)`.
pub fn psnr(a: &ImageField, b: &ImageField, data_range: f64) -> Result<Psnr> {
    check_range(data_range)?;
    let e = rmse(a, b)?;
    Ok(psnr_from_rmse(e, data_range))
}

pub fn psnr_from_rmse(rmse: f64, data_range: f64) -> Psnr {
    if rmse == 0.0 {
        Psnr::Infinite
    } else {
        Psnr::Finite(20.0 * (data_range / rmse).log10())
    }
}

/// Sums of every `win`-long run along rows then columns: entry `(i, j)` is
/// the sum over the window whose top-left corner is `(i, j)`.
fn window_sums(values: &[f64], height: usize, width: usize, win: usize) -> Vec<f64> {
    let out_w = width - win + 1;
    let out_h = height - win + 1;
    let mut rows = vec![0.0; height * out_w];
    for i in 0..height {
        let line = &values[i * width..(i + 1) * width];
        let mut acc: f64 = line[..win].iter().sum();
        rows[i * out_w] = acc;
        for j in 1..out_w {
            acc += line[j + win - 1] - line[j - 1];
            rows[i * out_w + j] = acc;
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for j in 0..out_w {
        for i in 0..out_h {
            out[i * out_w + j] = (i..i + win).map(|k| rows[k * out_w + j]).sum();
        }
    }
    out
}

/// Mean structural similarity over all fully contained 7×7 windows.
pub fn ssim(a: &ImageField, b: &ImageField, data_range: f64) -> Result<f64> {
    same_dims(a, b)?;
    check_range(data_range)?;
    let (h, w) = a.dims();
    let win = SSIM_WINDOW;
    if h < win || w < win {
        return Err(Error::contract(format!(
            "SSIM needs at least {win}x{win} pixels, got {h}x{w}"
        )));
    }
    let (x, y) = (a.data(), b.data());
    let prod = |f: &dyn Fn(usize) -> f64| (0..x.len()).map(f).collect::<Vec<f64>>();
    let sx = window_sums(x, h, w, win);
    let sy = window_sums(y, h, w, win);
    let sxx = window_sums(&prod(&|i| x[i] * x[i]), h, w, win);
    let syy = window_sums(&prod(&|i| y[i] * y[i]), h, w, win);
    let sxy = window_sums(&prod(&|i| x[i] * y[i]), h, w, win);

    let np = (win * win) as f64;
    let cov_norm = np / (np - 1.0);
    let c1 = (K1 * data_range).powi(2);
    let c2 = (K2 * data_range).powi(2);
    let mut total = 0.0;
    for k in 0..sx.len() {
        let (mx, my) = (sx[k] / np, sy[k] / np);
        let vx = cov_norm * (sxx[k] / np - mx * mx);
        let vy = cov_norm * (syy[k] / np - my * my);
        let vxy = cov_norm * (sxy[k] / np - mx * my);
        total += ((2.0 * mx * my + c1) * (2.0 * vxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / sx.len() as f64)
}

/// One evaluation row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub psnr: Psnr,
    pub ssim: f64,
    pub data_range: f64,
    pub range_mode: DataRange,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "rmse,psnr,ssim,data_range,data_range_mode";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.rmse,
            self.psnr,
            self.ssim,
            self.data_range,
            self.range_mode.label()
        )
    }
}

/// Scores `reconstruction` against `reference` without clamping either.
pub fn evaluate(reconstruction: &ImageField, reference: &ImageField, range: DataRange) -> Result<MetricReport> {
    let data_range = range.resolve(reference);
    let e = rmse(reconstruction, reference)?;
    check_range(data_range)?;
    Ok(MetricReport {
        rmse: e,
        psnr: psnr_from_rmse(e, data_range),
        ssim: ssim(reconstruction, reference, data_range)?,
        data_range,
        range_mode: range,
    })
}
