//! Synthetic piecewise-textured phantoms with analytic segmentation.
//!
//! A phantom is a textured background (class 0) overlaid with ellipses;
//! region `k` of the list is class `k + 1` and later ellipses cover
//! earlier ones. Everything is defined on the continuous square `[-1, 1]²`
//! and point-sampled at pixel centres, so renders at different sizes share
//! one geometry.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ClassField, ImageField};
use crate::sampling::pixel_center;

/// Smallest side `render` accepts.
pub const MIN_RENDER_SIDE: usize = 8;

/// Oriented sinusoidal texture `base + amplitude·sin(2π·frequency·(x cos φ + y sin φ))`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Texture {
    pub base: f64,
    pub amplitude: f64,
    /// Cycles per unit of coordinate.
    pub frequency: f64,
    /// Direction of the wave vector, radians.
    pub orientation: f64,
}

impl Texture {
    pub fn flat(base: f64) -> Self {
        Self {
            base,
            amplitude: 0.0,
            frequency: 0.0,
            orientation: 0.0,
        }
    }

    pub fn at(&self, x: f64, y: f64) -> f64 {
        let t = x * self.orientation.cos() + y * self.orientation.sin();
        self.base + self.amplitude * (2.0 * PI * self.frequency * t).sin()
    }

    fn validate(&self, what: &str) -> Result<()> {
        let all = [self.base, self.amplitude, self.frequency, self.orientation];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("{what}: texture values must be finite")));
        }
        if self.amplitude < 0.0 || self.frequency < 0.0 {
            return Err(Error::Validation(format!(
                "{what}: amplitude and frequency must be non-negative"
            )));
        }
        if self.base - self.amplitude < 0.0 || self.base + self.amplitude > 1.0 {
            return Err(Error::Validation(format!(
                "{what}: base {} ± amplitude {} leaves [0, 1]",
                self.base, self.amplitude
            )));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Semi-axes before rotation.
    pub axes: [f64; 2],
    /// Counter-clockwise rotation, radians.
    pub rotation: f64,
    pub texture: Texture,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let (sin, cos) = self.rotation.sin_cos();
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        (u / self.axes[0]).powi(2) + (v / self.axes[1]).powi(2) <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    /// Recorded for provenance; rendering is fully determined by the fields.
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub background: Texture,
    pub regions: Vec<Ellipse>,
}

impl PhantomSpec {
    /// Number of classes, background included.
    pub fn classes(&self) -> usize {
        self.regions.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < MIN_RENDER_SIDE || self.width < MIN_RENDER_SIDE {
            return Err(Error::Validation(format!(
                "phantom canvas {}x{} is below {MIN_RENDER_SIDE}x{MIN_RENDER_SIDE}",
                self.height, self.width
            )));
        }
        self.background.validate("background")?;
        for (k, e) in self.regions.iter().enumerate() {
            let what = format!("region {}", k + 1);
            e.texture.validate(&what)?;
            let geometry = [e.center[0], e.center[1], e.axes[0], e.axes[1], e.rotation];
            if geometry.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("{what}: geometry must be finite")));
            }
            if e.axes[0] <= 0.0 || e.axes[1] <= 0.0 {
                return Err(Error::Validation(format!("{what}: semi-axes must be positive")));
            }
        }
        Ok(())
    }

    /// Topmost region containing `(x, y)`; 0 is the background.
    pub fn label_at(&self, x: f64, y: f64) -> usize {
        self.regions
            .iter()
            .rposition(|e| e.contains(x, y))
            .map_or(0, |k| k + 1)
    }

    pub fn intensity_at(&self, x: f64, y: f64) -> f64 {
        match self.label_at(x, y) {
            0 => self.background.at(x, y),
            k => self.regions[k - 1].texture.at(x, y),
        }
    }

    /// A random phantom with `classes` classes: ellipses of moderate size
    /// scattered over the canvas, each with its own texture.
    pub fn random(seed: u64, classes: usize, height: usize, width: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Validation("a phantom needs at least one class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let texture = |rng: &mut ChaCha8Rng| {
            let base: f64 = rng.random_range(0.2..0.8);
            let room = base.min(1.0 - base);
            Texture {
                base,
                amplitude: rng.random_range(0.0..room.min(0.2)),
                frequency: rng.random_range(0.5..4.0),
                orientation: rng.random_range(0.0..PI),
            }
        };
        let background = texture(&mut rng);
        let regions = (1..classes)
            .map(|_| Ellipse {
                center: [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
                axes: [rng.random_range(0.2..0.5), rng.random_range(0.2..0.5)],
                rotation: rng.random_range(0.0..PI),
                texture: texture(&mut rng),
            })
            .collect();
        let spec = Self {
            seed,
            height,
            width,
            background,
            regions,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Point-samples `spec` at the centres of a `height`×`width` pixel grid.
pub fn render(spec: &PhantomSpec, height: usize, width: usize) -> Result<(ImageField, ClassField)> {
    spec.validate()?;
    if height < MIN_RENDER_SIDE || width < MIN_RENDER_SIDE {
        return Err(Error::Validation(format!(
            "render size {height}x{width} is below {MIN_RENDER_SIDE}x{MIN_RENDER_SIDE}"
        )));
    }
    let mut labels = Vec::with_capacity(height * width);
    let image = ImageField::from_fn(height, width, |r, c| {
        let (x, y) = (pixel_center(c, width), pixel_center(r, height));
        labels.push(spec.label_at(x, y));
        spec.intensity_at(x, y)
    })?;
    let mask = ClassField::one_hot(height, width, spec.classes(), &labels)?;
    Ok((image, mask))
}

/// Renders at the spec's own canvas size.
pub fn render_native(spec: &PhantomSpec) -> Result<(ImageField, ClassField)> {
    render(spec, spec.height, spec.width)
}

fn tex(base: f64, amplitude: f64, frequency: f64, orientation: f64) -> Texture {
    Texture {
        base,
        amplitude,
        frequency,
        orientation,
    }
}

fn ellipse(center: [f64; 2], axes: [f64; 2], rotation: f64, texture: Texture) -> Ellipse {
    Ellipse {
        center,
        axes,
        rotation,
        texture,
    }
}

/// The five fixed phantoms used for benchmarking, with 2 to 6 classes.
pub fn standard_suite() -> Vec<PhantomSpec> {
    let spec = |seed, background, regions| PhantomSpec {
        seed,
        height: 64,
        width: 64,
        background,
        regions,
    };
    vec![
        spec(
            1,
            tex(0.15, 0.05, 1.0, 0.0),
            vec![ellipse([0.05, -0.05], [0.6, 0.45], 0.3, tex(0.65, 0.2, 3.0, 0.8))],
        ),
        spec(
            2,
            tex(0.1, 0.05, 1.5, 1.2),
            vec![
                ellipse([0.0, 0.0], [0.75, 0.6], 0.0, tex(0.45, 0.1, 1.0, 0.0)),
                ellipse([0.2, 0.15], [0.3, 0.25], -0.5, tex(0.8, 0.15, 3.5, 2.0)),
            ],
        ),
        spec(
            3,
            tex(0.2, 0.1, 2.0, 0.4),
            vec![
                ellipse([-0.35, 0.3], [0.4, 0.3], 0.7, tex(0.6, 0.15, 2.5, 1.6)),
                ellipse([0.4, -0.2], [0.35, 0.5], -0.3, tex(0.4, 0.05, 1.0, 0.2)),
                ellipse([0.0, 0.05], [0.25, 0.2], 0.0, tex(0.85, 0.1, 4.0, 0.0)),
            ],
        ),
        spec(
            4,
            tex(0.05, 0.03, 1.0, 0.0),
            vec![
                ellipse([0.0, 0.0], [0.85, 0.7], 0.1, tex(0.35, 0.1, 1.5, 0.9)),
                ellipse([-0.3, -0.25], [0.3, 0.25], 0.9, tex(0.7, 0.2, 3.0, 0.3)),
                ellipse([0.35, -0.15], [0.22, 0.35], 0.0, tex(0.55, 0.1, 2.0, 2.4)),
                ellipse([0.05, 0.4], [0.35, 0.18], -0.2, tex(0.9, 0.08, 4.0, 1.2)),
            ],
        ),
        spec(
            5,
            tex(0.25, 0.05, 0.5, 0.0),
            vec![
                ellipse([-0.45, -0.45], [0.35, 0.3], 0.4, tex(0.5, 0.15, 1.5, 0.0)),
                ellipse([0.45, -0.45], [0.3, 0.35], -0.4, tex(0.75, 0.1, 3.0, 1.0)),
                ellipse([-0.45, 0.45], [0.3, 0.3], 0.0, tex(0.1, 0.05, 2.0, 2.0)),
                ellipse([0.45, 0.45], [0.35, 0.25], 1.1, tex(0.6, 0.2, 4.0, 0.5)),
                ellipse([0.0, 0.0], [0.25, 0.25], 0.0, tex(0.9, 0.05, 1.0, 1.5)),
            ],
        ),
    ]
}
