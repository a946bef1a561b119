//! Independent reference computations for tests.
//!
//! Nothing here shares code with the library under test: gradients are
//! checked against central finite differences of a black-box scalar
//! function, and image metrics are recomputed with plain nested loops.

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Fourth-order central difference, `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`.
/// Its truncation error is O(h⁴), so a larger step can be used and the
/// roundoff of the function values matters less.
pub fn central_gradient_5pt(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            let mut at = |d: f64| {
                probe[i] = orig + d;
                f(&probe)
            };
            let (p2, p1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
            probe[i] = orig;
            (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest elementwise [`relative_error`] between two gradients.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}

/// Root-mean-square difference, accumulated in two passes.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut sq = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        let d = a[i] - b[i];
        sq.push(d * d);
    }
    let mut total = 0.0;
    for v in &sq {
        total += v;
    }
    (total / a.len() as f64).sqrt()
}

pub fn psnr(a: &[f64], b: &[f64], data_range: f64) -> f64 {
    let mse = {
        let mut t = 0.0;
        for i in 0..a.len() {
            t += (a[i] - b[i]) * (a[i] - b[i]);
        }
        t / a.len() as f64
    };
    10.0 * (data_range * data_range / mse).log10()
}

/// Mean SSIM over every fully contained `win`×`win` window, with uniform
/// weights and sample (N−1) covariance normalisation.
pub fn ssim(a: &[f64], b: &[f64], height: usize, width: usize, win: usize, data_range: f64) -> f64 {
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let np = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=(height - win) {
        for left in 0..=(width - win) {
            let mut ma = 0.0;
            let mut mb = 0.0;
            for i in top..top + win {
                for j in left..left + win {
                    ma += a[i * width + j];
                    mb += b[i * width + j];
                }
            }
            ma /= np;
            mb /= np;
            let mut va = 0.0;
            let mut vb = 0.0;
            let mut cov = 0.0;
            for i in top..top + win {
                for j in left..left + win {
                    let da = a[i * width + j] - ma;
                    let db = b[i * width + j] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            va /= np - 1.0;
            vb /= np - 1.0;
            cov /= np - 1.0;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Plain SIREN forward pass for one coordinate, written as nested loops.
///
/// `layers[l]` is `(weight, bias)` with the weight stored fan_in × fan_out,
/// row-major. Every layer but the last applies `sin(omega[l] · z)`; the last
/// is affine.
pub fn siren_forward(layers: &[(Vec<f64>, Vec<f64>)], omega: &[f64], input: &[f64]) -> Vec<f64> {
    let mut y = input.to_vec();
    for (l, (weight, bias)) in layers.iter().enumerate() {
        let fan_out = bias.len();
        let fan_in = y.len();
        assert_eq!(weight.len(), fan_in * fan_out);
        let mut z = vec![0.0; fan_out];
        for j in 0..fan_out {
            let mut acc = bias[j];
            for i in 0..fan_in {
                acc += y[i] * weight[i * fan_out + j];
            }
            z[j] = if l + 1 < layers.len() { (omega[l] * acc).sin() } else { acc };
        }
        y = z;
    }
    y
}

/// Tiny deterministic generator so oracle-side fixtures don't depend on
/// the library's RNG choices.
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.range(lo, hi)).collect()
    }
}
