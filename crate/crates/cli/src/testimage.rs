//! Deterministic synthetic test image for the inpainting experiment.
//!
//! Built from smooth gradients, sinusoidal texture and a handful of soft
//! shapes so the spectrum decays like a natural photograph. Entirely
//! procedural, so the repository carries no third-party image.

use lrtc_core::problems::ProblemError;
use lrtc_core::tensor::DenseTensor;

fn gaussian_blob(x: f64, y: f64, cx: f64, cy: f64, radius: f64) -> f64 {
    let dx = x - cx;
    let dy = y - cy;
    (-(dx * dx + dy * dy) / (2.0 * radius * radius)).exp()
}

fn soft_disk(x: f64, y: f64, cx: f64, cy: f64, radius: f64, edge: f64) -> f64 {
    let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
    (1.0 / (1.0 + ((d - radius) / edge).exp())).clamp(0.0, 1.0)
}

/// `size x size x 3` image tensor with values in [0, 1].
pub fn synthetic_image(size: usize) -> Result<DenseTensor, ProblemError> {
    let n = size as f64;
    DenseTensor::from_fn(&[size, size, 3], |idx| {
        let (row, col, ch) = (idx[0], idx[1], idx[2]);
        let y = row as f64 / n;
        let x = col as f64 / n;

        // sky-like vertical gradient, different hue per channel
        let base = match ch {
            0 => 0.25 + 0.35 * y + 0.15 * x,
            1 => 0.30 + 0.30 * (1.0 - y) + 0.10 * x,
            _ => 0.45 + 0.40 * (1.0 - y),
        };

        // low-frequency waves
        let wave = 0.08 * (std::f64::consts::TAU * (2.0 * x + 0.5 * y)).sin()
            + 0.05 * (std::f64::consts::TAU * (3.0 * y - x)).cos();

        // a sun, a hill and two soft disks with channel-dependent tint
        let sun = gaussian_blob(x, y, 0.72, 0.25, 0.10);
        let hill = soft_disk(x, y, 0.35, 1.05, 0.45, 0.03);
        let pond = soft_disk(x, y, 0.62, 0.78, 0.12, 0.02);
        let moon = gaussian_blob(x, y, 0.18, 0.30, 0.06);

        let tint = match ch {
            0 => 0.9 * sun + 0.25 * hill - 0.15 * pond + 0.3 * moon,
            1 => 0.7 * sun + 0.40 * hill + 0.05 * pond + 0.3 * moon,
            _ => 0.25 * sun + 0.15 * hill + 0.35 * pond + 0.45 * moon,
        };

        // fine texture on the hill band
        let texture = 0.04 * (std::f64::consts::TAU * 9.0 * x).sin()
            * (std::f64::consts::TAU * 7.0 * y).cos()
            * hill;

        (base + wave + tint + texture).clamp(0.0, 1.0)
    })
    .map_err(Into::into)
}
