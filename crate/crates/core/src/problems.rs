//! Random completion problem generation, recovery metrics, and image
//! conversion for inpainting experiments.
//!
//! Everything here is a pure function of its seed so that instances
//! reproduce across runs and platforms. The generator is ChaCha8 (64-bit
//! seed); Gaussian variates come from Box-Muller applied to consecutive
//! uniform draws in (0, 1], consuming exactly two generator words per pair.
//! [`make_instance`] derives its sub-streams as `seed` (ground truth),
//! `seed + 1` (observation set) and `seed + 2` (noise), wrapping.

use std::io::{BufRead, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::operators::{MeasurementOperator, OperatorError, SamplingOperator};
use crate::tensor::{frobenius_norm, mode_product, unfold, DenseTensor, NRank, TensorError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("sampling ratio {0} outside (0, 1]")]
    BadSamplingRatio(f64),
    #[error("noise level {0} must be nonnegative")]
    BadNoiseLevel(f64),
    #[error("reference tensor has zero norm")]
    ZeroNormTruth,
    #[error("complement of the observed set is empty")]
    EmptyComplement,
    #[error("reference values are constant over the complement (max = min)")]
    DegenerateRange,
    #[error("malformed image: {0}")]
    BadImage(String),
    #[error("preprocessing needs at least one sweep")]
    NoSweeps,
    #[error("rank bounds for preprocessing must be at least 1 per mode")]
    ZeroPreprocessRank,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ProblemError {
    fn from(e: std::io::Error) -> Self {
        ProblemError::Io(e.to_string())
    }
}

/// Standard normal variates from a seeded ChaCha8 stream via Box-Muller.
pub struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform in (0, 1], 53-bit resolution.
    fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform_open();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    fn fill(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.next_normal()).collect()
    }
}

/// A generated completion problem: clean tensor, possibly noisy observed
/// tensor, sampling operator and measurement vector.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub ground_truth: DenseTensor,
    pub observed: DenseTensor,
    pub operator: SamplingOperator,
    pub b: Vec<f64>,
    pub noise_level: f64,
    pub true_rank: NRank,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rel_err: f64,
    pub nrmse: Option<f64>,
}

/// Draws a tensor with per-mode ranks bounded by `ranks`: a Gaussian core of
/// shape `(r_1, ..., r_N)` multiplied along each mode by a Gaussian
/// `n_i x r_i` factor. The core is filled first in canonical order, then the
/// factors in mode order, each column-major.
pub fn generate_low_nrank(
    shape: &[usize],
    ranks: &NRank,
    seed: u64,
) -> Result<DenseTensor, ProblemError> {
    ranks.validate_for(shape)?;
    if ranks.as_slice().contains(&0) {
        return Ok(DenseTensor::zeros(shape)?);
    }
    let mut source = GaussianSource::new(seed);
    let core_len: usize = ranks.as_slice().iter().product();
    let core = DenseTensor::from_vec(ranks.as_slice().to_vec(), source.fill(core_len))?;

    let mut result = core;
    for (mode, (&n, &r)) in shape.iter().zip(ranks.as_slice()).enumerate() {
        let factor =
            crate::tensor::DenseMatrix::from_vec(n, r, source.fill(n * r))?;
        result = mode_product(&result, mode, &factor)?;
    }
    Ok(result)
}

/// Uniform-without-replacement observation set of size
/// `round(sr * prod(shape))`, drawn by a partial Fisher-Yates shuffle with
/// rejection-sampled swap targets.
pub fn sample_omega(
    shape: &[usize],
    sr: f64,
    seed: u64,
) -> Result<SamplingOperator, ProblemError> {
    if !(sr > 0.0 && sr <= 1.0) {
        return Err(ProblemError::BadSamplingRatio(sr));
    }
    let total: usize = shape.iter().product();
    let count = ((sr * total as f64).round() as usize).min(total);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..total).collect();
    for i in 0..count {
        let range = (total - i) as u64;
        // rejection sampling avoids modulo bias and stays reproducible
        let zone = u64::MAX - u64::MAX % range;
        let offset = loop {
            let x = rng.next_u64();
            if x < zone {
                break (x % range) as usize;
            }
        };
        pool.swap(i, i + offset);
    }
    pool.truncate(count);
    Ok(SamplingOperator::from_flat_positions(
        shape.to_vec(),
        pool,
    )?)
}

/// Full §-style problem assembly: clean low-rank tensor, additive Gaussian
/// noise at level `sigma`, and measurements of the noisy tensor on a random
/// observation set of density `sr`.
pub fn make_instance(
    shape: &[usize],
    ranks: &NRank,
    sr: f64,
    sigma: f64,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    if sigma < 0.0 {
        return Err(ProblemError::BadNoiseLevel(sigma));
    }
    let ground_truth = generate_low_nrank(shape, ranks, seed)?;
    let operator = sample_omega(shape, sr, seed.wrapping_add(1))?;
    let observed = if sigma > 0.0 {
        let mut source = GaussianSource::new(seed.wrapping_add(2));
        let noise = DenseTensor::from_vec(shape.to_vec(), source.fill(ground_truth.len()))?;
        ground_truth.axpy(sigma, &noise)?
    } else {
        ground_truth.clone()
    };
    let b = operator.apply(&observed)?;
    Ok(ProblemInstance {
        ground_truth,
        observed,
        operator,
        b,
        noise_level: sigma,
        true_rank: ranks.clone(),
        seed,
    })
}

/// Relative recovery error `|sol - truth|_F / |truth|_F`.
pub fn rel_err(sol: &DenseTensor, truth: &DenseTensor) -> Result<f64, ProblemError> {
    let denom = frobenius_norm(truth);
    if denom == 0.0 {
        return Err(ProblemError::ZeroNormTruth);
    }
    let diff = sol.subtract(truth)?;
    Ok(frobenius_norm(&diff) / denom)
}

/// Normalized root mean square error over the unobserved set, measured
/// against the clean tensor:
/// `|(sol - truth)_{comp}|_F / ((max - min of truth over comp) * sqrt(|comp|))`.
pub fn nrmse(
    sol: &DenseTensor,
    truth_clean: &DenseTensor,
    omega: &SamplingOperator,
) -> Result<f64, ProblemError> {
    if sol.shape() != truth_clean.shape() {
        return Err(TensorError::ShapeMismatch {
            left: sol.shape().to_vec(),
            right: truth_clean.shape().to_vec(),
        }
        .into());
    }
    let complement = omega.complement_positions();
    if complement.is_empty() {
        return Err(ProblemError::EmptyComplement);
    }
    let sol_data = sol.data();
    let truth_data = truth_clean.data();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sq_sum = 0.0;
    for &p in &complement {
        let t = truth_data[p];
        min = min.min(t);
        max = max.max(t);
        let d = sol_data[p] - t;
        sq_sum += d * d;
    }
    if max <= min {
        return Err(ProblemError::DegenerateRange);
    }
    Ok(sq_sum.sqrt() / ((max - min) * (complement.len() as f64).sqrt()))
}

/// Interprets 8-bit RGB rows (top to bottom, left to right) as a
/// `height x width x 3` tensor with values in [0, 1].
pub fn image_to_tensor(
    height: usize,
    width: usize,
    rgb: &[u8],
) -> Result<DenseTensor, ProblemError> {
    if height == 0 || width == 0 || rgb.len() != height * width * 3 {
        return Err(ProblemError::BadImage(format!(
            "{} bytes for {height}x{width} RGB",
            rgb.len()
        )));
    }
    DenseTensor::from_fn(&[height, width, 3], |idx| {
        let (row, col, ch) = (idx[0], idx[1], idx[2]);
        rgb[(row * width + col) * 3 + ch] as f64 / 255.0
    })
    .map_err(Into::into)
}

/// Inverse of [`image_to_tensor`]: clamps to [0, 1] and quantizes to 8 bits.
pub fn tensor_to_image(t: &DenseTensor) -> Result<(usize, usize, Vec<u8>), ProblemError> {
    let shape = t.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(ProblemError::BadImage(format!(
            "expected a h x w x 3 tensor, got {shape:?}"
        )));
    }
    let (height, width) = (shape[0], shape[1]);
    let mut rgb = vec![0u8; height * width * 3];
    for row in 0..height {
        for col in 0..width {
            for ch in 0..3 {
                let v = t.get(&[row, col, ch]).clamp(0.0, 1.0);
                rgb[(row * width + col) * 3 + ch] = (v * 255.0).round() as u8;
            }
        }
    }
    Ok((height, width, rgb))
}

/// Reads a binary P6 portable pixmap with 8-bit channels.
pub fn read_ppm<R: BufRead>(r: &mut R) -> Result<DenseTensor, ProblemError> {
    fn next_token<R: BufRead>(r: &mut R) -> Result<String, ProblemError> {
        let mut tok = String::new();
        let mut byte = [0u8; 1];
        loop {
            if r.read(&mut byte)? == 0 {
                if tok.is_empty() {
                    return Err(ProblemError::BadImage("unexpected end of header".into()));
                }
                return Ok(tok);
            }
            let c = byte[0];
            if c == b'#' {
                // comment runs to end of line
                loop {
                    if r.read(&mut byte)? == 0 || byte[0] == b'\n' {
                        break;
                    }
                }
                continue;
            }
            if c.is_ascii_whitespace() {
                if tok.is_empty() {
                    continue;
                }
                return Ok(tok);
            }
            tok.push(c as char);
        }
    }

    let magic = next_token(r)?;
    if magic != "P6" {
        return Err(ProblemError::BadImage(format!(
            "expected magic `P6`, got `{magic}`"
        )));
    }
    let width: usize = next_token(r)?
        .parse()
        .map_err(|_| ProblemError::BadImage("bad width".into()))?;
    let height: usize = next_token(r)?
        .parse()
        .map_err(|_| ProblemError::BadImage("bad height".into()))?;
    let maxval: usize = next_token(r)?
        .parse()
        .map_err(|_| ProblemError::BadImage("bad maxval".into()))?;
    if maxval != 255 {
        return Err(ProblemError::BadImage(format!(
            "only 8-bit pixmaps supported, maxval {maxval}"
        )));
    }
    let mut rgb = vec![0u8; width * height * 3];
    r.read_exact(&mut rgb)
        .map_err(|_| ProblemError::BadImage("truncated pixel data".into()))?;
    image_to_tensor(height, width, &rgb)
}

/// Writes a binary P6 portable pixmap with 8-bit channels.
pub fn write_ppm<W: Write>(t: &DenseTensor, w: &mut W) -> Result<(), ProblemError> {
    let (height, width, rgb) = tensor_to_image(t)?;
    write!(w, "P6\n{width} {height}\n255\n")?;
    w.write_all(&rgb)?;
    Ok(())
}

/// Alternating per-mode truncation toward the best rank-`(r_1, ..., r_N)`
/// approximation: factors start from truncated SVDs of the plain unfoldings,
/// then each sweep re-fits every factor against the tensor projected through
/// the other modes. Returns the core re-expanded through the factors.
pub fn best_nrank_preprocess(
    t: &DenseTensor,
    ranks: &NRank,
    sweeps: usize,
) -> Result<DenseTensor, ProblemError> {
    best_nrank_preprocess_with_residuals(t, ranks, sweeps).map(|(out, _)| out)
}

/// [`best_nrank_preprocess`] plus the fit residual `|t - approx|_F` after
/// each sweep.
pub fn best_nrank_preprocess_with_residuals(
    t: &DenseTensor,
    ranks: &NRank,
    sweeps: usize,
) -> Result<(DenseTensor, Vec<f64>), ProblemError> {
    ranks.validate_for(t.shape())?;
    if sweeps == 0 {
        return Err(ProblemError::NoSweeps);
    }
    if ranks.as_slice().contains(&0) {
        return Err(ProblemError::ZeroPreprocessRank);
    }
    if ranks.as_slice() == t.shape() {
        return Ok((t.clone(), vec![0.0; sweeps]));
    }
    let order = t.order();

    let left_basis = linalg::top_left_vectors;

    let mut factors = Vec::with_capacity(order);
    for mode in 0..order {
        factors.push(left_basis(&unfold(t, mode)?, ranks.get(mode))?);
    }

    let project = |factors: &[crate::tensor::DenseMatrix],
                   skip: Option<usize>|
     -> Result<DenseTensor, ProblemError> {
        let mut y = t.clone();
        for (mode, factor) in factors.iter().enumerate() {
            if Some(mode) == skip {
                continue;
            }
            y = mode_product(&y, mode, &factor.transposed())?;
        }
        Ok(y)
    };

    let mut residuals = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        for mode in 0..order {
            let partial = project(&factors, Some(mode))?;
            factors[mode] = left_basis(&unfold(&partial, mode)?, ranks.get(mode))?;
        }
        let core = project(&factors, None)?;
        let mut approx = core;
        for (mode, factor) in factors.iter().enumerate() {
            approx = mode_product(&approx, mode, factor)?;
        }
        residuals.push(frobenius_norm(&t.subtract(&approx)?));
    }

    let core = project(&factors, None)?;
    let mut approx = core;
    for (mode, factor) in factors.iter().enumerate() {
        approx = mode_product(&approx, mode, factor)?;
    }
    Ok((approx, residuals))
}

/// Numerical n-rank of a tensor: per mode, the count of singular values of
/// the unfolding above `tol` times the leading one. Uses the exact SVD; the
/// Gram route's noise floor (~1e-8 relative) would mask tight tolerances.
pub fn numerical_nrank(t: &DenseTensor, tol: f64) -> Result<Vec<usize>, ProblemError> {
    let mut ranks = Vec::with_capacity(t.order());
    for mode in 0..t.order() {
        let sigma = linalg::exact_svd(&unfold(t, mode)?)?.singular_values;
        let lead = sigma.first().copied().unwrap_or(0.0);
        ranks.push(sigma.iter().filter(|&&s| s > tol * lead && s > 0.0).count());
    }
    Ok(ranks)
}
