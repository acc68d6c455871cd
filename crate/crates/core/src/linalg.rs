//! Matrix SVD services: exact truncated SVD (the hard-thresholding operator
//! `R_r`) and a Monte-Carlo column-sampling approximation that estimates the
//! top singular pairs in time linear in the matrix dimensions.
//!
//! The exact path delegates the dense SVD to nalgebra's Golub-Kahan
//! implementation. `hard_threshold_rank` deliberately takes a different
//! route (symmetric eigendecomposition of the small-side Gram matrix) so the
//! two can serve as independent cross-checks of one another.

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{DenseMatrix, TensorError};

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix contains a non-finite entry at flat position {0}")]
    NonFinite(usize),
    #[error("invalid sketch configuration: {0}")]
    InvalidSketch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Singular value decomposition output.
///
/// `singular_values` is sorted descending. `left_vectors` has one column per
/// returned singular pair; it is `None` when no pair with a positive
/// singular value could be formed. The randomized path never produces right
/// vectors. `truncated` is set when fewer pairs than requested were returned
/// because trailing singular values vanished.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    pub left_vectors: Option<DenseMatrix>,
    pub right_vectors: Option<DenseMatrix>,
    pub truncated: bool,
}

impl SvdResult {
    /// Number of usable singular pairs (columns of `left_vectors`).
    pub fn pair_count(&self) -> usize {
        self.left_vectors.as_ref().map_or(0, DenseMatrix::cols)
    }
}

/// Parameters of the column-sampling sketch.
///
/// `sampled_columns` is the number of columns drawn with replacement,
/// `pairs` the number of singular pairs requested, `probabilities` the
/// per-column sampling distribution, and `seed` fixes the draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchConfig {
    pub sampled_columns: usize,
    pub pairs: usize,
    pub probabilities: Vec<f64>,
    pub seed: u64,
}

impl SketchConfig {
    /// Uniform sampling distribution over `cols` columns.
    pub fn uniform(cols: usize, sampled_columns: usize, pairs: usize, seed: u64) -> Self {
        Self {
            sampled_columns,
            pairs,
            probabilities: vec![1.0 / cols as f64; cols],
            seed,
        }
    }

    /// Default sketch for an `rows x cols` matrix: half the small dimension
    /// sampled columns (never fewer than `pairs`), uniform probabilities.
    pub fn default_for(rows: usize, cols: usize, pairs: usize, seed: u64) -> Self {
        let c_s = rows.min(cols).div_ceil(2).max(pairs).min(cols);
        Self::uniform(cols, c_s, pairs, seed)
    }

    pub fn validate(&self, cols: usize) -> Result<(), LinalgError> {
        if self.pairs == 0 || self.pairs > self.sampled_columns || self.sampled_columns > cols {
            return Err(LinalgError::InvalidSketch(format!(
                "need 1 <= pairs ({}) <= sampled_columns ({}) <= cols ({cols})",
                self.pairs, self.sampled_columns
            )));
        }
        if self.probabilities.len() != cols {
            return Err(LinalgError::InvalidSketch(format!(
                "{} probabilities for {cols} columns",
                self.probabilities.len()
            )));
        }
        if self.probabilities.iter().any(|&p| !(p >= 0.0)) {
            return Err(LinalgError::InvalidSketch(
                "negative or NaN probability".into(),
            ));
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(LinalgError::InvalidSketch(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

fn check_finite(m: &DenseMatrix) -> Result<(), LinalgError> {
    if let Some(pos) = m.data().iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite(pos));
    }
    Ok(())
}

fn to_nalgebra(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.data())
}

/// Full SVD `m = U diag(sigma) V^T`, singular values descending.
pub fn exact_svd(m: &DenseMatrix) -> Result<SvdResult, LinalgError> {
    check_finite(m)?;
    let svd = to_nalgebra(m).svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();

    // nalgebra sorts descending already; re-sort to make the contract
    // independent of the backend (ties keep backend order).
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap());

    let k = sigma.len();
    let mut values = Vec::with_capacity(k);
    let mut left = DenseMatrix::zeros(m.rows(), k);
    let mut right = DenseMatrix::zeros(m.cols(), k);
    for (dst, &src) in order.iter().enumerate() {
        values.push(sigma[src]);
        for r in 0..m.rows() {
            left.set(r, dst, u[(r, src)]);
        }
        for r in 0..m.cols() {
            right.set(r, dst, v_t[(src, r)]);
        }
    }
    Ok(SvdResult {
        singular_values: values,
        left_vectors: Some(left),
        right_vectors: Some(right),
        truncated: false,
    })
}

/// Eigendecomposition of the small-side Gram matrix, eigenvalues descending.
///
/// Returns the full singular spectrum of `m` together with the eigenvector
/// basis (left basis when `rows <= cols`, right basis otherwise). Errors
/// when entries of `m` are large enough to overflow the Gram matrix.
fn gram_spectrum(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix, bool), LinalgError> {
    let left_side = m.rows() <= m.cols();
    let gram = if left_side {
        m.gram_left()
    } else {
        m.gram_right()
    };
    check_finite(&gram)?;
    let eig = nalgebra::linalg::SymmetricEigen::new(to_nalgebra(&gram));
    let lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut order: Vec<usize> = (0..lambda.len()).collect();
    order.sort_by(|&a, &b| lambda[b].partial_cmp(&lambda[a]).unwrap());

    let n = lambda.len();
    let mut sigma = Vec::with_capacity(n);
    let mut basis = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        sigma.push(lambda[src].max(0.0).sqrt());
        for r in 0..n {
            basis.set(r, dst, eig.eigenvectors[(r, src)]);
        }
    }
    Ok((sigma, basis, left_side))
}

/// All singular values of `m`, descending, via the Gram route. Values below
/// roughly 1e-8 times the leading one are at this route's noise floor.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>, LinalgError> {
    check_finite(m)?;
    Ok(gram_spectrum(m)?.0)
}

/// Hard-thresholding operator: the best rank-`r` approximation of `m`.
///
/// `r` larger than `min(rows, cols)` is clamped. Ties between equal singular
/// values are broken by backend order, so the result is one best
/// approximation among possibly many.
pub fn hard_threshold_rank(m: &DenseMatrix, r: usize) -> Result<DenseMatrix, LinalgError> {
    hard_threshold_with_spectrum(m, r).map(|(t, _)| t)
}

/// [`hard_threshold_rank`] plus the full singular spectrum of the input,
/// which the rank-prediction heuristic inspects.
pub fn hard_threshold_with_spectrum(
    m: &DenseMatrix,
    r: usize,
) -> Result<(DenseMatrix, Vec<f64>), LinalgError> {
    check_finite(m)?;
    let max_rank = m.rows().min(m.cols());
    let r_eff = if r > max_rank {
        log::debug!("rank {r} clamped to min(rows, cols) = {max_rank}");
        max_rank
    } else {
        r
    };
    let (sigma, basis, left_side) = gram_spectrum(m)?;
    if r_eff == 0 {
        return Ok((DenseMatrix::zeros(m.rows(), m.cols()), sigma));
    }
    let top = basis.take_columns(r_eff);
    let projected = if left_side {
        // U_r (U_r^T m)
        let coeff = top.transposed().matmul(m)?;
        top.matmul(&coeff)?
    } else {
        // (m V_r) V_r^T
        let coeff = m.matmul(&top)?;
        coeff.matmul(&top.transposed())?
    };
    Ok((projected, sigma))
}

/// Orthonormal basis of the top-`r` left singular subspace via the Gram
/// route. `r` is clamped to the attainable rank; basis columns for
/// vanishing singular values are dropped, so fewer than `r` columns can
/// come back on rank-deficient input.
pub fn top_left_vectors(m: &DenseMatrix, r: usize) -> Result<DenseMatrix, LinalgError> {
    check_finite(m)?;
    let r_eff = r.min(m.rows()).min(m.cols()).max(1);
    let (sigma, basis, left_side) = gram_spectrum(m)?;
    if left_side {
        return Ok(basis.take_columns(r_eff));
    }
    // U_r = m V_r diag(1/sigma_r); columns beyond the numerical rank carry
    // no direction and are dropped.
    let lead = sigma.first().copied().unwrap_or(0.0);
    let usable = sigma
        .iter()
        .take(r_eff)
        .take_while(|&&s| s > lead * 1e-14 && s > 0.0)
        .count()
        .max(1);
    let v = basis.take_columns(usable);
    let mut u = m.matmul(&v)?;
    for c in 0..usable {
        let s = sigma[c].max(f64::MIN_POSITIVE);
        for row in 0..u.rows() {
            u.set(row, c, u.get(row, c) / s);
        }
    }
    Ok(u)
}

/// Monte-Carlo approximate SVD by column sampling.
///
/// Draws `sampled_columns` columns with replacement under `probabilities`,
/// rescales draw `t` by `1 / sqrt(c_s * p_{i_t})`, eigendecomposes the
/// sampled Gram matrix and maps the top eigenvectors back through the
/// sample. Returns approximations to the top `pairs` singular values and
/// left singular vectors of `m`; deterministic for a fixed seed.
pub fn linear_time_svd(m: &DenseMatrix, cfg: &SketchConfig) -> Result<SvdResult, LinalgError> {
    check_finite(m)?;
    cfg.validate(m.cols())?;

    let c_s = cfg.sampled_columns;
    let mut cumulative = Vec::with_capacity(m.cols());
    let mut acc = 0.0;
    for &p in &cfg.probabilities {
        acc += p;
        cumulative.push(acc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sample = DenseMatrix::zeros(m.rows(), c_s);
    for t in 0..c_s {
        // One uniform draw in [0, 1) per sampled column, mapped through the
        // cumulative distribution.
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let idx = match cumulative.iter().position(|&c| u < c) {
            Some(i) => i,
            None => cfg
                .probabilities
                .iter()
                .rposition(|&p| p > 0.0)
                .ok_or_else(|| LinalgError::InvalidSketch("all probabilities zero".into()))?,
        };
        let p = cfg.probabilities[idx];
        if p <= 0.0 {
            return Err(LinalgError::InvalidSketch(format!(
                "sampled column {idx} has zero probability"
            )));
        }
        let scale = 1.0 / (c_s as f64 * p).sqrt();
        let src = m.column(idx);
        for r in 0..m.rows() {
            sample.set(r, t, src[r] * scale);
        }
    }

    let gram = sample.gram_right();
    check_finite(&gram)?;
    let eig = nalgebra::linalg::SymmetricEigen::new(to_nalgebra(&gram));
    let lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let mut order: Vec<usize> = (0..lambda.len()).collect();
    order.sort_by(|&a, &b| lambda[b].partial_cmp(&lambda[a]).unwrap());

    let sv = cfg.pairs;
    let sigma: Vec<f64> = order
        .iter()
        .take(sv)
        .map(|&i| lambda[i].max(0.0).sqrt())
        .collect();

    // A singular value this far below the leading one carries no usable
    // direction; treat it as the zero case from the algorithm statement.
    let floor = sigma.first().copied().unwrap_or(0.0) * 1e-12;
    let usable = sigma.iter().take_while(|&&s| s > floor && s > 0.0).count();

    let left_vectors = if usable == 0 {
        None
    } else {
        let mut h = DenseMatrix::zeros(m.rows(), usable);
        for (dst, &src) in order.iter().take(usable).enumerate() {
            let s = sigma[dst];
            for r in 0..m.rows() {
                let mut dot = 0.0;
                for t in 0..c_s {
                    dot += sample.get(r, t) * eig.eigenvectors[(t, src)];
                }
                h.set(r, dst, dot / s);
            }
        }
        Some(h)
    };

    Ok(SvdResult {
        singular_values: sigma,
        left_vectors,
        right_vectors: None,
        truncated: usable < sv,
    })
}

/// Rank-`r` truncation through the sketch: projects `m` onto the span of the
/// approximate top-`r` left singular vectors, `H_r H_r^T m`.
pub fn approx_hard_threshold(
    m: &DenseMatrix,
    r: usize,
    cfg: &SketchConfig,
) -> Result<DenseMatrix, LinalgError> {
    if r == 0 {
        return Ok(DenseMatrix::zeros(m.rows(), m.cols()));
    }
    let effective = SketchConfig {
        pairs: r.min(cfg.sampled_columns),
        ..cfg.clone()
    };
    let res = linear_time_svd(m, &effective)?;
    project_onto_left(m, &res, r)
}

/// `H_r (H_r^T m)` for the first `r` usable left vectors of `basis`.
pub fn project_onto_left(
    m: &DenseMatrix,
    basis: &SvdResult,
    r: usize,
) -> Result<DenseMatrix, LinalgError> {
    let k = basis.pair_count().min(r);
    if k == 0 {
        return Ok(DenseMatrix::zeros(m.rows(), m.cols()));
    }
    let h = basis
        .left_vectors
        .as_ref()
        .expect("pair_count > 0")
        .take_columns(k);
    let coeff = h.transposed().matmul(m)?;
    Ok(h.matmul(&coeff)?)
}
