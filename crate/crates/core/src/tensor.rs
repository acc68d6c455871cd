//! Dense N-way tensors, their mode unfoldings and the associated linear
//! arithmetic.
//!
//! The canonical linearization is "first index fastest" (generalized
//! column-major): the flat position of element `(j_1, ..., j_N)` is
//! `sum_k j_k * s_k` with strides `s_1 = 1`, `s_k = n_1 * ... * n_{k-1}`
//! (0-based indices). The mode-`i` unfolding arranges the mode-`i` fibers as
//! the columns of an `n_i x T_i` matrix, `T_i = prod_{k != i} n_k`, so that
//! element `(j_1, ..., j_N)` lands at matrix position `(j_i, l)` with
//! `l = sum_{k != i} j_k * L_k` and `L_k = prod_{j < k, j != i} n_j`.
//! Indices are 1-based in the literature and 0-based here; the translation
//! lives entirely in [`unfold`] / [`fold`].

use std::fmt;
use std::io::{self, Read, Write};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TensorError {
    #[error("shape must have at least one mode and no zero-length modes: {0:?}")]
    EmptyShape(Vec<usize>),
    #[error("shape {shape:?} implies {expected} elements, got {got}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value at flat position {0}")]
    NonFinite(usize),
    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    MatrixShape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("rank vector has {got} entries, tensor order is {order}")]
    RankLength { got: usize, order: usize },
    #[error("rank {rank} for mode {mode} exceeds bound min({n_i}, {t_i})")]
    RankBound {
        mode: usize,
        rank: usize,
        n_i: usize,
        t_i: usize,
    },
    #[error("malformed tensor header: {0}")]
    BadHeader(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<io::Error> for TensorError {
    fn from(e: io::Error) -> Self {
        TensorError::Io(e.to_string())
    }
}

/// Dense real N-way tensor, immutable after construction.
///
/// `data` holds the entries in canonical order (first index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Builds a tensor from a flat buffer in canonical order.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        validate_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                shape,
                expected,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(pos));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self, TensorError> {
        validate_shape(shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(
        shape: &[usize],
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self, TensorError> {
        validate_shape(shape)?;
        let len: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            // advance multi-index, first index fastest
            for (i, n) in idx.iter_mut().zip(shape.iter()) {
                *i += 1;
                if *i < *n {
                    break;
                }
                *i = 0;
            }
        }
        Self::from_vec(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Entry at a multi-index (0-based).
    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.flat_index(index)]
    }

    /// Canonical flat position of a multi-index.
    pub fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut pos = 0;
        let mut stride = 1;
        for (j, n) in index.iter().zip(self.shape.iter()) {
            debug_assert!(j < n);
            pos += j * stride;
            stride *= n;
        }
        pos
    }

    pub fn scale(&self, alpha: f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor, TensorError> {
        self.check_same_shape(other)?;
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn subtract(&self, other: &DenseTensor) -> Result<DenseTensor, TensorError> {
        self.check_same_shape(other)?;
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &DenseTensor) -> Result<DenseTensor, TensorError> {
        self.check_same_shape(other)?;
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        })
    }

    fn check_same_shape(&self, other: &DenseTensor) -> Result<(), TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// Writes `shape: n1 n2 ... nN\n` followed by the raw data buffer as
    /// little-endian f64 in canonical order.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), TensorError> {
        let header: Vec<String> = self.shape.iter().map(|n| n.to_string()).collect();
        writeln!(w, "shape: {}", header.join(" "))?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Inverse of [`DenseTensor::write_to`].
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, TensorError> {
        let mut header = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte)?;
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
            if header.len() > 4096 {
                return Err(TensorError::BadHeader("header line too long".into()));
            }
        }
        let header = String::from_utf8(header)
            .map_err(|_| TensorError::BadHeader("header is not utf-8".into()))?;
        let rest = header
            .strip_prefix("shape:")
            .ok_or_else(|| TensorError::BadHeader(format!("expected `shape:`, got `{header}`")))?;
        let shape: Vec<usize> = rest
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| TensorError::BadHeader(format!("bad mode length `{tok}`")))
            })
            .collect::<Result<_, _>>()?;
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Self::from_vec(shape, data)
    }
}

fn validate_shape(shape: &[usize]) -> Result<(), TensorError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::EmptyShape(shape.to_vec()));
    }
    Ok(())
}

/// Dense real matrix with column-major storage, so that unfolding columns
/// (mode fibers) are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if rows == 0 || cols == 0 {
            return Err(TensorError::EmptyShape(vec![rows, cols]));
        }
        if data.len() != rows * cols {
            return Err(TensorError::DataLength {
                shape: vec![rows, cols],
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r + c * self.rows]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r + c * self.rows] = v;
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// First `k` columns as a new matrix; columns are contiguous so this is
    /// a prefix copy.
    pub fn take_columns(&self, k: usize) -> DenseMatrix {
        debug_assert!(k >= 1 && k <= self.cols);
        DenseMatrix {
            rows: self.rows,
            cols: k,
            data: self.data[..k * self.rows].to_vec(),
        }
    }

    pub fn transposed(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.data[c + r * self.cols] = self.data[r + c * self.rows];
            }
        }
        out
    }

    /// `self * rhs` through a blocked gemm kernel.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        if self.cols != rhs.rows {
            return Err(TensorError::MatrixShape {
                rows: rhs.rows,
                cols: rhs.cols,
                expected_rows: self.cols,
                expected_cols: rhs.cols,
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                rhs.cols,
                1.0,
                self.data.as_ptr(),
                1,
                self.rows as isize,
                rhs.data.as_ptr(),
                1,
                rhs.rows as isize,
                0.0,
                out.data.as_mut_ptr(),
                1,
                out.rows as isize,
            );
        }
        Ok(out)
    }

    /// `self * self^T` without materializing the transpose.
    pub fn gram_left(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.rows);
        unsafe {
            matrixmultiply::dgemm(
                self.rows,
                self.cols,
                self.rows,
                1.0,
                self.data.as_ptr(),
                1,
                self.rows as isize,
                self.data.as_ptr(),
                self.rows as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                1,
                out.rows as isize,
            );
        }
        out
    }

    /// `self^T * self` without materializing the transpose.
    pub fn gram_right(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.cols);
        unsafe {
            matrixmultiply::dgemm(
                self.cols,
                self.rows,
                self.cols,
                1.0,
                self.data.as_ptr(),
                self.rows as isize,
                1,
                self.data.as_ptr(),
                1,
                self.rows as isize,
                0.0,
                out.data.as_mut_ptr(),
                1,
                out.rows as isize,
            );
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn subtract(&self, other: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(TensorError::MatrixShape {
                rows: other.rows,
                cols: other.cols,
                expected_rows: self.rows,
                expected_cols: self.cols,
            });
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }
}

impl fmt::Display for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.rows {
            for c in 0..self.cols {
                write!(f, "{:12.5e} ", self.get(r, c))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Per-mode rank bounds `(r_1, ..., r_N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NRank(Vec<usize>);

impl NRank {
    pub fn new(ranks: Vec<usize>) -> Self {
        Self(ranks)
    }

    pub fn uniform(order: usize, rank: usize) -> Self {
        Self(vec![rank; order])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, mode: usize) -> usize {
        self.0[mode]
    }

    /// Checks the bound `r_i <= min(n_i, T_i)` against a concrete shape.
    pub fn validate_for(&self, shape: &[usize]) -> Result<(), TensorError> {
        if self.0.len() != shape.len() {
            return Err(TensorError::RankLength {
                got: self.0.len(),
                order: shape.len(),
            });
        }
        let total: usize = shape.iter().product();
        for (mode, (&r, &n)) in self.0.iter().zip(shape.iter()).enumerate() {
            let t_i = total / n;
            if r > n.min(t_i) {
                return Err(TensorError::RankBound {
                    mode,
                    rank: r,
                    n_i: n,
                    t_i,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for NRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|r| r.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

fn mode_stride(shape: &[usize], mode: usize) -> usize {
    shape[..mode].iter().product()
}

/// Mode-`i` unfolding (matricization), 0-based `mode`.
///
/// The element at flat position `p` maps to matrix entry `(row, col)` with
/// `row = (p / s_i) % n_i` and `col = (p % s_i) + s_i * (p / (s_i * n_i))`,
/// which is the stride form of the fiber-to-column index map.
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<DenseMatrix, TensorError> {
    let shape = t.shape();
    if mode >= shape.len() {
        return Err(TensorError::ModeOutOfRange {
            mode,
            order: shape.len(),
        });
    }
    let n_i = shape[mode];
    let t_i = t.len() / n_i;
    let s_i = mode_stride(shape, mode);
    let block = s_i * n_i;
    let mut out = vec![0.0; t.len()];
    let data = t.data();
    // Walk the tensor in canonical order; the matrix is column-major with
    // n_i rows, so the destination index is row + col * n_i.
    for (p, &v) in data.iter().enumerate() {
        let row = (p / s_i) % n_i;
        let col = (p % s_i) + s_i * (p / block);
        out[row + col * n_i] = v;
    }
    DenseMatrix::from_vec(n_i, t_i, out)
}

/// Exact inverse of [`unfold`]; the adjoint of the unfolding map.
pub fn fold(m: &DenseMatrix, mode: usize, shape: &[usize]) -> Result<DenseTensor, TensorError> {
    validate_shape(shape)?;
    if mode >= shape.len() {
        return Err(TensorError::ModeOutOfRange {
            mode,
            order: shape.len(),
        });
    }
    let n_i = shape[mode];
    let total: usize = shape.iter().product();
    let t_i = total / n_i;
    if m.rows() != n_i || m.cols() != t_i {
        return Err(TensorError::MatrixShape {
            rows: m.rows(),
            cols: m.cols(),
            expected_rows: n_i,
            expected_cols: t_i,
        });
    }
    let s_i = mode_stride(shape, mode);
    let block = s_i * n_i;
    let mut data = vec![0.0; total];
    let src = m.data();
    for (q, &v) in src.iter().enumerate() {
        let row = q % n_i;
        let col = q / n_i;
        let p = (col % s_i) + row * s_i + (col / s_i) * block;
        data[p] = v;
    }
    DenseTensor::from_vec(shape.to_vec(), data)
}

/// Inner product `<a, b>` over all entries.
pub fn inner(a: &DenseTensor, b: &DenseTensor) -> Result<f64, TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| x * y)
        .sum())
}

pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// i-mode product `t x_i u`: replaces mode length `n_i` by `u.rows()` and
/// satisfies `unfold(result, i) = u * unfold(t, i)`.
pub fn mode_product(
    t: &DenseTensor,
    mode: usize,
    u: &DenseMatrix,
) -> Result<DenseTensor, TensorError> {
    let shape = t.shape();
    if mode >= shape.len() {
        return Err(TensorError::ModeOutOfRange {
            mode,
            order: shape.len(),
        });
    }
    if u.cols() != shape[mode] {
        return Err(TensorError::MatrixShape {
            rows: u.rows(),
            cols: u.cols(),
            expected_rows: u.rows(),
            expected_cols: shape[mode],
        });
    }
    let unfolded = unfold(t, mode)?;
    let product = u.matmul(&unfolded)?;
    let mut new_shape = shape.to_vec();
    new_shape[mode] = u.rows();
    fold(&product, mode, &new_shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor_234() -> DenseTensor {
        DenseTensor::from_fn(&[2, 3, 4], |idx| {
            (idx[0] * 100 + idx[1] * 10 + idx[2]) as f64 + 0.5
        })
        .unwrap()
    }

    /// Literal evaluation of the fiber-to-column formula
    /// l = sum_{k != i} j_k * L_k, L_k = prod_{j<k, j != i} n_j.
    fn brute_force_unfold(t: &DenseTensor, mode: usize) -> DenseMatrix {
        let shape = t.shape();
        let n = shape.len();
        let n_i = shape[mode];
        let t_i: usize = t.len() / n_i;
        let mut out = DenseMatrix::zeros(n_i, t_i);
        let mut idx = vec![0usize; n];
        for _ in 0..t.len() {
            let mut col = 0usize;
            for k in 0..n {
                if k == mode {
                    continue;
                }
                let mut l_k = 1usize;
                for j in 0..k {
                    if j != mode {
                        l_k *= shape[j];
                    }
                }
                col += idx[k] * l_k;
            }
            out.set(idx[mode], col, t.get(&idx));
            for (i, sz) in idx.iter_mut().zip(shape.iter()) {
                *i += 1;
                if *i < *sz {
                    break;
                }
                *i = 0;
            }
        }
        out
    }

    #[test]
    fn order_two_unfold_is_identity_reshape() {
        let t = DenseTensor::from_fn(&[2, 2], |idx| (10 * idx[0] + idx[1]) as f64).unwrap();
        let m = unfold(&t, 0).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(m.get(a, b), t.get(&[a, b]));
            }
        }
    }

    #[test]
    fn unfold_matches_index_formula_on_2x2x2() {
        // Element (j1,j2,j3) stored as value 100*j1 + 10*j2 + j3 (1-based
        // digits). Mode-2 unfold must place element (1,2,1) at (2,1) in
        // 1-based coordinates, i.e. (1,0) 0-based.
        let t = DenseTensor::from_fn(&[2, 2, 2], |idx| {
            (100 * (idx[0] + 1) + 10 * (idx[1] + 1) + (idx[2] + 1)) as f64
        })
        .unwrap();
        let m = unfold(&t, 1).unwrap();
        assert_eq!(m.get(1, 0), 121.0);
        let oracle = brute_force_unfold(&t, 1);
        assert_eq!(m, oracle);
    }

    #[test]
    fn unfold_matches_brute_force_all_modes() {
        let t = tensor_234();
        for mode in 0..3 {
            let m = unfold(&t, mode).unwrap();
            let oracle = brute_force_unfold(&t, mode);
            assert_eq!(m, oracle, "mode {mode}");
        }
    }

    #[test]
    fn unfold_zero_tensor() {
        let t = DenseTensor::zeros(&[3, 4, 5]).unwrap();
        for mode in 0..3 {
            let m = unfold(&t, mode).unwrap();
            assert_eq!(m.rows(), t.shape()[mode]);
            assert_eq!(m.cols(), 60 / t.shape()[mode]);
            assert!(m.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn unfold_mode_out_of_range() {
        let t = tensor_234();
        assert!(matches!(
            unfold(&t, 3),
            Err(TensorError::ModeOutOfRange { mode: 3, order: 3 })
        ));
    }

    #[test]
    fn fold_unfold_round_trip_is_bit_exact() {
        let t = tensor_234();
        for mode in 0..3 {
            let back = fold(&unfold(&t, mode).unwrap(), mode, t.shape()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn fold_rejects_dimension_mismatch() {
        let m = DenseMatrix::zeros(2, 5);
        assert!(fold(&m, 0, &[2, 3]).is_err());
    }

    #[test]
    fn fold_unfold_preserves_norm_across_modes() {
        let t = tensor_234();
        let via_0 = fold(&unfold(&t, 0).unwrap(), 0, t.shape()).unwrap();
        let via_2 = fold(&unfold(&via_0, 2).unwrap(), 2, t.shape()).unwrap();
        assert!((frobenius_norm(&via_2) - frobenius_norm(&t)).abs() < 1e-12);
    }

    #[test]
    fn inner_product_basics() {
        let t = tensor_234();
        let z = DenseTensor::zeros(&[2, 3, 4]).unwrap();
        assert_eq!(inner(&t, &z).unwrap(), 0.0);

        let mut e = vec![0.0; 24];
        e[0] = 1.0;
        let e = DenseTensor::from_vec(vec![2, 3, 4], e).unwrap();
        assert_eq!(inner(&e, &e).unwrap(), 1.0);

        let norm = frobenius_norm(&t);
        assert!((inner(&t, &t).unwrap() - norm * norm).abs() < 1e-9 * norm * norm);
    }

    #[test]
    fn inner_matches_unfolded_trace_inner_product() {
        let a = tensor_234();
        let b = DenseTensor::from_fn(&[2, 3, 4], |idx| {
            ((idx[0] + 2 * idx[1]) as f64).sin() + idx[2] as f64
        })
        .unwrap();
        let direct = inner(&a, &b).unwrap();
        for mode in 0..3 {
            let ma = unfold(&a, mode).unwrap();
            let mb = unfold(&b, mode).unwrap();
            let mat: f64 = ma.data().iter().zip(mb.data()).map(|(x, y)| x * y).sum();
            assert!((direct - mat).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn inner_shape_mismatch() {
        let a = tensor_234();
        let b = DenseTensor::zeros(&[2, 3, 5]).unwrap();
        assert!(inner(&a, &b).is_err());
    }

    #[test]
    fn frobenius_of_all_ones() {
        let t = DenseTensor::from_fn(&[2, 3, 4], |_| 1.0).unwrap();
        assert!((frobenius_norm(&t) - 24f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn frobenius_equals_any_unfolding_norm() {
        let t = tensor_234();
        for mode in 0..3 {
            let m = unfold(&t, mode).unwrap();
            assert!((m.frobenius_norm() - frobenius_norm(&t)).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_product_identity_and_zero() {
        let t = tensor_234();
        let id = DenseMatrix::identity(3);
        let same = mode_product(&t, 1, &id).unwrap();
        assert_eq!(same, t);

        let zero = DenseMatrix::zeros(3, 3);
        let z = mode_product(&t, 1, &zero).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mode_product_satisfies_unfolding_identity() {
        let t = tensor_234();
        let u = DenseMatrix::from_fn(5, 3, |r, c| ((r * 3 + c) as f64).cos());
        let result = mode_product(&t, 1, &u).unwrap();
        assert_eq!(result.shape(), &[2, 5, 4]);
        let lhs = unfold(&result, 1).unwrap();
        let rhs = u.matmul(&unfold(&t, 1).unwrap()).unwrap();
        let denom = rhs.frobenius_norm().max(1.0);
        assert!(lhs.subtract(&rhs).unwrap().frobenius_norm() <= 1e-12 * denom);
    }

    #[test]
    fn mode_products_commute_across_distinct_modes() {
        let t = tensor_234();
        let u = DenseMatrix::from_fn(4, 2, |r, c| (r + 2 * c) as f64 * 0.25 - 1.0);
        let v = DenseMatrix::from_fn(2, 3, |r, c| ((r * 7 + c) as f64).sin());
        let ab = mode_product(&mode_product(&t, 0, &u).unwrap(), 1, &v).unwrap();
        let ba = mode_product(&mode_product(&t, 1, &v).unwrap(), 0, &u).unwrap();
        let diff = ab.subtract(&ba).unwrap();
        assert!(frobenius_norm(&diff) <= 1e-12 * frobenius_norm(&ab).max(1.0));
    }

    #[test]
    fn mode_product_dimension_mismatch() {
        let t = tensor_234();
        let u = DenseMatrix::zeros(5, 4);
        assert!(mode_product(&t, 1, &u).is_err());
    }

    #[test]
    fn linear_arithmetic_axioms() {
        let t = tensor_234();
        let z = DenseTensor::zeros(&[2, 3, 4]).unwrap();
        assert_eq!(t.add(&z).unwrap(), t);
        assert_eq!(t.scale(1.0), t);

        let b = DenseTensor::from_fn(&[2, 3, 4], |idx| idx[2] as f64 - 1.5).unwrap();
        let ab = t.subtract(&b).unwrap();
        let ba = b.subtract(&t).unwrap();
        assert!((frobenius_norm(&ab) - frobenius_norm(&ba)).abs() < 1e-12);

        let y = t.axpy(0.5, &b).unwrap();
        let manual = t.add(&b.scale(0.5)).unwrap();
        assert!(frobenius_norm(&y.subtract(&manual).unwrap()) < 1e-14);
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(DenseTensor::from_vec(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::from_vec(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(DenseTensor::from_vec(vec![2], vec![f64::NAN, 0.0]).is_err());
        assert!(DenseTensor::from_vec(vec![2], vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn nrank_validation() {
        let r = NRank::new(vec![2, 2, 2]);
        assert!(r.validate_for(&[2, 3, 4]).is_ok());
        assert!(r.validate_for(&[2, 3]).is_err());
        // mode 0 bound is min(2, 12) = 2
        assert!(NRank::new(vec![3, 2, 2]).validate_for(&[2, 3, 4]).is_err());
        // rank zero is allowed
        assert!(NRank::new(vec![0, 0, 0]).validate_for(&[2, 3, 4]).is_ok());
    }

    #[test]
    fn serialization_round_trip() {
        let t = tensor_234();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = DenseTensor::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn serialization_rejects_garbage_header() {
        let mut buf = b"shap: 2 2\n".to_vec();
        buf.extend_from_slice(&[0u8; 32]);
        assert!(DenseTensor::read_from(&mut buf.as_slice()).is_err());
    }
}
