//! Linear measurement maps from tensor space to R^p and their adjoints.
//!
//! [`SamplingOperator`] observes a fixed set of entries (the completion
//! setting); [`DenseOperator`] applies an arbitrary dense p x (prod n_i)
//! matrix behind the same interface. Both satisfy the adjoint identity
//! `<apply(t), v> = <t, adjoint(v)>`.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::tensor::{DenseTensor, TensorError};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("operator is bound to shape {expected:?}, got tensor of shape {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("measurement vector has length {got}, operator produces {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("multi-index {index:?} out of bounds for shape {shape:?}")]
    IndexOutOfBounds {
        index: Vec<usize>,
        shape: Vec<usize>,
    },
    #[error("duplicate observation of flat position {0}")]
    DuplicateIndex(usize),
    #[error("malformed observation file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for OperatorError {
    fn from(e: std::io::Error) -> Self {
        OperatorError::Io(e.to_string())
    }
}

/// A linear map from tensors of a fixed shape to measurement vectors.
pub trait MeasurementOperator {
    fn shape(&self) -> &[usize];

    /// Number of measurements p.
    fn measurement_len(&self) -> usize;

    fn apply(&self, t: &DenseTensor) -> Result<Vec<f64>, OperatorError>;

    fn adjoint(&self, v: &[f64]) -> Result<DenseTensor, OperatorError>;

    /// An upper bound on the operator norm.
    fn norm_bound(&self) -> f64;
}

/// Entrywise sampling: observes the entries in a duplicate-free index set,
/// kept strictly sorted in canonical flat order so that the k-th measurement
/// is the k-th observed position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingOperator {
    shape: Vec<usize>,
    positions: Vec<usize>,
}

impl SamplingOperator {
    /// Builds the operator from multi-indices (0-based); they are sorted
    /// into canonical order and duplicates are rejected.
    pub fn from_multi_indices(
        shape: Vec<usize>,
        omega: &[Vec<usize>],
    ) -> Result<Self, OperatorError> {
        let mut positions = Vec::with_capacity(omega.len());
        for index in omega {
            if index.len() != shape.len() || index.iter().zip(shape.iter()).any(|(j, n)| j >= n) {
                return Err(OperatorError::IndexOutOfBounds {
                    index: index.clone(),
                    shape,
                });
            }
            let mut pos = 0;
            let mut stride = 1;
            for (j, n) in index.iter().zip(shape.iter()) {
                pos += j * stride;
                stride *= n;
            }
            positions.push(pos);
        }
        Self::from_flat_positions(shape, positions)
    }

    /// Builds the operator from canonical flat positions.
    pub fn from_flat_positions(
        shape: Vec<usize>,
        mut positions: Vec<usize>,
    ) -> Result<Self, OperatorError> {
        let total: usize = shape.iter().product();
        positions.sort_unstable();
        for w in positions.windows(2) {
            if w[0] == w[1] {
                return Err(OperatorError::DuplicateIndex(w[0]));
            }
        }
        if let Some(&last) = positions.last() {
            if last >= total {
                return Err(OperatorError::IndexOutOfBounds {
                    index: vec![last],
                    shape,
                });
            }
        }
        Ok(Self { shape, positions })
    }

    /// All positions observed (the full-observation operator).
    pub fn dense(shape: Vec<usize>) -> Self {
        let total: usize = shape.iter().product();
        Self {
            shape,
            positions: (0..total).collect(),
        }
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Multi-index (0-based) of the k-th observation.
    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        let mut rem = self.positions[k];
        self.shape
            .iter()
            .map(|n| {
                let j = rem % n;
                rem /= n;
                j
            })
            .collect()
    }

    /// Complement of the observed set, as flat positions.
    pub fn complement_positions(&self) -> Vec<usize> {
        let total: usize = self.shape.iter().product();
        let mut out = Vec::with_capacity(total - self.positions.len());
        let mut iter = self.positions.iter().peekable();
        for p in 0..total {
            if iter.peek() == Some(&&p) {
                iter.next();
            } else {
                out.push(p);
            }
        }
        out
    }

    /// Writes the observed set as text: a `shape:` header, then one 1-based
    /// multi-index per line in canonical order.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), OperatorError> {
        let header: Vec<String> = self.shape.iter().map(|n| n.to_string()).collect();
        writeln!(w, "shape: {}", header.join(" "))?;
        for k in 0..self.positions.len() {
            let line: Vec<String> = self
                .multi_index(k)
                .iter()
                .map(|j| (j + 1).to_string())
                .collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Inverse of [`SamplingOperator::write_to`].
    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self, OperatorError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| OperatorError::BadFile("empty file".into()))??;
        let rest = header
            .strip_prefix("shape:")
            .ok_or_else(|| OperatorError::BadFile(format!("expected `shape:`, got `{header}`")))?;
        let shape: Vec<usize> = rest
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| OperatorError::BadFile(format!("bad mode length `{tok}`")))
            })
            .collect::<Result<_, _>>()?;
        let mut omega = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let index: Vec<usize> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>()
                        .ok()
                        .filter(|&j| j >= 1)
                        .map(|j| j - 1)
                        .ok_or_else(|| OperatorError::BadFile(format!("bad 1-based index `{tok}`")))
                })
                .collect::<Result<_, _>>()?;
            omega.push(index);
        }
        Self::from_multi_indices(shape, &omega)
    }

    fn check_shape(&self, t: &DenseTensor) -> Result<(), OperatorError> {
        if t.shape() != self.shape.as_slice() {
            return Err(OperatorError::ShapeMismatch {
                expected: self.shape.clone(),
                got: t.shape().to_vec(),
            });
        }
        Ok(())
    }
}

impl MeasurementOperator for SamplingOperator {
    fn shape(&self) -> &[usize] {
        &self.shape
    }

    fn measurement_len(&self) -> usize {
        self.positions.len()
    }

    fn apply(&self, t: &DenseTensor) -> Result<Vec<f64>, OperatorError> {
        self.check_shape(t)?;
        let data = t.data();
        Ok(self.positions.iter().map(|&p| data[p]).collect())
    }

    fn adjoint(&self, v: &[f64]) -> Result<DenseTensor, OperatorError> {
        if v.len() != self.positions.len() {
            return Err(OperatorError::LengthMismatch {
                expected: self.positions.len(),
                got: v.len(),
            });
        }
        let total: usize = self.shape.iter().product();
        let mut data = vec![0.0; total];
        for (&p, &x) in self.positions.iter().zip(v) {
            data[p] = x;
        }
        Ok(DenseTensor::from_vec(self.shape.clone(), data)?)
    }

    /// Exactly 1 for nonempty duplicate-free sampling (apply . adjoint is
    /// the identity on R^p), 0 for the empty set.
    fn norm_bound(&self) -> f64 {
        if self.positions.is_empty() {
            0.0
        } else {
            1.0
        }
    }
}

/// General dense sensing: row k of `matrix` is the sensing functional of
/// measurement k, applied against the canonical flattening of the tensor.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    shape: Vec<usize>,
    /// p rows of length prod(shape)
    matrix: Vec<Vec<f64>>,
}

impl DenseOperator {
    pub fn new(shape: Vec<usize>, matrix: Vec<Vec<f64>>) -> Result<Self, OperatorError> {
        let total: usize = shape.iter().product();
        if let Some(row) = matrix.iter().find(|row| row.len() != total) {
            return Err(OperatorError::LengthMismatch {
                expected: total,
                got: row.len(),
            });
        }
        Ok(Self { shape, matrix })
    }

    /// Largest singular value estimated by power iteration on A* A.
    fn power_norm(&self, iterations: usize) -> f64 {
        let total: usize = self.shape.iter().product();
        let mut v: Vec<f64> = (0..total)
            .map(|i| ((i as f64 * 0.7391) + 0.31).sin())
            .collect();
        let mut norm = 0.0;
        for _ in 0..iterations {
            let t = DenseTensor::from_vec(self.shape.clone(), v.clone()).expect("finite");
            let applied = self.apply(&t).expect("shape bound");
            let back = self.adjoint(&applied).expect("length bound");
            v = back.into_data();
            norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            for x in &mut v {
                *x /= norm;
            }
        }
        norm.sqrt()
    }
}

impl MeasurementOperator for DenseOperator {
    fn shape(&self) -> &[usize] {
        &self.shape
    }

    fn measurement_len(&self) -> usize {
        self.matrix.len()
    }

    fn apply(&self, t: &DenseTensor) -> Result<Vec<f64>, OperatorError> {
        if t.shape() != self.shape.as_slice() {
            return Err(OperatorError::ShapeMismatch {
                expected: self.shape.clone(),
                got: t.shape().to_vec(),
            });
        }
        let data = t.data();
        Ok(self
            .matrix
            .iter()
            .map(|row| row.iter().zip(data).map(|(a, x)| a * x).sum())
            .collect())
    }

    fn adjoint(&self, v: &[f64]) -> Result<DenseTensor, OperatorError> {
        if v.len() != self.matrix.len() {
            return Err(OperatorError::LengthMismatch {
                expected: self.matrix.len(),
                got: v.len(),
            });
        }
        let total: usize = self.shape.iter().product();
        let mut data = vec![0.0; total];
        for (row, &x) in self.matrix.iter().zip(v) {
            for (d, a) in data.iter_mut().zip(row) {
                *d += a * x;
            }
        }
        Ok(DenseTensor::from_vec(self.shape.clone(), data)?)
    }

    fn norm_bound(&self) -> f64 {
        self.power_norm(60)
    }
}
