//! Dense row-major `f32` matrices and the handful of kernels the engine needs.
//!
//! Everything is 32-bit on purpose: overhead accounting elsewhere in the crate
//! assumes 4-byte elements, and the equivalence tests are calibrated to f32
//! accumulation. Matmuls accumulate over the shared dimension in index order,
//! which keeps results bit-reproducible for a given operand layout.

use crate::error::{Error, Result};

/// Epsilon floor added to the population variance before the square root in
/// row statistics, so constant rows normalize to zero instead of dividing by
/// zero.
pub const LAYER_NORM_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Rejects length mismatches and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                detail: format!(
                    "data length {} does not match {}x{}",
                    data.len(),
                    rows,
                    cols
                ),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                detail: format!("non-finite entry {v}"),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    detail: "ragged rows".into(),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * other`, accumulating over the shared dimension in index order.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!(
                    "{}x{} * {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0.0f32;
                for k in 0..self.cols {
                    acc += self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_transpose_b(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                op: "matmul_transpose_b",
                detail: format!(
                    "{}x{} * ({}x{})^T",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                let mut acc = 0.0f32;
                for k in 0..self.cols {
                    acc += self.get(i, k) * other.get(j, k);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f32, f32) -> f32,
    ) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                op,
                detail: format!(
                    "{}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Adds a bias row to every row.
    pub fn add_row_bias(&self, bias: &[f32]) -> Result<Matrix> {
        if bias.len() != self.cols {
            return Err(Error::ShapeMismatch {
                op: "add_row_bias",
                detail: format!("bias length {} vs {} columns", bias.len(), self.cols),
            });
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for (v, b) in out.row_mut(i).iter_mut().zip(bias) {
                *v += b;
            }
        }
        Ok(out)
    }

    pub fn relu(&self) -> Matrix {
        let data = self.data.iter().map(|v| v.max(0.0)).collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: f32) -> Matrix {
        let data = self.data.iter().map(|v| v * s).collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Row-wise softmax with max subtraction. When `causal` is set, entries
    /// with column index greater than the row index are treated as negative
    /// infinity, so attention to future positions comes out exactly zero.
    pub fn softmax_rows_masked(&self, causal: bool) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let limit = if causal {
                (i + 1).min(self.cols)
            } else {
                self.cols
            };
            let row = self.row(i);
            let mut max = f32::NEG_INFINITY;
            for &v in &row[..limit] {
                if v > max {
                    max = v;
                }
            }
            let mut sum = 0.0f32;
            let out_row = out.row_mut(i);
            for j in 0..limit {
                let e = (row[j] - max).exp();
                out_row[j] = e;
                sum += e;
            }
            for v in &mut out_row[..limit] {
                *v /= sum;
            }
        }
        out
    }

    /// Per-row mean and standard deviation. The deviation uses population
    /// variance with the [`LAYER_NORM_EPS`] floor added before the square
    /// root.
    pub fn row_stats(&self) -> (Vec<f32>, Vec<f32>) {
        let mut means = Vec::with_capacity(self.rows);
        let mut sds = Vec::with_capacity(self.rows);
        let n = self.cols as f32;
        for i in 0..self.rows {
            let row = self.row(i);
            let mean = row.iter().sum::<f32>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            means.push(mean);
            sds.push((var + LAYER_NORM_EPS).sqrt());
        }
        (means, sds)
    }

    /// Copies columns `[start, end)` into a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        debug_assert!(start <= end && end <= self.cols);
        let mut out = Matrix::zeros(self.rows, end - start);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[start..end]);
        }
        out
    }

    pub fn set_columns(&mut self, start: usize, block: &Matrix) {
        debug_assert!(start + block.cols <= self.cols && block.rows == self.rows);
        for i in 0..self.rows {
            self.row_mut(i)[start..start + block.cols].copy_from_slice(block.row(i));
        }
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

/// Maximum absolute difference between `a` and `b`, relative to the largest
/// magnitude in `b`. This is the error measure used by the equivalence checks.
pub fn max_rel_error(a: &Matrix, b: &Matrix) -> f32 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()), "shape mismatch");
    let scale = b.max_abs().max(1e-12);
    let mut worst = 0.0f32;
    for (x, y) in a.data().iter().zip(b.data()) {
        worst = worst.max((x - y).abs());
    }
    worst / scale
}

pub fn max_rel_error_slice(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(1e-12f32, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .fold(0.0f32, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    let mut best_v = f32::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = j;
        }
    }
    best
}

/// Fraction of rows on which `a` and `b` agree in argmax.
pub fn argmax_agreement(a: &Matrix, b: &Matrix) -> f32 {
    assert_eq!(a.rows(), b.rows());
    let hits = (0..a.rows())
        .filter(|&i| argmax(a.row(i)) == argmax(b.row(i)))
        .count();
    hits as f32 / a.rows() as f32
}

/// Mean cosine similarity between corresponding rows.
pub fn mean_row_cosine(a: &Matrix, b: &Matrix) -> f32 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let mut total = 0.0f32;
    for i in 0..a.rows() {
        let (ra, rb) = (a.row(i), b.row(i));
        let dot: f32 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
        let na: f32 = ra.iter().map(|x| x * x).sum::<f32>().sqrt();
        let nb: f32 = rb.iter().map(|x| x * x).sum::<f32>().sqrt();
        total += dot / (na * nb).max(1e-12);
    }
    total / a.rows() as f32
}
