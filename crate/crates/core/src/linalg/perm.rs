//! Permutations stored as index arrays.
//!
//! A key holds both directions of a bijection on `{0..n-1}`. Semantically a
//! key stands for the 0/1 matrix `P` with `P[j][forward[j]] = 1`; the gather
//! implementations below are exact, so `permute_cols(X) == X * P` and
//! `permute_rows(W) == P^T * W` hold bitwise against a dense reference.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationKey {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl PermutationKey {
    /// Builds a key from the forward index array (`forward[j]` is the image
    /// of column `j`). Rejects anything that is not a bijection.
    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        if n == 0 {
            return Err(Error::InvalidPermutation("empty index array".into()));
        }
        let mut inverse = vec![usize::MAX; n];
        for (j, &img) in forward.iter().enumerate() {
            if img >= n {
                return Err(Error::InvalidPermutation(format!(
                    "index {img} out of range for size {n}"
                )));
            }
            if inverse[img] != usize::MAX {
                return Err(Error::InvalidPermutation(format!(
                    "index {img} appears more than once"
                )));
            }
            inverse[img] = j;
        }
        Ok(PermutationKey { forward, inverse })
    }

    pub fn identity(n: usize) -> Result<Self> {
        PermutationKey::from_forward((0..n).collect())
    }

    pub fn size(&self) -> usize {
        self.forward.len()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    pub fn invert(&self) -> Self {
        PermutationKey {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// Fraction of positions on which two keys agree; the key-recovery score.
    pub fn agreement(&self, other: &PermutationKey) -> f32 {
        assert_eq!(self.size(), other.size());
        let hits = self
            .forward
            .iter()
            .zip(&other.forward)
            .filter(|(a, b)| a == b)
            .count();
        hits as f32 / self.size() as f32
    }
}

/// Uniformly random permutation from a seedable generator (Fisher-Yates over
/// a ChaCha stream). The same `(seed, n)` always yields the same key.
pub fn random_permutation(seed: u64, n: usize) -> Result<PermutationKey> {
    if n == 0 {
        return Err(Error::InvalidPermutation(
            "cannot draw a permutation of size 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut forward: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        forward.swap(i, j);
    }
    PermutationKey::from_forward(forward)
}

/// Column gather implementing right-multiplication by the key's matrix:
/// `out[i][forward[j]] = x[i][j]`.
pub fn permute_cols(x: &Matrix, key: &PermutationKey) -> Result<Matrix> {
    if x.cols() != key.size() {
        return Err(Error::ShapeMismatch {
            op: "permute_cols",
            detail: format!("{} columns vs key size {}", x.cols(), key.size()),
        });
    }
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let src = x.row(i);
        let dst = out.row_mut(i);
        for (j, &img) in key.forward().iter().enumerate() {
            dst[img] = src[j];
        }
    }
    Ok(out)
}

/// Row scatter implementing left-multiplication by the transposed key matrix:
/// row `forward[j]` of the output is row `j` of `w`.
pub fn permute_rows(w: &Matrix, key: &PermutationKey) -> Result<Matrix> {
    if w.rows() != key.size() {
        return Err(Error::ShapeMismatch {
            op: "permute_rows",
            detail: format!("{} rows vs key size {}", w.rows(), key.size()),
        });
    }
    let mut out = Matrix::zeros(w.rows(), w.cols());
    for (j, &img) in key.forward().iter().enumerate() {
        out.row_mut(img).copy_from_slice(w.row(j));
    }
    Ok(out)
}

/// Same gather as [`permute_cols`] applied to a row vector.
pub fn permute_vec(v: &[f32], key: &PermutationKey) -> Result<Vec<f32>> {
    if v.len() != key.size() {
        return Err(Error::ShapeMismatch {
            op: "permute_vec",
            detail: format!("length {} vs key size {}", v.len(), key.size()),
        });
    }
    let mut out = vec![0.0; v.len()];
    for (j, &img) in key.forward().iter().enumerate() {
        out[img] = v[j];
    }
    Ok(out)
}

/// `log2(n!)` by exact summation of `log2(i)`, no Stirling approximation.
/// This is the keyspace size of a permutation lock of width `n`, in bits.
pub fn keyspace_bits(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).log2()).sum()
}
