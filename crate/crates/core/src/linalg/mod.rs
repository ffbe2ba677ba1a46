//! Minimal dense linear algebra and permutation machinery.
//!
//! All operations are pure functions on immutable inputs and safe to call
//! from multiple threads.

pub mod matrix;
pub mod perm;

pub use matrix::{
    argmax, argmax_agreement, max_rel_error, max_rel_error_slice, mean_row_cosine, Matrix,
    LAYER_NORM_EPS,
};
pub use perm::{
    keyspace_bits, permute_cols, permute_rows, permute_vec, random_permutation, PermutationKey,
};
