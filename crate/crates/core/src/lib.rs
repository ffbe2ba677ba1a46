//! Desk-scale transformer inference with permutation-based weight locking.
//!
//! A trained model is locked by permuting the rear half of its layers so they
//! only compute correctly on column-permuted features. A simulated enclave
//! holds the permutation keys and performs one masked authorization per
//! forward pass inside the lock layer's feed-forward block; from there the
//! permuted layers re-authorize their own outputs, so the enclave is crossed
//! exactly five times regardless of depth. The crate also ships the
//! adversary harness (unauthorized use, input-output differencing, affine
//! unit simulation, key guessing, position sweep), closed-form computation
//! and communication overhead models for this scheme and its baselines, and
//! bit-exact checkpoint and key serialization.

pub mod attacks;
pub mod enclave;
pub mod error;
pub mod io;
pub mod linalg;
pub mod locking;
pub mod runtime;
pub mod transformer;

pub use error::{Error, Result};
pub use linalg::{Matrix, PermutationKey};
pub use locking::{LockKeys, LockedModel};
pub use transformer::{Model, ModelConfig};
