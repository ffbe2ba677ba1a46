//! Simulated trusted world.
//!
//! The enclave holds every secret: both permutation keys, the pad stream, and
//! the authorization layer's add-norm parameters. Exactly two operations
//! cross the boundary during inference: [`EnclaveState::encrypt_step`] masks
//! and permutes the feed-forward inner feature, and
//! [`EnclaveState::decrypt_authorize`] strips the propagated mask, finishes
//! the add-norm, and releases the column-permuted (authorized) feature.
//!
//! State is single-owner and serially used; calls mutate the pad queue and
//! the ledger.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{permute_cols, Matrix};
use crate::locking::LockKeys;

/// Counts world crossings and payload volume. Every crossing increments
/// `rounds` by one and adds the 4-byte size of the matrix it carries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BoundaryLedger {
    pub rounds: u64,
    pub bytes: u64,
}

impl BoundaryLedger {
    fn record(&mut self, m: &Matrix) {
        self.rounds += 1;
        self.bytes += (m.rows() * m.cols() * 4) as u64;
    }

    pub fn delta_since(&self, earlier: &BoundaryLedger) -> BoundaryLedger {
        BoundaryLedger {
            rounds: self.rounds - earlier.rounds,
            bytes: self.bytes - earlier.bytes,
        }
    }
}

/// One precomputed pad pair: the mask and its image under the original
/// feed-forward output linear.
struct PadPair {
    p: Matrix,
    p_wn: Matrix,
}

pub struct EnclaveState {
    keys: LockKeys,
    pad_rng: ChaCha8Rng,
    queue: VecDeque<PadPair>,
    in_flight: Option<PadPair>,
    ledger: BoundaryLedger,
    gamma2: Vec<f32>,
    beta2: Vec<f32>,
    seq_len: usize,
    /// Ablation switch for the no-mask build used by the differencing
    /// harness; pads are all-zero when false.
    otp_enabled: bool,
}

impl EnclaveState {
    /// Provisions the trusted world. `auth_gamma2`/`auth_beta2` are the
    /// original, un-permuted add-norm parameters of the authorization layer.
    pub fn new(
        keys: LockKeys,
        pad_seed: u64,
        seq_len: usize,
        auth_gamma2: Vec<f32>,
        auth_beta2: Vec<f32>,
    ) -> Result<Self> {
        if auth_gamma2.len() != keys.pi.size() || auth_beta2.len() != keys.pi.size() {
            return Err(Error::ShapeMismatch {
                op: "enclave",
                detail: "add-norm parameter length must equal pi width".into(),
            });
        }
        Ok(EnclaveState {
            keys,
            pad_rng: ChaCha8Rng::seed_from_u64(pad_seed),
            queue: VecDeque::new(),
            in_flight: None,
            ledger: BoundaryLedger::default(),
            gamma2: auth_gamma2,
            beta2: auth_beta2,
            seq_len,
            otp_enabled: true,
        })
    }

    /// Disables the one-time mask (pads become zero). Test ablation only;
    /// the encrypted path degenerates to a bare permutation.
    pub fn with_otp_disabled(mut self) -> Self {
        self.otp_enabled = false;
        self
    }

    pub fn otp_enabled(&self) -> bool {
        self.otp_enabled
    }

    pub fn pads_available(&self) -> usize {
        self.queue.len()
    }

    pub fn ledger(&self) -> BoundaryLedger {
        self.ledger
    }

    pub fn d_model(&self) -> usize {
        self.keys.pi.size()
    }

    pub fn d_ffn(&self) -> usize {
        self.keys.pi_enc.size()
    }

    /// Offline phase: extends the queue with `count` fresh `(p, p * w_n)`
    /// pairs. `w_n` must be the original, pre-permutation output linear of
    /// the authorization layer. Pad entries are uniform in [-1, 1].
    pub fn precompute_pads(&mut self, count: usize, w_n: &Matrix) -> Result<()> {
        if w_n.rows() != self.d_ffn() || w_n.cols() != self.d_model() {
            return Err(Error::ShapeMismatch {
                op: "precompute_pads",
                detail: format!(
                    "w_n is {}x{}, expected {}x{}",
                    w_n.rows(),
                    w_n.cols(),
                    self.d_ffn(),
                    self.d_model()
                ),
            });
        }
        for _ in 0..count {
            let p = if self.otp_enabled {
                let rng = &mut self.pad_rng;
                Matrix::from_fn(self.seq_len, w_n.rows(), |_, _| {
                    rng.random::<f32>() * 2.0 - 1.0
                })
            } else {
                Matrix::zeros(self.seq_len, w_n.rows())
            };
            let p_wn = p.matmul(w_n)?;
            self.queue.push_back(PadPair { p, p_wn });
        }
        Ok(())
    }

    /// Boundary crossing 1 and 2: receives the inner feature `m`, returns the
    /// masked and permuted feature `(m + p) * pi_enc`. Takes the next pad out
    /// of the queue and marks it in flight; a pad is never used twice.
    pub fn encrypt_step(&mut self, m: &Matrix) -> Result<Matrix> {
        if self.in_flight.is_some() {
            return Err(Error::ProtocolOrder(
                "encrypt_step called while a pad is still in flight",
            ));
        }
        if m.rows() != self.seq_len || m.cols() != self.d_ffn() {
            return Err(Error::ShapeMismatch {
                op: "encrypt_step",
                detail: format!(
                    "feature is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    self.seq_len,
                    self.d_ffn()
                ),
            });
        }
        let pad = self.queue.pop_front().ok_or(Error::PadExhausted)?;
        self.ledger.record(m);
        let masked = permute_cols(&m.add(&pad.p)?, &self.keys.pi_enc)?;
        self.in_flight = Some(pad);
        self.ledger.record(&masked);
        Ok(masked)
    }

    /// Boundary crossings 3, 4 and 5: receives the masked linear output `n'`
    /// and the residual input `y`, cancels the propagated mask
    /// (`n = n' - p*w_n`), completes the add-norm with the original
    /// parameters, and returns the column-permuted authorized feature.
    /// Consumes the in-flight pad.
    pub fn decrypt_authorize(&mut self, n_prime: &Matrix, y: &Matrix) -> Result<Matrix> {
        // the pad is taken before validation: it already produced a
        // ciphertext at encrypt time, so it is spent even if this call fails
        let pad = self.in_flight.take().ok_or(Error::ProtocolOrder(
            "decrypt_authorize called without a preceding encrypt_step",
        ))?;
        let d = self.d_model();
        for (name, m) in [("n'", n_prime), ("y", y)] {
            if m.rows() != self.seq_len || m.cols() != d {
                return Err(Error::ShapeMismatch {
                    op: "decrypt_authorize",
                    detail: format!("{name} is {}x{}, expected {}x{d}", m.rows(), m.cols(), self.seq_len),
                });
            }
        }
        self.ledger.record(n_prime);
        self.ledger.record(y);
        let n = n_prime.sub(&pad.p_wn)?;
        let z = crate::transformer::add_norm(y, &n, &self.gamma2, &self.beta2)?;
        let authorized = permute_cols(&z, &self.keys.pi)?;
        self.ledger.record(&authorized);
        Ok(authorized)
    }
}

/// Key material and pads never appear in debug output.
impl fmt::Debug for EnclaveState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnclaveState")
            .field("keys", &"<sealed>")
            .field("pads_available", &self.queue.len())
            .field("pad_in_flight", &self.in_flight.is_some())
            .field("ledger", &self.ledger)
            .field("otp_enabled", &self.otp_enabled)
            .finish()
    }
}
