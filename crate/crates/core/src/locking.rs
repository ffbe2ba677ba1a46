//! Turns a trained model into a locked model.
//!
//! Input-processing weights (`w_q`, `w_k`, `w_v`, `w_m`) are row-permuted so
//! they only compute correctly on column-permuted inputs; output-processing
//! weights (`w_o`, `w_n`, both add-norm parameter pairs) are column-permuted
//! so every locked layer re-permutes its own output. One authorization at the
//! lock position therefore propagates through the whole rear stack, and the
//! row-permuted output head maps the permuted final feature back to ordinary
//! logits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    max_rel_error, permute_cols, permute_rows, permute_vec, random_permutation, Matrix,
    PermutationKey,
};
use crate::transformer::{layer_trace, Model, ModelConfig, TransformerLayerWeights};

/// Relative tolerance for the locked/original equivalence identities under
/// f32 accumulation.
pub const EQUIVALENCE_TOL: f32 = 1e-4;

/// The two secret permutations: `pi` (width `d_model`) locks the rear layers
/// and the head; `pi_enc` (width `d_ffn`) obfuscates the masked feature on
/// the encrypted path. They are independent keys; with `d_ffn == d_model` and
/// equal keys the construction degenerates to a single shared permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockKeys {
    pub pi: PermutationKey,
    pub pi_enc: PermutationKey,
}

impl LockKeys {
    pub fn generate(seed: u64, d_model: usize, d_ffn: usize) -> Result<Self> {
        Ok(LockKeys {
            pi: random_permutation(split_seed(seed, 0), d_model)?,
            pi_enc: random_permutation(split_seed(seed, 1), d_ffn)?,
        })
    }

    pub fn identity(d_model: usize, d_ffn: usize) -> Result<Self> {
        Ok(LockKeys {
            pi: PermutationKey::identity(d_model)?,
            pi_enc: PermutationKey::identity(d_ffn)?,
        })
    }
}

/// SplitMix64 step; derives independent stream seeds from one master seed.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Public part of the authorization block: layer `L0-1` with its feed-forward
/// output linear replaced by the encrypted-path weight `pi_enc^T * w_n`. The
/// attention sublayer, `w_m`/`b_m`, `b_n` and the add-norm parameters stay as
/// in the original layer; the enclave keeps its own copy of `gamma2`/`beta2`
/// for the trusted add-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthBlockPublic {
    pub weights: TransformerLayerWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockedModel {
    pub config: ModelConfig,
    pub embedding: Matrix,
    /// Layers `0 .. L0-1`, bitwise equal to the originals.
    pub front_layers: Vec<TransformerLayerWeights>,
    pub auth_block: AuthBlockPublic,
    /// Layers `L0 .. L`, permuted.
    pub rear_layers: Vec<TransformerLayerWeights>,
    /// `pi^T * output_head`; consumes the permuted final feature without an
    /// extra enclave round.
    pub output_head_locked: Matrix,
}

impl LockedModel {
    pub fn auth_position(&self) -> usize {
        self.config.auth_position
    }
}

/// Applies the permutation lock to one layer: rows of the input-processing
/// weights, columns of the output-processing weights and parameters. `b_m` is
/// untouched because it lives on the feed-forward inner dimension, which a
/// row permutation of `w_m` does not move.
pub fn lock_layer(
    w: &TransformerLayerWeights,
    pi: &PermutationKey,
) -> Result<TransformerLayerWeights> {
    Ok(TransformerLayerWeights {
        w_q: permute_rows(&w.w_q, pi)?,
        w_k: permute_rows(&w.w_k, pi)?,
        w_v: permute_rows(&w.w_v, pi)?,
        w_m: permute_rows(&w.w_m, pi)?,
        w_o: permute_cols(&w.w_o, pi)?,
        gamma1: permute_vec(&w.gamma1, pi)?,
        beta1: permute_vec(&w.beta1, pi)?,
        w_n: permute_cols(&w.w_n, pi)?,
        b_n: permute_vec(&w.b_n, pi)?,
        gamma2: permute_vec(&w.gamma2, pi)?,
        beta2: permute_vec(&w.beta2, pi)?,
        b_m: w.b_m.clone(),
    })
}

/// Locks a model at authorization position `l0` (the first permuted layer).
pub fn lock_model(model: &Model, keys: &LockKeys, l0: usize) -> Result<LockedModel> {
    let cfg = &model.config;
    if l0 < 1 || l0 > cfg.num_layers - 1 {
        return Err(Error::InvalidConfig(format!(
            "auth position {l0} outside [1, {}]",
            cfg.num_layers - 1
        )));
    }
    if keys.pi.size() != cfg.d_model || keys.pi_enc.size() != cfg.d_ffn {
        return Err(Error::InvalidPermutation(format!(
            "key sizes ({}, {}) do not match model ({}, {})",
            keys.pi.size(),
            keys.pi_enc.size(),
            cfg.d_model,
            cfg.d_ffn
        )));
    }

    let front_layers: Vec<_> = model.layers[..l0 - 1].to_vec();

    let mut auth_weights = model.layers[l0 - 1].clone();
    auth_weights.w_n = permute_rows(&auth_weights.w_n, &keys.pi_enc)?;

    let rear_layers = model.layers[l0..]
        .iter()
        .map(|w| lock_layer(w, &keys.pi))
        .collect::<Result<Vec<_>>>()?;

    let mut config = *cfg;
    config.auth_position = l0;

    Ok(LockedModel {
        config,
        embedding: model.embedding.clone(),
        front_layers,
        auth_block: AuthBlockPublic {
            weights: auth_weights,
        },
        rear_layers,
        output_head_locked: permute_rows(&model.output_head, &keys.pi)?,
    })
}

/// Inverts [`lock_model`] given the true keys; restores the original bitwise.
pub fn unlock_model(locked: &LockedModel, keys: &LockKeys) -> Result<Model> {
    let cfg = locked.config;
    let mut layers = locked.front_layers.clone();
    let mut auth = locked.auth_block.weights.clone();
    auth.w_n = permute_rows(&auth.w_n, &keys.pi_enc.invert())?;
    layers.push(auth);
    let inv = keys.pi.invert();
    for w in &locked.rear_layers {
        layers.push(lock_layer(w, &inv)?);
    }
    Model::new(
        cfg,
        locked.embedding.clone(),
        layers,
        permute_rows(&locked.output_head_locked, &keys.pi.invert())?,
    )
}

/// Number of weights moved by the lock: every rear-layer parameter plus the
/// output head. The encrypted-path `w_n` replacement is not counted; it is a
/// swap within the public block, not part of the rear permutation.
pub fn locked_parameter_count(cfg: &ModelConfig, l0: usize) -> u64 {
    (cfg.num_layers - l0) as u64 * per_layer_parameter_count(cfg) + head_parameter_count(cfg)
}

pub fn per_layer_parameter_count(cfg: &ModelConfig) -> u64 {
    let d = cfg.d_model as u64;
    let f = cfg.d_ffn as u64;
    4 * d * d + 4 * d + d * f + f + f * d + d
}

pub fn head_parameter_count(cfg: &ModelConfig) -> u64 {
    cfg.d_model as u64 * cfg.vocab_size as u64
}

pub fn total_parameter_count(cfg: &ModelConfig) -> u64 {
    let embed = cfg.vocab_size as u64 * cfg.d_model as u64;
    embed + cfg.num_layers as u64 * per_layer_parameter_count(cfg) + head_parameter_count(cfg)
}

pub fn locked_fraction(cfg: &ModelConfig, l0: usize) -> f64 {
    locked_parameter_count(cfg, l0) as f64 / total_parameter_count(cfg) as f64
}

/// One equivalence identity checked on one rear layer.
#[derive(Debug, Clone, Serialize)]
pub struct LineCheck {
    pub layer: usize,
    pub line: &'static str,
    pub max_rel_err: f32,
}

/// Line-by-line equivalence report for every rear layer plus the head.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub tolerance: f32,
    pub lines: Vec<LineCheck>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.max_rel_err <= self.tolerance)
    }

    /// Fails with the first violated identity, naming layer and line.
    pub fn ensure(&self) -> Result<()> {
        match self
            .lines
            .iter()
            .find(|l| l.max_rel_err > self.tolerance)
        {
            None => Ok(()),
            Some(l) => Err(Error::VerificationFailed {
                layer: l.layer,
                line: l.line,
                max_rel_err: l.max_rel_err,
            }),
        }
    }

    pub fn worst(&self) -> Option<&LineCheck> {
        self.lines
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Checks, on random probe inputs, that every rear layer satisfies the
/// permuted-layer identities against the original: equal Q/K/V and m, and
/// column-permuted o, y, n, z. Also checks that the locked head undoes the
/// output permutation.
pub fn verify_lock(
    original: &Model,
    locked: &LockedModel,
    keys: &LockKeys,
    probe_seed: u64,
) -> Result<VerificationReport> {
    let cfg = &original.config;
    let l0 = locked.auth_position();
    if locked.rear_layers.len() != cfg.num_layers - l0 {
        return Err(Error::InvalidConfig("rear layer count mismatch".into()));
    }
    const PROBES: usize = 3;
    let mut lines = Vec::new();
    for (j, locked_layer) in locked.rear_layers.iter().enumerate() {
        let layer_idx = l0 + j;
        let orig_layer = &original.layers[layer_idx];
        let mut worst = [0.0f32; 8];
        for probe in 0..PROBES {
            let x = probe_matrix(cfg, split_seed(probe_seed, (layer_idx * PROBES + probe) as u64));
            let t = layer_trace(orig_layer, &x, cfg)?;
            let tp = layer_trace(locked_layer, &permute_cols(&x, &keys.pi)?, cfg)?;
            let checks = [
                max_rel_error(&tp.q, &t.q),
                max_rel_error(&tp.k, &t.k),
                max_rel_error(&tp.v, &t.v),
                max_rel_error(&tp.o, &permute_cols(&t.o, &keys.pi)?),
                max_rel_error(&tp.y, &permute_cols(&t.y, &keys.pi)?),
                max_rel_error(&tp.m, &t.m),
                max_rel_error(&tp.n, &permute_cols(&t.n, &keys.pi)?),
                max_rel_error(&tp.z, &permute_cols(&t.z, &keys.pi)?),
            ];
            for (w, c) in worst.iter_mut().zip(checks) {
                *w = w.max(c);
            }
        }
        const NAMES: [&str; 8] = ["Q'", "K'", "V'", "o'", "y'", "m'", "n'", "z'"];
        for (name, err) in NAMES.iter().zip(worst) {
            lines.push(LineCheck {
                layer: layer_idx,
                line: name,
                max_rel_err: err,
            });
        }
    }
    // head: the permuted feature times the row-permuted head must reproduce
    // the plain logits
    let z = probe_matrix(cfg, split_seed(probe_seed, u64::MAX / 2));
    let plain = z.matmul(&original.output_head)?;
    let via_locked = permute_cols(&z, &keys.pi)?.matmul(&locked.output_head_locked)?;
    lines.push(LineCheck {
        layer: cfg.num_layers,
        line: "head",
        max_rel_err: max_rel_error(&via_locked, &plain),
    });
    Ok(VerificationReport {
        tolerance: EQUIVALENCE_TOL,
        lines,
    })
}

fn probe_matrix(cfg: &ModelConfig, seed: u64) -> Matrix {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(cfg.seq_len, cfg.d_model, |_, _| {
        rng.random::<f32>() * 2.0 - 1.0
    })
}
