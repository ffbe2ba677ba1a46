//! Partitioned inference and analytical overhead models.
//!
//! The untrusted world runs every weight multiplication; the enclave performs
//! the single mask/permute authorization inside the lock layer's feed-forward
//! block. [`estimate_overhead`] reproduces the closed-form computation and
//! communication accounting for this scheme and the baseline protection
//! schemes it is compared against.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::enclave::{BoundaryLedger, EnclaveState};
use crate::error::{Error, Result};
use crate::linalg::{permute_rows, Matrix};
use crate::locking::{split_seed, LockKeys, LockedModel};
use crate::transformer::{add_norm, count_flops, embed, layer_forward, ModelConfig};

/// Boundary tensors as the untrusted world sees them. Everything passed to an
/// observer here crossed the enclave boundary and is adversary-visible.
pub enum BoundaryEvent<'a> {
    EncryptIn(&'a Matrix),
    EncryptOut(&'a Matrix),
    DecryptIn { n_prime: &'a Matrix, y: &'a Matrix },
    DecryptOut(&'a Matrix),
}

/// Builds the enclave for a locked model. Returns the provisioned state and
/// the reconstructed original output linear of the authorization layer, which
/// the provider feeds to [`EnclaveState::precompute_pads`] in the offline
/// phase. Reconstruction uses the secret `pi_enc`, so this path belongs to
/// the trusted provisioning side.
pub fn provision_enclave(
    locked: &LockedModel,
    keys: LockKeys,
    pad_seed: u64,
) -> Result<(EnclaveState, Matrix)> {
    let auth = &locked.auth_block.weights;
    if keys.pi.size() != locked.config.d_model || keys.pi_enc.size() != locked.config.d_ffn {
        return Err(Error::KeyModelMismatch(format!(
            "key widths ({}, {}) vs model ({}, {})",
            keys.pi.size(),
            keys.pi_enc.size(),
            locked.config.d_model,
            locked.config.d_ffn
        )));
    }
    let w_n_original = permute_rows(&auth.w_n, &keys.pi_enc.invert())?;
    let enclave = EnclaveState::new(
        keys,
        pad_seed,
        locked.config.seq_len,
        auth.gamma2.clone(),
        auth.beta2.clone(),
    )?;
    Ok((enclave, w_n_original))
}

/// Authorized inference: plain front layers, the five-crossing authorization
/// inside the lock layer's feed-forward block, permuted rear layers, and the
/// row-permuted head. Returns the logits and the ledger delta for this pass.
pub fn run_authorized(
    locked: &LockedModel,
    enclave: &mut EnclaveState,
    tokens: &[usize],
) -> Result<(Matrix, BoundaryLedger)> {
    run_authorized_observed(locked, enclave, tokens, &mut |_| {})
}

/// Same as [`run_authorized`] with a wiretap on every boundary crossing.
pub fn run_authorized_observed(
    locked: &LockedModel,
    enclave: &mut EnclaveState,
    tokens: &[usize],
    observer: &mut dyn FnMut(BoundaryEvent),
) -> Result<(Matrix, BoundaryLedger)> {
    let cfg = &locked.config;
    let ledger_before = enclave.ledger();
    let mut x = embed(&locked.embedding, tokens, cfg)?;
    for (i, layer) in locked.front_layers.iter().enumerate() {
        x = layer_forward(layer, &x, cfg).map_err(|e| e.with_layer(i))?;
    }

    // authorization block: attention sublayer and the feed-forward input
    // linear run in the clear, the rest crosses the boundary
    let auth = &locked.auth_block.weights;
    let auth_idx = cfg.auth_position - 1;
    let q = x.matmul(&auth.w_q)?;
    let k = x.matmul(&auth.w_k)?;
    let v = x.matmul(&auth.w_v)?;
    let o = crate::transformer::attention(auth, &q, &k, &v, cfg)?;
    let y = add_norm(&o, &x, &auth.gamma1, &auth.beta1)?;
    let m = y.matmul(&auth.w_m)?.add_row_bias(&auth.b_m)?.relu();
    if !m.is_finite() {
        return Err(Error::NonFinite {
            layer: Some(auth_idx),
            stage: "feed-forward input",
        });
    }

    observer(BoundaryEvent::EncryptIn(&m));
    let masked = enclave.encrypt_step(&m)?;
    observer(BoundaryEvent::EncryptOut(&masked));

    // untrusted world applies the encrypted-path output linear
    let n_prime = masked.matmul(&auth.w_n)?.add_row_bias(&auth.b_n)?;

    observer(BoundaryEvent::DecryptIn {
        n_prime: &n_prime,
        y: &y,
    });
    let mut feat = enclave.decrypt_authorize(&n_prime, &y)?;
    observer(BoundaryEvent::DecryptOut(&feat));

    for (j, layer) in locked.rear_layers.iter().enumerate() {
        feat = layer_forward(layer, &feat, cfg).map_err(|e| e.with_layer(cfg.auth_position + j))?;
    }
    let logits = feat.matmul(&locked.output_head_locked)?;
    Ok((logits, enclave.ledger().delta_since(&ledger_before)))
}

/// Plain forward through the locked weights without any enclave call: the
/// authorization layer runs with its scrambled output linear and the rear
/// layers receive un-permuted features.
pub fn run_unauthorized(locked: &LockedModel, tokens: &[usize]) -> Result<Matrix> {
    let cfg = &locked.config;
    let mut x = embed(&locked.embedding, tokens, cfg)?;
    for (i, layer) in locked.front_layers.iter().enumerate() {
        x = layer_forward(layer, &x, cfg).map_err(|e| e.with_layer(i))?;
    }
    x = layer_forward(&locked.auth_block.weights, &x, cfg)
        .map_err(|e| e.with_layer(cfg.auth_position - 1))?;
    for (j, layer) in locked.rear_layers.iter().enumerate() {
        x = layer_forward(layer, &x, cfg).map_err(|e| e.with_layer(cfg.auth_position + j))?;
    }
    x.matmul(&locked.output_head_locked)
}

// ---------------------------------------------------------------------------
// Analytical overhead models
// ---------------------------------------------------------------------------

/// Protection scheme whose overhead is being modeled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Scheme {
    /// Unprotected deployment; no trusted execution at all.
    NoShield,
    /// The whole model runs inside the enclave.
    BlackBox,
    /// This crate's permutation lock with one five-crossing authorization.
    CoreGuard,
    /// Direct enclave execution of all layers from the auth position on.
    Dte,
    /// Enclave shields the first layer.
    Serdab,
    /// Enclave shields the last layer and the output head.
    DarkNetZ,
    /// Enclave shields a seeded-random fraction of the layers.
    Soter { fraction: f32, seed: u64 },
    /// Every weight linear is obfuscated and offloaded; features cross the
    /// boundary before and after each of the 7 linears per block.
    ShadowNet,
    /// Per-layer lightweight authorization: one mask/permute exchange per
    /// layer boundary.
    Tlg,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::NoShield => "noshield",
            Scheme::BlackBox => "blackbox",
            Scheme::CoreGuard => "coreguard",
            Scheme::Dte => "dte",
            Scheme::Serdab => "serdab",
            Scheme::DarkNetZ => "darknetz",
            Scheme::Soter { .. } => "soter",
            Scheme::ShadowNet => "shadownet",
            Scheme::Tlg => "tlg",
        }
    }

    pub const ALL_NAMES: [&'static str; 9] = [
        "noshield",
        "blackbox",
        "coreguard",
        "dte",
        "serdab",
        "darknetz",
        "soter",
        "shadownet",
        "tlg",
    ];
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "noshield" => Ok(Scheme::NoShield),
            "blackbox" => Ok(Scheme::BlackBox),
            "coreguard" => Ok(Scheme::CoreGuard),
            "dte" => Ok(Scheme::Dte),
            "serdab" => Ok(Scheme::Serdab),
            "darknetz" => Ok(Scheme::DarkNetZ),
            "soter" => Ok(Scheme::Soter {
                fraction: 0.20,
                seed: 0,
            }),
            "shadownet" => Ok(Scheme::ShadowNet),
            "tlg" => Ok(Scheme::Tlg),
            other => Err(Error::UnknownScheme(other.into())),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Enclave execution and transfer accounting for one (scheme, config) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadReport {
    pub tee_flops: u64,
    /// `tee_flops` over the model's total forward FLOPs.
    pub tee_flops_fraction: f64,
    pub transfer_bytes: u64,
    pub transfer_rounds: u64,
}

/// Extra enclave FLOPs of the permutation-lock authorization, per forward
/// pass: mask add and permute on the inner feature (2 per element), mask
/// subtraction (1 per element) and the output permutation (1 per element).
/// The add-norm is excluded; the unprotected model computes it too.
pub fn authorization_tee_flops(cfg: &ModelConfig) -> u64 {
    cfg.seq_len as u64 * (2 * cfg.d_ffn as u64 + 2 * cfg.d_model as u64)
}

/// Transfer bytes of the five-crossing authorization: the inner feature in
/// and out (`l x d_ffn` each) plus `n'`, `y` in and the authorized feature
/// out (`l x d` each), 4 bytes per element.
pub fn authorization_transfer_bytes(cfg: &ModelConfig) -> u64 {
    4 * cfg.seq_len as u64 * (2 * cfg.d_ffn as u64 + 3 * cfg.d_model as u64)
}

/// Closed-form overhead accounting. Feature crossings are always counted at
/// 4 bytes per element; baseline byte figures published elsewhere under other
/// conventions will differ, round counts will not.
pub fn estimate_overhead(scheme: &Scheme, cfg: &ModelConfig) -> Result<OverheadReport> {
    cfg.validate()?;
    let flops = count_flops(cfg);
    let l = cfg.seq_len as u64;
    let d = cfg.d_model as u64;
    let f = cfg.d_ffn as u64;
    let layers = cfg.num_layers as u64;
    let feature_roundtrip = 2 * 4 * l * d; // one d-wide feature in and out

    let (tee_flops, rounds, bytes) = match scheme {
        Scheme::NoShield => (0, 0, 0),
        Scheme::BlackBox => (flops.total, 2, feature_roundtrip),
        Scheme::CoreGuard => (
            authorization_tee_flops(cfg),
            5,
            authorization_transfer_bytes(cfg),
        ),
        Scheme::Dte => {
            let shielded = (cfg.num_layers - cfg.auth_position) as u64;
            (shielded * flops.per_layer_total, 2, feature_roundtrip)
        }
        Scheme::Serdab => (flops.per_layer_total, 2, feature_roundtrip),
        Scheme::DarkNetZ => (flops.per_layer_total + flops.head, 2, feature_roundtrip),
        Scheme::Soter { fraction, seed } => {
            let chosen = soter_layers(cfg.num_layers, *fraction, *seed);
            let segments = contiguous_segments(&chosen) as u64;
            (
                chosen.len() as u64 * flops.per_layer_total,
                2 * segments,
                segments * feature_roundtrip,
            )
        }
        Scheme::ShadowNet => {
            // 7 weight linears per block, each crossing in and out; the
            // enclave keeps the nonlinear remainder plus one de-obfuscation
            // op per transferred element
            let rounds = 2 * 7 * layers;
            let elems_per_layer = l * (11 * d + 3 * f);
            let bytes = 4 * elems_per_layer * layers;
            let nonlinear = flops.per_layer_total
                - flops.per_layer_qkvo_matmul
                - flops.per_layer_ffn_matmul;
            let tee = layers * (nonlinear + elems_per_layer);
            (tee, rounds, bytes)
        }
        Scheme::Tlg => {
            // one lightweight authorization per layer; transfers at each of
            // the L-1 layer boundaries
            let tee = layers * authorization_tee_flops(cfg);
            let rounds = 5 * (layers - 1);
            let bytes = (layers - 1) * authorization_transfer_bytes(cfg);
            (tee, rounds, bytes)
        }
    };

    Ok(OverheadReport {
        tee_flops,
        tee_flops_fraction: tee_flops as f64 / flops.total as f64,
        transfer_bytes: bytes,
        transfer_rounds: rounds,
    })
}

fn soter_layers(num_layers: usize, fraction: f32, seed: u64) -> Vec<usize> {
    let count = ((num_layers as f32 * fraction).round() as usize).clamp(1, num_layers);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..num_layers).collect();
    for i in (1..num_layers).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let mut chosen = indices[..count].to_vec();
    chosen.sort_unstable();
    chosen
}

fn contiguous_segments(sorted: &[usize]) -> usize {
    let mut segments = 0;
    let mut prev = usize::MAX - 1;
    for &i in sorted {
        if i != prev + 1 {
            segments += 1;
        }
        prev = i;
    }
    segments
}

// ---------------------------------------------------------------------------
// Benchmark report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub model: String,
    pub scheme: String,
    pub tee_flops: f64,
    pub tee_flops_fraction: f64,
    pub transfer_bytes: f64,
    pub transfer_rounds: f64,
    /// Spread over seeds for schemes with seeded randomness, zero otherwise.
    pub rounds_sd: f64,
}

/// Live cross-check: a downscaled model is actually locked and run, and the
/// measured boundary ledger must equal the closed form for its own config.
#[derive(Debug, Clone, Serialize)]
pub struct LiveCheck {
    pub model: String,
    pub config: ModelConfig,
    pub measured_rounds: u64,
    pub measured_bytes: u64,
    pub predicted_rounds: u64,
    pub predicted_bytes: u64,
}

impl LiveCheck {
    pub fn consistent(&self) -> bool {
        self.measured_rounds == self.predicted_rounds
            && self.measured_bytes == self.predicted_bytes
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub seed: u64,
    pub rows: Vec<BenchRow>,
    pub live_checks: Vec<LiveCheck>,
}

const SOTER_SEED_SAMPLES: u64 = 100;

/// Runs the closed-form accounting for every (config, scheme) pair and the
/// live ledger cross-check for the permutation lock. Soter rows aggregate
/// mean and spread over 100 seeds.
pub fn bench_report(
    configs: &[(String, ModelConfig)],
    schemes: &[Scheme],
    seed: u64,
) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for (name, cfg) in configs {
        for scheme in schemes {
            let row = match scheme {
                Scheme::Soter { fraction, .. } => {
                    let mut flops = 0.0;
                    let mut frac = 0.0;
                    let mut bytes = 0.0;
                    let mut rounds = Vec::with_capacity(SOTER_SEED_SAMPLES as usize);
                    for s in 0..SOTER_SEED_SAMPLES {
                        let r = estimate_overhead(
                            &Scheme::Soter {
                                fraction: *fraction,
                                seed: split_seed(seed, s),
                            },
                            cfg,
                        )?;
                        flops += r.tee_flops as f64;
                        frac += r.tee_flops_fraction;
                        bytes += r.transfer_bytes as f64;
                        rounds.push(r.transfer_rounds as f64);
                    }
                    let n = SOTER_SEED_SAMPLES as f64;
                    let mean_rounds = rounds.iter().sum::<f64>() / n;
                    let var =
                        rounds.iter().map(|r| (r - mean_rounds).powi(2)).sum::<f64>() / n;
                    BenchRow {
                        model: name.clone(),
                        scheme: scheme.name().into(),
                        tee_flops: flops / n,
                        tee_flops_fraction: frac / n,
                        transfer_bytes: bytes / n,
                        transfer_rounds: mean_rounds,
                        rounds_sd: var.sqrt(),
                    }
                }
                _ => {
                    let r = estimate_overhead(scheme, cfg)?;
                    BenchRow {
                        model: name.clone(),
                        scheme: scheme.name().into(),
                        tee_flops: r.tee_flops as f64,
                        tee_flops_fraction: r.tee_flops_fraction,
                        transfer_bytes: r.transfer_bytes as f64,
                        transfer_rounds: r.transfer_rounds as f64,
                        rounds_sd: 0.0,
                    }
                }
            };
            rows.push(row);
        }
    }

    let mut live_checks = Vec::new();
    if schemes.iter().any(|s| matches!(s, Scheme::CoreGuard)) {
        for (name, cfg) in configs {
            live_checks.push(live_ledger_check(name, cfg, seed)?);
        }
    }

    Ok(BenchReport {
        seed,
        rows,
        live_checks,
    })
}

/// Shrinks a config to desk scale (preserving layer count, head count parity
/// and the FFN/model width ratio), runs one authorized pass, and compares the
/// measured ledger with the closed form.
fn live_ledger_check(name: &str, cfg: &ModelConfig, seed: u64) -> Result<LiveCheck> {
    let d = 16;
    let ratio = cfg.d_ffn as f64 / cfg.d_model as f64;
    let small = ModelConfig {
        num_layers: cfg.num_layers.min(4).max(2),
        d_model: d,
        num_heads: 2,
        d_ffn: ((d as f64 * ratio).round() as usize).max(1),
        seq_len: 8,
        vocab_size: 32,
        causal: cfg.causal,
        auth_position: cfg.num_layers.min(4).max(2) / 2,
    };
    let model = crate::transformer::random_model(&small, split_seed(seed, 7))?;
    let keys = LockKeys::generate(split_seed(seed, 8), small.d_model, small.d_ffn)?;
    let locked = crate::locking::lock_model(&model, &keys, small.auth_position)?;
    let (mut enclave, w_n) = provision_enclave(&locked, keys, split_seed(seed, 9))?;
    enclave.precompute_pads(1, &w_n)?;
    let tokens: Vec<usize> = (0..small.seq_len).map(|i| i % small.vocab_size).collect();
    let (_, ledger) = run_authorized(&locked, &mut enclave, &tokens)?;
    let predicted = estimate_overhead(&Scheme::CoreGuard, &small)?;
    Ok(LiveCheck {
        model: name.to_string(),
        config: small,
        measured_rounds: ledger.rounds,
        measured_bytes: ledger.bytes,
        predicted_rounds: predicted.transfer_rounds,
        predicted_bytes: predicted.transfer_bytes,
    })
}

impl BenchReport {
    /// Comma-separated table: model, scheme, tee_flops, fraction, bytes, rounds.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# seed: {}\n", self.seed);
        out.push_str("model,scheme,tee_flops,tee_flops_fraction,transfer_bytes,transfer_rounds\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6e},{:.6e},{:.6e},{}\n",
                row.model,
                row.scheme,
                row.tee_flops,
                row.tee_flops_fraction,
                row.transfer_bytes,
                format_rounds(row.transfer_rounds, row.rounds_sd),
            ));
        }
        out
    }

    /// Human-readable grid: one row per model, one column pair per scheme.
    pub fn to_table(&self) -> String {
        let mut schemes: Vec<String> = Vec::new();
        for row in &self.rows {
            if !schemes.contains(&row.scheme) {
                schemes.push(row.scheme.clone());
            }
        }
        let mut models: Vec<String> = Vec::new();
        for row in &self.rows {
            if !models.contains(&row.model) {
                models.push(row.model.clone());
            }
        }
        let mut out = String::new();
        out.push_str(&format!("seed: {}\n", self.seed));
        out.push_str(&format!("{:<14}", "model"));
        for s in &schemes {
            out.push_str(&format!("{:>26}", format!("{s} flops/(%)")));
            out.push_str(&format!("{:>24}", format!("{s} KiB/rounds")));
        }
        out.push('\n');
        for m in &models {
            out.push_str(&format!("{m:<14}"));
            for s in &schemes {
                if let Some(row) = self
                    .rows
                    .iter()
                    .find(|r| &r.model == m && &r.scheme == s)
                {
                    out.push_str(&format!(
                        "{:>26}",
                        format!(
                            "{:.2e} ({:.2e}%)",
                            row.tee_flops,
                            row.tee_flops_fraction * 100.0
                        )
                    ));
                    out.push_str(&format!(
                        "{:>24}",
                        format!(
                            "{:.2e} / {}",
                            row.transfer_bytes / 1024.0,
                            format_rounds(row.transfer_rounds, row.rounds_sd)
                        )
                    ));
                }
            }
            out.push('\n');
        }
        for check in &self.live_checks {
            out.push_str(&format!(
                "live check [{}] d={} d_ffn={} l={}: measured {} rounds / {} bytes, closed form {} / {} -> {}\n",
                check.model,
                check.config.d_model,
                check.config.d_ffn,
                check.config.seq_len,
                check.measured_rounds,
                check.measured_bytes,
                check.predicted_rounds,
                check.predicted_bytes,
                if check.consistent() { "exact" } else { "MISMATCH" }
            ));
        }
        out
    }
}

fn format_rounds(mean: f64, sd: f64) -> String {
    if sd == 0.0 {
        format!("{}", mean as u64)
    } else {
        format!("{mean:.1}+/-{sd:.1}")
    }
}
