//! Reference forward pass for a stack of classic post-norm transformer layers,
//! plus the analytical FLOP counter used by the overhead models.
//!
//! A layer computes, in order: Q/K/V projections, scaled masked multi-head
//! attention with output projection, a residual add-norm, a ReLU feed-forward
//! block, and a second residual add-norm. The feed-forward inner width
//! `d_ffn` is free; with `d_ffn = d_model` the block is the square FFN of the
//! classic formulation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub d_ffn: usize,
    pub seq_len: usize,
    pub vocab_size: usize,
    /// Decoder mask (upper-triangular exclusion) when set; encoder (no mask)
    /// otherwise.
    pub causal: bool,
    /// Index of the first permuted layer; the authorization block is the
    /// layer immediately before it.
    pub auth_position: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let all_counts = [
            self.num_layers,
            self.d_model,
            self.num_heads,
            self.d_ffn,
            self.seq_len,
            self.vocab_size,
        ];
        if all_counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidConfig("all counts must be >= 1".into()));
        }
        if self.d_model % self.num_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {} not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.auth_position < 1 || self.auth_position > self.num_layers.saturating_sub(1) {
            return Err(Error::InvalidConfig(format!(
                "auth_position {} outside [1, {}]",
                self.auth_position,
                self.num_layers.saturating_sub(1)
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }
}

/// All per-layer tensors: the four attention projections, the two add-norm
/// parameter pairs, and the two feed-forward linears with their biases.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLayerWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub gamma1: Vec<f32>,
    pub beta1: Vec<f32>,
    pub w_m: Matrix,
    pub b_m: Vec<f32>,
    pub w_n: Matrix,
    pub b_n: Vec<f32>,
    pub gamma2: Vec<f32>,
    pub beta2: Vec<f32>,
}

impl TransformerLayerWeights {
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let d = cfg.d_model;
        let f = cfg.d_ffn;
        let square = [&self.w_q, &self.w_k, &self.w_v, &self.w_o];
        if square.iter().any(|m| m.rows() != d || m.cols() != d) {
            return Err(Error::InvalidConfig("attention weights must be d x d".into()));
        }
        if self.w_m.rows() != d || self.w_m.cols() != f {
            return Err(Error::InvalidConfig("w_m must be d x d_ffn".into()));
        }
        if self.w_n.rows() != f || self.w_n.cols() != d {
            return Err(Error::InvalidConfig("w_n must be d_ffn x d".into()));
        }
        let d_vecs = [&self.gamma1, &self.beta1, &self.gamma2, &self.beta2, &self.b_n];
        if d_vecs.iter().any(|v| v.len() != d) || self.b_m.len() != f {
            return Err(Error::InvalidConfig("parameter vector length mismatch".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub embedding: Matrix,
    pub layers: Vec<TransformerLayerWeights>,
    pub output_head: Matrix,
}

impl Model {
    pub fn new(
        config: ModelConfig,
        embedding: Matrix,
        layers: Vec<TransformerLayerWeights>,
        output_head: Matrix,
    ) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.num_layers {
            return Err(Error::InvalidConfig(format!(
                "expected {} layers, got {}",
                config.num_layers,
                layers.len()
            )));
        }
        if embedding.rows() != config.vocab_size || embedding.cols() != config.d_model {
            return Err(Error::InvalidConfig("embedding must be vocab x d".into()));
        }
        if output_head.rows() != config.d_model || output_head.cols() != config.vocab_size {
            return Err(Error::InvalidConfig("output head must be d x vocab".into()));
        }
        for layer in &layers {
            layer.validate(&config)?;
        }
        Ok(Model {
            config,
            embedding,
            layers,
            output_head,
        })
    }
}

/// Residual add followed by per-row normalization with scale and shift.
pub fn add_norm(a: &Matrix, b: &Matrix, gamma: &[f32], beta: &[f32]) -> Result<Matrix> {
    let sum = a.add(b)?;
    if gamma.len() != sum.cols() || beta.len() != sum.cols() {
        return Err(Error::ShapeMismatch {
            op: "add_norm",
            detail: "gamma/beta length mismatch".into(),
        });
    }
    let (mu, sd) = sum.row_stats();
    let mut out = Matrix::zeros(sum.rows(), sum.cols());
    for i in 0..sum.rows() {
        let src = sum.row(i);
        let dst = out.row_mut(i);
        for j in 0..src.len() {
            dst[j] = gamma[j] * (src[j] - mu[i]) / sd[i] + beta[j];
        }
    }
    Ok(out)
}

/// Every intermediate of one layer evaluation, in the order they are
/// produced. The locking equivalence checks compare these line by line.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Attention output after the `w_o` projection.
    pub o: Matrix,
    pub y: Matrix,
    pub m: Matrix,
    pub n: Matrix,
    pub z: Matrix,
}

/// Multi-head scaled attention: splits Q/K/V into `num_heads` blocks of width
/// `d/h`, applies masked softmax per head with scale `1/sqrt(d/h)`,
/// concatenates, and projects with `w_o`.
pub(crate) fn attention(
    w: &TransformerLayerWeights,
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    cfg: &ModelConfig,
) -> Result<Matrix> {
    let head_dim = cfg.head_dim();
    let scale = 1.0 / (head_dim as f32).sqrt();
    let mut concat = Matrix::zeros(q.rows(), cfg.d_model);
    for h in 0..cfg.num_heads {
        let (start, end) = (h * head_dim, (h + 1) * head_dim);
        let qh = q.columns(start, end);
        let kh = k.columns(start, end);
        let vh = v.columns(start, end);
        let scores = qh.matmul_transpose_b(&kh)?.scale(scale);
        let attn = scores.softmax_rows_masked(cfg.causal);
        concat.set_columns(start, &attn.matmul(&vh)?);
    }
    concat.matmul(&w.w_o)
}

/// Evaluates one layer and returns all intermediates.
pub fn layer_trace(
    w: &TransformerLayerWeights,
    x: &Matrix,
    cfg: &ModelConfig,
) -> Result<LayerTrace> {
    let q = x.matmul(&w.w_q)?;
    let k = x.matmul(&w.w_k)?;
    let v = x.matmul(&w.w_v)?;
    let o = attention(w, &q, &k, &v, cfg)?;
    let y = add_norm(&o, x, &w.gamma1, &w.beta1)?;
    let m = y.matmul(&w.w_m)?.add_row_bias(&w.b_m)?.relu();
    let n = m.matmul(&w.w_n)?.add_row_bias(&w.b_n)?;
    let z = add_norm(&y, &n, &w.gamma2, &w.beta2)?;
    if !z.is_finite() {
        return Err(Error::NonFinite {
            layer: None,
            stage: "layer output",
        });
    }
    Ok(LayerTrace { q, k, v, o, y, m, n, z })
}

pub fn layer_forward(
    w: &TransformerLayerWeights,
    x: &Matrix,
    cfg: &ModelConfig,
) -> Result<Matrix> {
    Ok(layer_trace(w, x, cfg)?.z)
}

/// Gathers embedding rows for a token sequence.
pub fn embed(embedding: &Matrix, tokens: &[usize], cfg: &ModelConfig) -> Result<Matrix> {
    if tokens.len() != cfg.seq_len {
        return Err(Error::InvalidArgument(format!(
            "expected {} tokens, got {}",
            cfg.seq_len,
            tokens.len()
        )));
    }
    for (position, &token) in tokens.iter().enumerate() {
        if token >= cfg.vocab_size {
            return Err(Error::TokenOutOfRange {
                position,
                token,
                vocab: cfg.vocab_size,
            });
        }
    }
    let mut x = Matrix::zeros(tokens.len(), cfg.d_model);
    for (i, &t) in tokens.iter().enumerate() {
        x.row_mut(i).copy_from_slice(embedding.row(t));
    }
    Ok(x)
}

/// Full forward pass: embed, run every layer, project to logits.
pub fn model_forward(model: &Model, tokens: &[usize]) -> Result<Matrix> {
    let cfg = &model.config;
    let mut x = embed(&model.embedding, tokens, cfg)?;
    for (i, layer) in model.layers.iter().enumerate() {
        x = layer_forward(layer, &x, cfg).map_err(|e| e.with_layer(i))?;
    }
    x.matmul(&model.output_head)
}

// ---------------------------------------------------------------------------
// Random model generation
// ---------------------------------------------------------------------------

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, amp: f32) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| (rng.random::<f32>() * 2.0 - 1.0) * amp)
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, center: f32, amp: f32) -> Vec<f32> {
    (0..n)
        .map(|_| center + (rng.random::<f32>() * 2.0 - 1.0) * amp)
        .collect()
}

/// Random model with linear weights drawn uniform in `[-scale, scale]`.
/// Embeddings are unit-amplitude, norm scales sit near one, and biases are
/// small, so activations stay well ranged at any width.
pub fn random_model_scaled(cfg: &ModelConfig, seed: u64, scale: f32) -> Result<Model> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.d_model;
    let f = cfg.d_ffn;
    let embedding = uniform_matrix(&mut rng, cfg.vocab_size, d, 1.0);
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for _ in 0..cfg.num_layers {
        layers.push(TransformerLayerWeights {
            w_q: uniform_matrix(&mut rng, d, d, scale),
            w_k: uniform_matrix(&mut rng, d, d, scale),
            w_v: uniform_matrix(&mut rng, d, d, scale),
            w_o: uniform_matrix(&mut rng, d, d, scale),
            gamma1: uniform_vec(&mut rng, d, 1.0, 0.2),
            beta1: uniform_vec(&mut rng, d, 0.0, 0.2),
            w_m: uniform_matrix(&mut rng, d, f, scale),
            b_m: uniform_vec(&mut rng, f, 0.0, 0.1),
            w_n: uniform_matrix(&mut rng, f, d, scale),
            b_n: uniform_vec(&mut rng, d, 0.0, 0.1),
            gamma2: uniform_vec(&mut rng, d, 1.0, 0.2),
            beta2: uniform_vec(&mut rng, d, 0.0, 0.2),
        });
    }
    let output_head = uniform_matrix(&mut rng, d, cfg.vocab_size, scale);
    Model::new(*cfg, embedding, layers, output_head)
}

/// Random model at the default weight scale `1/sqrt(d_model)`.
pub fn random_model(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    random_model_scaled(cfg, seed, 1.0 / (cfg.d_model as f32).sqrt())
}

/// Deterministic random token sequences for evaluation sets.
pub fn random_token_sequences(
    seed: u64,
    count: usize,
    len: usize,
    vocab: usize,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..len).map(|_| rng.random_range(0..vocab)).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// FLOP accounting
// ---------------------------------------------------------------------------

/// Closed-form FLOP counts for one forward pass at `seq_len` tokens.
///
/// Cost dictionary: a matmul `(a x b)(b x c)` costs `2abc` (multiply and
/// accumulate, with the accumulator initialized to zero and one add per
/// element); every elementwise multiply, add, divide, subtract, exponential
/// or square root costs 1. Under that dictionary, per layer:
///
/// * `qkvo_matmul`    = `4 * 2*l*d*d`
/// * `ffn_matmul`     = `2*l*d*d_ffn + 2*l*d_ffn*d`
/// * `attention_quadratic` = `2*l*l*d` for scores plus `2*l*l*d` for values
/// * `scale_mask`     = `2*h*l*l` (score scaling and mask add)
/// * `softmax`        = `4*h*l*l` (shift, exp, accumulate, divide)
/// * `bias_activation`= `l*(2*d_ffn + d)` (`b_m` add, ReLU, `b_n` add)
/// * `add_norm`       = `2 * l*(9*d + 4)` (residual add, mean, variance with
///   epsilon and root, normalize, scale, shift -- per row: `d + (d+1) +
///   (3d+3) + 4d`)
///
/// Both vocabulary projections are counted as dense products (`2*l*vocab*d`
/// each): the embedding as a one-hot projection and the head as written. The
/// total is monotone in every config field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlopsReport {
    pub per_layer_qkvo_matmul: u64,
    pub per_layer_ffn_matmul: u64,
    pub per_layer_attention_quadratic: u64,
    pub per_layer_scale_mask: u64,
    pub per_layer_softmax: u64,
    pub per_layer_bias_activation: u64,
    pub per_layer_add_norm: u64,
    pub per_layer_total: u64,
    pub embedding: u64,
    pub head: u64,
    pub total: u64,
}

pub fn count_flops(cfg: &ModelConfig) -> FlopsReport {
    let l = cfg.seq_len as u64;
    let d = cfg.d_model as u64;
    let f = cfg.d_ffn as u64;
    let h = cfg.num_heads as u64;
    let v = cfg.vocab_size as u64;
    let layers = cfg.num_layers as u64;

    let qkvo = 4 * 2 * l * d * d;
    let ffn = 2 * l * d * f + 2 * l * f * d;
    let attn_quad = 2 * l * l * d + 2 * l * l * d;
    let scale_mask = 2 * h * l * l;
    let softmax = 4 * h * l * l;
    let bias_act = l * (2 * f + d);
    let add_norm = 2 * l * (9 * d + 4);
    let per_layer = qkvo + ffn + attn_quad + scale_mask + softmax + bias_act + add_norm;
    let embedding = 2 * l * v * d;
    let head = 2 * l * d * v;

    FlopsReport {
        per_layer_qkvo_matmul: qkvo,
        per_layer_ffn_matmul: ffn,
        per_layer_attention_quadratic: attn_quad,
        per_layer_scale_mask: scale_mask,
        per_layer_softmax: softmax,
        per_layer_bias_activation: bias_act,
        per_layer_add_norm: add_norm,
        per_layer_total: per_layer,
        embedding,
        head,
        total: layers * per_layer + embedding + head,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_rel_error, permute_cols, random_permutation};

    pub(crate) fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            d_model: 8,
            num_heads: 2,
            d_ffn: 16,
            seq_len: 4,
            vocab_size: 11,
            causal: true,
            auth_position: 1,
        }
    }

    #[test]
    fn config_invariants_rejected() {
        let mut cfg = tiny_cfg();
        cfg.num_layers = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.num_heads = 3; // 8 % 3 != 0
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.auth_position = 2; // must be <= L-1
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.auth_position = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_input_propagates_to_zero_output() {
        // all-zero input with zero biases, unit gamma, zero beta: the epsilon
        // floor normalizes constant rows to zero, so the output is zero
        let cfg = tiny_cfg();
        let model = random_model(&cfg, 3).unwrap();
        let mut w = model.layers[0].clone();
        w.b_m = vec![0.0; cfg.d_ffn];
        w.b_n = vec![0.0; cfg.d_model];
        w.gamma1 = vec![1.0; cfg.d_model];
        w.beta1 = vec![0.0; cfg.d_model];
        w.gamma2 = vec![1.0; cfg.d_model];
        w.beta2 = vec![0.0; cfg.d_model];
        let x = Matrix::zeros(cfg.seq_len, cfg.d_model);
        let z = layer_forward(&w, &x, &cfg).unwrap();
        assert!(z.max_abs() == 0.0, "expected exact zeros, got {}", z.max_abs());
    }

    #[test]
    fn single_token_layer_matches_hand_evaluation() {
        // one token, two dimensions, one head, frozen against an independent
        // f64 evaluation of the layer equations
        let cfg = ModelConfig {
            num_layers: 2,
            d_model: 2,
            num_heads: 1,
            d_ffn: 2,
            seq_len: 1,
            vocab_size: 2,
            causal: true,
            auth_position: 1,
        };
        let w = TransformerLayerWeights {
            w_q: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            w_k: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            w_v: Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap(),
            w_o: Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap(),
            gamma1: vec![1.0, 2.0],
            beta1: vec![0.5, -0.5],
            w_m: Matrix::from_rows(&[vec![1.0, -1.0], vec![1.0, 1.0]]).unwrap(),
            b_m: vec![-1.5, 0.0],
            w_n: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap(),
            b_n: vec![0.0, 1.0],
            gamma2: vec![2.0, 1.0],
            beta2: vec![0.0, 1.0],
        };
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let trace = layer_trace(&w, &x, &cfg).unwrap();
        let expect = |got: &Matrix, want: &[f32], what: &str| {
            let want = Matrix::from_vec(1, want.len(), want.to_vec()).unwrap();
            let err = max_rel_error(got, &want);
            assert!(err < 1e-5, "{what}: error {err}");
        };
        expect(&trace.o, &[0.5, 1.5], "o");
        expect(&trace.y, &[-0.499_995, 1.499_99], "y");
        expect(&trace.m, &[0.0, 1.999_985], "m");
        expect(&trace.n, &[0.999_992_5, 1.999_992_5], "n");
        expect(&trace.z, &[-1.999_995_6, 1.999_997_8], "z");
    }

    #[test]
    fn causal_mask_blocks_future_positions() {
        let cfg = tiny_cfg();
        let model = random_model(&cfg, 9).unwrap();
        let w = &model.layers[0];
        let x = Matrix::from_fn(cfg.seq_len, cfg.d_model, |i, j| {
            ((i * cfg.d_model + j) as f32 * 0.37).sin()
        });
        let mut x2 = x.clone();
        for v in x2.row_mut(cfg.seq_len - 1) {
            *v += 1.0;
        }
        let z1 = layer_forward(w, &x, &cfg).unwrap();
        let z2 = layer_forward(w, &x2, &cfg).unwrap();
        assert_eq!(z1.row(0), z2.row(0), "first row must ignore the last token");
        assert_ne!(z1.row(cfg.seq_len - 1), z2.row(cfg.seq_len - 1));
    }

    #[test]
    fn unlocked_layer_is_not_permutation_invariant() {
        // the asymmetry the lock exploits: feeding a column-permuted input to
        // an unpermuted layer changes the output
        let cfg = tiny_cfg();
        let model = random_model(&cfg, 17).unwrap();
        let w = &model.layers[0];
        let key = random_permutation(5, cfg.d_model).unwrap();
        assert!(!key.is_identity());
        let x = Matrix::from_fn(cfg.seq_len, cfg.d_model, |i, j| {
            ((i + 2 * j) as f32 * 0.61).cos()
        });
        let z = layer_forward(w, &x, &cfg).unwrap();
        let z_perm = layer_forward(w, &permute_cols(&x, &key).unwrap(), &cfg).unwrap();
        assert!(max_rel_error(&z_perm, &z) > 0.1);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let cfg = tiny_cfg();
        let model = random_model(&cfg, 21).unwrap();
        let w = &model.layers[0];
        let x = Matrix::from_fn(cfg.seq_len, cfg.d_model, |i, j| ((i ^ j) as f32).sin());
        let q = x.matmul(&w.w_q).unwrap();
        let k = x.matmul(&w.w_k).unwrap();
        let head_dim = cfg.head_dim();
        for h in 0..cfg.num_heads {
            let qh = q.columns(h * head_dim, (h + 1) * head_dim);
            let kh = k.columns(h * head_dim, (h + 1) * head_dim);
            let attn = qh
                .matmul_transpose_b(&kh)
                .unwrap()
                .scale(1.0 / (head_dim as f32).sqrt())
                .softmax_rows_masked(cfg.causal);
            for i in 0..attn.rows() {
                let sum: f32 = attn.row(i).iter().sum();
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn model_forward_is_deterministic() {
        let cfg = tiny_cfg();
        let model = random_model(&cfg, 4).unwrap();
        let tokens = vec![1, 5, 2, 9];
        let a = model_forward(&model, &tokens).unwrap();
        let b = model_forward(&model, &tokens).unwrap();
        assert_eq!(a, b);
        assert_eq!(crate::linalg::argmax_agreement(&a, &b), 1.0);
    }

    #[test]
    fn numeric_blowup_reports_the_layer() {
        // weights large enough to overflow f32 through two matmuls: the
        // forward fails with a numeric error naming the offending layer
        let cfg = tiny_cfg();
        let mut model = random_model(&cfg, 30).unwrap();
        // scores overflow f32 once Q and K are both enormous; the resulting
        // non-finite attention propagates to the layer output
        model.layers[1].w_q = Matrix::from_fn(cfg.d_model, cfg.d_model, |_, _| 1e25);
        model.layers[1].w_k = Matrix::from_fn(cfg.d_model, cfg.d_model, |_, _| 1e25);
        match model_forward(&model, &[0, 1, 2, 3]) {
            Err(Error::NonFinite { layer: Some(1), .. }) => {}
            other => panic!("expected a layer-1 numeric error, got {other:?}"),
        }
    }

    #[test]
    fn model_forward_rejects_bad_tokens() {
        let cfg = tiny_cfg();
        let model = random_model(&cfg, 4).unwrap();
        assert!(matches!(
            model_forward(&model, &[0, 1, 2, 11]),
            Err(Error::TokenOutOfRange { token: 11, .. })
        ));
        assert!(model_forward(&model, &[0, 1]).is_err());
    }

    #[test]
    fn zero_layer_model_rejected_at_construction() {
        let cfg = ModelConfig {
            num_layers: 0,
            ..tiny_cfg()
        };
        assert!(random_model(&cfg, 0).is_err());
    }

    /// Brute-force oracle: walk the cost dictionary with explicit loop
    /// counting instead of closed-form products.
    fn count_flops_by_enumeration(cfg: &ModelConfig) -> u64 {
        let (l, d, f, h, v) = (
            cfg.seq_len,
            cfg.d_model,
            cfg.d_ffn,
            cfg.num_heads,
            cfg.vocab_size,
        );
        let mut per_layer = 0u64;
        // four d x d projections
        for _ in 0..4 {
            for _ in 0..l {
                for _ in 0..d {
                    per_layer += 2 * d as u64;
                }
            }
        }
        // feed-forward in and out
        for _ in 0..l {
            for _ in 0..f {
                per_layer += 2 * d as u64;
            }
            for _ in 0..d {
                per_layer += 2 * f as u64;
            }
        }
        // per head: scores, scale, mask, softmax, values
        let head_dim = d / h;
        for _ in 0..h {
            for _ in 0..l {
                for _ in 0..l {
                    per_layer += 2 * head_dim as u64; // scores matmul
                    per_layer += 1; // scale
                    per_layer += 1; // mask add
                    per_layer += 4; // softmax: shift, exp, accumulate, divide
                    per_layer += 2 * head_dim as u64; // values matmul
                }
            }
        }
        // biases and activation
        per_layer += (l * f) as u64; // b_m
        per_layer += (l * f) as u64; // relu
        per_layer += (l * d) as u64; // b_n
        // two add-norms
        for _ in 0..2 {
            for _ in 0..l {
                per_layer += d as u64; // residual add
                per_layer += d as u64 + 1; // mean
                per_layer += 3 * d as u64 + 3; // variance, eps, sqrt
                per_layer += 4 * d as u64; // normalize, scale, shift
            }
        }
        let vocab_proj = 2 * (l * v * d) as u64;
        cfg.num_layers as u64 * per_layer + 2 * vocab_proj
    }

    #[test]
    fn flops_closed_form_matches_enumeration() {
        for cfg in [
            tiny_cfg(),
            ModelConfig {
                num_layers: 1,
                d_model: 1,
                num_heads: 1,
                d_ffn: 1,
                seq_len: 1,
                vocab_size: 1,
                causal: true,
                auth_position: 0, // not validated by the counter
            },
            ModelConfig {
                num_layers: 3,
                d_model: 4,
                num_heads: 4,
                d_ffn: 7,
                seq_len: 5,
                vocab_size: 13,
                causal: false,
                auth_position: 1,
            },
        ] {
            assert_eq!(count_flops(&cfg).total, count_flops_by_enumeration(&cfg));
        }
    }

    #[test]
    fn flops_scaling_in_sequence_length() {
        let cfg = tiny_cfg();
        let double = ModelConfig {
            seq_len: cfg.seq_len * 2,
            ..cfg
        };
        let a = count_flops(&cfg);
        let b = count_flops(&double);
        assert_eq!(b.per_layer_qkvo_matmul, 2 * a.per_layer_qkvo_matmul);
        assert_eq!(b.per_layer_ffn_matmul, 2 * a.per_layer_ffn_matmul);
        assert_eq!(
            b.per_layer_attention_quadratic,
            4 * a.per_layer_attention_quadratic
        );
    }

    #[test]
    fn flops_monotone_in_every_field() {
        let base = tiny_cfg();
        let total = count_flops(&base).total;
        for bump in [
            ModelConfig { num_layers: 3, ..base },
            ModelConfig { d_model: 16, ..base },
            ModelConfig { num_heads: 4, ..base },
            ModelConfig { d_ffn: 17, ..base },
            ModelConfig { seq_len: 5, ..base },
            ModelConfig { vocab_size: 12, ..base },
        ] {
            assert!(count_flops(&bump).total > total);
        }
    }

    #[test]
    fn flops_total_near_published_large_model_count() {
        // 32 layers at d=4096 with a 14336-wide FFN and 128 context: the
        // counted total must land within 10% of 1.92e12
        let cfg = ModelConfig {
            num_layers: 32,
            d_model: 4096,
            num_heads: 32,
            d_ffn: 14336,
            seq_len: 128,
            vocab_size: 128_256,
            causal: true,
            auth_position: 16,
        };
        let total = count_flops(&cfg).total as f64;
        let anchor = 1.92e12;
        assert!(
            (total - anchor).abs() / anchor < 0.10,
            "total {total:.3e} not within 10% of {anchor:.3e}"
        );
    }
}
