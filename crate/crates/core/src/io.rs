//! Bit-exact serialization of models, locked models, and sealed keys.
//!
//! Checkpoints carry magic `CGRD`, a version, a fixed config block, a named
//! tensor directory, and a row-major little-endian f32 payload. Sealed key
//! files carry magic `CGKY`, both permutation index arrays, and the pad
//! stream seed. Byte layouts are documented in `docs/formats.md`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, PermutationKey};
use crate::locking::{AuthBlockPublic, LockKeys, LockedModel};
use crate::transformer::{Model, ModelConfig, TransformerLayerWeights};

const CKPT_MAGIC: &[u8; 4] = b"CGRD";
const KEY_MAGIC: &[u8; 4] = b"CGKY";
const CKPT_VERSION: u16 = 1;
const KEY_VERSION: u16 = 1;

const KIND_PLAIN: u8 = 0;
const KIND_LOCKED: u8 = 1;

#[derive(Debug, Clone)]
pub enum Checkpoint {
    Plain(Model),
    Locked(LockedModel),
}

impl Checkpoint {
    pub fn config(&self) -> &ModelConfig {
        match self {
            Checkpoint::Plain(m) => &m.config,
            Checkpoint::Locked(m) => &m.config,
        }
    }
}

// ---------------------------------------------------------------------------
// writers
// ---------------------------------------------------------------------------

struct TensorRef<'a> {
    name: String,
    rows: usize,
    cols: usize,
    data: TensorData<'a>,
}

enum TensorData<'a> {
    Mat(&'a Matrix),
    Vec(&'a [f32]),
}

fn layer_tensors<'a>(prefix: &str, w: &'a TransformerLayerWeights, out: &mut Vec<TensorRef<'a>>) {
    let mat = |name: &str, m: &'a Matrix| TensorRef {
        name: format!("{prefix}.{name}"),
        rows: m.rows(),
        cols: m.cols(),
        data: TensorData::Mat(m),
    };
    let vec = |name: &str, v: &'a [f32]| TensorRef {
        name: format!("{prefix}.{name}"),
        rows: 1,
        cols: v.len(),
        data: TensorData::Vec(v),
    };
    out.push(mat("w_q", &w.w_q));
    out.push(mat("w_k", &w.w_k));
    out.push(mat("w_v", &w.w_v));
    out.push(mat("w_o", &w.w_o));
    out.push(vec("gamma1", &w.gamma1));
    out.push(vec("beta1", &w.beta1));
    out.push(mat("w_m", &w.w_m));
    out.push(vec("b_m", &w.b_m));
    out.push(mat("w_n", &w.w_n));
    out.push(vec("b_n", &w.b_n));
    out.push(vec("gamma2", &w.gamma2));
    out.push(vec("beta2", &w.beta2));
}

fn write_checkpoint(path: &Path, cfg: &ModelConfig, kind: u8, tensors: &[TensorRef]) -> Result<()> {
    if tensors.is_empty() {
        return Err(Error::Format("refusing to write an empty tensor directory".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    w.write_all(&[kind])?;
    for v in [
        cfg.num_layers,
        cfg.d_model,
        cfg.num_heads,
        cfg.d_ffn,
        cfg.seq_len,
        cfg.vocab_size,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&[cfg.causal as u8])?;
    w.write_all(&(cfg.auth_position as u32).to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;

    // directory size is known up front, so payload offsets are absolute
    let header_len: u64 = 4 + 2 + 1 + 6 * 4 + 1 + 4 + 4;
    let dir_len: u64 = tensors
        .iter()
        .map(|t| 2 + t.name.len() as u64 + 4 + 4 + 8 + 8)
        .sum();
    let mut offset = header_len + dir_len;
    for t in tensors {
        let name = t.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(t.rows as u32).to_le_bytes())?;
        w.write_all(&(t.cols as u32).to_le_bytes())?;
        w.write_all(&offset.to_le_bytes())?;
        let len = (t.rows * t.cols * 4) as u64;
        w.write_all(&len.to_le_bytes())?;
        offset += len;
    }
    for t in tensors {
        match t.data {
            TensorData::Mat(m) => {
                for v in m.data() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            TensorData::Vec(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let mut tensors = Vec::new();
    tensors.push(TensorRef {
        name: "embedding".into(),
        rows: model.embedding.rows(),
        cols: model.embedding.cols(),
        data: TensorData::Mat(&model.embedding),
    });
    for (i, layer) in model.layers.iter().enumerate() {
        layer_tensors(&format!("layers.{i}"), layer, &mut tensors);
    }
    tensors.push(TensorRef {
        name: "output_head".into(),
        rows: model.output_head.rows(),
        cols: model.output_head.cols(),
        data: TensorData::Mat(&model.output_head),
    });
    write_checkpoint(path.as_ref(), &model.config, KIND_PLAIN, &tensors)
}

pub fn save_locked_model(path: impl AsRef<Path>, model: &LockedModel) -> Result<()> {
    let mut tensors = Vec::new();
    tensors.push(TensorRef {
        name: "embedding".into(),
        rows: model.embedding.rows(),
        cols: model.embedding.cols(),
        data: TensorData::Mat(&model.embedding),
    });
    for (i, layer) in model.front_layers.iter().enumerate() {
        layer_tensors(&format!("front.{i}"), layer, &mut tensors);
    }
    layer_tensors("auth", &model.auth_block.weights, &mut tensors);
    for (i, layer) in model.rear_layers.iter().enumerate() {
        layer_tensors(&format!("rear.{i}"), layer, &mut tensors);
    }
    tensors.push(TensorRef {
        name: "output_head_locked".into(),
        rows: model.output_head_locked.rows(),
        cols: model.output_head_locked.cols(),
        data: TensorData::Mat(&model.output_head_locked),
    });
    write_checkpoint(path.as_ref(), &model.config, KIND_LOCKED, &tensors)
}

// ---------------------------------------------------------------------------
// readers
// ---------------------------------------------------------------------------

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn new(inner: R) -> Self {
        Reader { inner, offset: 0 }
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Truncated { offset: self.offset })?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }

    fn name(&mut self, len: usize) -> Result<String> {
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Truncated { offset: self.offset })?;
        self.offset += len as u64;
        String::from_utf8(buf).map_err(|_| Error::Format("tensor name is not utf-8".into()))
    }
}

struct DirEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: u64,
    len: u64,
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let file = File::open(path.as_ref())?;
    let file_len = file.metadata()?.len();
    let mut r = Reader::new(BufReader::new(file));

    if &r.bytes::<4>()? != CKPT_MAGIC {
        return Err(Error::Format("missing checkpoint magic".into()));
    }
    let version = r.u16()?;
    if version != CKPT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CKPT_VERSION,
        });
    }
    let kind = r.u8()?;
    let cfg = ModelConfig {
        num_layers: r.u32()? as usize,
        d_model: r.u32()? as usize,
        num_heads: r.u32()? as usize,
        d_ffn: r.u32()? as usize,
        seq_len: r.u32()? as usize,
        vocab_size: r.u32()? as usize,
        causal: r.u8()? != 0,
        auth_position: r.u32()? as usize,
    };
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(Error::Format("empty tensor directory".into()));
    }

    let mut directory = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = r.name(name_len)?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let offset = r.u64()?;
        let len = r.u64()?;
        if len != (rows * cols * 4) as u64 {
            return Err(Error::Format(format!(
                "tensor `{name}`: payload length {len} does not match {rows}x{cols}"
            )));
        }
        directory.push(DirEntry {
            name,
            rows,
            cols,
            offset,
            len,
        });
    }

    // offsets must be in bounds, non-overlapping, and ordered
    let mut cursor = r.offset;
    for e in &directory {
        if e.offset < cursor {
            return Err(Error::Format(format!(
                "tensor `{}` overlaps the previous entry",
                e.name
            )));
        }
        if e.offset + e.len > file_len {
            return Err(Error::Truncated { offset: e.offset });
        }
        cursor = e.offset + e.len;
    }

    let mut file = r.inner.into_inner();
    let mut tensors = Vec::with_capacity(count);
    for e in &directory {
        file.seek(SeekFrom::Start(e.offset))?;
        let mut r = Reader::new(BufReader::new(&mut file));
        r.offset = e.offset;
        let mut data = Vec::with_capacity(e.rows * e.cols);
        for _ in 0..e.rows * e.cols {
            data.push(r.f32()?);
        }
        let m = Matrix::from_vec(e.rows, e.cols, data)
            .map_err(|err| Error::Format(format!("tensor `{}`: {err}", e.name)))?;
        tensors.push((e.name.clone(), m));
    }

    let take = |name: &str| -> Result<Matrix> {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))
    };
    let take_vec = |name: &str| -> Result<Vec<f32>> { Ok(take(name)?.data().to_vec()) };
    let take_layer = |prefix: &str| -> Result<TransformerLayerWeights> {
        Ok(TransformerLayerWeights {
            w_q: take(&format!("{prefix}.w_q"))?,
            w_k: take(&format!("{prefix}.w_k"))?,
            w_v: take(&format!("{prefix}.w_v"))?,
            w_o: take(&format!("{prefix}.w_o"))?,
            gamma1: take_vec(&format!("{prefix}.gamma1"))?,
            beta1: take_vec(&format!("{prefix}.beta1"))?,
            w_m: take(&format!("{prefix}.w_m"))?,
            b_m: take_vec(&format!("{prefix}.b_m"))?,
            w_n: take(&format!("{prefix}.w_n"))?,
            b_n: take_vec(&format!("{prefix}.b_n"))?,
            gamma2: take_vec(&format!("{prefix}.gamma2"))?,
            beta2: take_vec(&format!("{prefix}.beta2"))?,
        })
    };

    match kind {
        KIND_PLAIN => {
            let embedding = take("embedding")?;
            let mut layers = Vec::with_capacity(cfg.num_layers);
            for i in 0..cfg.num_layers {
                layers.push(take_layer(&format!("layers.{i}"))?);
            }
            let output_head = take("output_head")?;
            Ok(Checkpoint::Plain(
                Model::new(cfg, embedding, layers, output_head)
                    .map_err(|e| Error::Format(format!("inconsistent checkpoint: {e}")))?,
            ))
        }
        KIND_LOCKED => {
            cfg.validate()
                .map_err(|e| Error::Format(format!("inconsistent checkpoint: {e}")))?;
            let embedding = take("embedding")?;
            let l0 = cfg.auth_position;
            let mut front_layers = Vec::with_capacity(l0 - 1);
            for i in 0..l0 - 1 {
                front_layers.push(take_layer(&format!("front.{i}"))?);
            }
            let auth_block = AuthBlockPublic {
                weights: take_layer("auth")?,
            };
            let mut rear_layers = Vec::with_capacity(cfg.num_layers - l0);
            for i in 0..cfg.num_layers - l0 {
                rear_layers.push(take_layer(&format!("rear.{i}"))?);
            }
            let output_head_locked = take("output_head_locked")?;
            Ok(Checkpoint::Locked(LockedModel {
                config: cfg,
                embedding,
                front_layers,
                auth_block,
                rear_layers,
                output_head_locked,
            }))
        }
        other => Err(Error::Format(format!("unknown checkpoint kind {other}"))),
    }
}

// ---------------------------------------------------------------------------
// sealed keys
// ---------------------------------------------------------------------------

pub fn save_keys(path: impl AsRef<Path>, keys: &LockKeys, pad_seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(KEY_MAGIC)?;
    w.write_all(&KEY_VERSION.to_le_bytes())?;
    w.write_all(&(keys.pi.size() as u32).to_le_bytes())?;
    w.write_all(&(keys.pi_enc.size() as u32).to_le_bytes())?;
    for &i in keys.pi.forward() {
        w.write_all(&(i as u32).to_le_bytes())?;
    }
    for &i in keys.pi_enc.forward() {
        w.write_all(&(i as u32).to_le_bytes())?;
    }
    w.write_all(&pad_seed.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load_keys(path: impl AsRef<Path>) -> Result<(LockKeys, u64)> {
    let mut r = Reader::new(BufReader::new(File::open(path.as_ref())?));
    if &r.bytes::<4>()? != KEY_MAGIC {
        return Err(Error::Format("missing key magic".into()));
    }
    let version = r.u16()?;
    if version != KEY_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: KEY_VERSION,
        });
    }
    let d = r.u32()? as usize;
    let f = r.u32()? as usize;
    let mut read_key = |n: usize| -> Result<PermutationKey> {
        let mut forward = Vec::with_capacity(n);
        for _ in 0..n {
            forward.push(r.u32()? as usize);
        }
        PermutationKey::from_forward(forward)
    };
    let pi = read_key(d)?;
    let pi_enc = read_key(f)?;
    let pad_seed = r.u64()?;
    Ok((LockKeys { pi, pi_enc }, pad_seed))
}

/// Loads a locked checkpoint together with its sealed key file and
/// cross-validates the widths.
pub fn load_locked_pair(
    ckpt_path: impl AsRef<Path>,
    key_path: impl AsRef<Path>,
) -> Result<(LockedModel, LockKeys, u64)> {
    let locked = match load_checkpoint(ckpt_path)? {
        Checkpoint::Locked(m) => m,
        Checkpoint::Plain(_) => {
            return Err(Error::KeyModelMismatch(
                "checkpoint holds a plain model, not a locked one".into(),
            ))
        }
    };
    let (keys, pad_seed) = load_keys(key_path)?;
    if keys.pi.size() != locked.config.d_model || keys.pi_enc.size() != locked.config.d_ffn {
        return Err(Error::KeyModelMismatch(format!(
            "key widths ({}, {}) vs checkpoint ({}, {})",
            keys.pi.size(),
            keys.pi_enc.size(),
            locked.config.d_model,
            locked.config.d_ffn
        )));
    }
    Ok((locked, keys, pad_seed))
}
