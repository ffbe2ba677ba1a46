//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix or vector operation received incompatible dimensions.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {stage}{}", layer.map(|l| format!(" (layer {l})")).unwrap_or_default())]
    NonFinite {
        layer: Option<usize>,
        stage: &'static str,
    },

    /// An index array does not describe a bijection.
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    /// A model configuration violates its invariants.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("token {token} at position {position} out of range (vocab size {vocab})")]
    TokenOutOfRange {
        position: usize,
        token: usize,
        vocab: usize,
    },

    /// The pad queue is empty; a pad is never reused.
    #[error("pad queue exhausted: precompute pads before encrypting")]
    PadExhausted,

    /// Boundary operations were called out of protocol order.
    #[error("protocol order violation: {0}")]
    ProtocolOrder(&'static str),

    /// A locked model failed an equivalence identity.
    #[error("verification failed at layer {layer}, line {line}: max relative error {max_rel_err:.3e}")]
    VerificationFailed {
        layer: usize,
        line: &'static str,
        max_rel_err: f32,
    },

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("insufficient traces: need at least {needed}, got {got}")]
    InsufficientTraces { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("file truncated at offset {offset}")]
    Truncated { offset: u64 },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    /// A sealed key file does not match the checkpoint it was paired with.
    #[error("key/model mismatch: {0}")]
    KeyModelMismatch(String),
}

impl Error {
    /// Attach a layer index to a numeric error raised inside a layer forward.
    pub(crate) fn with_layer(self, layer: usize) -> Self {
        match self {
            Error::NonFinite { stage, .. } => Error::NonFinite {
                layer: Some(layer),
                stage,
            },
            other => other,
        }
    }
}
