//! Transformer encoders, the single/dual stance classifiers built on them,
//! partial freezing and checkpointing.

mod config;
mod encoder;
pub mod layers;
mod params;
mod ws_bert;

pub use config::{EncoderConfig, EncoderSpec, LayerSelection, ModelConfig, Precision, ResolvedEncoder};
pub use encoder::{Pooling, StreamTensors, TransformerEncoder};
pub use layers::Forward;
pub use params::{child_rng, ParamStore, Snapshot};
pub use ws_bert::{loss, ModelBatch, StanceLogits, WsBert};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("tensor: {0}")]
    Candle(#[from] candle_core::Error),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cannot finetune top {requested} of {depth} layers")]
    InvalidLayerCount { requested: usize, depth: usize },
    #[error("variant mismatch: {0}")]
    VariantMismatch(String),
    #[error("label {label} out of range for {num_labels} classes")]
    LabelOutOfRange { label: usize, num_labels: usize },
    #[error("model config: {0}")]
    Config(String),
    #[error("missing weight {0}")]
    MissingWeight(String),
    #[error(transparent)]
    Encoding(#[from] crate::encoding::EncodingError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
