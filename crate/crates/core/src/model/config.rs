use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;
use crate::encoding::{ByteTokenizer, SpecialStyle, TokenizerSpec, Variant};

/// Shape of one transformer encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    /// Usable positions, excluding any position-id offset.
    pub max_positions: usize,
    pub type_vocab_size: usize,
    pub layer_norm_eps: f64,
    /// First position id (RoBERTa-style checkpoints start after the padding index).
    pub position_offset: usize,
    pub hidden_dropout: f64,
    pub attention_dropout: f64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.hidden_size == 0 || self.num_heads == 0 || !self.hidden_size.is_multiple_of(self.num_heads) {
            return err(format!("hidden size {} not divisible into {} heads", self.hidden_size, self.num_heads));
        }
        if self.num_layers == 0 || self.vocab_size == 0 || self.max_positions == 0 || self.intermediate_size == 0 {
            return err("encoder dimensions must be positive".into());
        }
        if self.type_vocab_size == 0 {
            return err("type vocabulary must be non-empty".into());
        }
        for p in [self.hidden_dropout, self.attention_dropout] {
            if !(0.0..1.0).contains(&p) {
                return err(format!("dropout {p} outside [0, 1)"));
            }
        }
        Ok(())
    }

    /// Reads a Hugging Face `config.json` for a BERT or RoBERTa-family encoder.
    pub fn from_hf_config(path: &Path) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Hf {
            model_type: Option<String>,
            vocab_size: usize,
            hidden_size: usize,
            num_hidden_layers: usize,
            num_attention_heads: usize,
            intermediate_size: usize,
            max_position_embeddings: usize,
            #[serde(default = "one")]
            type_vocab_size: usize,
            #[serde(default = "eps")]
            layer_norm_eps: f64,
            pad_token_id: Option<usize>,
            hidden_act: Option<String>,
            #[serde(default = "dropout")]
            hidden_dropout_prob: f64,
            #[serde(default = "dropout")]
            attention_probs_dropout_prob: f64,
        }
        fn one() -> usize {
            1
        }
        fn eps() -> f64 {
            1e-12
        }
        fn dropout() -> f64 {
            0.1
        }
        let text = fs::read_to_string(path).map_err(|e| ModelError::Io(path.display().to_string(), e))?;
        let hf: Hf = serde_json::from_str(&text).map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))?;
        if let Some(act) = &hf.hidden_act {
            if act != "gelu" {
                return Err(ModelError::Config(format!("unsupported activation {act:?}")));
            }
        }
        let roberta_like = matches!(hf.model_type.as_deref(), Some("roberta" | "bertweet" | "xlm-roberta" | "camembert"));
        let position_offset = if roberta_like { hf.pad_token_id.unwrap_or(1) + 1 } else { 0 };
        let cfg = Self {
            vocab_size: hf.vocab_size,
            hidden_size: hf.hidden_size,
            num_layers: hf.num_hidden_layers,
            num_heads: hf.num_attention_heads,
            intermediate_size: hf.intermediate_size,
            max_positions: hf.max_position_embeddings.saturating_sub(position_offset),
            type_vocab_size: hf.type_vocab_size,
            layer_norm_eps: hf.layer_norm_eps,
            position_offset,
            hidden_dropout: hf.hidden_dropout_prob,
            attention_dropout: hf.attention_probs_dropout_prob,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Which encoder to build: a small randomly initialized one with a byte
/// tokenizer, or a pretrained checkpoint directory holding `config.json`,
/// `model.safetensors` and `tokenizer.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    Miniature {
        layers: usize,
        hidden: usize,
        heads: usize,
        #[serde(default)]
        intermediate: Option<usize>,
        #[serde(default = "default_mini_positions")]
        max_positions: usize,
        #[serde(default = "default_style")]
        style: SpecialStyle,
        #[serde(default = "default_dropout")]
        dropout: f64,
    },
    Pretrained {
        dir: PathBuf,
    },
}

fn default_mini_positions() -> usize {
    512
}

fn default_style() -> SpecialStyle {
    SpecialStyle::Bert
}

fn default_dropout() -> f64 {
    0.1
}

impl EncoderSpec {
    pub fn miniature(layers: usize, hidden: usize, heads: usize) -> Self {
        EncoderSpec::Miniature {
            layers,
            hidden,
            heads,
            intermediate: None,
            max_positions: default_mini_positions(),
            style: SpecialStyle::Bert,
            dropout: default_dropout(),
        }
    }

    /// Checkpoint identifier recorded in run provenance.
    pub fn id(&self) -> String {
        match self {
            EncoderSpec::Miniature { layers, hidden, heads, .. } => format!("miniature:{layers}x{hidden}/{heads}h"),
            EncoderSpec::Pretrained { dir } => dir.display().to_string(),
        }
    }

    pub fn map_paths(&self, f: impl Fn(&PathBuf) -> PathBuf) -> Self {
        match self {
            EncoderSpec::Pretrained { dir } => EncoderSpec::Pretrained { dir: f(dir) },
            other => other.clone(),
        }
    }

    /// Resolves shape, tokenizer and weight location.
    pub fn resolve(&self) -> Result<ResolvedEncoder, ModelError> {
        match self {
            EncoderSpec::Miniature { layers, hidden, heads, intermediate, max_positions, style, dropout } => {
                let config = EncoderConfig {
                    vocab_size: ByteTokenizer::VOCAB_SIZE,
                    hidden_size: *hidden,
                    num_layers: *layers,
                    num_heads: *heads,
                    intermediate_size: intermediate.unwrap_or(hidden * 4),
                    max_positions: *max_positions,
                    type_vocab_size: 2,
                    layer_norm_eps: 1e-12,
                    position_offset: 0,
                    hidden_dropout: *dropout,
                    attention_dropout: *dropout,
                };
                config.validate()?;
                Ok(ResolvedEncoder { id: self.id(), config, tokenizer: TokenizerSpec::Bytes { style: *style }, weights: None })
            }
            EncoderSpec::Pretrained { dir } => {
                let config = EncoderConfig::from_hf_config(&dir.join("config.json"))?;
                let weights = dir.join("model.safetensors");
                if !weights.is_file() {
                    return Err(ModelError::Config(format!("{} not found", weights.display())));
                }
                let tokenizer = dir.join("tokenizer.json");
                if !tokenizer.is_file() {
                    return Err(ModelError::Config(format!("{} not found", tokenizer.display())));
                }
                Ok(ResolvedEncoder {
                    id: self.id(),
                    config,
                    tokenizer: TokenizerSpec::File { path: tokenizer },
                    weights: Some(weights),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedEncoder {
    pub id: String,
    pub config: EncoderConfig,
    pub tokenizer: TokenizerSpec,
    /// Pretrained weights to load after initialization.
    pub weights: Option<PathBuf>,
}

/// How many top layers of the knowledge encoder are finetuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LayerSelection {
    Top(usize),
    #[default]
    All,
}

impl fmt::Display for LayerSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelection::Top(k) => write!(f, "{k}"),
            LayerSelection::All => f.write_str("all"),
        }
    }
}

impl Serialize for LayerSelection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LayerSelection::Top(k) => s.serialize_u64(*k as u64),
            LayerSelection::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for LayerSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(k) => Ok(LayerSelection::Top(k as usize)),
            Raw::S(s) if s == "all" => Ok(LayerSelection::All),
            Raw::S(s) => Err(serde::de::Error::custom(format!("expected a layer count or \"all\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> candle_core::DType {
        match self {
            Precision::F32 => candle_core::DType::F32,
            Precision::F64 => candle_core::DType::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub pair_encoder: EncoderSpec,
    /// Dual variant only.
    #[serde(default)]
    pub knowledge_encoder: Option<EncoderSpec>,
    pub num_labels: usize,
    #[serde(default)]
    pub wiki_finetune_top_layers: LayerSelection,
    #[serde(default = "default_dropout")]
    pub head_dropout: f64,
    #[serde(default)]
    pub precision: Precision,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        match (self.variant, &self.knowledge_encoder) {
            (Variant::Single, Some(_)) => {
                return Err(ModelError::Config("single variant takes no knowledge encoder".into()))
            }
            (Variant::Dual, None) => return Err(ModelError::Config("dual variant needs a knowledge encoder".into())),
            _ => {}
        }
        if !(2..=3).contains(&self.num_labels) {
            return Err(ModelError::Config(format!("num_labels must be 2 or 3, got {}", self.num_labels)));
        }
        if self.wiki_finetune_top_layers == LayerSelection::Top(0) {
            return Err(ModelError::InvalidLayerCount { requested: 0, depth: 0 });
        }
        if !(0.0..1.0).contains(&self.head_dropout) {
            return Err(ModelError::Config(format!("head dropout {} outside [0, 1)", self.head_dropout)));
        }
        Ok(())
    }
}
