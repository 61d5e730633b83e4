use candle_core::{Device, Tensor, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{mask_bias, param, softmax_last, Forward, LayerNorm, Linear};
use super::{EncoderConfig, ModelError, ParamStore};
use crate::encoding::StreamBatch;

const INIT_STD: f64 = 0.02;

/// How the sentence representation is read off the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// `tanh(W · h_cls + b)` over the final-layer first-token state.
    Pooler,
    /// The final-layer first-token state as is.
    ClsState,
}

/// Token, segment and mask tensors for one stream of a batch.
#[derive(Debug, Clone)]
pub struct StreamTensors {
    pub ids: Tensor,
    pub type_ids: Tensor,
    pub mask_bias: Tensor,
    pub batch: usize,
    pub len: usize,
}

impl StreamTensors {
    pub fn new(b: &StreamBatch, dtype: candle_core::DType, device: &Device) -> Result<Self, ModelError> {
        Ok(Self {
            ids: Tensor::from_slice(&b.ids, (b.batch, b.len), device)?,
            type_ids: Tensor::from_slice(&b.type_ids, (b.batch, b.len), device)?,
            mask_bias: mask_bias(&b.mask, b.batch, b.len, dtype, device)?,
            batch: b.batch,
            len: b.len,
        })
    }
}

#[derive(Debug)]
struct Embeddings {
    word: Var,
    position: Var,
    token_type: Var,
    norm: LayerNorm,
}

#[derive(Debug)]
struct EncoderLayer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    intermediate: Linear,
    output: Linear,
    out_norm: LayerNorm,
}

/// BERT-style transformer encoder. Parameter names follow the Hugging Face
/// layout under `prefix` so pretrained checkpoints load by name.
#[derive(Debug)]
pub struct TransformerEncoder {
    config: EncoderConfig,
    prefix: String,
    embeddings: Embeddings,
    layers: Vec<EncoderLayer>,
    pooler: Option<Linear>,
    embeddings_frozen: bool,
    layer_frozen: Vec<bool>,
}

impl TransformerEncoder {
    /// Registers all parameters in `store` under `prefix` (which should end
    /// in `.`), drawing initial values from `rng`.
    pub fn new(
        config: &EncoderConfig,
        prefix: &str,
        with_pooler: bool,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let h = config.hidden_size;
        let p = |s: &str| format!("{prefix}{s}");
        let embeddings = Embeddings {
            word: store.normal(&p("embeddings.word_embeddings.weight"), &[config.vocab_size, h], INIT_STD, rng)?,
            position: store.normal(
                &p("embeddings.position_embeddings.weight"),
                &[config.max_positions + config.position_offset, h],
                INIT_STD,
                rng,
            )?,
            token_type: store.normal(&p("embeddings.token_type_embeddings.weight"), &[config.type_vocab_size, h], INIT_STD, rng)?,
            norm: LayerNorm::new(store, &p("embeddings.LayerNorm"), h, config.layer_norm_eps)?,
        };
        let mut layers = Vec::with_capacity(config.num_layers);
        for i in 0..config.num_layers {
            let l = |s: &str| p(&format!("encoder.layer.{i}.{s}"));
            layers.push(EncoderLayer {
                query: Linear::new(store, &l("attention.self.query"), h, h, INIT_STD, rng)?,
                key: Linear::new(store, &l("attention.self.key"), h, h, INIT_STD, rng)?,
                value: Linear::new(store, &l("attention.self.value"), h, h, INIT_STD, rng)?,
                attn_out: Linear::new(store, &l("attention.output.dense"), h, h, INIT_STD, rng)?,
                attn_norm: LayerNorm::new(store, &l("attention.output.LayerNorm"), h, config.layer_norm_eps)?,
                intermediate: Linear::new(store, &l("intermediate.dense"), h, config.intermediate_size, INIT_STD, rng)?,
                output: Linear::new(store, &l("output.dense"), config.intermediate_size, h, INIT_STD, rng)?,
                out_norm: LayerNorm::new(store, &l("output.LayerNorm"), h, config.layer_norm_eps)?,
            });
        }
        let pooler = if with_pooler { Some(Linear::new(store, &p("pooler.dense"), h, h, INIT_STD, rng)?) } else { None };
        Ok(Self {
            config: config.clone(),
            prefix: prefix.to_string(),
            embeddings,
            layers,
            pooler,
            embeddings_frozen: false,
            layer_frozen: vec![false; config.num_layers],
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn pooling(&self) -> Pooling {
        if self.pooler.is_some() {
            Pooling::Pooler
        } else {
            Pooling::ClsState
        }
    }

    /// Freezes the embeddings and every layer below the top `trainable`
    /// ones; `None` unfreezes everything. The pooler stays trainable.
    pub fn freeze_below_top(&mut self, trainable: Option<usize>) -> Result<(), ModelError> {
        match trainable {
            None => {
                self.embeddings_frozen = false;
                self.layer_frozen.iter_mut().for_each(|f| *f = false);
            }
            Some(k) => {
                let depth = self.depth();
                if k == 0 || k > depth {
                    return Err(ModelError::InvalidLayerCount { requested: k, depth });
                }
                self.embeddings_frozen = true;
                for (i, f) in self.layer_frozen.iter_mut().enumerate() {
                    *f = i < depth - k;
                }
            }
        }
        Ok(())
    }

    /// Name prefixes of the parameter groups that are currently frozen.
    pub fn frozen_prefixes(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.embeddings_frozen {
            out.push(format!("{}embeddings.", self.prefix));
        }
        for (i, &f) in self.layer_frozen.iter().enumerate() {
            if f {
                out.push(format!("{}encoder.layer.{i}.", self.prefix));
            }
        }
        out
    }

    /// Name prefix of transformer layer `i` (0-based, bottom first).
    pub fn layer_prefix(&self, i: usize) -> String {
        format!("{}encoder.layer.{i}.", self.prefix)
    }

    /// Sentence representation `(batch, hidden)`.
    pub fn forward(&self, s: &StreamTensors, fwd: &mut Forward) -> Result<Tensor, ModelError> {
        if s.len > self.config.max_positions {
            return Err(ModelError::ShapeMismatch(format!(
                "stream of {} tokens exceeds {} positions",
                s.len, self.config.max_positions
            )));
        }
        let cfg = &self.config;
        let h = cfg.hidden_size;
        let (b, l) = (s.batch, s.len);
        let device = s.ids.device();

        let frozen = self.embeddings_frozen;
        let e = &self.embeddings;
        let words = param(&e.word, frozen).index_select(&s.ids.flatten_all()?, 0)?.reshape((b, l, h))?;
        let types = param(&e.token_type, frozen).index_select(&s.type_ids.flatten_all()?, 0)?.reshape((b, l, h))?;
        let pos_ids = Tensor::arange(cfg.position_offset as u32, (cfg.position_offset + l) as u32, device)?;
        let positions = param(&e.position, frozen).index_select(&pos_ids, 0)?;
        let x = (words + types)?.broadcast_add(&positions)?;
        let x = e.norm.forward(&x, frozen)?;
        let mut x = fwd.dropout(&x, cfg.hidden_dropout)?;

        let heads = cfg.num_heads;
        let head_dim = h / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        for (layer, &frozen) in self.layers.iter().zip(&self.layer_frozen) {
            let split = |t: Tensor| -> Result<Tensor, ModelError> {
                Ok(t.reshape((b, l, heads, head_dim))?.transpose(1, 2)?.contiguous()?)
            };
            let q = split(layer.query.forward(&x, frozen)?)?;
            let k = split(layer.key.forward(&x, frozen)?)?;
            let v = split(layer.value.forward(&x, frozen)?)?;
            let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?.broadcast_add(&s.mask_bias)?;
            let probs = fwd.dropout(&softmax_last(&scores)?, cfg.attention_dropout)?;
            let ctx = probs.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, l, h))?;
            let attn = fwd.dropout(&layer.attn_out.forward(&ctx, frozen)?, cfg.hidden_dropout)?;
            let x1 = layer.attn_norm.forward(&(attn + &x)?, frozen)?;
            let inner = layer.intermediate.forward(&x1, frozen)?.gelu_erf()?;
            let out = fwd.dropout(&layer.output.forward(&inner, frozen)?, cfg.hidden_dropout)?;
            x = layer.out_norm.forward(&(out + x1)?, frozen)?;
        }

        let cls = x.narrow(1, 0, 1)?.squeeze(1)?;
        match &self.pooler {
            Some(dense) => Ok(dense.forward(&cls, false)?.tanh()?),
            None => Ok(cls),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{collate, ByteTokenizer, InputEncoder};
    use crate::model::EncoderSpec;
    use candle_core::DType;
    use rand::SeedableRng;
    use std::sync::Arc;

    fn tiny() -> (TransformerEncoder, ParamStore) {
        let cfg = EncoderSpec::miniature(2, 16, 2).resolve().unwrap().config;
        let mut store = ParamStore::new(DType::F64, Device::Cpu);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let enc = TransformerEncoder::new(&cfg, "enc.", true, &mut store, &mut rng).unwrap();
        (enc, store)
    }

    fn batch(texts: &[&str]) -> StreamTensors {
        let enc = InputEncoder::single(Arc::new(ByteTokenizer::default()), 512);
        let xs: Vec<_> = texts.iter().map(|t| enc.encode(t, "tgt", "know").unwrap()).collect();
        let refs: Vec<_> = xs.iter().collect();
        StreamTensors::new(&collate(&refs, 0, ByteTokenizer::PAD), DType::F64, &Device::Cpu).unwrap()
    }

    #[test]
    fn output_shape_and_padding_invariance() {
        let (enc, _) = tiny();
        let alone = enc.forward(&batch(&["short"]), &mut Forward::eval()).unwrap();
        assert_eq!(alone.dims(), &[1, 16]);
        let padded = enc.forward(&batch(&["short", "a much longer document here"]), &mut Forward::eval()).unwrap();
        let a = alone.to_vec2::<f64>().unwrap();
        let p = padded.to_vec2::<f64>().unwrap();
        for (x, y) in a[0].iter().zip(&p[0]) {
            assert!((x - y).abs() < 1e-12, "padding leaked into the representation");
        }
    }

    #[test]
    fn freezing_layers() {
        let (mut enc, store) = tiny();
        enc.freeze_below_top(Some(1)).unwrap();
        assert_eq!(enc.frozen_prefixes(), vec!["enc.embeddings.".to_string(), "enc.encoder.layer.0.".to_string()]);
        assert!(matches!(enc.freeze_below_top(Some(3)), Err(ModelError::InvalidLayerCount { requested: 3, depth: 2 })));
        assert!(enc.freeze_below_top(Some(0)).is_err());

        enc.freeze_below_top(Some(1)).unwrap();
        let out = enc.forward(&batch(&["grad check"]), &mut Forward::eval()).unwrap();
        let grads = out.sqr().unwrap().sum_all().unwrap().backward().unwrap();
        for (name, var) in store.iter() {
            let has = grads.get(var.as_tensor()).is_some();
            let frozen = name.starts_with("enc.embeddings.") || name.starts_with("enc.encoder.layer.0.");
            assert_eq!(has, !frozen, "{name}");
        }
        enc.freeze_below_top(None).unwrap();
        assert!(enc.frozen_prefixes().is_empty());
    }

    #[test]
    fn too_long_stream_is_rejected() {
        let mut cfg = EncoderSpec::miniature(1, 8, 2).resolve().unwrap().config;
        cfg.max_positions = 4;
        let mut store = ParamStore::new(DType::F64, Device::Cpu);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = TransformerEncoder::new(&cfg, "e.", false, &mut store, &mut rng).unwrap();
        assert!(matches!(enc.forward(&batch(&["too long"]), &mut Forward::eval()), Err(ModelError::ShapeMismatch(_))));
        assert_eq!(enc.pooling(), Pooling::ClsState);
    }
}
