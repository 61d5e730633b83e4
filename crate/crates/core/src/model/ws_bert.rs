use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use candle_core::backprop::GradStore;
use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::encoder::{Pooling, StreamTensors, TransformerEncoder};
use super::layers::{log_softmax_last, Forward, Linear};
use super::params::{child_rng, ParamStore, Snapshot};
use super::{LayerSelection, ModelConfig, ModelError, ResolvedEncoder};
use crate::encoding::{collate, EncodedInput, InputEncoder, Tokenizer, TokenizerSpec, Variant};

const HEAD_INIT_STD: f64 = 0.02;
const WEIGHTS_FILE: &str = "model.safetensors";
const CONFIG_FILE: &str = "model_config.json";

/// A padded batch ready for the forward pass.
#[derive(Debug, Clone)]
pub struct ModelBatch {
    pub variant: Variant,
    pub streams: Vec<StreamTensors>,
    pub size: usize,
}

/// Classifier scores, one row of `num_labels` values per example.
#[derive(Debug, Clone)]
pub struct StanceLogits {
    pub values: Tensor,
}

impl StanceLogits {
    pub fn rows(&self) -> Result<Vec<Vec<f64>>, ModelError> {
        Ok(self.values.to_dtype(DType::F64)?.to_vec2::<f64>()?)
    }

    /// Row-wise argmax; ties go to the lower class index.
    pub fn predictions(&self) -> Result<Vec<usize>, ModelError> {
        Ok(self
            .rows()?
            .iter()
            .map(|r| r.iter().enumerate().fold(0, |best, (i, v)| if *v > r[best] { i } else { best }))
            .collect())
    }

    pub fn probabilities(&self) -> Result<Vec<Vec<f64>>, ModelError> {
        Ok(self
            .rows()?
            .into_iter()
            .map(|r| {
                let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = r.iter().map(|v| (v - max).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|v| v / s).collect()
            })
            .collect())
    }
}

/// Stance classifier over one encoder (document, target and knowledge read
/// jointly) or two encoders (document-target pair and knowledge read
/// separately, representations concatenated), followed by one affine layer.
pub struct WsBert {
    config: ModelConfig,
    pair_info: ResolvedEncoder,
    knowledge_info: Option<ResolvedEncoder>,
    pair: TransformerEncoder,
    knowledge: Option<TransformerEncoder>,
    head: Linear,
    store: ParamStore,
    pair_tokenizer: Arc<dyn Tokenizer>,
    knowledge_tokenizer: Option<Arc<dyn Tokenizer>>,
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    config: ModelConfig,
    pair: ResolvedEncoder,
    knowledge: Option<ResolvedEncoder>,
    pair_pooling: Pooling,
    knowledge_pooling: Option<Pooling>,
}

impl WsBert {
    /// Builds the model, loading pretrained encoder weights where the
    /// config names a checkpoint directory. All random initialization draws
    /// from `rng`.
    pub fn new(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let pair = config.pair_encoder.resolve()?;
        let knowledge = config.knowledge_encoder.as_ref().map(|k| k.resolve()).transpose()?;
        let pooler_in = |r: &ResolvedEncoder| -> Result<bool, ModelError> {
            match &r.weights {
                Some(path) => ParamStore::checkpoint_has(path, "pooler.dense.weight"),
                None => Ok(true),
            }
        };
        let poolers = (pooler_in(&pair)?, knowledge.as_ref().map(pooler_in).transpose()?.unwrap_or(false));
        let model = Self::build(config, pair, knowledge, poolers, rng)?;
        for (prefix, info) in [("pair.", Some(&model.pair_info)), ("knowledge.", model.knowledge_info.as_ref())] {
            if let Some(path) = info.and_then(|i| i.weights.as_ref()) {
                let n = model.store.load_pretrained(prefix, path)?;
                info!(encoder = %prefix.trim_end_matches('.'), tensors = n, path = %path.display(), "loaded pretrained weights");
            }
        }
        Ok(model)
    }

    fn build(
        config: &ModelConfig,
        pair_info: ResolvedEncoder,
        knowledge_info: Option<ResolvedEncoder>,
        poolers: (bool, bool),
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        let mut store = ParamStore::new(config.precision.dtype(), Device::Cpu);
        let mut pair_rng = child_rng(rng);
        let mut knowledge_rng = child_rng(rng);
        let mut head_rng = child_rng(rng);

        let pair = TransformerEncoder::new(&pair_info.config, "pair.", poolers.0, &mut store, &mut pair_rng)?;
        let knowledge = knowledge_info
            .as_ref()
            .map(|k| TransformerEncoder::new(&k.config, "knowledge.", poolers.1, &mut store, &mut knowledge_rng))
            .transpose()?;
        let width = pair.hidden_size() + knowledge.as_ref().map_or(0, TransformerEncoder::hidden_size);
        let head = Linear::new(&mut store, "head", width, config.num_labels, HEAD_INIT_STD, &mut head_rng)?;

        let pair_tokenizer: Arc<dyn Tokenizer> = Arc::from(pair_info.tokenizer.build()?);
        let knowledge_tokenizer = knowledge_info
            .as_ref()
            .map(|k| k.tokenizer.build().map(Arc::from))
            .transpose()?;

        let mut model = Self {
            config: config.clone(),
            pair_info,
            knowledge_info,
            pair,
            knowledge,
            head,
            store,
            pair_tokenizer,
            knowledge_tokenizer,
        };
        if model.config.variant == Variant::Dual {
            model.freeze_knowledge_encoder(config.wiki_finetune_top_layers)?;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn num_labels(&self) -> usize {
        self.config.num_labels
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn pair_encoder(&self) -> &TransformerEncoder {
        &self.pair
    }

    pub fn knowledge_encoder(&self) -> Option<&TransformerEncoder> {
        self.knowledge.as_ref()
    }

    /// Width of the representation fed to the head.
    pub fn head_input_width(&self) -> usize {
        self.head.weight.dims()[1]
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    /// Encoder ids and pooling modes, for run provenance.
    pub fn encoder_summary(&self) -> Vec<(String, String, Pooling)> {
        let mut out = vec![("pair".to_string(), self.pair_info.id.clone(), self.pair.pooling())];
        if let (Some(info), Some(enc)) = (&self.knowledge_info, &self.knowledge) {
            out.push(("knowledge".to_string(), info.id.clone(), enc.pooling()));
        }
        out
    }

    /// Input encoder matching this model's tokenizers and position limits.
    pub fn input_encoder(&self) -> InputEncoder {
        let pair_max = self.pair.config().max_positions;
        match (&self.knowledge, &self.knowledge_tokenizer) {
            (Some(k), Some(tok)) => InputEncoder::dual(self.pair_tokenizer.clone(), pair_max, tok.clone(), k.config().max_positions),
            _ => InputEncoder::single(self.pair_tokenizer.clone(), pair_max),
        }
    }

    pub fn batch(&self, inputs: &[&EncodedInput]) -> Result<ModelBatch, ModelError> {
        let expected_streams = match self.variant() {
            Variant::Single => 1,
            Variant::Dual => 2,
        };
        if inputs.is_empty() {
            return Err(ModelError::ShapeMismatch("empty batch".into()));
        }
        for x in inputs {
            if x.variant != self.variant() || x.streams.len() != expected_streams {
                return Err(ModelError::VariantMismatch(format!(
                    "{:?} input with {} stream(s) for a {:?} model",
                    x.variant,
                    x.streams.len(),
                    self.variant()
                )));
            }
        }
        let mut pads = vec![self.pair_tokenizer.specials().pad];
        if let Some(t) = &self.knowledge_tokenizer {
            pads.push(t.specials().pad);
        }
        let streams = pads
            .iter()
            .enumerate()
            .map(|(i, &pad)| StreamTensors::new(&collate(inputs, i, pad), self.dtype(), &Device::Cpu))
            .collect::<Result<_, _>>()?;
        Ok(ModelBatch { variant: self.variant(), streams, size: inputs.len() })
    }

    /// Pre-head representation: the pair (or joint) encoder's pooled output,
    /// followed by the knowledge encoder's in the dual variant.
    pub fn representation(&self, batch: &ModelBatch, fwd: &mut Forward) -> Result<Tensor, ModelError> {
        if batch.variant != self.variant() {
            return Err(ModelError::VariantMismatch(format!("{:?} batch for a {:?} model", batch.variant, self.variant())));
        }
        let pair = self.pair.forward(&batch.streams[0], fwd)?;
        match &self.knowledge {
            Some(k) => {
                let wiki = k.forward(&batch.streams[1], fwd)?;
                Ok(Tensor::cat(&[&pair, &wiki], 1)?)
            }
            None => Ok(pair),
        }
    }

    /// Head applied to a given representation.
    pub fn head_logits(&self, representation: &Tensor, fwd: &mut Forward) -> Result<StanceLogits, ModelError> {
        let r = fwd.dropout(representation, self.config.head_dropout)?;
        Ok(StanceLogits { values: self.head.forward(&r, false)? })
    }

    pub fn forward(&self, batch: &ModelBatch, fwd: &mut Forward) -> Result<StanceLogits, ModelError> {
        let r = self.representation(batch, fwd)?;
        self.head_logits(&r, fwd)
    }

    /// Inference-mode forward for the single-encoder variant.
    pub fn forward_single(&self, batch: &ModelBatch) -> Result<StanceLogits, ModelError> {
        if self.variant() != Variant::Single {
            return Err(ModelError::VariantMismatch("forward_single on a dual model".into()));
        }
        self.forward(batch, &mut Forward::eval())
    }

    /// Inference-mode forward for the dual-encoder variant.
    pub fn forward_dual(&self, batch: &ModelBatch) -> Result<StanceLogits, ModelError> {
        if self.variant() != Variant::Dual {
            return Err(ModelError::VariantMismatch("forward_dual on a single model".into()));
        }
        self.forward(batch, &mut Forward::eval())
    }

    /// Trains only the top `top_k` layers of the knowledge encoder; its
    /// embeddings and lower layers receive no gradient. The pair encoder
    /// and head are unaffected.
    pub fn freeze_knowledge_encoder(&mut self, top_k: LayerSelection) -> Result<(), ModelError> {
        let Some(k) = self.knowledge.as_mut() else {
            return Err(ModelError::VariantMismatch("only the dual variant has a knowledge encoder".into()));
        };
        match top_k {
            LayerSelection::All => k.freeze_below_top(None)?,
            LayerSelection::Top(n) => k.freeze_below_top(Some(n))?,
        }
        self.config.wiki_finetune_top_layers = top_k;
        Ok(())
    }

    fn frozen_prefixes(&self) -> Vec<String> {
        let mut out = self.pair.frozen_prefixes();
        if let Some(k) = &self.knowledge {
            out.extend(k.frozen_prefixes());
        }
        out
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen_prefixes().iter().any(|p| name.starts_with(p.as_str()))
    }

    /// Parameters the optimizer should update.
    pub fn trainable_vars(&self) -> Vec<(String, Var)> {
        let frozen = self.frozen_prefixes();
        self.store
            .iter()
            .filter(|(name, _)| !frozen.iter().any(|p| name.starts_with(p.as_str())))
            .map(|(n, v)| (n.to_string(), v.clone()))
            .collect()
    }

    /// L2 norm of each parameter's gradient; parameters without a gradient
    /// report 0.
    pub fn grad_norms(&self, grads: &GradStore) -> Result<BTreeMap<String, f64>, ModelError> {
        self.store
            .iter()
            .map(|(name, var)| {
                let norm = match grads.get(var.as_tensor()) {
                    Some(g) => g.to_dtype(DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?.sqrt(),
                    None => 0.0,
                };
                Ok((name.to_string(), norm))
            })
            .collect()
    }

    pub fn snapshot(&self) -> Result<Snapshot, ModelError> {
        self.store.snapshot()
    }

    pub fn restore(&self, snapshot: &Snapshot) -> Result<(), ModelError> {
        self.store.restore(snapshot)
    }

    /// Writes weights, config and tokenizer files to `dir`; the result loads
    /// without the original checkpoint directories.
    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        fs::create_dir_all(dir).map_err(|e| ModelError::Io(dir.display().to_string(), e))?;
        let localize = |info: &ResolvedEncoder, name: &str| -> Result<ResolvedEncoder, ModelError> {
            let tokenizer = match &info.tokenizer {
                TokenizerSpec::File { path } => {
                    let dest = dir.join(name);
                    fs::copy(path, &dest).map_err(|e| ModelError::Io(path.display().to_string(), e))?;
                    TokenizerSpec::File { path: PathBuf::from(name) }
                }
                other => other.clone(),
            };
            Ok(ResolvedEncoder { id: info.id.clone(), config: info.config.clone(), tokenizer, weights: None })
        };
        let saved = SavedModel {
            config: self.config.clone(),
            pair: localize(&self.pair_info, "pair_tokenizer.json")?,
            knowledge: self.knowledge_info.as_ref().map(|k| localize(k, "knowledge_tokenizer.json")).transpose()?,
            pair_pooling: self.pair.pooling(),
            knowledge_pooling: self.knowledge.as_ref().map(TransformerEncoder::pooling),
        };
        let json = serde_json::to_string_pretty(&saved).expect("model config serializes");
        let cfg_path = dir.join(CONFIG_FILE);
        fs::write(&cfg_path, json).map_err(|e| ModelError::Io(cfg_path.display().to_string(), e))?;
        self.store.save(&dir.join(WEIGHTS_FILE))
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let cfg_path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path).map_err(|e| ModelError::Io(cfg_path.display().to_string(), e))?;
        let saved: SavedModel =
            serde_json::from_str(&text).map_err(|e| ModelError::Config(format!("{}: {e}", cfg_path.display())))?;
        let anchor = |info: ResolvedEncoder| ResolvedEncoder {
            tokenizer: match info.tokenizer {
                TokenizerSpec::File { path } => TokenizerSpec::File { path: dir.join(path) },
                other => other,
            },
            ..info
        };
        let poolers = (
            saved.pair_pooling == Pooling::Pooler,
            saved.knowledge_pooling == Some(Pooling::Pooler),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Self::build(&saved.config, anchor(saved.pair), saved.knowledge.map(anchor), poolers, &mut rng)?;
        model.store.load(&dir.join(WEIGHTS_FILE))?;
        Ok(model)
    }
}

/// Mean cross-entropy of `logits` against gold class indices.
pub fn loss(logits: &StanceLogits, gold: &[usize]) -> Result<Tensor, ModelError> {
    let dims = logits.values.dims();
    let (rows, classes) = (dims[0], dims[1]);
    if gold.len() != rows {
        return Err(ModelError::ShapeMismatch(format!("{} gold labels for {rows} logit rows", gold.len())));
    }
    let mut onehot = vec![0f64; rows * classes];
    for (i, &g) in gold.iter().enumerate() {
        if g >= classes {
            return Err(ModelError::LabelOutOfRange { label: g, num_labels: classes });
        }
        onehot[i * classes + g] = 1.0;
    }
    let onehot = Tensor::from_vec(onehot, (rows, classes), logits.values.device())?.to_dtype(logits.values.dtype())?;
    let picked = log_softmax_last(&logits.values)?.mul(&onehot)?.sum_all()?;
    Ok((picked.neg()? / rows as f64)?)
}
