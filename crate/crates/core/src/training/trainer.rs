use candle_core::backprop::GradStore;
use candle_core::{DType, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use super::stopping::{EarlyStopper, StopDecision, StopReason};
use super::{TrainConfig, TrainError};
use crate::datasets::{LabelArity, Split, StanceLabel};
use crate::encoding::{EncodedInput, Variant};
use crate::evaluation::macro_f1;
use crate::model::{loss, Forward, ModelError, WsBert};

/// Encoded examples with gold class indices.
#[derive(Debug, Clone, Default)]
pub struct LabeledSet {
    pub inputs: Vec<EncodedInput>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(inputs: Vec<EncodedInput>, labels: Vec<usize>) -> Self {
        assert_eq!(inputs.len(), labels.len(), "one label per input");
        Self { inputs, labels }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_f1: f64,
    /// Mean global gradient norm before clipping.
    pub grad_norm: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn best_metric(&self) -> f64 {
        self.epochs[self.best_epoch - 1].validation_f1
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// Optimizer settings as applied, for run reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerSettings {
    pub kind: &'static str,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub schedule: &'static str,
    pub grad_clip: Option<f64>,
}

impl OptimizerSettings {
    pub fn for_config(cfg: &TrainConfig) -> Self {
        let p = adam_params(cfg);
        Self {
            kind: "adamw_decoupled",
            learning_rate: p.lr,
            beta1: p.beta1,
            beta2: p.beta2,
            eps: p.eps,
            weight_decay: p.weight_decay,
            schedule: "constant",
            grad_clip: cfg.grad_clip,
        }
    }
}

fn adam_params(cfg: &TrainConfig) -> ParamsAdamW {
    ParamsAdamW { lr: cfg.learning_rate, weight_decay: cfg.weight_decay, ..Default::default() }
}

/// Inference-mode class predictions.
pub fn predict(model: &WsBert, inputs: &[EncodedInput], batch_size: usize) -> Result<Vec<usize>, ModelError> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(batch_size.max(1)) {
        let refs: Vec<&EncodedInput> = chunk.iter().collect();
        let batch = model.batch(&refs)?;
        out.extend(model.forward(&batch, &mut Forward::eval())?.predictions()?);
    }
    Ok(out)
}

/// Macro-F1 of `model` on `set`.
pub fn score(model: &WsBert, set: &LabeledSet, batch_size: usize) -> Result<f64, TrainError> {
    let arity = LabelArity::from_count(model.num_labels())
        .ok_or_else(|| TrainError::InvalidConfig(format!("{} labels", model.num_labels())))?;
    let pred = to_labels(&predict(model, &set.inputs, batch_size)?);
    Ok(macro_f1(&pred, &to_labels(&set.labels), arity)?.f_avg)
}

fn to_labels(idx: &[usize]) -> Vec<StanceLabel> {
    // Out-of-range indices map to neutral so the metric reports them.
    idx.iter().map(|&i| StanceLabel::from_index(i).unwrap_or(StanceLabel::Neutral)).collect()
}

fn clip_gradients(grads: &mut GradStore, vars: &[Var], max_norm: Option<f64>) -> Result<f64, ModelError> {
    let mut sq = 0.0;
    for v in vars {
        if let Some(g) = grads.get(v.as_tensor()) {
            sq += g.to_dtype(DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?;
        }
    }
    let norm = sq.sqrt();
    if let Some(c) = max_norm {
        if norm.is_finite() && norm > c {
            let scale = c / norm;
            for v in vars {
                if let Some(g) = grads.get(v.as_tensor()) {
                    let scaled = (g * scale)?;
                    grads.insert(v.as_tensor(), scaled);
                }
            }
        }
    }
    Ok(norm)
}

/// Finetunes `model` with early stopping on validation macro-F1 and leaves
/// it holding the best epoch's weights. `on_epoch` sees each epoch record
/// as soon as it is complete.
pub fn train(
    model: &mut WsBert,
    train_set: &LabeledSet,
    validation: &LabeledSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit(Split::Train));
    }
    if validation.is_empty() {
        return Err(TrainError::EmptySplit(Split::Validation));
    }
    if model.variant() == Variant::Dual {
        model.freeze_knowledge_encoder(cfg.wiki_finetune_top_layers)?;
    }
    let vars: Vec<Var> = model.trainable_vars().into_iter().map(|(_, v)| v).collect();
    let mut opt = AdamW::new(vars.clone(), adam_params(cfg)).map_err(ModelError::from)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stopper = EarlyStopper::new(cfg.patience, cfg.max_epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = None;
    let mut epochs = Vec::new();

    loop {
        let epoch = stopper.epoch() + 1;
        order.shuffle(&mut rng);
        let (mut loss_sum, mut norm_sum, mut steps) = (0.0, 0.0, 0usize);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let inputs: Vec<&EncodedInput> = chunk.iter().map(|&i| &train_set.inputs[i]).collect();
            let gold: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let batch = model.batch(&inputs)?;
            let logits = model.forward(&batch, &mut Forward::train(&mut rng))?;
            let l = loss(&logits, &gold)?;
            let value = l.to_dtype(DType::F64).and_then(|t| t.to_scalar::<f64>()).map_err(ModelError::from)?;
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step: step + 1, value, grad_norm: None });
            }
            let mut grads = l.backward().map_err(ModelError::from)?;
            let norm = clip_gradients(&mut grads, &vars, cfg.grad_clip)?;
            if !norm.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step: step + 1, value, grad_norm: Some(norm) });
            }
            opt.step(&grads).map_err(ModelError::from)?;
            loss_sum += value * chunk.len() as f64;
            norm_sum += norm;
            steps += 1;
            debug!(epoch, step = step + 1, loss = value, grad_norm = norm, "step");
        }
        let validation_f1 = score(model, validation, cfg.batch_size)?;
        let (improved, decision) = stopper.observe(validation_f1);
        if improved || best.is_none() {
            best = Some(model.snapshot()?);
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            validation_f1,
            grad_norm: norm_sum / steps as f64,
            improved,
        };
        info!(epoch, train_loss = record.train_loss, validation_f1, improved, "epoch");
        on_epoch(&record);
        epochs.push(record);
        if let StopDecision::Stop(stop_reason) = decision {
            let best_epoch = stopper.best_epoch().unwrap_or(1);
            if let Some(s) = &best {
                model.restore(s)?;
            }
            return Ok(TrainHistory { epochs, best_epoch, stopped_epoch: epoch, stop_reason });
        }
    }
}
