use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::LayerSelection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_top")]
    pub wiki_finetune_top_layers: LayerSelection,
    #[serde(default)]
    pub seed: u64,
    /// Global gradient-norm bound; `None` disables clipping.
    #[serde(default = "default_clip")]
    pub grad_clip: Option<f64>,
}

fn default_lr() -> f64 {
    2e-5
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    10
}
fn default_decay() -> f64 {
    5e-5
}
fn default_top() -> LayerSelection {
    LayerSelection::Top(1)
}
fn default_clip() -> Option<f64> {
    Some(1.0)
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            weight_decay: default_decay(),
            wiki_finetune_top_layers: default_top(),
            seed: 0,
            grad_clip: default_clip(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight decay {} must be non-negative", self.weight_decay));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch size, epochs and patience must be positive".into());
        }
        if self.patience > self.max_epochs {
            return bad(format!("patience {} exceeds max epochs {}", self.patience, self.max_epochs));
        }
        if self.wiki_finetune_top_layers == LayerSelection::Top(0) {
            return bad("at least one knowledge-encoder layer must be finetuned".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("gradient clip {c} must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.max_epochs, c.patience), (32, 100, 10));
        assert_eq!(c.weight_decay, 5e-5);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_patience_beyond_epochs() {
        let c = TrainConfig { patience: 11, max_epochs: 10, ..Default::default() };
        assert!(matches!(c.validate(), Err(TrainError::InvalidConfig(_))));
    }

    #[test]
    fn toml_round_trip() {
        let c: TrainConfig = toml::from_str("learning_rate = 1e-5\nwiki_finetune_top_layers = 2\ngrad_clip = 0.5").unwrap();
        assert_eq!(c.learning_rate, 1e-5);
        assert_eq!(c.wiki_finetune_top_layers, LayerSelection::Top(2));
        assert_eq!(c.grad_clip, Some(0.5));
        assert_eq!(c.batch_size, 32);
    }
}
