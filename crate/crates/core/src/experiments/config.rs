use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::datasets::{DatasetSpec, Protocol};
use crate::encoding::Variant;
use crate::model::ModelConfig;
use crate::training::{GridSpec, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: Protocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination_target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeConfig {
    pub cache: PathBuf,
    /// Never contact the page source; every target must already be cached.
    #[serde(default)]
    pub offline: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual_map: Option<PathBuf>,
    #[serde(default = "default_rate_ms")]
    pub rate_ms: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// MediaWiki API endpoint; defaults to English Wikipedia.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

fn default_rate_ms() -> u64 {
    200
}
fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Root of the seed chain for every randomized step.
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Permit a variant other than the one paired with the dataset.
    #[serde(default)]
    pub allow_variant_override: bool,
    pub dataset: DatasetSpec,
    pub protocol: ProtocolConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub knowledge: KnowledgeConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::ConfigInvalid(format!("reading {}: {e}", path.display())))?;
        let cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(cfg.anchored_at(base))
    }

    pub fn anchored_at(mut self, base: &Path) -> Self {
        let join = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        self.output_dir = join(&self.output_dir);
        self.dataset.source_files = self.dataset.source_files.map_paths(join);
        self.knowledge.cache = join(&self.knowledge.cache);
        self.knowledge.manual_map = self.knowledge.manual_map.as_ref().map(join);
        self.model.pair_encoder = self.model.pair_encoder.map_paths(join);
        self.model.knowledge_encoder = self.model.knowledge_encoder.as_ref().map(|k| k.map_paths(join));
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("experiment config serializes")
    }

    /// The variant each dataset is paired with: two encoders for tweets,
    /// one joint encoder for debate comments.
    pub fn paired_variant(&self) -> Variant {
        if self.dataset.name.is_tweet_domain() {
            Variant::Dual
        } else {
            Variant::Single
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |m: String| Err(ExperimentError::ConfigInvalid(m));
        if let Err(e) = self.dataset.validate() {
            return invalid(e.to_string());
        }
        if let Err(e) = self.model.validate() {
            return invalid(e.to_string());
        }
        if let Err(e) = self.train.validate() {
            return invalid(e.to_string());
        }
        if self.model.num_labels != self.dataset.label_arity.count() {
            return invalid(format!(
                "model has {} labels but {} uses {}",
                self.model.num_labels,
                self.dataset.name.as_str(),
                self.dataset.label_arity.count()
            ));
        }
        let paired = self.paired_variant();
        if self.model.variant != paired && !self.allow_variant_override {
            return invalid(format!(
                "{} is run with the {:?} variant; set allow_variant_override to use {:?}",
                self.dataset.name.as_str(),
                paired,
                self.model.variant
            ));
        }
        if self.protocol.kind == Protocol::ZeroFewShot && self.dataset.label_arity.count() != 3 {
            return invalid("zero/few-shot evaluation needs three labels".into());
        }
        if let Some(g) = &self.grid {
            if g.points().is_empty() {
                return invalid("grid has no points".into());
            }
            for p in g.points() {
                let t = TrainConfig {
                    learning_rate: p.learning_rate,
                    wiki_finetune_top_layers: p.wiki_finetune_top_layers,
                    ..self.train.clone()
                };
                if let Err(e) = t.validate() {
                    return invalid(format!("grid point: {e}"));
                }
            }
        }
        if self.knowledge.parallelism == 0 {
            return invalid("knowledge parallelism must be at least 1".into());
        }
        Ok(())
    }
}
