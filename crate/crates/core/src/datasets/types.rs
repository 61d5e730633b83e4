use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Favor,
    Against,
    Neutral,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Favor, StanceLabel::Against, StanceLabel::Neutral];

    /// Class index used by the classifier head.
    pub fn index(self) -> usize {
        match self {
            StanceLabel::Favor => 0,
            StanceLabel::Against => 1,
            StanceLabel::Neutral => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Favor => "favor",
            StanceLabel::Against => "against",
            StanceLabel::Neutral => "neutral",
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StanceLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "favor" => Ok(StanceLabel::Favor),
            "against" => Ok(StanceLabel::Against),
            "neutral" => Ok(StanceLabel::Neutral),
            other => Err(format!("unknown stance label {other:?}")),
        }
    }
}

/// Number of stance classes a dataset uses: {favor, against} or
/// {favor, against, neutral}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum LabelArity {
    Two,
    Three,
}

impl LabelArity {
    pub fn count(self) -> usize {
        match self {
            LabelArity::Two => 2,
            LabelArity::Three => 3,
        }
    }

    pub fn labels(self) -> &'static [StanceLabel] {
        &StanceLabel::ALL[..self.count()]
    }

    pub fn admits(self, label: StanceLabel) -> bool {
        label.index() < self.count()
    }

    pub fn from_count(n: usize) -> Option<Self> {
        match n {
            2 => Some(LabelArity::Two),
            3 => Some(LabelArity::Three),
            _ => None,
        }
    }
}

impl TryFrom<u8> for LabelArity {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::from_count(v as usize).ok_or_else(|| format!("label arity must be 2 or 3, got {v}"))
    }
}

impl From<LabelArity> for u8 {
    fn from(a: LabelArity) -> u8 {
        a.count() as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labelled (document, target) pair. Knowledge text is joined in from
/// the knowledge cache at encoding time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceExample {
    pub example_id: String,
    pub document: String,
    pub target: String,
    pub label: StanceLabel,
    pub split: Split,
    /// Published seen/unseen flag, for datasets that ship one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seen: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    PStance,
    Covid19Stance,
    Vast,
}

impl DatasetName {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::PStance => "p_stance",
            DatasetName::Covid19Stance => "covid19_stance",
            DatasetName::Vast => "vast",
        }
    }

    pub fn expected_arity(self) -> LabelArity {
        match self {
            DatasetName::PStance => LabelArity::Two,
            DatasetName::Covid19Stance | DatasetName::Vast => LabelArity::Three,
        }
    }

    /// The two tweet corpora; VAST holds debate comments.
    pub fn is_tweet_domain(self) -> bool {
        !matches!(self, DatasetName::Vast)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFiles {
    pub train: PathBuf,
    pub validation: PathBuf,
    pub test: PathBuf,
}

impl SplitFiles {
    pub fn get(&self, split: Split) -> &PathBuf {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn map_paths(&self, f: impl Fn(&PathBuf) -> PathBuf) -> Self {
        Self { train: f(&self.train), validation: f(&self.validation), test: f(&self.test) }
    }
}

/// Column names of an ingest file. `example_id` may be absent, in which
/// case ids are generated as `<split>-<row>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub example_id: Option<String>,
    pub document: String,
    pub target: String,
    pub label: String,
    pub seen: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            example_id: Some("example_id".into()),
            document: "document".into(),
            target: "target".into(),
            label: "label".into(),
            seen: None,
        }
    }
}

/// How to read one dataset's delimited files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestFormat {
    pub delimiter: char,
    pub columns: ColumnMap,
    /// Extra label spellings, matched case-insensitively, e.g. `"0" = "against"`.
    pub label_aliases: BTreeMap<String, StanceLabel>,
}

impl Default for IngestFormat {
    fn default() -> Self {
        Self { delimiter: ',', columns: ColumnMap::default(), label_aliases: BTreeMap::new() }
    }
}

impl IngestFormat {
    pub fn normalize_label(&self, raw: &str) -> Option<StanceLabel> {
        let key = raw.trim().to_lowercase();
        self.label_aliases
            .iter()
            .find(|(alias, _)| alias.trim().to_lowercase() == key)
            .map(|(_, label)| *label)
            .or_else(|| key.parse().ok())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub label_arity: LabelArity,
    #[serde(default)]
    pub targets: Vec<String>,
    pub source_files: SplitFiles,
    #[serde(default)]
    pub format: IngestFormat,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.label_arity != self.name.expected_arity() {
            return Err(DatasetError::InvalidSpec(format!(
                "{} uses {} labels, spec declares {}",
                self.name.as_str(),
                self.name.expected_arity().count(),
                self.label_arity.count()
            )));
        }
        if self.name.is_tweet_domain() && self.targets.is_empty() {
            return Err(DatasetError::InvalidSpec(format!("{} needs its target list", self.name.as_str())));
        }
        if self.targets.iter().any(|t| t.trim().is_empty()) {
            return Err(DatasetError::InvalidSpec("blank target in target list".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_parsing_is_case_insensitive() {
        assert_eq!("FAVOR".parse::<StanceLabel>().unwrap(), StanceLabel::Favor);
        assert_eq!(" Against ".parse::<StanceLabel>().unwrap(), StanceLabel::Against);
        assert!("NONE".parse::<StanceLabel>().is_err());
    }

    #[test]
    fn aliases_take_precedence() {
        let mut fmt = IngestFormat::default();
        fmt.label_aliases.insert("NONE".into(), StanceLabel::Neutral);
        fmt.label_aliases.insert("0".into(), StanceLabel::Against);
        assert_eq!(fmt.normalize_label("none"), Some(StanceLabel::Neutral));
        assert_eq!(fmt.normalize_label("0"), Some(StanceLabel::Against));
        assert_eq!(fmt.normalize_label("favor"), Some(StanceLabel::Favor));
        assert_eq!(fmt.normalize_label("7"), None);
    }

    #[test]
    fn arity_admits() {
        assert!(!LabelArity::Two.admits(StanceLabel::Neutral));
        assert!(LabelArity::Three.admits(StanceLabel::Neutral));
        assert_eq!(LabelArity::Two.labels(), &[StanceLabel::Favor, StanceLabel::Against]);
    }

    #[test]
    fn spec_validation() {
        let files = SplitFiles { train: "a".into(), validation: "b".into(), test: "c".into() };
        let mut spec = DatasetSpec {
            name: DatasetName::PStance,
            label_arity: LabelArity::Three,
            targets: vec!["Donald Trump".into()],
            source_files: files,
            format: IngestFormat::default(),
        };
        assert!(spec.validate().is_err());
        spec.label_arity = LabelArity::Two;
        spec.validate().unwrap();
        spec.targets.clear();
        assert!(spec.validate().is_err());
        spec.name = DatasetName::Vast;
        spec.label_arity = LabelArity::Three;
        spec.validate().unwrap();
    }
}
