use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{DatasetError, Split, StanceExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Train and test on the same target.
    TargetSpecific,
    /// Train on a source target, test on all data of a destination target.
    CrossTarget,
    /// Published splits; test targets are unseen or rarely seen in training.
    ZeroFewShot,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::TargetSpecific => "target_specific",
            Protocol::CrossTarget => "cross_target",
            Protocol::ZeroFewShot => "zero_few_shot",
        }
    }
}

/// Example ids per split for one experiment. Serializes to the split
/// manifest written alongside each run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub source_target: Option<String>,
    pub destination_target: Option<String>,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// A [`SplitPlan`] resolved against the example list.
#[derive(Debug, Clone)]
pub struct ResolvedSplits<'a> {
    pub train: Vec<&'a StanceExample>,
    pub validation: Vec<&'a StanceExample>,
    pub test: Vec<&'a StanceExample>,
}

impl SplitPlan {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn resolve<'a>(&self, examples: &'a [StanceExample]) -> Result<ResolvedSplits<'a>, DatasetError> {
        let by_id: HashMap<&str, &StanceExample> = examples.iter().map(|e| (e.example_id.as_str(), e)).collect();
        let pick = |ids: &[String]| -> Result<Vec<&'a StanceExample>, DatasetError> {
            ids.iter()
                .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| DatasetError::UnknownExample(id.clone())))
                .collect()
        };
        Ok(ResolvedSplits { train: pick(&self.train)?, validation: pick(&self.validation)?, test: pick(&self.test)? })
    }
}

/// Builds the train/validation/test id lists for a protocol.
///
/// Cross-target: train and validation come from the source target; the
/// test set is the destination's train, validation and test data combined.
pub fn build_split(
    examples: &[StanceExample],
    protocol: Protocol,
    source_target: Option<&str>,
    destination_target: Option<&str>,
) -> Result<SplitPlan, DatasetError> {
    let known: HashSet<&str> = examples.iter().map(|e| e.target.as_str()).collect();
    let require = |t: Option<&str>, role: &str| -> Result<String, DatasetError> {
        let t = t.ok_or_else(|| DatasetError::InvalidPair(format!("{} needs a {role} target", protocol.as_str())))?;
        if !known.contains(t) {
            return Err(DatasetError::UnknownTarget(t.to_string()));
        }
        Ok(t.to_string())
    };
    let ids = |target: Option<&str>, splits: &[Split]| -> Vec<String> {
        examples
            .iter()
            .filter(|e| target.is_none_or(|t| e.target == t) && splits.contains(&e.split))
            .map(|e| e.example_id.clone())
            .collect()
    };

    let plan = match protocol {
        Protocol::TargetSpecific => {
            if destination_target.is_some() {
                return Err(DatasetError::InvalidPair("target_specific takes no destination target".into()));
            }
            let src = require(source_target, "source")?;
            SplitPlan {
                protocol,
                train: ids(Some(&src), &[Split::Train]),
                validation: ids(Some(&src), &[Split::Validation]),
                test: ids(Some(&src), &[Split::Test]),
                source_target: Some(src),
                destination_target: None,
            }
        }
        Protocol::CrossTarget => {
            let src = require(source_target, "source")?;
            let dst = require(destination_target, "destination")?;
            if src == dst {
                return Err(DatasetError::InvalidPair(format!("source and destination are both {src:?}")));
            }
            // destination ids in split order: train, validation, test
            let test = [Split::Train, Split::Validation, Split::Test]
                .iter()
                .flat_map(|s| ids(Some(&dst), &[*s]))
                .collect();
            SplitPlan {
                protocol,
                train: ids(Some(&src), &[Split::Train]),
                validation: ids(Some(&src), &[Split::Validation]),
                test,
                source_target: Some(src),
                destination_target: Some(dst),
            }
        }
        Protocol::ZeroFewShot => {
            if source_target.is_some() || destination_target.is_some() {
                return Err(DatasetError::InvalidPair("zero_few_shot uses the published splits and takes no targets".into()));
            }
            SplitPlan {
                protocol,
                source_target: None,
                destination_target: None,
                train: ids(None, &[Split::Train]),
                validation: ids(None, &[Split::Validation]),
                test: ids(None, &[Split::Test]),
            }
        }
    };

    for split in Split::ALL {
        if plan.ids(split).is_empty() {
            return Err(DatasetError::EmptySplit(split));
        }
    }
    Ok(plan)
}

/// Positions of a test list split by whether the example's target was seen
/// in training.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroFewPartition {
    pub zero: Vec<usize>,
    pub few: Vec<usize>,
}

impl ZeroFewPartition {
    pub fn len(&self) -> usize {
        self.zero.len() + self.few.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Zero-shot = test examples whose target never occurs among the training
/// targets; few-shot = the rest. Any single training occurrence counts as
/// seen.
pub fn partition_zero_few<E: AsRef<StanceExample>>(test: &[E], train_targets: &HashSet<String>) -> ZeroFewPartition {
    let mut part = ZeroFewPartition::default();
    for (i, ex) in test.iter().enumerate() {
        if train_targets.contains(&ex.as_ref().target) {
            part.few.push(i);
        } else {
            part.zero.push(i);
        }
    }
    part
}

/// Partition from the dataset's own seen/unseen flags, when every test
/// example carries one.
pub fn partition_from_flags<E: AsRef<StanceExample>>(test: &[E]) -> Option<ZeroFewPartition> {
    let mut part = ZeroFewPartition::default();
    for (i, ex) in test.iter().enumerate() {
        match ex.as_ref().seen? {
            true => part.few.push(i),
            false => part.zero.push(i),
        }
    }
    Some(part)
}

/// How many training examples each target has, for analyzing alternative
/// few-shot cutoffs.
pub fn target_train_counts<E: AsRef<StanceExample>>(train: &[E]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for ex in train {
        *counts.entry(ex.as_ref().target.clone()).or_insert(0) += 1;
    }
    counts
}

impl AsRef<StanceExample> for StanceExample {
    fn as_ref(&self) -> &StanceExample {
        self
    }
}
