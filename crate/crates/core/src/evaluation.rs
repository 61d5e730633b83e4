//! Per-class F1 and macro-averaged F1 over the dataset's label set.
//!
//! Two-label datasets average F1 over {favor, against}; three-label
//! datasets over {favor, against, neutral}. A class with no predictions
//! and no gold occurrences scores 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::datasets::{LabelArity, StanceLabel, ZeroFewPartition};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("label {0} outside the dataset's label set")]
    LabelOutOfRange(StanceLabel),
    #[error("nothing to evaluate")]
    Empty,
    #[error("zero/few partition does not cover the evaluated examples: {0}")]
    PartitionMismatch(String),
    #[error("malformed report: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    ZeroShot,
    FewShot,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::ZeroShot => "zero_shot",
            Subset::FewShot => "few_shot",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(Subset::All),
            "zero_shot" => Some(Subset::ZeroShot),
            "few_shot" => Some(Subset::FewShot),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub arity: LabelArity,
    pub subset: Subset,
    pub per_class_f1: BTreeMap<StanceLabel, f64>,
    pub f_avg: f64,
    /// `confusion[gold][predicted]`, indexed by class index.
    pub confusion: Vec<Vec<u64>>,
    pub count: usize,
}

pub fn macro_f1(predictions: &[StanceLabel], gold: &[StanceLabel], arity: LabelArity) -> Result<EvalReport, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch { predictions: predictions.len(), gold: gold.len() });
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let k = arity.count();
    let mut confusion = vec![vec![0u64; k]; k];
    for (&p, &g) in predictions.iter().zip(gold) {
        for l in [p, g] {
            if !arity.admits(l) {
                return Err(EvalError::LabelOutOfRange(l));
            }
        }
        confusion[g.index()][p.index()] += 1;
    }
    Ok(report_from_confusion(arity, Subset::All, confusion))
}

fn report_from_confusion(arity: LabelArity, subset: Subset, confusion: Vec<Vec<u64>>) -> EvalReport {
    let k = arity.count();
    let mut per_class_f1 = BTreeMap::new();
    for (c, &label) in arity.labels().iter().enumerate() {
        let tp = confusion[c][c] as f64;
        let predicted: u64 = (0..k).map(|g| confusion[g][c]).sum();
        let actual: u64 = confusion[c].iter().sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        per_class_f1.insert(label, f1);
    }
    let f_avg = per_class_f1.values().sum::<f64>() / k as f64;
    let count = confusion.iter().flatten().sum::<u64>() as usize;
    EvalReport { arity, subset, per_class_f1, f_avg, confusion, count }
}

/// Zero-shot, few-shot and overall reports for a three-label test set.
#[derive(Debug, Clone, PartialEq)]
pub struct VastReports {
    /// Absent when no test target is unseen.
    pub zero: Option<EvalReport>,
    pub few: Option<EvalReport>,
    pub overall: EvalReport,
}

impl VastReports {
    pub fn all(&self) -> Vec<&EvalReport> {
        self.zero.iter().chain(self.few.iter()).chain(std::iter::once(&self.overall)).collect()
    }
}

/// The overall score is computed on the union of both subsets, not averaged
/// from the subset scores.
pub fn evaluate_vast(
    predictions: &[StanceLabel],
    gold: &[StanceLabel],
    partition: &ZeroFewPartition,
) -> Result<VastReports, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch { predictions: predictions.len(), gold: gold.len() });
    }
    let n = gold.len();
    let mut covered = vec![false; n];
    for &i in partition.zero.iter().chain(&partition.few) {
        if i >= n {
            return Err(EvalError::PartitionMismatch(format!("index {i} beyond {n} examples")));
        }
        if std::mem::replace(&mut covered[i], true) {
            return Err(EvalError::PartitionMismatch(format!("index {i} in both subsets or listed twice")));
        }
    }
    if let Some(missing) = covered.iter().position(|c| !c) {
        return Err(EvalError::PartitionMismatch(format!("index {missing} in neither subset")));
    }
    let subset = |idx: &[usize], which: Subset| -> Result<Option<EvalReport>, EvalError> {
        if idx.is_empty() {
            return Ok(None);
        }
        let p: Vec<_> = idx.iter().map(|&i| predictions[i]).collect();
        let g: Vec<_> = idx.iter().map(|&i| gold[i]).collect();
        let mut r = macro_f1(&p, &g, LabelArity::Three)?;
        r.subset = which;
        Ok(Some(r))
    };
    Ok(VastReports {
        zero: subset(&partition.zero, Subset::ZeroShot)?,
        few: subset(&partition.few, Subset::FewShot)?,
        overall: macro_f1(predictions, gold, LabelArity::Three)?,
    })
}

impl EvalReport {
    pub fn f1(&self, label: StanceLabel) -> Option<f64> {
        self.per_class_f1.get(&label).copied()
    }

    /// Flat key-value form: scalar fields, `f1_<label>` per class and
    /// `confusion_<gold>_<predicted>` per cell.
    pub fn to_flat(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("subset".into(), self.subset.as_str().into());
        m.insert("arity".into(), self.arity.count().into());
        m.insert("count".into(), self.count.into());
        m.insert("f_avg".into(), self.f_avg.into());
        for (label, f1) in &self.per_class_f1 {
            m.insert(format!("f1_{label}"), (*f1).into());
        }
        for g in self.arity.labels() {
            for p in self.arity.labels() {
                m.insert(format!("confusion_{g}_{p}"), self.confusion[g.index()][p.index()].into());
            }
        }
        m
    }

    /// Rebuilds a report from [`EvalReport::to_flat`] output. Per-class F1
    /// and the average are recomputed from the confusion counts and must
    /// agree with the stored values.
    pub fn from_flat(m: &Map<String, Value>) -> Result<Self, EvalError> {
        let bad = |what: &str| EvalError::Malformed(what.to_string());
        let arity = m
            .get("arity")
            .and_then(Value::as_u64)
            .and_then(|a| LabelArity::from_count(a as usize))
            .ok_or_else(|| bad("arity"))?;
        let subset = m.get("subset").and_then(Value::as_str).and_then(Subset::parse).ok_or_else(|| bad("subset"))?;
        let k = arity.count();
        let mut confusion = vec![vec![0u64; k]; k];
        for g in arity.labels() {
            for p in arity.labels() {
                confusion[g.index()][p.index()] = m
                    .get(&format!("confusion_{g}_{p}"))
                    .and_then(Value::as_u64)
                    .ok_or_else(|| bad(&format!("confusion_{g}_{p}")))?;
            }
        }
        let report = report_from_confusion(arity, subset, confusion);
        let stored = m.get("f_avg").and_then(Value::as_f64).ok_or_else(|| bad("f_avg"))?;
        if (stored - report.f_avg).abs() > 1e-12 {
            return Err(bad("f_avg disagrees with the confusion counts"));
        }
        Ok(report)
    }
}
