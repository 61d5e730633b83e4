#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wikistance::encoding::{EncodedInput, InputEncoder, Variant};
use wikistance::model::{EncoderSpec, LayerSelection, ModelConfig, Precision};
use wikistance::training::LabeledSet;

pub fn mini_config(variant: Variant, layers: usize, hidden: usize, num_labels: usize, precision: Precision) -> ModelConfig {
    let spec = EncoderSpec::miniature(layers, hidden, 4);
    ModelConfig {
        variant,
        pair_encoder: spec.clone(),
        knowledge_encoder: (variant == Variant::Dual).then_some(spec),
        num_labels,
        wiki_finetune_top_layers: LayerSelection::Top(1),
        head_dropout: 0.1,
        precision,
    }
}

const FILLER: &[&str] = &["the", "a", "today", "really", "about", "this", "we", "they", "news", "vote"];

/// Documents whose label is carried by a marker word; fillers are random.
pub fn separable(n: usize, seed: u64) -> Vec<(String, String, String, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let marker = if label == 0 { "love" } else { "hate" };
            let mut words: Vec<&str> = (0..4).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
            let at = rng.random_range(0..=words.len());
            words.insert(at, marker);
            let target = if rng.random_bool(0.5) { "Trump" } else { "Biden" };
            (words.join(" "), target.to_string(), format!("{target} is a politician."), label)
        })
        .collect()
}

pub fn encode_all(enc: &InputEncoder, rows: &[(String, String, String, usize)]) -> LabeledSet {
    let inputs: Vec<EncodedInput> = rows.iter().map(|(d, t, w, _)| enc.encode(d, t, w).unwrap()).collect();
    LabeledSet::new(inputs, rows.iter().map(|r| r.3).collect())
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use wikistance::datasets::{DatasetName, DatasetSpec, LabelArity, SplitFiles, StanceExample, StanceLabel, Split};
use wikistance::knowledge::{PageContent, PageSource, SourceError};

/// In-memory page source: targets listed in `pages` have an article whose
/// title is the target and whose summary is given; others have no page.
#[derive(Default, Clone)]
pub struct StubSource {
    pub pages: BTreeMap<String, String>,
}

impl StubSource {
    pub fn with_pages<'a>(pages: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self { pages: pages.into_iter().map(|(t, s)| (t.to_string(), s.to_string())).collect() }
    }
}

impl PageSource for StubSource {
    fn search(&self, query: &str) -> Result<Vec<String>, SourceError> {
        Ok(self.pages.contains_key(query).then(|| query.to_string()).into_iter().collect())
    }

    fn page(&self, title: &str) -> Result<PageContent, SourceError> {
        Ok(match self.pages.get(title) {
            Some(s) => PageContent::Article { title: title.to_string(), summary: s.clone() },
            None => PageContent::Missing,
        })
    }
}

pub fn example(id: &str, target: &str, split: Split, label: StanceLabel) -> StanceExample {
    StanceExample {
        example_id: id.to_string(),
        document: format!("post {id} about {target}"),
        target: target.to_string(),
        label,
        split,
        seen: None,
    }
}

/// Writes `examples` as train/validation/test CSV files under `dir` and
/// returns a matching dataset spec.
pub fn write_dataset(dir: &Path, name: DatasetName, examples: &[StanceExample]) -> DatasetSpec {
    let with_seen = examples.iter().any(|e| e.seen.is_some());
    let mut files = BTreeMap::new();
    for split in Split::ALL {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["example_id", "document", "target", "label"];
        if with_seen {
            header.push("seen");
        }
        w.write_record(&header).unwrap();
        for e in examples.iter().filter(|e| e.split == split) {
            let seen = e.seen.map(|s| if s { "1" } else { "0" }).unwrap_or("");
            let mut rec = vec![e.example_id.as_str(), e.document.as_str(), e.target.as_str(), e.label.as_str()];
            if with_seen {
                rec.push(seen);
            }
            w.write_record(&rec).unwrap();
        }
        let path = dir.join(format!("{}.csv", split.as_str()));
        std::fs::write(&path, w.into_inner().unwrap()).unwrap();
        files.insert(split, path);
    }
    let mut targets: Vec<String> = examples.iter().map(|e| e.target.clone()).collect();
    targets.sort();
    targets.dedup();
    let mut format = wikistance::datasets::IngestFormat::default();
    if with_seen {
        format.columns.seen = Some("seen".into());
    }
    DatasetSpec {
        name,
        label_arity: name.expected_arity(),
        targets: if name.is_tweet_domain() { targets } else { Vec::new() },
        source_files: SplitFiles {
            train: files[&Split::Train].clone(),
            validation: files[&Split::Validation].clone(),
            test: files[&Split::Test].clone(),
        },
        format,
    }
}

/// Tweet-style fixture: per target, 12 train, 4 validation, 4 test rows.
pub fn tweet_examples(targets: &[&str], arity: LabelArity) -> Vec<StanceExample> {
    let mut out = Vec::new();
    for t in targets {
        for (split, n) in [(Split::Train, 12), (Split::Validation, 4), (Split::Test, 4)] {
            for i in 0..n {
                let label = arity.labels()[i % arity.count()];
                let mut e = example(&format!("{}-{}-{i}", t.to_lowercase(), split.as_str()), t, split, label);
                let mut doc = String::new();
                let _ = write!(doc, "{} {} number {i}", if label == StanceLabel::Favor { "love" } else { "hate" }, t);
                e.document = doc;
                out.push(e);
            }
        }
    }
    out
}
