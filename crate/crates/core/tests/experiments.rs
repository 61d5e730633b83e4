mod common;

use std::fs;

use common::{tweet_examples, write_dataset, StubSource};
use wikistance::datasets::{DatasetName, LabelArity, Protocol, Split, StanceExample, StanceLabel};
use wikistance::encoding::Variant;
use wikistance::evaluation::Subset;
use wikistance::experiments::*;
use wikistance::model::{EncoderSpec, LayerSelection, ModelConfig, Precision};
use wikistance::training::{GridSpec, TrainConfig};

fn model(variant: Variant, num_labels: usize) -> ModelConfig {
    let enc = EncoderSpec::miniature(1, 16, 2);
    ModelConfig {
        variant,
        pair_encoder: enc.clone(),
        knowledge_encoder: (variant == Variant::Dual).then_some(enc),
        num_labels,
        wiki_finetune_top_layers: LayerSelection::Top(1),
        head_dropout: 0.1,
        precision: Precision::F32,
    }
}

fn config(dir: &std::path::Path, name: DatasetName, examples: &[StanceExample], protocol: ProtocolConfig, variant: Variant) -> ExperimentConfig {
    let data_dir = dir.join("data");
    fs::create_dir_all(&data_dir).unwrap();
    let dataset = write_dataset(&data_dir, name, examples);
    let labels = dataset.label_arity.count();
    ExperimentConfig {
        name: None,
        seed: 17,
        output_dir: dir.join("run"),
        allow_variant_override: false,
        dataset,
        protocol,
        model: model(variant, labels),
        train: TrainConfig { learning_rate: 1e-3, batch_size: 8, max_epochs: 2, patience: 2, ..Default::default() },
        grid: None,
        knowledge: KnowledgeConfig {
            cache: dir.join("knowledge.jsonl"),
            offline: false,
            manual_map: None,
            rate_ms: 0,
            parallelism: 2,
            endpoint: None,
        },
    }
}

fn stub() -> Option<Box<dyn wikistance::knowledge::PageSource>> {
    Some(Box::new(StubSource::with_pages([("Trump", "Donald Trump is a politician."), ("Biden", "Joe Biden is a politician.")])))
}

fn opts() -> RunOptions {
    RunOptions { page_source: stub(), invocation: vec!["test".into()], skip_test: false }
}

fn target_specific(target: &str) -> ProtocolConfig {
    ProtocolConfig { kind: Protocol::TargetSpecific, source_target: Some(target.into()), destination_target: None }
}

#[test]
fn target_specific_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let ex = tweet_examples(&["Trump", "Biden", "Sanders"], LabelArity::Two);
    let cfg = config(dir.path(), DatasetName::PStance, &ex, target_specific("Trump"), Variant::Dual);
    let out = run_experiment(&cfg, opts()).unwrap();
    assert_eq!(out.reports.len(), 1);
    assert_eq!(out.reports[0].arity, LabelArity::Two);
    assert_eq!(out.reports[0].count, 4);
    for f in [CONFIG_SNAPSHOT, PROVENANCE, SPLIT_MANIFEST, METRICS, REPORT_JSON, REPORT_TXT] {
        assert!(out.output_dir.join(f).is_file(), "{f} missing");
    }
    assert!(out.output_dir.join(CHECKPOINT_DIR).join("model.safetensors").is_file());
    let metrics = fs::read_to_string(out.output_dir.join(METRICS)).unwrap();
    assert_eq!(metrics.lines().count(), out.history.stopped_epoch);
    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.output_dir.join(PROVENANCE)).unwrap()).unwrap();
    assert_eq!(prov["seed"], 17);
    assert_eq!(prov["invocation"][0], "test");
    let targets: Vec<&str> = prov["knowledge"]["records"].as_array().unwrap().iter().map(|r| r["target"].as_str().unwrap()).collect();
    assert_eq!(targets, vec!["Trump"]);
    let snap = ExperimentConfig::load(&out.output_dir.join(CONFIG_SNAPSHOT)).unwrap();
    assert_eq!(snap, cfg);
}

#[test]
fn rerun_reproduces_reports_and_evaluate_matches() {
    let dir = tempfile::tempdir().unwrap();
    let ex = tweet_examples(&["Trump", "Biden"], LabelArity::Two);
    let cfg = config(dir.path(), DatasetName::PStance, &ex, target_specific("Biden"), Variant::Dual);
    let a = run_experiment(&cfg, opts()).unwrap();
    let b = run_experiment(&cfg, opts()).unwrap();
    assert_eq!(a.reports, b.reports);
    assert_eq!(a.history, b.history);
    // offline re-evaluation from the run directory alone
    let again = evaluate_run(&a.output_dir).unwrap();
    assert_eq!(again, a.reports);
}

#[test]
fn cross_target_evaluates_all_destination_data() {
    let dir = tempfile::tempdir().unwrap();
    let ex = tweet_examples(&["Trump", "Biden", "Sanders"], LabelArity::Two);
    let p = ProtocolConfig { kind: Protocol::CrossTarget, source_target: Some("Trump".into()), destination_target: Some("Biden".into()) };
    let cfg = config(dir.path(), DatasetName::PStance, &ex, p, Variant::Dual);
    let out = run_experiment(&cfg, opts()).unwrap();
    let biden = ex.iter().filter(|e| e.target == "Biden").count();
    assert_eq!(out.reports[0].count, biden);
    assert_eq!(out.split_sizes, [12, 4, biden]);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.output_dir.join(REPORT_JSON)).unwrap()).unwrap();
    assert_eq!(doc["column"], "Trump→Biden");
}

fn vast_examples() -> Vec<StanceExample> {
    let labels = [StanceLabel::Favor, StanceLabel::Against, StanceLabel::Neutral];
    let mut out = Vec::new();
    let mut push = |id: String, target: &str, split: Split, i: usize, seen: Option<bool>| {
        let mut e = common::example(&id, target, split, labels[i % 3]);
        e.seen = seen;
        out.push(e);
    };
    for i in 0..18 {
        push(format!("tr{i}"), ["vaccines", "taxes"][i % 2], Split::Train, i, None);
    }
    for i in 0..6 {
        push(format!("va{i}"), "taxes", Split::Validation, i, None);
    }
    for i in 0..6 {
        push(format!("te{i}"), "b-12", Split::Test, i, Some(false));
        push(format!("tf{i}"), "vaccines", Split::Test, i, Some(true));
    }
    out
}

#[test]
fn zero_few_run_gives_three_reports() {
    let dir = tempfile::tempdir().unwrap();
    let p = ProtocolConfig { kind: Protocol::ZeroFewShot, source_target: None, destination_target: None };
    let mut cfg = config(dir.path(), DatasetName::Vast, &vast_examples(), p, Variant::Single);
    cfg.grid = Some(GridSpec::default());
    let out = run_experiment(&cfg, opts()).unwrap();
    let subsets: Vec<Subset> = out.reports.iter().map(|r| r.subset).collect();
    assert_eq!(subsets, vec![Subset::ZeroShot, Subset::FewShot, Subset::All]);
    assert_eq!(out.reports[2].count, out.reports[0].count + out.reports[1].count);
    // the single variant has no knowledge encoder, so only the rate axis is searched
    assert_eq!(out.grid.len(), 2);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.output_dir.join(REPORT_JSON)).unwrap()).unwrap();
    let cells = table_cells(&doc).unwrap();
    let t = emit_table(&cells, "Method", AvgPlacement::None).unwrap();
    assert_eq!(t.columns, vec!["Zero-shot", "Few-shot", "Overall"]);
}

#[test]
fn variant_pairing_guard() {
    let dir = tempfile::tempdir().unwrap();
    let ex = tweet_examples(&["Trump", "Biden"], LabelArity::Two);
    let mut cfg = config(dir.path(), DatasetName::PStance, &ex, target_specific("Trump"), Variant::Single);
    assert!(matches!(cfg.validate(), Err(ExperimentError::ConfigInvalid(m)) if m.contains("allow_variant_override")));
    cfg.allow_variant_override = true;
    cfg.validate().unwrap();
    cfg.model.num_labels = 3;
    assert!(matches!(cfg.validate(), Err(ExperimentError::ConfigInvalid(_))));
}

#[test]
fn failures_name_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let ex = tweet_examples(&["Trump", "Biden"], LabelArity::Two);
    let mut cfg = config(dir.path(), DatasetName::PStance, &ex, target_specific("Warren"), Variant::Dual);
    let err = run_experiment(&cfg, opts()).unwrap_err();
    assert_eq!(err.stage_name(), "split");
    cfg.protocol = target_specific("Trump");
    cfg.knowledge.offline = true;
    let err = run_experiment(&cfg, opts()).unwrap_err();
    assert_eq!(err.stage_name(), "knowledge");
    fs::remove_file(&cfg.dataset.source_files.test).unwrap();
    assert_eq!(run_experiment(&cfg, opts()).unwrap_err().stage_name(), "dataset");
}

#[test]
fn relative_paths_resolve_against_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
seed = 3
output_dir = "runs/a"

[dataset]
name = "p_stance"
label_arity = 2
targets = ["Trump"]
source_files = { train = "d/train.csv", validation = "d/validation.csv", test = "d/test.csv" }

[protocol]
kind = "target_specific"
source_target = "Trump"

[model]
variant = "dual"
num_labels = 2
pair_encoder = { kind = "miniature", layers = 2, hidden = 32, heads = 4 }
knowledge_encoder = { kind = "miniature", layers = 2, hidden = 32, heads = 4 }

[train]
learning_rate = 1e-5

[grid]

[knowledge]
cache = "cache/knowledge.jsonl"
"#;
    let path = dir.path().join("exp.toml");
    fs::write(&path, text).unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.output_dir, dir.path().join("runs/a"));
    assert_eq!(cfg.dataset.source_files.train, dir.path().join("d/train.csv"));
    assert_eq!(cfg.knowledge.cache, dir.path().join("cache/knowledge.jsonl"));
    assert_eq!(cfg.grid.as_ref().unwrap().points().len(), 4);
    assert_eq!(cfg.train.batch_size, 32);
    cfg.validate().unwrap();
    assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
}
