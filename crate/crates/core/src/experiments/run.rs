use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::Utc;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use tracing::info;

use super::config::ExperimentConfig;
use super::table::{emit_table, AvgPlacement, TableCell};
use super::{ExperimentError, Stage};
use crate::datasets::{
    build_split, load_dataset, partition_from_flags, partition_zero_few, Protocol, SplitPlan, StanceExample, StanceLabel,
};
use crate::encoding::{InputEncoder, Variant};
use crate::evaluation::{evaluate_vast, macro_f1, EvalReport};
use crate::knowledge::{
    offline_from_env, KnowledgeCache, KnowledgeRecord, KnowledgeResolver, PageSource, RateLimiter, TargetPageMap,
    WikipediaSource,
};
use crate::model::WsBert;
use crate::training::{grid_search, predict, train, GridPoint, GridRunSummary, LabeledSet, OptimizerSettings, TrainConfig, TrainHistory};

pub const CONFIG_SNAPSHOT: &str = "config.snapshot.toml";
pub const PROVENANCE: &str = "provenance.json";
pub const SPLIT_MANIFEST: &str = "split_manifest.json";
pub const METRICS: &str = "metrics.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

fn stage<E: std::error::Error + Send + Sync + 'static>(stage: Stage) -> impl FnOnce(E) -> ExperimentError {
    move |e| ExperimentError::Stage { stage, source: Box::new(e) }
}

fn io_stage(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::Stage {
        stage: Stage::Output,
        source: format!("{}: {e}", path.display()).into(),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(io_stage(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ExperimentError> {
    write_file(path, serde_json::to_string_pretty(value).expect("json value") + "\n")
}

/// Knobs that are not part of the experiment config itself.
#[derive(Default)]
pub struct RunOptions {
    /// Replaces the MediaWiki client, e.g. with a stub in tests.
    pub page_source: Option<Box<dyn PageSource>>,
    /// Command line as invoked, echoed into provenance.
    pub invocation: Vec<String>,
    /// Skip the test split (training only).
    pub skip_test: bool,
}

/// Dataset, splits and knowledge for one experiment, before any model exists.
pub struct Prepared {
    pub examples: Vec<StanceExample>,
    pub plan: SplitPlan,
    pub knowledge: BTreeMap<String, KnowledgeRecord>,
    pub offline: bool,
}

impl Prepared {
    fn split(&self, ids: &[String]) -> Vec<&StanceExample> {
        let by_id: BTreeMap<&str, &StanceExample> = self.examples.iter().map(|e| (e.example_id.as_str(), e)).collect();
        ids.iter().map(|id| by_id[id.as_str()]).collect()
    }

    pub fn train(&self) -> Vec<&StanceExample> {
        self.split(&self.plan.train)
    }

    pub fn validation(&self) -> Vec<&StanceExample> {
        self.split(&self.plan.validation)
    }

    pub fn test(&self) -> Vec<&StanceExample> {
        self.split(&self.plan.test)
    }

    /// Encodes examples with their target's knowledge text.
    pub fn encode(&self, encoder: &InputEncoder, examples: &[&StanceExample]) -> Result<LabeledSet, ExperimentError> {
        let mut inputs = Vec::with_capacity(examples.len());
        for e in examples {
            let w = &self.knowledge[&e.target].summary;
            let x = encoder.encode(&e.document, &e.target, w).map_err(|err| ExperimentError::Stage {
                stage: Stage::Encoding,
                source: format!("example {}: {err}", e.example_id).into(),
            })?;
            inputs.push(x);
        }
        Ok(LabeledSet::new(inputs, examples.iter().map(|e| e.label.index()).collect()))
    }
}

/// Loads the dataset, builds the protocol's splits and resolves knowledge
/// for every target they contain.
pub fn prepare(cfg: &ExperimentConfig, source: Option<Box<dyn PageSource>>) -> Result<Prepared, ExperimentError> {
    cfg.validate()?;
    let examples = load_dataset(&cfg.dataset).map_err(stage(Stage::Dataset))?;
    let p = &cfg.protocol;
    let plan = build_split(&examples, p.kind, p.source_target.as_deref(), p.destination_target.as_deref())
        .map_err(stage(Stage::Split))?;

    let in_plan: HashSet<&str> = plan.train.iter().chain(&plan.validation).chain(&plan.test).map(String::as_str).collect();
    let mut targets: Vec<&str> =
        examples.iter().filter(|e| in_plan.contains(e.example_id.as_str())).map(|e| e.target.as_str()).collect();
    targets.sort_unstable();
    targets.dedup();

    let offline = cfg.knowledge.offline || offline_from_env();
    let cache = KnowledgeCache::open(&cfg.knowledge.cache).map_err(stage(Stage::Knowledge))?;
    let mut resolver = KnowledgeResolver::new(cache)
        .offline(offline)
        .with_parallelism(cfg.knowledge.parallelism)
        .with_rate_limiter(RateLimiter::new(Duration::from_millis(cfg.knowledge.rate_ms)));
    if let Some(path) = &cfg.knowledge.manual_map {
        resolver = resolver.with_manual_map(TargetPageMap::load(path).map_err(stage(Stage::Knowledge))?);
    }
    if !offline {
        let source = match source {
            Some(s) => s,
            None => {
                let client = match &cfg.knowledge.endpoint {
                    Some(url) => WikipediaSource::with_endpoint(url),
                    None => WikipediaSource::new(),
                };
                Box::new(client.map_err(stage(Stage::Knowledge))?)
            }
        };
        resolver = resolver.with_source(source);
    }
    let resolution = resolver.bulk_resolve(&targets);
    let failures = resolution.failures();
    if !failures.is_empty() {
        let listed: Vec<String> = failures.iter().take(10).map(|f| format!("{:?}: {}", f.target, f.reason)).collect();
        return Err(ExperimentError::Stage {
            stage: Stage::Knowledge,
            source: format!("{} target(s) unresolved: {}", failures.len(), listed.join("; ")).into(),
        });
    }
    let knowledge = resolution.records().map(|r| (r.target.clone(), r.clone())).collect();
    info!(examples = examples.len(), targets = targets.len(), "prepared");
    Ok(Prepared { examples, plan, knowledge, offline })
}

/// Display name of a variant in reports and tables.
pub fn method_name(variant: Variant) -> &'static str {
    match variant {
        Variant::Single => "WS-BERT-Single",
        Variant::Dual => "WS-BERT-Dual",
    }
}

/// Column label of a run: the target, or `source→destination`.
pub fn column_name(cfg: &ExperimentConfig) -> String {
    let p = &cfg.protocol;
    match (p.kind, &p.source_target, &p.destination_target) {
        (Protocol::CrossTarget, Some(s), Some(d)) => format!("{s}→{d}"),
        (_, Some(s), _) => s.clone(),
        _ => cfg.dataset.name.as_str().to_string(),
    }
}

/// Test-set reports for a trained model: one for target-specific and
/// cross-target runs, zero/few/overall for zero/few-shot runs.
pub fn evaluate_test(model: &WsBert, prepared: &Prepared, batch_size: usize) -> Result<Vec<EvalReport>, ExperimentError> {
    let test = prepared.test();
    let set = prepared.encode(&model.input_encoder(), &test)?;
    let pred: Vec<StanceLabel> = predict(model, &set.inputs, batch_size)
        .map_err(stage(Stage::Evaluation))?
        .into_iter()
        .map(|i| StanceLabel::from_index(i).expect("model emits known classes"))
        .collect();
    let gold: Vec<StanceLabel> = test.iter().map(|e| e.label).collect();
    if prepared.plan.protocol == Protocol::ZeroFewShot {
        let partition = partition_from_flags(&test).unwrap_or_else(|| {
            let seen: HashSet<String> = prepared.train().iter().map(|e| e.target.clone()).collect();
            partition_zero_few(&test, &seen)
        });
        let r = evaluate_vast(&pred, &gold, &partition).map_err(stage(Stage::Evaluation))?;
        Ok(r.all().into_iter().cloned().collect())
    } else {
        let arity = crate::datasets::LabelArity::from_count(model.num_labels()).expect("validated label count");
        Ok(vec![macro_f1(&pred, &gold, arity).map_err(stage(Stage::Evaluation))?])
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub reports: Vec<EvalReport>,
    pub history: TrainHistory,
    pub selected: GridPoint,
    pub grid: Vec<GridRunSummary>,
    pub split_sizes: [usize; 3],
}

#[derive(Serialize)]
struct MetricLine<'a> {
    learning_rate: f64,
    wiki_finetune_top_layers: String,
    #[serde(flatten)]
    record: &'a crate::training::EpochRecord,
}

fn grid_points(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let base = GridPoint { learning_rate: cfg.train.learning_rate, wiki_finetune_top_layers: cfg.train.wiki_finetune_top_layers };
    let Some(grid) = &cfg.grid else {
        return vec![base];
    };
    let mut points = grid.points();
    if cfg.model.variant == Variant::Single {
        // no knowledge encoder: the layer axis changes nothing
        points.retain(|p| p.wiki_finetune_top_layers == grid.wiki_finetune_top_layers[0]);
        for p in &mut points {
            p.wiki_finetune_top_layers = base.wiki_finetune_top_layers;
        }
    }
    points
}

fn reports_json(cfg: &ExperimentConfig, reports: &[EvalReport]) -> Value {
    json!({
        "method": method_name(cfg.model.variant),
        "column": column_name(cfg),
        "dataset": cfg.dataset.name.as_str(),
        "protocol": cfg.protocol.kind.as_str(),
        "reports": reports.iter().map(EvalReport::to_flat).collect::<Vec<_>>(),
    })
}

/// Reads back `report.json` as table cells: one per report, with the
/// subset name as column for zero/few-shot runs.
pub fn table_cells(report_json: &Value) -> Result<Vec<TableCell>, ExperimentError> {
    let bad = |m: &str| ExperimentError::InconsistentReports(m.to_string());
    let method = report_json["method"].as_str().ok_or_else(|| bad("report lacks method"))?;
    let column = report_json["column"].as_str().ok_or_else(|| bad("report lacks column"))?;
    let reports = report_json["reports"].as_array().ok_or_else(|| bad("report lacks reports"))?;
    let multi = reports.len() > 1;
    reports
        .iter()
        .map(|r| {
            let map = r.as_object().ok_or_else(|| bad("report entry is not an object"))?;
            let rep = EvalReport::from_flat(map).map_err(|e| ExperimentError::InconsistentReports(e.to_string()))?;
            let col = if multi {
                match rep.subset {
                    crate::evaluation::Subset::ZeroShot => "Zero-shot".to_string(),
                    crate::evaluation::Subset::FewShot => "Few-shot".to_string(),
                    crate::evaluation::Subset::All => "Overall".to_string(),
                }
            } else {
                column.to_string()
            };
            Ok(TableCell::from_report(method, col, &rep))
        })
        .collect()
}

fn write_reports(dir: &Path, cfg: &ExperimentConfig, reports: &[EvalReport]) -> Result<(), ExperimentError> {
    let doc = reports_json(cfg, reports);
    write_json(&dir.join(REPORT_JSON), &doc)?;
    let mut txt = String::new();
    if !reports.is_empty() {
        let cells = table_cells(&doc)?;
        let table = emit_table(&cells, "Method", AvgPlacement::None)?;
        txt.push_str(&table.to_string());
        txt.push('\n');
    }
    for r in reports {
        txt.push_str(&format!("[{}] n={} f_avg={:.4}\n", r.subset.as_str(), r.count, r.f_avg));
        for (label, f1) in &r.per_class_f1 {
            txt.push_str(&format!("  F1 {:<8} {:.4}\n", label.as_str(), f1));
        }
        txt.push_str(&format!("  confusion (gold rows, predicted columns): {:?}\n", r.confusion));
    }
    write_file(&dir.join(REPORT_TXT), txt)
}

/// Full pipeline: knowledge, splits, training (with grid search when
/// configured), test evaluation, and run artifacts under `output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunOutcome, ExperimentError> {
    let started_at = Utc::now();
    let prepared = prepare(cfg, opts.page_source)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_stage(out))?;
    write_file(&out.join(CONFIG_SNAPSHOT), cfg.to_toml())?;
    write_json(&out.join(SPLIT_MANIFEST), &prepared.plan)?;

    let mut root = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_seed: u64 = root.random();
    let train_seed: u64 = root.random();

    let metrics_path = out.join(METRICS);
    let mut metrics = BufWriter::new(File::create(&metrics_path).map_err(io_stage(&metrics_path))?);
    let mut encoded: Option<(LabeledSet, LabeledSet)> = None;
    let points = grid_points(cfg);
    let outcome = grid_search(&points, |point| {
        let mut model = WsBert::new(&cfg.model, &mut ChaCha8Rng::seed_from_u64(init_seed))?;
        if encoded.is_none() {
            let enc = model.input_encoder();
            let tr = prepared.encode(&enc, &prepared.train()).map_err(|e| crate::training::TrainError::InvalidConfig(e.to_string()))?;
            let va = prepared.encode(&enc, &prepared.validation()).map_err(|e| crate::training::TrainError::InvalidConfig(e.to_string()))?;
            encoded = Some((tr, va));
        }
        let (tr, va) = encoded.as_ref().expect("encoded above");
        let tc = TrainConfig {
            learning_rate: point.learning_rate,
            wiki_finetune_top_layers: point.wiki_finetune_top_layers,
            seed: train_seed,
            ..cfg.train.clone()
        };
        let layers = point.wiki_finetune_top_layers.to_string();
        let history = train(&mut model, tr, va, &tc, |r| {
            let line = MetricLine { learning_rate: point.learning_rate, wiki_finetune_top_layers: layers.clone(), record: r };
            let _ = writeln!(metrics, "{}", serde_json::to_string(&line).expect("metric line"));
        })?;
        Ok((history.best_metric(), (model, history)))
    })
    .map_err(stage(Stage::Training))?;
    metrics.flush().map_err(io_stage(&metrics_path))?;
    let (model, history) = outcome.best_run;

    let ckpt = out.join(CHECKPOINT_DIR);
    model.save(&ckpt).map_err(stage(Stage::Output))?;

    let reports = if opts.skip_test { Vec::new() } else { evaluate_test(&model, &prepared, cfg.train.batch_size)? };
    write_reports(out, cfg, &reports)?;

    let effective = TrainConfig {
        learning_rate: outcome.best.learning_rate,
        wiki_finetune_top_layers: outcome.best.wiki_finetune_top_layers,
        seed: train_seed,
        ..cfg.train.clone()
    };
    let weights = ckpt.join("model.safetensors");
    let provenance = json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "started_at": started_at,
        "finished_at": Utc::now(),
        "invocation": opts.invocation,
        "config_snapshot": CONFIG_SNAPSHOT,
        "seed": cfg.seed,
        "derived_seeds": { "model_init": init_seed, "train": train_seed },
        "dataset": { "name": cfg.dataset.name.as_str(), "files": cfg.dataset.source_files },
        "protocol": cfg.protocol,
        "split_sizes": { "train": prepared.plan.train.len(), "validation": prepared.plan.validation.len(), "test": prepared.plan.test.len() },
        "encoders": model.encoder_summary().iter().map(|(role, id, pooling)| json!({"role": role, "id": id, "pooling": pooling})).collect::<Vec<_>>(),
        "optimizer": OptimizerSettings::for_config(&effective),
        "train": effective,
        "grid": outcome.runs,
        "selected": outcome.best,
        "history": { "best_epoch": history.best_epoch, "stopped_epoch": history.stopped_epoch, "stop_reason": history.stop_reason },
        "checkpoint": { "dir": CHECKPOINT_DIR, "weights_bytes": fs::metadata(&weights).map(|m| m.len()).ok() },
        "knowledge": {
            "cache": cfg.knowledge.cache,
            "offline": prepared.offline,
            "records": prepared.knowledge.values().map(|r| json!({
                "target": r.target, "status": r.status, "page_title": r.page_title, "fetched_at": r.fetched_at,
            })).collect::<Vec<_>>(),
        },
    });
    write_json(&out.join(PROVENANCE), &provenance)?;

    Ok(RunOutcome {
        output_dir: out.clone(),
        reports,
        history,
        selected: outcome.best,
        grid: outcome.runs,
        split_sizes: [prepared.plan.train.len(), prepared.plan.validation.len(), prepared.plan.test.len()],
    })
}

/// Re-evaluates a finished run directory from its config snapshot and
/// checkpoint, using only cached knowledge. Rewrites the run's reports.
pub fn evaluate_run(run_dir: &Path) -> Result<Vec<EvalReport>, ExperimentError> {
    let mut cfg = ExperimentConfig::load(&run_dir.join(CONFIG_SNAPSHOT))?;
    cfg.knowledge.offline = true;
    let prepared = prepare(&cfg, None)?;
    let model = WsBert::load(&run_dir.join(CHECKPOINT_DIR)).map_err(stage(Stage::Model))?;
    let reports = evaluate_test(&model, &prepared, cfg.train.batch_size)?;
    write_reports(run_dir, &cfg, &reports)?;
    Ok(reports)
}
