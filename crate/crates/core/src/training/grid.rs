use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::TrainError;
use crate::model::LayerSelection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub wiki_finetune_top_layers: LayerSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_rates")]
    pub learning_rates: Vec<f64>,
    #[serde(default = "default_layers")]
    pub wiki_finetune_top_layers: Vec<LayerSelection>,
}

fn default_rates() -> Vec<f64> {
    vec![1e-5, 2e-5]
}
fn default_layers() -> Vec<LayerSelection> {
    vec![LayerSelection::Top(1), LayerSelection::Top(2)]
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { learning_rates: default_rates(), wiki_finetune_top_layers: default_layers() }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<GridPoint> {
        self.learning_rates
            .iter()
            .flat_map(|&learning_rate| {
                self.wiki_finetune_top_layers
                    .iter()
                    .map(move |&wiki_finetune_top_layers| GridPoint { learning_rate, wiki_finetune_top_layers })
            })
            .collect()
    }
}

fn layer_rank(l: LayerSelection) -> usize {
    match l {
        LayerSelection::Top(k) => k,
        LayerSelection::All => usize::MAX,
    }
}

/// Ordering of grid results: higher metric first, then lower learning rate,
/// then fewer finetuned layers. NaN metrics sort last.
fn preference(a: (&GridPoint, f64), b: (&GridPoint, f64)) -> Ordering {
    let metric = match (a.1.is_nan(), b.1.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => b.1.partial_cmp(&a.1).unwrap(),
    };
    metric
        .then(a.0.learning_rate.total_cmp(&b.0.learning_rate))
        .then(layer_rank(a.0.wiki_finetune_top_layers).cmp(&layer_rank(b.0.wiki_finetune_top_layers)))
}

/// Best grid point by validation metric, with the deterministic tie rule.
pub fn select_best(results: &[(GridPoint, f64)]) -> Option<GridPoint> {
    results
        .iter()
        .filter(|(_, m)| !m.is_nan())
        .min_by(|a, b| preference((&a.0, a.1), (&b.0, b.1)))
        .map(|(p, _)| *p)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRunSummary {
    pub point: GridPoint,
    pub validation_metric: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct GridOutcome<R> {
    pub best: GridPoint,
    pub best_metric: f64,
    pub best_run: R,
    pub runs: Vec<GridRunSummary>,
}

/// Runs every grid point through `run`, which returns the point's best
/// validation metric plus whatever the caller wants to keep. Only the best
/// run's payload is retained. A failing point is logged and skipped.
pub fn grid_search<R>(
    points: &[GridPoint],
    mut run: impl FnMut(&GridPoint) -> Result<(f64, R), TrainError>,
) -> Result<GridOutcome<R>, TrainError> {
    if points.is_empty() {
        return Err(TrainError::EmptyGrid);
    }
    let mut runs = Vec::with_capacity(points.len());
    let mut best: Option<(GridPoint, f64, R)> = None;
    for p in points {
        match run(p) {
            Ok((metric, payload)) => {
                runs.push(GridRunSummary { point: *p, validation_metric: Some(metric), error: None });
                let better = match &best {
                    None => !metric.is_nan(),
                    Some((bp, bm, _)) => preference((p, metric), (bp, *bm)) == Ordering::Less,
                };
                if better {
                    best = Some((*p, metric, payload));
                }
            }
            Err(e) => {
                warn!(learning_rate = p.learning_rate, layers = %p.wiki_finetune_top_layers, error = %e, "grid point failed");
                runs.push(GridRunSummary { point: *p, validation_metric: None, error: Some(e.to_string()) });
            }
        }
    }
    match best {
        Some((best, best_metric, best_run)) => Ok(GridOutcome { best, best_metric, best_run, runs }),
        None => Err(TrainError::AllGridPointsFailed(
            runs.iter().filter_map(|r| r.error.clone()).collect(),
        )),
    }
}
