use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop(StopReason),
}

/// Patience-based stopping over a validation metric where higher is better.
/// Epochs are numbered from 1; only strict improvements reset the counter.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    max_epochs: usize,
    epoch: usize,
    best: Option<(usize, f64)>,
}

impl EarlyStopper {
    pub fn new(patience: usize, max_epochs: usize) -> Self {
        Self { patience, max_epochs, epoch: 0, best: None }
    }

    /// Records the metric for the next epoch. Returns whether it improved on
    /// every earlier epoch, and whether training should stop.
    pub fn observe(&mut self, metric: f64) -> (bool, StopDecision) {
        self.epoch += 1;
        let improved = match self.best {
            None => !metric.is_nan(),
            Some((_, b)) => metric > b,
        };
        if improved || self.best.is_none() {
            self.best = Some((self.epoch, metric));
        }
        let best_epoch = self.best.map_or(self.epoch, |b| b.0);
        let decision = if self.epoch - best_epoch >= self.patience {
            StopDecision::Stop(StopReason::Patience)
        } else if self.epoch >= self.max_epochs {
            StopDecision::Stop(StopReason::MaxEpochs)
        } else {
            StopDecision::Continue
        };
        (improved, decision)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }

    pub fn best_metric(&self) -> Option<f64> {
        self.best.map(|b| b.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopOutcome {
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub reason: StopReason,
}

/// Replays the stopping rule on a fixed metric sequence. `None` when the
/// sequence ends before the rule stops.
pub fn simulate_early_stopping(curve: &[f64], patience: usize, max_epochs: usize) -> Option<StopOutcome> {
    let mut s = EarlyStopper::new(patience, max_epochs);
    for &m in curve {
        if let (_, StopDecision::Stop(reason)) = s.observe(m) {
            return Some(StopOutcome { best_epoch: s.best_epoch()?, stopped_epoch: s.epoch(), reason });
        }
    }
    None
}
