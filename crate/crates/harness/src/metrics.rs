//! Evaluation metrics and report types.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{preds} predictions for {labels} labels")]
    Length { preds: usize, labels: usize },
    #[error("no samples")]
    Empty,
    #[error("class {0} out of range for a two-class matrix")]
    Class(usize),
}

/// Two-class confusion matrix. Rows are true classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; 2]; 2],
    /// Counts divided by their predicted-class column total; a column with
    /// no predictions is `None` throughout.
    pub precision: [[Option<f64>; 2]; 2],
}

impl Confusion {
    pub fn accuracy(&self) -> f64 {
        let total: u64 = self.counts.iter().flatten().sum();
        (self.counts[0][0] + self.counts[1][1]) as f64 / total as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion_precision(preds: &[usize], labels: &[usize]) -> Result<Confusion, MetricError> {
    if preds.len() != labels.len() {
        return Err(MetricError::Length {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut counts = [[0u64; 2]; 2];
    for (&p, &t) in preds.iter().zip(labels) {
        if p > 1 || t > 1 {
            return Err(MetricError::Class(p.max(t)));
        }
        counts[t][p] += 1;
    }
    let mut precision = [[None; 2]; 2];
    for col in 0..2 {
        let total = counts[0][col] + counts[1][col];
        if total > 0 {
            for row in 0..2 {
                precision[row][col] = Some(counts[row][col] as f64 / total as f64);
            }
        }
    }
    Ok(Confusion { counts, precision })
}

/// Root-mean-square error as a percentage of the actuator range.
pub fn rmse_percent(preds: &[f64], targets: &[f64], range_width: f64) -> Result<f64, MetricError> {
    if preds.len() != targets.len() {
        return Err(MetricError::Length {
            preds: preds.len(),
            labels: targets.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let mse = preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / preds.len() as f64;
    Ok(100.0 * mse.sqrt() / range_width)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapRmse {
    pub lap: String,
    pub frames: usize,
    pub steering_pct: f64,
    pub throttle_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub checkpoint: String,
    pub train_samples: usize,
    pub test_samples: usize,
    pub confusion: Option<Confusion>,
    pub accuracy: Option<f64>,
    pub laps: Vec<LapRmse>,
    /// RMSE over all held-out windows pooled together.
    pub steering_rmse_pct: Option<f64>,
    pub throttle_rmse_pct: Option<f64>,
}
