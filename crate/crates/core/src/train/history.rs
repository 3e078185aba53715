use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::residual::LossBreakdown;

use super::lbfgs::LbfgsReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the training split of the per-batch losses seen during the
    /// epoch.
    pub train: LossBreakdown,
    /// Physics loss on the held-out LR inputs, when scheduled.
    pub test_loss: Option<f64>,
    pub lr: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_loss: Option<f64>,
    pub lbfgs: Option<LbfgsReport>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.train.total)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train.total)
    }

    /// Loss after L-BFGS if it ran, otherwise after the last epoch.
    pub fn final_loss(&self) -> Option<f64> {
        self.lbfgs.as_ref().map(|r| r.exit_loss).or_else(|| self.last_loss())
    }

    /// Equality ignoring wall-clock fields.
    pub fn same_trajectory(&self, other: &TrainHistory) -> bool {
        let strip = |h: &TrainHistory| {
            let mut h = h.clone();
            h.epochs.iter_mut().for_each(|e| e.elapsed_s = 0.0);
            h
        };
        strip(self) == strip(other)
    }

    /// Appends one record as a JSON line.
    pub fn append_log(path: &Path, record: &EpochRecord) -> Result<()> {
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let line = serde_json::to_string(record).map_err(|e| Error::json(path, e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))
    }

    /// Reads back a line-delimited epoch log.
    pub fn read_log(path: &Path) -> Result<Vec<EpochRecord>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
            .collect()
    }
}
