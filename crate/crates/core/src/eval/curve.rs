use serde::{Deserialize, Serialize};

use super::table::render_table;
use crate::error::{Error, Result};

/// Dev-set metrics recorded at the end of one training epoch (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub dev_accuracy: f64,
    pub dev_loss: f64,
}

/// Rows ordered by epoch. Epochs must be exactly `1..=n`, each once.
pub fn epoch_curve(records: &[EpochMetrics]) -> Result<Vec<EpochMetrics>> {
    let mut rows = records.to_vec();
    rows.sort_by_key(|r| r.epoch);
    for (i, r) in rows.iter().enumerate() {
        if r.epoch != i + 1 {
            return Err(Error::invalid(format!(
                "epoch records are not 1..={}: found epoch {} at position {}",
                rows.len(),
                r.epoch,
                i + 1
            )));
        }
    }
    Ok(rows)
}

pub fn render_epoch_curve(rows: &[EpochMetrics]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.epoch.to_string(), format!("{:.3}", r.dev_accuracy), format!("{:.3}", r.dev_loss)])
        .collect();
    render_table(&["epoch", "accuracy", "loss"], &body)
}
