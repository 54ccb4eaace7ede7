use std::fmt::Display;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::Label;

/// Rows are gold labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn get(&self, gold: &str, pred: &str) -> Option<u64> {
        Some(self.counts[self.index_of(gold)?][self.index_of(pred)?])
    }

    /// `gold\pred` header row then one row per gold label.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gold\\pred");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(l);
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion<T: Display + PartialEq>(golds: &[T], preds: &[T], labels: &[T]) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::invalid(format!("{} gold labels vs {} predictions", golds.len(), preds.len())));
    }
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    let position = |x: &T| {
        labels
            .iter()
            .position(|l| l == x)
            .ok_or_else(|| Error::UnknownLabel(x.to_string()))
    };
    for (g, p) in golds.iter().zip(preds) {
        counts[position(g)?][position(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.iter().map(|l| l.to_string()).collect(),
        counts,
    })
}

/// Confusion over a closed label set in its canonical order.
pub fn confusion_for<L: Label + Display>(golds: &[L], preds: &[L]) -> Result<ConfusionMatrix> {
    confusion(golds, preds, L::ALL)
}
