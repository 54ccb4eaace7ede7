use serde::{Deserialize, Serialize};

use super::confusion::ConfusionMatrix;
use super::table::render_table;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMetrics {
    pub label: String,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// In confusion-matrix label order.
    pub per_class: Vec<LabeledMetrics>,
    pub macro_f: f64,
    pub positive_label: Option<String>,
    pub positive_f: Option<f64>,
    pub mean_loss: Option<f64>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class P/R/F with 0/0 taken as 0, macro F over every label in the
/// matrix, and the positive-class F when `positive` names a label.
pub fn metrics(cm: &ConfusionMatrix, positive: Option<&str>) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 || cm.labels.is_empty() {
        return Err(Error::invalid("metrics over an empty confusion matrix"));
    }
    let k = cm.labels.len();
    let per_class: Vec<LabeledMetrics> = (0..k)
        .map(|i| {
            let tp = cm.counts[i][i];
            let predicted: u64 = (0..k).map(|g| cm.counts[g][i]).sum();
            let support: u64 = cm.counts[i].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            LabeledMetrics {
                label: cm.labels[i].clone(),
                metrics: ClassMetrics {
                    precision,
                    recall,
                    f1: harmonic(precision, recall),
                    support,
                },
            }
        })
        .collect();
    let macro_f = per_class.iter().map(|c| c.metrics.f1).sum::<f64>() / k as f64;
    let positive_f = match positive {
        Some(label) => Some(
            per_class
                .iter()
                .find(|c| c.label == label)
                .ok_or_else(|| Error::UnknownLabel(label.to_string()))?
                .metrics
                .f1,
        ),
        None => None,
    };
    Ok(EvalReport {
        accuracy: ratio(cm.trace(), total),
        per_class,
        macro_f,
        positive_label: positive.map(str::to_string),
        positive_f,
        mean_loss: None,
        confusion: cm.clone(),
    })
}

impl EvalReport {
    pub fn with_loss(mut self, mean_loss: f64) -> Self {
        self.mean_loss = Some(mean_loss);
        self
    }

    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.label == label).map(|c| &c.metrics)
    }

    /// Aligned text rendering: per-class table then the summary lines.
    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .per_class
            .iter()
            .map(|c| {
                vec![
                    c.label.clone(),
                    format!("{:.3}", c.metrics.precision),
                    format!("{:.3}", c.metrics.recall),
                    format!("{:.3}", c.metrics.f1),
                    c.metrics.support.to_string(),
                ]
            })
            .collect();
        let mut out = render_table(&["label", "precision", "recall", "f1", "support"], &rows);
        out.push_str(&format!("accuracy  {:.3}\nmacro_f   {:.3}\n", self.accuracy, self.macro_f));
        if let (Some(label), Some(f)) = (&self.positive_label, self.positive_f) {
            out.push_str(&format!("positive_f ({label})  {f:.3}\n"));
        }
        if let Some(loss) = self.mean_loss {
            out.push_str(&format!("mean_loss {loss:.3}\n"));
        }
        out
    }
}

/// Accuracy and macro F of a predictor that always outputs the modal class,
/// when that class makes up fraction `a` of the test set and there are
/// `classes` labels.
pub fn all_modal_closed_form(a: f64, classes: usize) -> (f64, f64) {
    (a, (2.0 * a / (1.0 + a)) / classes as f64)
}
