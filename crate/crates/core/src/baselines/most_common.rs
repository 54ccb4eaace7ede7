use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::Label;

/// Constant classifier that always predicts the modal training label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MostCommonClass<L> {
    pub label: L,
}

impl<L: Label> MostCommonClass<L> {
    /// Ties go to the lexicographically smallest label name.
    pub fn fit(labels: &[L]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("cannot fit most-common-class on no labels"));
        }
        let mut counts: BTreeMap<&'static str, (usize, L)> = BTreeMap::new();
        for &l in labels {
            counts.entry(l.name()).or_insert((0, l)).0 += 1;
        }
        let mut best: Option<(usize, L)> = None;
        for (count, label) in counts.into_values() {
            if best.is_none_or(|(c, _)| count > c) {
                best = Some((count, label));
            }
        }
        Ok(MostCommonClass { label: best.expect("nonempty").1 })
    }

    pub fn predict(&self) -> L {
        self.label
    }

    pub fn predict_many(&self, n: usize) -> Vec<L> {
        vec![self.label; n]
    }
}
