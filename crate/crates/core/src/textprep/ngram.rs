use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse bag of n-grams. Keys are the n-gram's words joined by one space.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramVector {
    pub counts: BTreeMap<String, u32>,
    pub n_range: (usize, usize),
}

impl NgramVector {
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

pub const DEFAULT_NGRAM_RANGE: (usize, usize) = (1, 2);

pub fn ngram_featurize<S: AsRef<str>>(words: &[S], n_range: (usize, usize)) -> Result<NgramVector> {
    let (lo, hi) = n_range;
    if lo == 0 || lo > hi {
        return Err(Error::invalid(format!("bad n-gram range ({lo}, {hi})")));
    }
    let mut counts = BTreeMap::new();
    for n in lo..=hi {
        for window in words.windows(n) {
            let key = window
                .iter()
                .map(|w| w.as_ref())
                .collect::<Vec<_>>()
                .join(" ");
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    Ok(NgramVector { counts, n_range })
}
