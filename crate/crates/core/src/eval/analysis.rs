//! Error analyses: the three-class sentiment misclassification partition with
//! seeded samples, and word frequencies behind token-level tagging errors.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{BioTag, SentimentLabel};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentErrorBreakdown {
    pub evaluated: usize,
    pub total_misclassified: usize,
    /// Errors where gold or prediction is neutral.
    pub neutral_involved: usize,
    /// Gold negative predicted positive.
    pub false_positive: usize,
    /// Gold positive predicted negative.
    pub false_negative: usize,
    pub sampled_fp: Vec<String>,
    pub sampled_fn: Vec<String>,
}

impl SentimentErrorBreakdown {
    pub fn neutral_share(&self) -> f64 {
        share(self.neutral_involved, self.total_misclassified)
    }

    pub fn false_positive_share(&self) -> f64 {
        share(self.false_positive, self.total_misclassified)
    }

    pub fn false_negative_share(&self) -> f64 {
        share(self.false_negative, self.total_misclassified)
    }

    pub fn error_rate(&self) -> f64 {
        share(self.total_misclassified, self.evaluated)
    }
}

fn share(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

/// Seeded uniform sample of up to `k` items, kept in input order.
fn sample_ids(ids: &[&str], k: usize, rng: &mut impl rand::Rng) -> Vec<String> {
    let k = k.min(ids.len());
    let mut picked: Vec<usize> = sample(rng, ids.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| ids[i].to_string()).collect()
}

pub fn sentiment_error_breakdown<S: AsRef<str>>(
    golds: &[SentimentLabel],
    preds: &[SentimentLabel],
    ids: &[S],
    sample_k: usize,
    seed: u64,
) -> Result<SentimentErrorBreakdown> {
    if golds.len() != preds.len() || golds.len() != ids.len() {
        return Err(Error::invalid(format!(
            "misaligned inputs: {} golds, {} predictions, {} ids",
            golds.len(),
            preds.len(),
            ids.len()
        )));
    }
    use SentimentLabel::*;
    let mut out = SentimentErrorBreakdown {
        evaluated: golds.len(),
        total_misclassified: 0,
        neutral_involved: 0,
        false_positive: 0,
        false_negative: 0,
        sampled_fp: Vec::new(),
        sampled_fn: Vec::new(),
    };
    let mut fp_ids = Vec::new();
    let mut fn_ids = Vec::new();
    for ((g, p), id) in golds.iter().zip(preds).zip(ids) {
        if g == p {
            continue;
        }
        out.total_misclassified += 1;
        match (g, p) {
            (Negative, Positive) => {
                out.false_positive += 1;
                fp_ids.push(id.as_ref());
            }
            (Positive, Negative) => {
                out.false_negative += 1;
                fn_ids.push(id.as_ref());
            }
            _ => out.neutral_involved += 1,
        }
    }
    let mut rng = seeded(seed);
    out.sampled_fp = sample_ids(&fp_ids, sample_k, &mut rng);
    out.sampled_fn = sample_ids(&fn_ids, sample_k, &mut rng);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenConfusionReport {
    /// Gold B/I predicted O, descending by count, ties alphabetical.
    pub fn_word_counts: Vec<(String, usize)>,
    /// Gold O predicted B/I, same ordering.
    pub fp_word_counts: Vec<(String, usize)>,
}

fn ranked(counts: BTreeMap<String, usize>) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

pub fn token_confusion_report<S: AsRef<str>>(
    gold_tag_seqs: &[Vec<BioTag>],
    pred_tag_seqs: &[Vec<BioTag>],
    word_seqs: &[Vec<S>],
) -> Result<TokenConfusionReport> {
    if gold_tag_seqs.len() != pred_tag_seqs.len() || gold_tag_seqs.len() != word_seqs.len() {
        return Err(Error::invalid("gold, predicted and word sequence counts differ"));
    }
    let mut false_neg = BTreeMap::new();
    let mut false_pos = BTreeMap::new();
    for (n, ((golds, preds), words)) in gold_tag_seqs.iter().zip(pred_tag_seqs).zip(word_seqs).enumerate() {
        if golds.len() != preds.len() || golds.len() != words.len() {
            return Err(Error::invalid(format!("sequence {n} has misaligned tags and words")));
        }
        for ((g, p), w) in golds.iter().zip(preds).zip(words) {
            let key = || w.as_ref().to_lowercase();
            match (g.is_entity(), p.is_entity()) {
                (true, false) => *false_neg.entry(key()).or_insert(0) += 1,
                (false, true) => *false_pos.entry(key()).or_insert(0) += 1,
                _ => {}
            }
        }
    }
    Ok(TokenConfusionReport {
        fn_word_counts: ranked(false_neg),
        fp_word_counts: ranked(false_pos),
    })
}
