//! Multinomial Naive Bayes over n-gram counts with add-alpha smoothing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::NgramVector;

pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NaiveBayesFile", into = "NaiveBayesFile")]
pub struct NaiveBayesModel {
    pub classes: Vec<String>,
    pub class_log_priors: Vec<f64>,
    /// Per class: `log P(g | c)` for every vocabulary n-gram.
    pub token_log_likelihoods: Vec<BTreeMap<String, f64>>,
    /// Per class: log-likelihood assigned to n-grams outside the vocabulary.
    pub unseen_log_likelihood: Vec<f64>,
    pub alpha: f64,
    pub vocabulary: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbPrediction {
    pub class: usize,
    /// Normalized: `exp` of the entries sums to one.
    pub log_posterior: Vec<f64>,
}

/// `examples` pairs a document with its class index into `classes`.
pub fn nb_train<S: AsRef<str>>(examples: &[(NgramVector, usize)], classes: &[S], alpha: f64) -> Result<NaiveBayesModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("smoothing alpha must be positive, got {alpha}")));
    }
    let k = classes.len();
    let mut docs = vec![0usize; k];
    let mut counts: Vec<BTreeMap<&str, u64>> = vec![BTreeMap::new(); k];
    let mut totals = vec![0u64; k];
    let mut vocabulary = BTreeSet::new();
    for (doc, c) in examples {
        if *c >= k {
            return Err(Error::invalid(format!("class index {c} out of range for {k} classes")));
        }
        docs[*c] += 1;
        for (g, &n) in &doc.counts {
            *counts[*c].entry(g.as_str()).or_insert(0) += u64::from(n);
            totals[*c] += u64::from(n);
            vocabulary.insert(g.clone());
        }
    }
    if let Some(c) = docs.iter().position(|&d| d == 0) {
        return Err(Error::invalid(format!("class `{}` has no training examples", classes[c].as_ref())));
    }
    let n_docs = examples.len() as f64;
    let v = vocabulary.len() as f64;
    let mut token_log_likelihoods = Vec::with_capacity(k);
    let mut unseen = Vec::with_capacity(k);
    for c in 0..k {
        let denom = (totals[c] as f64 + alpha * v).ln();
        let table = vocabulary
            .iter()
            .map(|g| {
                let n = counts[c].get(g.as_str()).copied().unwrap_or(0) as f64;
                (g.clone(), (n + alpha).ln() - denom)
            })
            .collect();
        token_log_likelihoods.push(table);
        unseen.push(alpha.ln() - denom);
    }
    Ok(NaiveBayesModel {
        classes: classes.iter().map(|c| c.as_ref().to_string()).collect(),
        class_log_priors: docs.iter().map(|&d| (d as f64 / n_docs).ln()).collect(),
        token_log_likelihoods,
        unseen_log_likelihood: unseen,
        alpha,
        vocabulary,
    })
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Argmax of prior plus count-weighted log-likelihoods. Ties go to the lower
/// class index.
pub fn nb_predict(model: &NaiveBayesModel, x: &NgramVector) -> NbPrediction {
    let joint: Vec<f64> = (0..model.classes.len())
        .map(|c| {
            let table = &model.token_log_likelihoods[c];
            model.class_log_priors[c]
                + x.counts
                    .iter()
                    .map(|(g, &n)| f64::from(n) * table.get(g).copied().unwrap_or(model.unseen_log_likelihood[c]))
                    .sum::<f64>()
        })
        .collect();
    let mut class = 0;
    for c in 1..joint.len() {
        if joint[c] > joint[class] {
            class = c;
        }
    }
    let z = log_sum_exp(&joint);
    NbPrediction {
        class,
        log_posterior: joint.iter().map(|j| j - z).collect(),
    }
}

const NB_FORMAT_VERSION: u32 = 1;

/// On-disk layout: vocabulary as a sorted list, likelihoods as one flat array
/// per class aligned with it.
#[derive(Serialize, Deserialize)]
struct NaiveBayesFile {
    format_version: u32,
    classes: Vec<String>,
    alpha: f64,
    class_log_priors: Vec<f64>,
    vocabulary: Vec<String>,
    log_likelihoods: Vec<Vec<f64>>,
    unseen_log_likelihood: Vec<f64>,
}

impl From<NaiveBayesModel> for NaiveBayesFile {
    fn from(m: NaiveBayesModel) -> Self {
        let vocabulary: Vec<String> = m.vocabulary.into_iter().collect();
        let log_likelihoods = m
            .token_log_likelihoods
            .iter()
            .map(|t| vocabulary.iter().map(|g| t[g]).collect())
            .collect();
        NaiveBayesFile {
            format_version: NB_FORMAT_VERSION,
            classes: m.classes,
            alpha: m.alpha,
            class_log_priors: m.class_log_priors,
            vocabulary,
            log_likelihoods,
            unseen_log_likelihood: m.unseen_log_likelihood,
        }
    }
}

impl TryFrom<NaiveBayesFile> for NaiveBayesModel {
    type Error = Error;

    fn try_from(f: NaiveBayesFile) -> Result<Self> {
        if f.format_version != NB_FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported naive bayes format {}", f.format_version)));
        }
        let k = f.classes.len();
        if f.class_log_priors.len() != k || f.log_likelihoods.len() != k || f.unseen_log_likelihood.len() != k {
            return Err(Error::invalid("naive bayes tables disagree on class count"));
        }
        let token_log_likelihoods = f
            .log_likelihoods
            .iter()
            .map(|row| {
                if row.len() != f.vocabulary.len() {
                    return Err(Error::invalid("likelihood row length differs from vocabulary"));
                }
                Ok(f.vocabulary.iter().cloned().zip(row.iter().copied()).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NaiveBayesModel {
            classes: f.classes,
            class_log_priors: f.class_log_priors,
            token_log_likelihoods,
            unseen_log_likelihood: f.unseen_log_likelihood,
            alpha: f.alpha,
            vocabulary: f.vocabulary.into_iter().collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::ngram_featurize;
    use proptest::prelude::*;

    fn doc(words: &[&str]) -> NgramVector {
        ngram_featurize(words, (1, 1)).unwrap()
    }

    #[test]
    fn hand_computed_likelihood() {
        let m = nb_train(&[(doc(&["good"]), 0), (doc(&["bad"]), 1)], &["pos", "neg"], 1.0).unwrap();
        // (1 + 1) / (1 + 1 * 2)
        assert!((m.token_log_likelihoods[0]["good"].exp() - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.token_log_likelihoods[0]["bad"].exp() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(nb_predict(&m, &doc(&["good"])).class, 0);
        assert_eq!(nb_predict(&m, &doc(&["bad", "bad"])).class, 1);
    }

    #[test]
    fn likelihoods_normalize_over_vocabulary() {
        let m = nb_train(
            &[(doc(&["a", "b", "a"]), 0), (doc(&["c"]), 1), (doc(&["a", "d"]), 2)],
            &["x", "y", "z"],
            0.5,
        )
        .unwrap();
        for table in &m.token_log_likelihoods {
            let s: f64 = table.values().map(|l| l.exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_documents_fall_back_to_prior() {
        let d = doc(&["same", "words"]);
        let m = nb_train(&[(d.clone(), 0), (d.clone(), 1), (d.clone(), 1)], &["a", "b"], 1.0).unwrap();
        assert_eq!(nb_predict(&m, &d).class, 1);
        assert_eq!(nb_predict(&m, &NgramVector::default()).class, 1);
    }

    #[test]
    fn unseen_ngrams_use_smoothed_mass() {
        let m = nb_train(&[(doc(&["a"]), 0), (doc(&["b"]), 1)], &["p", "q"], 1.0).unwrap();
        assert!((m.unseen_log_likelihood[0].exp() - 1.0 / 3.0).abs() < 1e-12);
        let p = nb_predict(&m, &doc(&["zzz"]));
        assert!((p.log_posterior[0] - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn training_errors() {
        assert!(nb_train(&[(doc(&["a"]), 0)], &["p", "q"], 1.0).is_err());
        assert!(nb_train(&[(doc(&["a"]), 0), (doc(&["b"]), 1)], &["p", "q"], 0.0).is_err());
        assert!(nb_train(&[(doc(&["a"]), 5)], &["p"], 1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = nb_train(&[(doc(&["a", "b"]), 0), (doc(&["b"]), 1)], &["p", "q"], 1.0).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"format_version\":1"));
        let back: NaiveBayesModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    /// Posterior from raw counts by direct probability products, no logs.
    fn brute_posterior(corpus: &[(Vec<usize>, usize)], classes: usize, alpha: f64, query: &[usize]) -> Vec<f64> {
        let used: BTreeSet<usize> = corpus.iter().flat_map(|(d, _)| d.iter().copied()).collect();
        let v = used.len() as f64;
        let mut joint = vec![0.0; classes];
        for (c, j) in joint.iter_mut().enumerate() {
            let n_docs = corpus.iter().filter(|(_, y)| *y == c).count() as f64;
            let mut p = n_docs / corpus.len() as f64;
            let total: f64 = corpus.iter().filter(|(_, y)| *y == c).map(|(d, _)| d.len() as f64).sum();
            for &w in query {
                let count = corpus.iter().filter(|(_, y)| *y == c).map(|(d, _)| d.iter().filter(|&&x| x == w).count()).sum::<usize>() as f64;
                p *= (count + alpha) / (total + alpha * v);
            }
            *j = p;
        }
        let z: f64 = joint.iter().sum();
        joint.iter().map(|j| j / z).collect()
    }

    proptest! {
        #[test]
        fn matches_brute_force_posterior(
            corpus in prop::collection::vec((prop::collection::vec(0usize..8, 1..6), 0usize..3), 20),
            query in prop::collection::vec(0usize..10, 0..5),
            alpha in 0.1f64..2.0,
        ) {
            let classes = 3;
            for c in 0..classes {
                prop_assume!(corpus.iter().any(|(_, y)| *y == c));
            }
            let name = |w: usize| format!("w{w}");
            let examples: Vec<(NgramVector, usize)> = corpus
                .iter()
                .map(|(d, y)| (ngram_featurize(&d.iter().map(|&w| name(w)).collect::<Vec<_>>(), (1, 1)).unwrap(), *y))
                .collect();
            let model = nb_train(&examples, &["a", "b", "c"], alpha).unwrap();
            let q = ngram_featurize(&query.iter().map(|&w| name(w)).collect::<Vec<_>>(), (1, 1)).unwrap();
            let pred = nb_predict(&model, &q);
            let brute = brute_posterior(&corpus, classes, alpha, &query);
            let posterior: Vec<f64> = pred.log_posterior.iter().map(|l| l.exp()).collect();
            prop_assert!((posterior.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for c in 0..classes {
                prop_assert!((posterior[c] - brute[c]).abs() < 1e-9, "{:?} vs {:?}", posterior, brute);
            }
            let best = brute.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(brute[pred.class] >= best - 1e-12);
        }

        #[test]
        fn scaling_counts_keeps_argmax_under_uniform_priors(
            words in prop::collection::vec(0usize..6, 1..6),
            k in 1u32..5,
        ) {
            let name = |w: usize| format!("w{w}");
            let examples = vec![
                (doc(&["w0", "w1", "w1"]), 0),
                (doc(&["w2", "w3"]), 1),
                (doc(&["w4", "w5", "w0"]), 2),
            ];
            let model = nb_train(&examples, &["a", "b", "c"], 1.0).unwrap();
            let x = ngram_featurize(&words.iter().map(|&w| name(w)).collect::<Vec<_>>(), (1, 1)).unwrap();
            let mut scaled = x.clone();
            for v in scaled.counts.values_mut() {
                *v *= k;
            }
            let a = nb_predict(&model, &x);
            let b = nb_predict(&model, &scaled);
            let tied = {
                let mut sorted = a.log_posterior.clone();
                sorted.sort_by(|p, q| q.partial_cmp(p).unwrap());
                (sorted[0] - sorted[1]).abs() < 1e-9
            };
            prop_assume!(!tied);
            prop_assert_eq!(a.class, b.class);
        }
    }
}
