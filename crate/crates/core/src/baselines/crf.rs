//! Linear-chain CRF over the three BIO tags: feature template, forward–backward
//! log-likelihood and gradient, seeded SGD training and Viterbi decoding.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::naive_bayes::log_sum_exp;
use crate::error::{Error, Result};
use crate::labels::{BioTag, Label};
use crate::rng::seeded;

pub const NUM_TAGS: usize = 3;

/// Observation features for word `i`: context words, shape flags, affixes and
/// sentence-boundary markers. Deterministic and duplicate-free.
pub fn crf_features<S: AsRef<str>>(words: &[S], i: usize) -> Vec<String> {
    let word = words[i].as_ref();
    let lower = word.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut feats = vec!["bias".to_string(), format!("w0={lower}")];
    match i.checked_sub(1) {
        Some(p) => feats.push(format!("w-1={}", words[p].as_ref().to_lowercase())),
        None => feats.push("BOS".into()),
    }
    match words.get(i + 1) {
        Some(n) => feats.push(format!("w+1={}", n.as_ref().to_lowercase())),
        None => feats.push("EOS".into()),
    }
    let flag = |b: bool| if b { 1 } else { 0 };
    let has_alpha = word.chars().any(char::is_alphabetic);
    feats.push(format!("cap={}", flag(word.chars().next().is_some_and(char::is_uppercase))));
    feats.push(format!(
        "caps={}",
        flag(has_alpha && word.chars().filter(|c| c.is_alphabetic()).all(char::is_uppercase))
    ));
    feats.push(format!("digit={}", flag(!word.is_empty() && word.chars().all(|c| c.is_ascii_digit()))));
    for k in 1..=3.min(chars.len()) {
        feats.push(format!("pre{k}={}", chars[..k].iter().collect::<String>()));
        feats.push(format!("suf{k}={}", chars[chars.len() - k..].iter().collect::<String>()));
    }
    let mut seen = HashSet::new();
    feats.retain(|f| seen.insert(f.clone()));
    feats
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfConfig {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            l2: 1e-4,
            epochs: 30,
            learning_rate: 0.05,
            seed: 13,
        }
    }
}

/// Weights `w[feature][tag]` for observations and `transitions[prev][next]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CrfFile", into = "CrfFile")]
pub struct CrfModel {
    pub features: Vec<String>,
    pub emission: Vec<[f64; NUM_TAGS]>,
    pub transitions: [[f64; NUM_TAGS]; NUM_TAGS],
    pub l2: f64,
    index: HashMap<String, usize>,
}

/// Same shape as the model's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfGradient {
    pub emission: Vec<[f64; NUM_TAGS]>,
    pub transitions: [[f64; NUM_TAGS]; NUM_TAGS],
}

/// A sentence with its observation features resolved to model indices.
/// Features unknown to the model are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    pub features: Vec<Vec<usize>>,
}

impl EncodedSequence {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Forward and backward log-space tables for one sequence.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub emissions: Vec<[f64; NUM_TAGS]>,
    pub alpha: Vec<[f64; NUM_TAGS]>,
    pub beta: Vec<[f64; NUM_TAGS]>,
}

impl Lattice {
    pub fn log_partition_forward(&self) -> f64 {
        log_sum_exp(self.alpha.last().expect("nonempty lattice"))
    }

    pub fn log_partition_backward(&self) -> f64 {
        let terms: Vec<f64> = (0..NUM_TAGS).map(|y| self.emissions[0][y] + self.beta[0][y]).collect();
        log_sum_exp(&terms)
    }

    /// `P(y_t = y | x)` for every position.
    pub fn node_marginals(&self) -> Vec<[f64; NUM_TAGS]> {
        let z = self.log_partition_forward();
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| std::array::from_fn(|y| (a[y] + b[y] - z).exp()))
            .collect()
    }
}

impl CrfModel {
    pub fn new(features: Vec<String>, l2: f64) -> Self {
        let index = features.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        CrfModel {
            emission: vec![[0.0; NUM_TAGS]; features.len()],
            features,
            transitions: [[0.0; NUM_TAGS]; NUM_TAGS],
            l2,
            index,
        }
    }

    /// Zero-weight model whose feature set is every feature the corpus emits.
    pub fn for_corpus<S: AsRef<str>>(sentences: &[&[S]], l2: f64) -> Self {
        let mut all = BTreeSet::new();
        for words in sentences {
            for i in 0..words.len() {
                all.extend(crf_features(words, i));
            }
        }
        Self::new(all.into_iter().collect(), l2)
    }

    pub fn feature_id(&self, feature: &str) -> Option<usize> {
        self.index.get(feature).copied()
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> EncodedSequence {
        EncodedSequence {
            features: (0..words.len())
                .map(|i| crf_features(words, i).iter().filter_map(|f| self.feature_id(f)).collect())
                .collect(),
        }
    }

    pub fn emission_scores(&self, seq: &EncodedSequence) -> Vec<[f64; NUM_TAGS]> {
        self.emission_scores_scaled(seq, 1.0)
    }

    fn emission_scores_scaled(&self, seq: &EncodedSequence, weight_scale: f64) -> Vec<[f64; NUM_TAGS]> {
        seq.features
            .iter()
            .map(|fs| {
                let mut s = [0.0; NUM_TAGS];
                for &f in fs {
                    for (sy, w) in s.iter_mut().zip(&self.emission[f]) {
                        *sy += w;
                    }
                }
                s.map(|v| v * weight_scale)
            })
            .collect()
    }

    pub fn lattice(&self, seq: &EncodedSequence) -> Lattice {
        self.lattice_scaled(seq, 1.0)
    }

    fn transition(&self, p: usize, q: usize, weight_scale: f64) -> f64 {
        self.transitions[p][q] * weight_scale
    }

    fn lattice_scaled(&self, seq: &EncodedSequence, weight_scale: f64) -> Lattice {
        let emissions = self.emission_scores_scaled(seq, weight_scale);
        let n = emissions.len();
        let mut alpha = vec![[0.0; NUM_TAGS]; n];
        let mut beta = vec![[0.0; NUM_TAGS]; n];
        if n == 0 {
            return Lattice { emissions, alpha, beta };
        }
        alpha[0] = emissions[0];
        for t in 1..n {
            for y in 0..NUM_TAGS {
                let terms: [f64; NUM_TAGS] = std::array::from_fn(|p| alpha[t - 1][p] + self.transition(p, y, weight_scale));
                alpha[t][y] = emissions[t][y] + log_sum_exp(&terms);
            }
        }
        for t in (0..n - 1).rev() {
            for y in 0..NUM_TAGS {
                let terms: [f64; NUM_TAGS] =
                    std::array::from_fn(|q| self.transition(y, q, weight_scale) + emissions[t + 1][q] + beta[t + 1][q]);
                beta[t][y] = log_sum_exp(&terms);
            }
        }
        Lattice { emissions, alpha, beta }
    }

    /// Unnormalized log score of a tag path.
    pub fn path_score(&self, seq: &EncodedSequence, tags: &[BioTag]) -> f64 {
        self.path_score_scaled(seq, tags, 1.0)
    }

    fn path_score_scaled(&self, seq: &EncodedSequence, tags: &[BioTag], weight_scale: f64) -> f64 {
        let emissions = self.emission_scores_scaled(seq, weight_scale);
        let mut s = 0.0;
        for (t, tag) in tags.iter().enumerate() {
            s += emissions[t][tag.index()];
            if t > 0 {
                s += self.transition(tags[t - 1].index(), tag.index(), weight_scale);
            }
        }
        s
    }

    pub fn squared_norm(&self) -> f64 {
        self.emission.iter().flatten().chain(self.transitions.iter().flatten()).map(|w| w * w).sum()
    }

    fn zero_gradient(&self) -> CrfGradient {
        CrfGradient {
            emission: vec![[0.0; NUM_TAGS]; self.emission.len()],
            transitions: [[0.0; NUM_TAGS]; NUM_TAGS],
        }
    }

    /// Adds `d log p(gold|x) / d w` into `grad`, touching only the sequence's
    /// features, for the model whose effective weights are the stored ones
    /// times `weight_scale`. Returns `log p(gold|x)`.
    fn accumulate_log_likelihood(
        &self,
        seq: &EncodedSequence,
        gold: &[BioTag],
        weight_scale: f64,
        grad: &mut CrfGradient,
    ) -> Result<f64> {
        let lattice = self.lattice_scaled(seq, weight_scale);
        let log_z = lattice.log_partition_forward();
        let ll = self.path_score_scaled(seq, gold, weight_scale) - log_z;
        if !ll.is_finite() {
            return Err(Error::NonFinite("CRF log-likelihood is not finite".into()));
        }
        let marginals = lattice.node_marginals();
        for (t, fs) in seq.features.iter().enumerate() {
            let g = gold[t].index();
            for &f in fs {
                grad.emission[f][g] += 1.0;
                for y in 0..NUM_TAGS {
                    grad.emission[f][y] -= marginals[t][y];
                }
            }
        }
        for t in 1..seq.len() {
            grad.transitions[gold[t - 1].index()][gold[t].index()] += 1.0;
            for p in 0..NUM_TAGS {
                for q in 0..NUM_TAGS {
                    let edge = lattice.alpha[t - 1][p]
                        + self.transition(p, q, weight_scale)
                        + lattice.emissions[t][q]
                        + lattice.beta[t][q]
                        - log_z;
                    grad.transitions[p][q] -= edge.exp();
                }
            }
        }
        Ok(ll)
    }
}

fn check_gold(seq: &EncodedSequence, gold: &[BioTag]) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::invalid("CRF sequences must be nonempty"));
    }
    if gold.len() != seq.len() {
        return Err(Error::invalid(format!("{} tags for {} words", gold.len(), seq.len())));
    }
    if !crate::labels::is_valid_bio(gold) {
        return Err(Error::invalid("gold tags are not valid BIO"));
    }
    Ok(())
}

/// `log p(gold | x) - (l2/2) ||w||^2` and its exact gradient.
pub fn crf_log_likelihood_and_gradient<S: AsRef<str>>(
    model: &CrfModel,
    words: &[S],
    gold: &[BioTag],
) -> Result<(f64, CrfGradient)> {
    let seq = model.encode(words);
    check_gold(&seq, gold)?;
    let mut grad = model.zero_gradient();
    let ll = model.accumulate_log_likelihood(&seq, gold, 1.0, &mut grad)?;
    for (g, w) in grad.emission.iter_mut().flatten().zip(model.emission.iter().flatten()) {
        *g -= model.l2 * w;
    }
    for (g, w) in grad.transitions.iter_mut().flatten().zip(model.transitions.iter().flatten()) {
        *g -= model.l2 * w;
    }
    let objective = ll - 0.5 * model.l2 * model.squared_norm();
    if !objective.is_finite() {
        return Err(Error::NonFinite("CRF objective is not finite".into()));
    }
    Ok((objective, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfTrained {
    pub model: CrfModel,
    /// Mean per-sentence `log p(gold|x)` after each epoch.
    pub epoch_mean_log_likelihood: Vec<f64>,
}

/// Seeded SGD on the L2-regularized conditional log-likelihood. The
/// regularizer is spread evenly over the sentences of an epoch and applied
/// lazily through a global weight scale.
pub fn crf_train<S: AsRef<str>>(corpus: &[(Vec<S>, Vec<BioTag>)], cfg: &CrfConfig) -> Result<CrfTrained> {
    if cfg.epochs == 0 {
        return Err(Error::invalid("CRF training needs at least one epoch"));
    }
    if corpus.is_empty() {
        return Err(Error::invalid("empty CRF training corpus"));
    }
    let sentences: Vec<&[S]> = corpus.iter().map(|(w, _)| w.as_slice()).collect();
    let mut model = CrfModel::for_corpus(&sentences, cfg.l2);
    let encoded: Vec<EncodedSequence> = sentences.iter().map(|w| model.encode(w)).collect();
    for (seq, (_, gold)) in encoded.iter().zip(corpus) {
        check_gold(seq, gold)?;
    }

    let n = corpus.len() as f64;
    let decay = 1.0 - cfg.learning_rate * cfg.l2 / n;
    if decay <= 0.0 {
        return Err(Error::invalid("learning rate times l2 too large for the corpus size"));
    }
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut scale = 1.0f64;
    let mut grad = model.zero_gradient();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let seq = &encoded[i];
            // Effective weights are the stored ones times `scale`.
            grad.transitions = [[0.0; NUM_TAGS]; NUM_TAGS];
            model.accumulate_log_likelihood(seq, &corpus[i].1, scale, &mut grad)?;
            scale *= decay;
            let step = cfg.learning_rate / scale;
            for fs in &seq.features {
                for &f in fs {
                    let g = std::mem::replace(&mut grad.emission[f], [0.0; NUM_TAGS]);
                    for (w, gy) in model.emission[f].iter_mut().zip(g) {
                        *w += step * gy;
                    }
                }
            }
            for (w, g) in model.transitions.iter_mut().flatten().zip(grad.transitions.iter().flatten()) {
                *w += step * g;
            }
            if scale < 1e-6 {
                rescale(&mut model, scale);
                scale = 1.0;
            }
        }
        rescale(&mut model, scale);
        scale = 1.0;
        let mut total = 0.0;
        for (seq, (_, gold)) in encoded.iter().zip(corpus) {
            let ll = model.path_score(seq, gold) - model.lattice(seq).log_partition_forward();
            if !ll.is_finite() {
                return Err(Error::NonFinite("CRF training diverged".into()));
            }
            total += ll;
        }
        history.push(total / n);
    }
    Ok(CrfTrained {
        model,
        epoch_mean_log_likelihood: history,
    })
}

fn rescale(model: &mut CrfModel, scale: f64) {
    for w in model.emission.iter_mut().flatten().chain(model.transitions.iter_mut().flatten()) {
        *w *= scale;
    }
}

/// Viterbi argmax. Among equal scores the earlier tag in B < I < O wins, both
/// at each backpointer and at the final position.
pub fn crf_decode<S: AsRef<str>>(model: &CrfModel, words: &[S]) -> Vec<BioTag> {
    viterbi(model, &model.encode(words)).0
}

pub fn viterbi(model: &CrfModel, seq: &EncodedSequence) -> (Vec<BioTag>, f64) {
    let n = seq.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let emissions = model.emission_scores(seq);
    let mut delta = vec![[0.0; NUM_TAGS]; n];
    let mut back = vec![[0usize; NUM_TAGS]; n];
    delta[0] = emissions[0];
    for t in 1..n {
        for y in 0..NUM_TAGS {
            let mut best = 0;
            let mut best_score = delta[t - 1][0] + model.transitions[0][y];
            for p in 1..NUM_TAGS {
                let s = delta[t - 1][p] + model.transitions[p][y];
                if s > best_score {
                    best = p;
                    best_score = s;
                }
            }
            delta[t][y] = emissions[t][y] + best_score;
            back[t][y] = best;
        }
    }
    let mut last = 0;
    for y in 1..NUM_TAGS {
        if delta[n - 1][y] > delta[n - 1][last] {
            last = y;
        }
    }
    let score = delta[n - 1][last];
    let mut path = vec![0usize; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    (
        path.into_iter().map(|i| BioTag::from_index(i).expect("tag index")).collect(),
        score,
    )
}

const CRF_FORMAT_VERSION: u32 = 1;

/// Features sorted by name, emission weights flattened `feature * 3 + tag`,
/// transitions flattened `prev * 3 + next`.
#[derive(Serialize, Deserialize)]
struct CrfFile {
    format_version: u32,
    tags: Vec<BioTag>,
    l2: f64,
    features: Vec<String>,
    emission: Vec<f64>,
    transitions: Vec<f64>,
}

impl From<CrfModel> for CrfFile {
    fn from(m: CrfModel) -> Self {
        let mut order: Vec<usize> = (0..m.features.len()).collect();
        order.sort_by(|&a, &b| m.features[a].cmp(&m.features[b]));
        CrfFile {
            format_version: CRF_FORMAT_VERSION,
            tags: BioTag::ALL.to_vec(),
            l2: m.l2,
            features: order.iter().map(|&i| m.features[i].clone()).collect(),
            emission: order.iter().flat_map(|&i| m.emission[i]).collect(),
            transitions: m.transitions.iter().flatten().copied().collect(),
        }
    }
}

impl TryFrom<CrfFile> for CrfModel {
    type Error = Error;

    fn try_from(f: CrfFile) -> Result<Self> {
        if f.format_version != CRF_FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported CRF format {}", f.format_version)));
        }
        if f.tags != BioTag::ALL {
            return Err(Error::invalid("CRF tag set must be B, I, O"));
        }
        if f.emission.len() != f.features.len() * NUM_TAGS || f.transitions.len() != NUM_TAGS * NUM_TAGS {
            return Err(Error::invalid("CRF weight arrays have the wrong length"));
        }
        if f.emission.iter().chain(&f.transitions).any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("CRF weights must be finite".into()));
        }
        let mut model = CrfModel::new(f.features, f.l2);
        if model.index.len() != model.features.len() {
            return Err(Error::invalid("duplicate CRF feature names"));
        }
        for (row, chunk) in model.emission.iter_mut().zip(f.emission.chunks(NUM_TAGS)) {
            row.copy_from_slice(chunk);
        }
        for (p, chunk) in f.transitions.chunks(NUM_TAGS).enumerate() {
            model.transitions[p].copy_from_slice(chunk);
        }
        Ok(model)
    }
}
