//! Classifiers over extracted encoder features.

mod cnn;
mod lstm;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::features::ExtractedFeatures;
use crate::nn::{softmax_row, Adam, AdamConfig, GradStore, Graph, NamedTensor, NodeId, ParamStore};
use pharmvig_core::baselines::{lr_train, LrConfig, LrTrained};
use pharmvig_core::rng::{seeded, SeededRng};
use pharmvig_core::textprep::PaddedEmbeddingMatrix;

pub use cnn::{train_cnn, CnnClassifier, CnnClassifierConfig};
pub use lstm::{train_lstm, LstmClassifier, LstmClassifierConfig};

pub const FORMAT_VERSION: u32 = 1;

/// Logistic regression on the `[CLS]` vectors.
pub fn train_lr_on_cls(features: &ExtractedFeatures, labels: &[usize], classes: usize, cfg: &LrConfig) -> Result<LrTrained> {
    if features.is_empty() {
        return Err(NeuralError::Shape("no feature vectors".into()));
    }
    if features.len() != labels.len() {
        return Err(NeuralError::Shape(format!("{} feature vectors for {} labels", features.len(), labels.len())));
    }
    let dim = features.hidden_dim();
    if let Some(v) = features.cls_vectors.iter().find(|v| v.len() != dim) {
        return Err(NeuralError::Shape(format!("cls vector of {} values, expected {dim}", v.len())));
    }
    let xs: Vec<Vec<f64>> = features.cls_vectors.iter().map(|v| v.iter().map(|&x| f64::from(x)).collect()).collect();
    Ok(lr_train(&xs, labels, classes, cfg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { epochs: 20, learning_rate: 1e-3, batch_size: 32, seed: 13 }
    }
}

/// Shared surface of the two sequence classifiers.
pub trait SequenceClassifier {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn classes(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// 1×classes logits.
    fn logits(&self, g: &mut Graph, x: &PaddedEmbeddingMatrix) -> Result<NodeId>;

    fn predict_proba(&self, x: &PaddedEmbeddingMatrix) -> Result<Vec<f64>> {
        let mut g = Graph::eval(self.params());
        let l = self.logits(&mut g, x)?;
        let mut row = g.value(l).data.clone();
        softmax_row(&mut row);
        Ok(row.into_iter().map(f64::from).collect())
    }

    fn predict(&self, x: &PaddedEmbeddingMatrix) -> Result<usize> {
        let p = self.predict_proba(x)?;
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        Ok(best)
    }

    fn predict_many(&self, xs: &[PaddedEmbeddingMatrix]) -> Result<Vec<usize>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Mean cross-entropy without dropout.
    fn mean_loss(&self, xs: &[PaddedEmbeddingMatrix], labels: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(labels) {
            let p = self.predict_proba(x)?;
            total -= p[y].max(1e-30).ln();
        }
        Ok(total / xs.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained<M> {
    pub model: M,
    /// Mean training cross-entropy after each epoch.
    pub loss_history: Vec<f64>,
}

pub(crate) fn check_inputs(xs: &[PaddedEmbeddingMatrix], labels: &[usize], classes: usize) -> Result<(usize, usize)> {
    if xs.is_empty() {
        return Err(NeuralError::Shape("no training matrices".into()));
    }
    if xs.len() != labels.len() {
        return Err(NeuralError::Shape(format!("{} matrices for {} labels", xs.len(), labels.len())));
    }
    if classes < 2 {
        return Err(NeuralError::Config("at least two classes are needed".into()));
    }
    if let Some(y) = labels.iter().find(|&&y| y >= classes) {
        return Err(NeuralError::Shape(format!("label {y} outside {classes} classes")));
    }
    let (rows, dim) = (xs[0].matrix.rows, xs[0].matrix.dim);
    if let Some(i) = xs.iter().position(|x| x.matrix.rows != rows || x.matrix.dim != dim) {
        return Err(NeuralError::Shape(format!(
            "matrix {i} is {}×{}, expected {rows}×{dim} (front-pad first)",
            xs[i].matrix.rows, xs[i].matrix.dim
        )));
    }
    Ok((rows, dim))
}

pub(crate) fn check_dim(x: &PaddedEmbeddingMatrix, dim: usize) -> Result<()> {
    if x.matrix.dim != dim {
        return Err(NeuralError::Shape(format!("input dim {} but model expects {dim}", x.matrix.dim)));
    }
    Ok(())
}

pub(crate) fn fit<M: SequenceClassifier>(
    model: &mut M,
    xs: &[PaddedEmbeddingMatrix],
    labels: &[usize],
    s: &TrainSettings,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if s.epochs == 0 || s.batch_size == 0 {
        return Err(NeuralError::Config("epochs and batch_size must be positive".into()));
    }
    let mut opt = Adam::new(model.params(), AdamConfig::with_lr(s.learning_rate));
    let mut grads = GradStore::for_params(model.params());
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = Vec::with_capacity(s.epochs);
    for epoch in 1..=s.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(s.batch_size) {
            grads.zero();
            let w = 1.0 / chunk.len() as f32;
            let mut batch_loss = 0.0f32;
            for &i in chunk {
                let mut g = Graph::train(model.params(), rng);
                let l = model.logits(&mut g, &xs[i])?;
                let loss = g.cross_entropy(l, &[Some(labels[i])], w);
                batch_loss += g.value(loss).scalar();
                g.backward(loss, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(NeuralError::NonFinite(format!("epoch {epoch}")));
            }
            opt.step(model.params_mut(), &grads);
        }
        let loss = model.mean_loss(xs, labels)?;
        if !loss.is_finite() {
            return Err(NeuralError::NonFinite(format!("epoch {epoch}")));
        }
        history.push(loss);
    }
    Ok(history)
}

pub(crate) fn new_rng(seed: u64) -> SeededRng {
    seeded(seed)
}

/// Versioned on-disk form shared by both classifiers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct SavedModel<C> {
    pub format_version: u32,
    pub kind: String,
    pub config: C,
    pub input_dim: usize,
    pub classes: usize,
    pub params: Vec<NamedTensor>,
}

impl<C> SavedModel<C> {
    pub fn check(&self, kind: &str) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(NeuralError::Config(format!("unsupported format_version {}", self.format_version)));
        }
        if self.kind != kind {
            return Err(NeuralError::Config(format!("expected a {kind} model, found {}", self.kind)));
        }
        Ok(())
    }
}
