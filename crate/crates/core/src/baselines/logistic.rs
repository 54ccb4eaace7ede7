//! Multinomial logistic regression trained by seeded mini-batch gradient descent.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig {
            l2: 1e-4,
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 32,
            seed: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegressionModel {
    pub format_version: u32,
    pub dim: usize,
    pub classes: usize,
    /// Row-major `dim x classes`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrTrained {
    pub model: LogisticRegressionModel,
    /// Regularized training objective before training, then after each epoch.
    pub loss_history: Vec<f64>,
}

impl LogisticRegressionModel {
    pub fn zeros(dim: usize, classes: usize, l2: f64) -> Self {
        LogisticRegressionModel {
            format_version: 1,
            dim,
            classes,
            weights: vec![0.0; dim * classes],
            bias: vec![0.0; classes],
            l2,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.classes..(i + 1) * self.classes];
            for (zc, w) in z.iter_mut().zip(row) {
                *zc += xi * w;
            }
        }
        z
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Mean cross-entropy plus `(l2 / 2) * ||W||^2`.
    pub fn objective(&self, features: &[Vec<f64>], labels: &[usize]) -> f64 {
        let ce: f64 = features
            .iter()
            .zip(labels)
            .map(|(x, &y)| -self.predict_proba(x)[y].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / features.len().max(1) as f64;
        ce + 0.5 * self.l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Gradient of [`objective`](Self::objective) over the given rows:
    /// `(d weights, d bias)`.
    pub fn gradient(&self, features: &[Vec<f64>], labels: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let k = self.classes;
        let mut gw: Vec<f64> = self.weights.iter().map(|w| self.l2 * w).collect();
        let mut gb = vec![0.0; k];
        let scale = 1.0 / features.len().max(1) as f64;
        for (x, &y) in features.iter().zip(labels) {
            let mut delta = self.predict_proba(x);
            delta[y] -= 1.0;
            for (b, d) in gb.iter_mut().zip(&delta) {
                *b += scale * d;
            }
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                for (c, d) in delta.iter().enumerate() {
                    gw[i * k + c] += scale * xi * d;
                }
            }
        }
        (gw, gb)
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..z.len() {
        if z[i] > z[best] {
            best = i;
        }
    }
    best
}

pub fn lr_train(features: &[Vec<f64>], labels: &[usize], classes: usize, cfg: &LrConfig) -> Result<LrTrained> {
    if cfg.epochs == 0 {
        return Err(Error::invalid("logistic regression needs at least one epoch"));
    }
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::invalid(format!("{} feature rows for {} labels", features.len(), labels.len())));
    }
    let dim = features[0].len();
    if let Some(i) = features.iter().position(|x| x.len() != dim) {
        return Err(Error::invalid(format!("row {i} has dimension {}, expected {dim}", features[i].len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label {y} out of range for {classes} classes")));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }

    let mut model = LogisticRegressionModel::zeros(dim, classes, cfg.l2);
    let mut loss_history = vec![model.objective(features, labels)];
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<Vec<f64>> = batch.iter().map(|&i| features[i].clone()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (gw, gb) = model.gradient(&xs, &ys);
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= cfg.learning_rate * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&gb) {
                *b -= cfg.learning_rate * g;
            }
        }
        let loss = model.objective(features, labels);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "logistic regression loss diverged at epoch {epoch}; lower the learning rate"
            )));
        }
        loss_history.push(loss);
    }
    Ok(LrTrained { model, loss_history })
}
