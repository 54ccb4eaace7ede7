use serde::{Deserialize, Serialize};

use super::{check_dim, check_inputs, fit, new_rng, SavedModel, SequenceClassifier, Trained, TrainSettings, FORMAT_VERSION};
use crate::error::{NeuralError, Result};
use crate::nn::{fan_in_uniform, Graph, NodeId, ParamId, ParamStore, Tensor};
use pharmvig_core::textprep::PaddedEmbeddingMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmClassifierConfig {
    pub hidden_dim: usize,
    #[serde(flatten)]
    pub train: TrainSettings,
}

impl Default for LstmClassifierConfig {
    fn default() -> Self {
        Self { hidden_dim: 128, train: TrainSettings::default() }
    }
}

/// One LSTM layer read left to right; the last hidden state feeds a dense
/// softmax layer. Pad rows before `valid_from` are skipped, so the state
/// entering the first real token is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmClassifier {
    pub config: LstmClassifierConfig,
    pub params: ParamStore,
    input_dim: usize,
    classes: usize,
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
    dense_w: ParamId,
    dense_b: ParamId,
}

impl LstmClassifier {
    pub fn new(config: LstmClassifierConfig, input_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let h = config.hidden_dim;
        if h == 0 {
            return Err(NeuralError::Config("hidden_dim must be at least 1".into()));
        }
        let mut rng = new_rng(seed);
        let mut ps = ParamStore::new();
        // gate blocks in column order: input, forget, cell, output
        ps.insert("lstm.wx", fan_in_uniform(input_dim, 4 * h, h, &mut rng))?;
        ps.insert("lstm.wh", fan_in_uniform(h, 4 * h, h, &mut rng))?;
        let mut bias = Tensor::zeros(1, 4 * h);
        bias.data[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
        ps.insert("lstm.bias", bias)?;
        ps.insert("dense.weight", fan_in_uniform(h, classes, h, &mut rng))?;
        ps.insert("dense.bias", Tensor::zeros(1, classes))?;
        Self::bind(config, ps, input_dim, classes)
    }

    fn bind(config: LstmClassifierConfig, params: ParamStore, input_dim: usize, classes: usize) -> Result<Self> {
        let h = config.hidden_dim;
        let expect = [
            ("lstm.wx", (input_dim, 4 * h)),
            ("lstm.wh", (h, 4 * h)),
            ("lstm.bias", (1, 4 * h)),
            ("dense.weight", (h, classes)),
            ("dense.bias", (1, classes)),
        ];
        for (name, shape) in expect {
            let id = params.id(name)?;
            if params.get(id).shape() != shape {
                return Err(NeuralError::Shape(format!("{name} is {:?}, expected {shape:?}", params.get(id).shape())));
            }
        }
        Ok(Self {
            wx: params.id("lstm.wx")?,
            wh: params.id("lstm.wh")?,
            b: params.id("lstm.bias")?,
            dense_w: params.id("dense.weight")?,
            dense_b: params.id("dense.bias")?,
            config,
            params,
            input_dim,
            classes,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let saved = SavedModel {
            format_version: FORMAT_VERSION,
            kind: "lstm".into(),
            config: self.config.clone(),
            input_dim: self.input_dim,
            classes: self.classes,
            params: self.params.to_list(),
        };
        Ok(serde_json::to_string(&saved)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let saved: SavedModel<LstmClassifierConfig> = serde_json::from_str(s)?;
        saved.check("lstm")?;
        Self::bind(saved.config, ParamStore::from_list(saved.params)?, saved.input_dim, saved.classes)
    }

    /// Final hidden state, 1 × hidden_dim.
    pub fn final_state(&self, x: &PaddedEmbeddingMatrix) -> Result<Vec<f32>> {
        let mut g = Graph::eval(&self.params);
        let h = self.run(&mut g, x)?;
        Ok(g.value(h).data.clone())
    }

    fn run(&self, g: &mut Graph, x: &PaddedEmbeddingMatrix) -> Result<NodeId> {
        check_dim(x, self.input_dim)?;
        let hd = self.config.hidden_dim;
        let real = x.unpad();
        let mut h = g.input(Tensor::zeros(1, hd));
        if real.rows == 0 {
            return Ok(h);
        }
        let mut c = g.input(Tensor::zeros(1, hd));
        let xs = g.input(Tensor::from_vec(real.rows, real.dim, real.data));
        let proj = g.linear(xs, self.wx, self.b);
        let wh = g.param(self.wh);
        for t in 0..real.rows {
            let xt = g.slice_rows(proj, t, 1);
            let rec = g.matmul(h, wh);
            let z = g.add(xt, rec);
            let i = g.slice_cols(z, 0, hd);
            let i = g.sigmoid(i);
            let f = g.slice_cols(z, hd, hd);
            let f = g.sigmoid(f);
            let cand = g.slice_cols(z, 2 * hd, hd);
            let cand = g.tanh(cand);
            let o = g.slice_cols(z, 3 * hd, hd);
            let o = g.sigmoid(o);
            let keep = g.mul(f, c);
            let write = g.mul(i, cand);
            c = g.add(keep, write);
            let ct = g.tanh(c);
            h = g.mul(o, ct);
        }
        Ok(h)
    }
}

impl SequenceClassifier for LstmClassifier {
    fn params(&self) -> &ParamStore {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
    fn classes(&self) -> usize {
        self.classes
    }
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn logits(&self, g: &mut Graph, x: &PaddedEmbeddingMatrix) -> Result<NodeId> {
        let h = self.run(g, x)?;
        Ok(g.linear(h, self.dense_w, self.dense_b))
    }
}

pub fn train_lstm(
    xs: &[PaddedEmbeddingMatrix],
    labels: &[usize],
    classes: usize,
    cfg: &LstmClassifierConfig,
) -> Result<Trained<LstmClassifier>> {
    let (_, dim) = check_inputs(xs, labels, classes)?;
    let mut model = LstmClassifier::new(cfg.clone(), dim, classes, cfg.train.seed)?;
    let mut rng = new_rng(cfg.train.seed.wrapping_add(1));
    let loss_history = fit(&mut model, xs, labels, &cfg.train, &mut rng)?;
    Ok(Trained { model, loss_history })
}
