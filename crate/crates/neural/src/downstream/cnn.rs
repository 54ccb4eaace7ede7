use serde::{Deserialize, Serialize};

use super::{check_dim, check_inputs, fit, new_rng, SavedModel, SequenceClassifier, Trained, TrainSettings, FORMAT_VERSION};
use crate::error::{NeuralError, Result};
use crate::nn::{fan_in_uniform, Graph, NodeId, ParamId, ParamStore, Tensor};
use pharmvig_core::textprep::PaddedEmbeddingMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnClassifierConfig {
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub dropout: f32,
    #[serde(flatten)]
    pub train: TrainSettings,
}

impl Default for CnnClassifierConfig {
    fn default() -> Self {
        Self { filter_widths: vec![3, 4, 5], filters_per_width: 64, dropout: 0.1, train: TrainSettings::default() }
    }
}

impl CnnClassifierConfig {
    fn validate(&self, seq_len: usize) -> Result<()> {
        if self.filter_widths.is_empty() || self.filters_per_width == 0 {
            return Err(NeuralError::Config("need at least one filter width and one filter".into()));
        }
        for &w in &self.filter_widths {
            if w == 0 {
                return Err(NeuralError::Config("filter width 0".into()));
            }
            if w > seq_len {
                return Err(NeuralError::Config(format!("filter width {w} exceeds sequence length {seq_len}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NeuralError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Convolutions over the token axis, max-pooled per filter, then one dense
/// softmax layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnClassifier {
    pub config: CnnClassifierConfig,
    pub params: ParamStore,
    input_dim: usize,
    classes: usize,
    convs: Vec<(usize, ParamId, ParamId)>,
    dense_w: ParamId,
    dense_b: ParamId,
}

fn conv_names(width: usize) -> (String, String) {
    (format!("conv{width}.weight"), format!("conv{width}.bias"))
}

impl CnnClassifier {
    pub fn new(config: CnnClassifierConfig, input_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = new_rng(seed);
        let mut ps = ParamStore::new();
        let f = config.filters_per_width;
        for &w in &config.filter_widths {
            let (wn, bn) = conv_names(w);
            ps.insert(&wn, fan_in_uniform(w * input_dim, f, w * input_dim, &mut rng))?;
            ps.insert(&bn, Tensor::zeros(1, f))?;
        }
        let feat = f * config.filter_widths.len();
        ps.insert("dense.weight", fan_in_uniform(feat, classes, feat, &mut rng))?;
        ps.insert("dense.bias", Tensor::zeros(1, classes))?;
        Self::bind(config, ps, input_dim, classes)
    }

    fn bind(config: CnnClassifierConfig, params: ParamStore, input_dim: usize, classes: usize) -> Result<Self> {
        let f = config.filters_per_width;
        let mut convs = Vec::new();
        for &w in &config.filter_widths {
            let (wn, bn) = conv_names(w);
            let (wi, bi) = (params.id(&wn)?, params.id(&bn)?);
            if params.get(wi).shape() != (w * input_dim, f) || params.get(bi).shape() != (1, f) {
                return Err(NeuralError::Shape(format!("conv{w} parameters have the wrong shape")));
            }
            convs.push((w, wi, bi));
        }
        let dense_w = params.id("dense.weight")?;
        let dense_b = params.id("dense.bias")?;
        if params.get(dense_w).shape() != (f * convs.len(), classes) {
            return Err(NeuralError::Shape("dense layer has the wrong shape".into()));
        }
        Ok(Self { config, params, input_dim, classes, convs, dense_w, dense_b })
    }

    pub fn to_json(&self) -> Result<String> {
        let saved = SavedModel {
            format_version: FORMAT_VERSION,
            kind: "cnn".into(),
            config: self.config.clone(),
            input_dim: self.input_dim,
            classes: self.classes,
            params: self.params.to_list(),
        };
        Ok(serde_json::to_string(&saved)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let saved: SavedModel<CnnClassifierConfig> = serde_json::from_str(s)?;
        saved.check("cnn")?;
        Self::bind(saved.config, ParamStore::from_list(saved.params)?, saved.input_dim, saved.classes)
    }

    /// Reorders the filters of one width. Used to check that pooling and
    /// the dense layer do not depend on filter order.
    pub fn permute_filters(&mut self, width: usize, perm: &[usize]) -> Result<()> {
        let f = self.config.filters_per_width;
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..f).collect::<Vec<_>>() {
            return Err(NeuralError::Config("not a permutation of the filters".into()));
        }
        let block = self
            .convs
            .iter()
            .position(|c| c.0 == width)
            .ok_or_else(|| NeuralError::Config(format!("no filters of width {width}")))?;
        let (_, wi, bi) = self.convs[block];
        let permute_cols = |t: &Tensor| {
            let mut out = t.clone();
            for r in 0..t.rows {
                for (new, &old) in perm.iter().enumerate() {
                    out.set(r, new, t.get(r, old));
                }
            }
            out
        };
        let w = permute_cols(self.params.get(wi));
        let b = permute_cols(self.params.get(bi));
        *self.params.get_mut(wi) = w;
        *self.params.get_mut(bi) = b;
        let dense = self.params.get(self.dense_w).clone();
        let mut out = dense.clone();
        for (new, &old) in perm.iter().enumerate() {
            out.row_mut(block * f + new).copy_from_slice(dense.row(block * f + old));
        }
        *self.params.get_mut(self.dense_w) = out;
        Ok(())
    }

    /// Max-pooled filter responses before the dense layer, 1 × (widths·filters).
    pub fn pooled_features(&self, x: &PaddedEmbeddingMatrix) -> Result<Vec<f32>> {
        let mut g = Graph::eval(&self.params);
        let p = self.pooled(&mut g, x)?;
        Ok(g.value(p).data.clone())
    }

    fn pooled(&self, g: &mut Graph, x: &PaddedEmbeddingMatrix) -> Result<NodeId> {
        check_dim(x, self.input_dim)?;
        let t = x.matrix.rows;
        let d = x.matrix.dim;
        let mut pooled = Vec::with_capacity(self.convs.len());
        for &(w, wi, bi) in &self.convs {
            if w > t {
                return Err(NeuralError::Config(format!("filter width {w} exceeds sequence length {t}")));
            }
            let windows = t - w + 1;
            let mut cols = Tensor::zeros(windows, w * d);
            for s in 0..windows {
                cols.row_mut(s).copy_from_slice(&x.matrix.data[s * d..(s + w) * d]);
            }
            let input = g.input(cols);
            let conv = g.linear(input, wi, bi);
            let act = g.relu(conv);
            pooled.push(g.max_rows(act));
        }
        Ok(if pooled.len() == 1 { pooled[0] } else { g.concat_cols(&pooled) })
    }
}

impl SequenceClassifier for CnnClassifier {
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
        let p = self.pooled(g, x)?;
        let p = g.dropout(p, self.config.dropout);
        Ok(g.linear(p, self.dense_w, self.dense_b))
    }
}

pub fn train_cnn(
    xs: &[PaddedEmbeddingMatrix],
    labels: &[usize],
    classes: usize,
    cfg: &CnnClassifierConfig,
) -> Result<Trained<CnnClassifier>> {
    let (rows, dim) = check_inputs(xs, labels, classes)?;
    cfg.validate(rows)?;
    let mut model = CnnClassifier::new(cfg.clone(), dim, classes, cfg.train.seed)?;
    let mut rng = new_rng(cfg.train.seed.wrapping_add(1));
    let loss_history = fit(&mut model, xs, labels, &cfg.train, &mut rng)?;
    Ok(Trained { model, loss_history })
}
