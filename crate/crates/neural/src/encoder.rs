use serde::{Deserialize, Serialize};

use crate::error::{NeuralError, Result};
use crate::nn::{normal_tensor, Graph, NodeId, ParamId, ParamStore, Tensor};
use pharmvig_core::rng::SeededRng;

fn default_type_vocab() -> usize {
    2
}
fn default_ln_eps() -> f32 {
    1e-12
}
fn default_dropout() -> f32 {
    0.1
}
fn default_act() -> String {
    "gelu".into()
}
fn default_init_range() -> f32 {
    0.02
}

/// Subset of the usual `config.json` fields for a BERT encoder. Unknown
/// fields are ignored on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BertConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f32,
    #[serde(default = "default_dropout")]
    pub hidden_dropout_prob: f32,
    #[serde(default = "default_dropout")]
    pub attention_probs_dropout_prob: f32,
    #[serde(default = "default_act")]
    pub hidden_act: String,
    #[serde(default = "default_init_range")]
    pub initializer_range: f32,
}

impl BertConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NeuralError::Config(m));
        if self.hidden_size == 0 || self.num_attention_heads == 0 || self.num_hidden_layers == 0 {
            return bad("hidden size, heads and layers must be positive".into());
        }
        if !self.hidden_size.is_multiple_of(self.num_attention_heads) {
            return bad(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden_size, self.num_attention_heads
            ));
        }
        if self.hidden_act != "gelu" {
            return bad(format!("unsupported activation {}", self.hidden_act));
        }
        for p in [self.hidden_dropout_prob, self.attention_probs_dropout_prob] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("dropout {p} outside [0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Embedding,
    /// Stored (in × out); checkpoints hold (out × in).
    LinearWeight,
    Bias,
    NormGain,
    NormBias,
}

/// Every encoder parameter with its in-memory shape.
pub fn encoder_param_specs(cfg: &BertConfig) -> Vec<(String, usize, usize, ParamKind)> {
    use ParamKind::*;
    let h = cfg.hidden_size;
    let i = cfg.intermediate_size;
    let mut v = vec![
        ("embeddings.word_embeddings.weight".to_string(), cfg.vocab_size, h, Embedding),
        ("embeddings.position_embeddings.weight".to_string(), cfg.max_position_embeddings, h, Embedding),
        ("embeddings.token_type_embeddings.weight".to_string(), cfg.type_vocab_size, h, Embedding),
        ("embeddings.LayerNorm.weight".to_string(), 1, h, NormGain),
        ("embeddings.LayerNorm.bias".to_string(), 1, h, NormBias),
    ];
    for l in 0..cfg.num_hidden_layers {
        let p = format!("encoder.layer.{l}");
        for (name, rows, cols) in [
            ("attention.self.query", h, h),
            ("attention.self.key", h, h),
            ("attention.self.value", h, h),
            ("attention.output.dense", h, h),
            ("intermediate.dense", h, i),
            ("output.dense", i, h),
        ] {
            v.push((format!("{p}.{name}.weight"), rows, cols, LinearWeight));
            v.push((format!("{p}.{name}.bias"), 1, cols, Bias));
        }
        for name in ["attention.output.LayerNorm", "output.LayerNorm"] {
            v.push((format!("{p}.{name}.weight"), 1, h, NormGain));
            v.push((format!("{p}.{name}.bias"), 1, h, NormBias));
        }
    }
    v.push(("pooler.dense.weight".into(), h, h, LinearWeight));
    v.push(("pooler.dense.bias".into(), 1, h, Bias));
    v
}

/// Fresh parameters drawn like BERT pre-training does: N(0, range) for
/// matrices, zero biases, unit norm gains.
pub fn init_encoder_params(cfg: &BertConfig, rng: &mut SeededRng) -> Result<ParamStore> {
    cfg.validate()?;
    let mut ps = ParamStore::new();
    for (name, rows, cols, kind) in encoder_param_specs(cfg) {
        let t = match kind {
            ParamKind::Embedding | ParamKind::LinearWeight => normal_tensor(rows, cols, cfg.initializer_range, rng),
            ParamKind::Bias | ParamKind::NormBias => Tensor::zeros(rows, cols),
            ParamKind::NormGain => Tensor::filled(rows, cols, 1.0),
        };
        ps.insert(&name, t)?;
    }
    Ok(ps)
}

#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Layer {
    query: Dense,
    key: Dense,
    value: Dense,
    attn_out: Dense,
    attn_norm: Norm,
    intermediate: Dense,
    output: Dense,
    out_norm: Norm,
}

/// Parameter handles for one encoder inside a ParamStore.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: BertConfig,
    word: ParamId,
    position: ParamId,
    token_type: ParamId,
    emb_norm: Norm,
    layers: Vec<Layer>,
    pooler: Dense,
}

impl Encoder {
    /// Binds to parameters already present in `ps`, checking every shape.
    pub fn bind(config: BertConfig, ps: &ParamStore) -> Result<Self> {
        config.validate()?;
        for (name, rows, cols, _) in encoder_param_specs(&config) {
            let t = ps.by_name(&name).ok_or_else(|| NeuralError::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != (rows, cols) {
                return Err(NeuralError::Shape(format!(
                    "{name} is {:?}, config implies {:?}",
                    t.shape(),
                    (rows, cols)
                )));
            }
        }
        let dense = |p: &str| -> Result<Dense> {
            Ok(Dense { w: ps.id(&format!("{p}.weight"))?, b: ps.id(&format!("{p}.bias"))? })
        };
        let norm = |p: &str| -> Result<Norm> {
            Ok(Norm { g: ps.id(&format!("{p}.weight"))?, b: ps.id(&format!("{p}.bias"))? })
        };
        let mut layers = Vec::with_capacity(config.num_hidden_layers);
        for l in 0..config.num_hidden_layers {
            let p = format!("encoder.layer.{l}");
            layers.push(Layer {
                query: dense(&format!("{p}.attention.self.query"))?,
                key: dense(&format!("{p}.attention.self.key"))?,
                value: dense(&format!("{p}.attention.self.value"))?,
                attn_out: dense(&format!("{p}.attention.output.dense"))?,
                attn_norm: norm(&format!("{p}.attention.output.LayerNorm"))?,
                intermediate: dense(&format!("{p}.intermediate.dense"))?,
                output: dense(&format!("{p}.output.dense"))?,
                out_norm: norm(&format!("{p}.output.LayerNorm"))?,
            });
        }
        Ok(Self {
            word: ps.id("embeddings.word_embeddings.weight")?,
            position: ps.id("embeddings.position_embeddings.weight")?,
            token_type: ps.id("embeddings.token_type_embeddings.weight")?,
            emb_norm: norm("embeddings.LayerNorm")?,
            layers,
            pooler: dense("pooler.dense")?,
            config,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    /// Final-layer hidden states, one row per subtoken. A single unpadded
    /// sequence, so no attention mask is needed.
    pub fn forward(&self, g: &mut Graph, ids: &[u32]) -> Result<NodeId> {
        let cfg = &self.config;
        let n = ids.len();
        if n == 0 || n > cfg.max_position_embeddings {
            return Err(NeuralError::Shape(format!(
                "sequence length {n} outside 1..={}",
                cfg.max_position_embeddings
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= cfg.vocab_size) {
            return Err(NeuralError::Shape(format!("token id {bad} outside vocabulary of {}", cfg.vocab_size)));
        }
        let ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let positions: Vec<usize> = (0..n).collect();
        let w = g.gather(self.word, &ids);
        let p = g.gather(self.position, &positions);
        let t = g.gather(self.token_type, &vec![0; n]);
        let x = g.add(w, p);
        let x = g.add(x, t);
        let x = g.layer_norm(x, self.emb_norm.g, self.emb_norm.b, cfg.layer_norm_eps);
        let mut x = g.dropout(x, cfg.hidden_dropout_prob);

        let heads = cfg.num_attention_heads;
        let dh = cfg.hidden_size / heads;
        let scale = 1.0 / (dh as f32).sqrt();
        for layer in &self.layers {
            let q = g.linear(x, layer.query.w, layer.query.b);
            let k = g.linear(x, layer.key.w, layer.key.b);
            let v = g.linear(x, layer.value.w, layer.value.b);
            let mut ctx = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = g.slice_cols(q, h * dh, dh);
                let kh = g.slice_cols(k, h * dh, dh);
                let vh = g.slice_cols(v, h * dh, dh);
                let s = g.matmul_bt(qh, kh);
                let s = g.scale(s, scale);
                let a = g.softmax_rows(s);
                let a = g.dropout(a, cfg.attention_probs_dropout_prob);
                ctx.push(g.matmul(a, vh));
            }
            let c = if heads == 1 { ctx[0] } else { g.concat_cols(&ctx) };
            let o = g.linear(c, layer.attn_out.w, layer.attn_out.b);
            let o = g.dropout(o, cfg.hidden_dropout_prob);
            let o = g.add(o, x);
            let attn = g.layer_norm(o, layer.attn_norm.g, layer.attn_norm.b, cfg.layer_norm_eps);

            let inter = g.linear(attn, layer.intermediate.w, layer.intermediate.b);
            let inter = g.gelu(inter);
            let out = g.linear(inter, layer.output.w, layer.output.b);
            let out = g.dropout(out, cfg.hidden_dropout_prob);
            let out = g.add(out, attn);
            x = g.layer_norm(out, layer.out_norm.g, layer.out_norm.b, cfg.layer_norm_eps);
        }
        Ok(x)
    }

    /// tanh(W h_cls + b) over the first row.
    pub fn pool(&self, g: &mut Graph, hidden: NodeId) -> NodeId {
        let cls = g.slice_rows(hidden, 0, 1);
        let p = g.linear(cls, self.pooler.w, self.pooler.b);
        g.tanh(p)
    }
}
