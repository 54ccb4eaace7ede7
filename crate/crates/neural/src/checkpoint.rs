use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use safetensors::{Dtype, SafeTensors};

use crate::encoder::{encoder_param_specs, BertConfig};
use crate::error::{io, NeuralError, Result};
use crate::nn::{ParamStore, Tensor};
use pharmvig_core::textprep::Vocab;

pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const WEIGHTS_FILE: &str = "model.safetensors";

/// Dense weights are kept (in × out) in memory and (out × in) on disk.
fn is_linear(name: &str) -> bool {
    name.ends_with(".weight") && !name.starts_with("embeddings.") && !name.contains("LayerNorm")
}

fn candidates(name: &str) -> Vec<String> {
    let mut out = vec![name.to_string(), format!("bert.{name}")];
    if name.contains("LayerNorm") {
        let legacy = name.replace("LayerNorm.weight", "LayerNorm.gamma").replace("LayerNorm.bias", "LayerNorm.beta");
        out.push(format!("bert.{legacy}"));
        out.push(legacy);
    }
    out
}

fn to_f32(name: &str, dtype: Dtype, bytes: &[u8]) -> Result<Vec<f32>> {
    match dtype {
        Dtype::F32 => Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()),
        Dtype::F64 => Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")) as f32)
            .collect()),
        other => Err(NeuralError::Checkpoint(format!("{name}: unsupported dtype {other:?}"))),
    }
}

pub fn read_config(dir: &Path) -> Result<BertConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let cfg: BertConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `config.json`, `vocab.txt` and `model.safetensors`. `extra` names
/// tensors beyond the encoder (a task head) to load when present.
pub fn load_checkpoint(dir: &Path, extra: &[(&str, usize, usize)]) -> Result<(BertConfig, Vocab, ParamStore)> {
    let cfg = read_config(dir)?;
    let vocab = Vocab::load(dir.join(VOCAB_FILE))?;
    if vocab.len() != cfg.vocab_size {
        return Err(NeuralError::Checkpoint(format!(
            "vocab.txt has {} entries, config says {}",
            vocab.len(),
            cfg.vocab_size
        )));
    }
    let path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&path).map_err(io(&path))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| NeuralError::SafeTensors(e.to_string()))?;
    let available: BTreeMap<String, ()> = st.names().into_iter().map(|n| (n.clone(), ())).collect();

    let mut wanted: Vec<(String, usize, usize, bool)> =
        encoder_param_specs(&cfg).into_iter().map(|(n, r, c, _)| (n, r, c, true)).collect();
    wanted.extend(extra.iter().map(|&(n, r, c)| (n.to_string(), r, c, false)));

    let mut ps = ParamStore::new();
    for (name, rows, cols, required) in wanted {
        let Some(found) = candidates(&name).into_iter().find(|c| available.contains_key(c)) else {
            if required {
                return Err(NeuralError::Checkpoint(format!("{} lacks tensor {name}", path.display())));
            }
            continue;
        };
        let view = st.tensor(&found).map_err(|e| NeuralError::SafeTensors(e.to_string()))?;
        let data = to_f32(&found, view.dtype(), view.data())?;
        let linear = is_linear(&name);
        let disk_shape = if linear { vec![cols, rows] } else if rows == 1 { vec![cols] } else { vec![rows, cols] };
        if view.shape() != disk_shape.as_slice() {
            return Err(NeuralError::Shape(format!("{found} is {:?}, expected {disk_shape:?}", view.shape())));
        }
        let t = if linear { Tensor::from_vec(cols, rows, data).transpose() } else { Tensor::from_vec(rows, cols, data) };
        ps.insert(&name, t)?;
    }
    Ok((cfg, vocab, ps))
}

/// Writes the three checkpoint files. Every parameter in `ps` is saved.
pub fn save_checkpoint(dir: &Path, cfg: &BertConfig, vocab: &Vocab, ps: &ParamStore) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, serde_json::to_string_pretty(cfg)?).map_err(io(&cfg_path))?;
    vocab.save(dir.join(VOCAB_FILE))?;

    let mut blobs: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::with_capacity(ps.len());
    for (_, name, t) in ps.iter() {
        let (t, shape) = if is_linear(name) {
            (t.transpose(), vec![t.cols, t.rows])
        } else if t.rows == 1 {
            (t.clone(), vec![t.cols])
        } else {
            (t.clone(), vec![t.rows, t.cols])
        };
        let bytes = t.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        blobs.push((name.to_string(), shape, bytes));
    }
    let views = blobs
        .iter()
        .map(|(n, s, b)| {
            safetensors::tensor::TensorView::new(Dtype::F32, s.clone(), b)
                .map(|v| (n.clone(), v))
                .map_err(|e| NeuralError::SafeTensors(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let out = safetensors::serialize(views, &None).map_err(|e| NeuralError::SafeTensors(e.to_string()))?;
    let path = dir.join(WEIGHTS_FILE);
    fs::write(&path, out).map_err(io(&path))
}
