use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::error::{io, NeuralError, Result};
use crate::finetune::EncoderSource;
use crate::nn::Graph;
use crate::registry::ModelVariant;
use pharmvig_core::textprep::{front_pad, tokenize_words, word_tokenize, Matrix, PaddedEmbeddingMatrix};

/// Final-layer encoder states for a batch of texts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedFeatures {
    /// Hidden state at the `[CLS]` position, one per text.
    pub cls_vectors: Vec<Vec<f32>>,
    /// All positions, front-padded to the batch's longest subtoken sequence.
    pub token_matrices: Vec<PaddedEmbeddingMatrix>,
    pub source_variant: ModelVariant,
    pub from_finetuned: bool,
}

impl ExtractedFeatures {
    pub fn len(&self) -> usize {
        self.cls_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cls_vectors.is_empty()
    }

    pub fn hidden_dim(&self) -> usize {
        self.source_variant.hidden_dim
    }

    pub fn max_len(&self) -> usize {
        self.token_matrices.first().map_or(0, |m| m.matrix.rows)
    }
}

pub fn extract_embeddings_words(
    source: &impl EncoderSource,
    texts: &[Vec<String>],
    max_seq_len: usize,
) -> Result<ExtractedFeatures> {
    let cfg = source.bert_config().clone();
    let encoder = Encoder::bind(cfg, source.params())?;
    let cased = source.variant().cased;
    let h = encoder.hidden_size();
    let mut cls_vectors = Vec::with_capacity(texts.len());
    let mut raw = Vec::with_capacity(texts.len());
    for words in texts {
        let t = tokenize_words(words, source.vocab(), cased, max_seq_len)?;
        let mut g = Graph::eval(source.params());
        let hidden = encoder.forward(&mut g, &t.subtokens)?;
        let hv = g.value(hidden);
        cls_vectors.push(hv.row(0).to_vec());
        raw.push(Matrix { rows: hv.rows, dim: h, data: hv.data.clone() });
    }
    let max_len = raw.iter().map(|m| m.rows).max().unwrap_or(0);
    let token_matrices = raw.iter().map(|m| front_pad(m, max_len)).collect::<pharmvig_core::Result<Vec<_>>>()?;
    Ok(ExtractedFeatures {
        cls_vectors,
        token_matrices,
        source_variant: source.variant().clone(),
        from_finetuned: source.is_finetuned(),
    })
}

/// Tokenizes raw texts into words first; see `extract_embeddings_words`.
pub fn extract_embeddings<S: AsRef<str>>(
    source: &impl EncoderSource,
    texts: &[S],
    max_seq_len: usize,
) -> Result<ExtractedFeatures> {
    let words: Vec<Vec<String>> = texts.iter().map(|t| word_tokenize(t.as_ref())).collect();
    extract_embeddings_words(source, &words, max_seq_len)
}

const MAGIC: &[u8; 8] = b"PVFEAT01";

#[derive(Serialize, Deserialize)]
struct FeatureMeta {
    source_variant: ModelVariant,
    from_finetuned: bool,
}

/// Layout, all little-endian: magic, u32 meta length, meta JSON, then
/// u64 n, u64 rows, u64 dim, n × u64 valid_from, n × dim f32 cls vectors,
/// n × rows × dim f32 token matrices.
pub fn write_features(path: &Path, f: &ExtractedFeatures) -> Result<()> {
    let dim = f.hidden_dim();
    let rows = f.max_len();
    let meta = serde_json::to_vec(&FeatureMeta { source_variant: f.source_variant.clone(), from_finetuned: f.from_finetuned })?;
    let mut buf = Vec::with_capacity(32 + meta.len() + 4 * f.len() * (rows + 1) * dim);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    for v in [f.len(), rows, dim] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for m in &f.token_matrices {
        if m.matrix.rows != rows || m.matrix.dim != dim {
            return Err(NeuralError::Shape("token matrices are not uniformly padded".into()));
        }
        buf.extend_from_slice(&(m.valid_from as u64).to_le_bytes());
    }
    for v in &f.cls_vectors {
        if v.len() != dim {
            return Err(NeuralError::Shape(format!("cls vector of {} values, expected {dim}", v.len())));
        }
        v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
    }
    for m in &f.token_matrices {
        m.matrix.data.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
    }
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(io(&tmp))?;
    file.write_all(&buf).map_err(io(&tmp))?;
    file.sync_all().map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(NeuralError::Shape("feature file is truncated".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
}

pub fn read_features(path: &Path) -> Result<ExtractedFeatures> {
    let mut data = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut data)).map_err(io(path))?;
    let mut c = Cursor { data: &data, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(NeuralError::Shape(format!("{} is not a feature file", path.display())));
    }
    let meta_len = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes")) as usize;
    let meta: FeatureMeta = serde_json::from_slice(c.take(meta_len)?)?;
    let (n, rows, dim) = (c.u64()?, c.u64()?, c.u64()?);
    if dim != meta.source_variant.hidden_dim {
        return Err(NeuralError::Shape(format!("feature dim {dim} but variant hidden_dim {}", meta.source_variant.hidden_dim)));
    }
    let valid_from = (0..n).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
    let cls_vectors = (0..n).map(|_| c.f32s(dim)).collect::<Result<Vec<_>>>()?;
    let mut token_matrices = Vec::with_capacity(n);
    for vf in valid_from {
        if vf > rows {
            return Err(NeuralError::Shape(format!("valid_from {vf} beyond {rows} rows")));
        }
        token_matrices.push(PaddedEmbeddingMatrix { matrix: Matrix { rows, dim, data: c.f32s(rows * dim)? }, valid_from: vf });
    }
    if c.pos != data.len() {
        return Err(NeuralError::Shape("trailing bytes in feature file".into()));
    }
    Ok(ExtractedFeatures { cls_vectors, token_matrices, source_variant: meta.source_variant, from_finetuned: meta.from_finetuned })
}
