use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, read_config, CONFIG_FILE, VOCAB_FILE, WEIGHTS_FILE};
use crate::encoder::{init_encoder_params, BertConfig};
use crate::error::{io, NeuralError, Result};
use crate::nn::ParamStore;
use pharmvig_core::rng::seeded;
use pharmvig_core::textprep::{Vocab, DEFAULT_MAX_SEQ_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariantKey {
    #[serde(rename = "B-C")]
    BertCased,
    #[serde(rename = "B-U")]
    BertUncased,
    #[serde(rename = "BB-1.0")]
    BioBert10,
    #[serde(rename = "BB-1.1")]
    BioBert11,
    #[serde(rename = "CB-A")]
    ClinicalAll,
    #[serde(rename = "CB-D")]
    ClinicalDischarge,
    #[serde(rename = "CBB-A")]
    ClinicalBioAll,
    #[serde(rename = "CBB-D")]
    ClinicalBioDischarge,
}

impl VariantKey {
    pub const ALL: [VariantKey; 8] = [
        VariantKey::BertCased,
        VariantKey::BertUncased,
        VariantKey::BioBert10,
        VariantKey::BioBert11,
        VariantKey::ClinicalAll,
        VariantKey::ClinicalDischarge,
        VariantKey::ClinicalBioAll,
        VariantKey::ClinicalBioDischarge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKey::BertCased => "B-C",
            VariantKey::BertUncased => "B-U",
            VariantKey::BioBert10 => "BB-1.0",
            VariantKey::BioBert11 => "BB-1.1",
            VariantKey::ClinicalAll => "CB-A",
            VariantKey::ClinicalDischarge => "CB-D",
            VariantKey::ClinicalBioAll => "CBB-A",
            VariantKey::ClinicalBioDischarge => "CBB-D",
        }
    }

    pub fn expected_cased(self) -> bool {
        self != VariantKey::BertUncased
    }
}

impl fmt::Display for VariantKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKey {
    type Err = NeuralError;

    /// Case-insensitive, so `b-u` works on the command line.
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| NeuralError::Registry(format!("unknown model variant {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub key: VariantKey,
    pub checkpoint_ref: String,
    pub cased: bool,
    pub hidden_dim: usize,
}

/// `mini:hidden=32,layers=2,...` builds a randomly initialised encoder of
/// the given size instead of reading weights from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniSpec {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub intermediate: usize,
    pub max_position: usize,
    pub dropout: f32,
    pub seed: u64,
    pub vocab: Option<PathBuf>,
}

impl Default for MiniSpec {
    fn default() -> Self {
        Self {
            hidden: 32,
            layers: 2,
            heads: 2,
            intermediate: 64,
            max_position: DEFAULT_MAX_SEQ_LEN,
            dropout: 0.1,
            seed: 0,
            vocab: None,
        }
    }
}

impl MiniSpec {
    fn parse(body: &str, base: &Path) -> Result<Self> {
        let mut spec = MiniSpec::default();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| NeuralError::Registry(format!("mini option `{part}` is not key=value")))?;
            let num = |v: &str| v.parse::<usize>().map_err(|_| NeuralError::Registry(format!("mini option {k}={v}")));
            match k {
                "hidden" => spec.hidden = num(v)?,
                "layers" => spec.layers = num(v)?,
                "heads" => spec.heads = num(v)?,
                "intermediate" => spec.intermediate = num(v)?,
                "max_position" => spec.max_position = num(v)?,
                "seed" => spec.seed = num(v)? as u64,
                "dropout" => {
                    spec.dropout = v.parse().map_err(|_| NeuralError::Registry(format!("mini option {k}={v}")))?
                }
                "vocab" => spec.vocab = Some(base.join(v)),
                _ => return Err(NeuralError::Registry(format!("unknown mini option {k}"))),
            }
        }
        Ok(spec)
    }

    pub fn vocab(&self) -> Result<Vocab> {
        match &self.vocab {
            Some(p) => Ok(Vocab::load(p)?),
            None => Ok(Vocab::char_level::<&str>(&[])),
        }
    }

    pub fn config(&self, vocab_size: usize) -> BertConfig {
        BertConfig {
            vocab_size,
            hidden_size: self.hidden,
            num_hidden_layers: self.layers,
            num_attention_heads: self.heads,
            intermediate_size: self.intermediate,
            max_position_embeddings: self.max_position,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
            hidden_dropout_prob: self.dropout,
            attention_probs_dropout_prob: self.dropout,
            hidden_act: "gelu".into(),
            initializer_range: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Locator {
    Dir(PathBuf),
    Mini(MiniSpec),
}

impl Locator {
    pub fn parse(reference: &str, base: &Path) -> Result<Self> {
        if let Some(body) = reference.strip_prefix("mini:") {
            return Ok(Locator::Mini(MiniSpec::parse(body, base)?));
        }
        let dir = base.join(reference);
        if dir.is_dir() {
            return Ok(Locator::Dir(dir));
        }
        Err(NeuralError::Registry(format!(
            "checkpoint `{reference}` is neither a local directory nor a mini: spec (download the model and point at its directory)"
        )))
    }
}

/// An encoder ready to be fine-tuned or used for feature extraction.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub variant: ModelVariant,
    pub config: BertConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn load(variant: &ModelVariant, base: &Path) -> Result<Self> {
        let (config, vocab, params) = match Locator::parse(&variant.checkpoint_ref, base)? {
            Locator::Dir(dir) => load_checkpoint(&dir, &[])?,
            Locator::Mini(spec) => Self::mini_parts(&spec)?,
        };
        if config.hidden_size != variant.hidden_dim {
            return Err(NeuralError::Registry(format!(
                "{}: checkpoint hidden size {} but registry says {}",
                variant.key, config.hidden_size, variant.hidden_dim
            )));
        }
        Ok(Self { variant: variant.clone(), config, vocab, params })
    }

    fn mini_parts(spec: &MiniSpec) -> Result<(BertConfig, Vocab, ParamStore)> {
        let vocab = spec.vocab()?;
        let config = spec.config(vocab.len());
        let params = init_encoder_params(&config, &mut seeded(spec.seed))?;
        Ok((config, vocab, params))
    }

    /// Random miniature encoder with an explicit vocabulary.
    pub fn mini(key: VariantKey, spec: &MiniSpec, vocab: Vocab) -> Result<Self> {
        let config = spec.config(vocab.len());
        let params = init_encoder_params(&config, &mut seeded(spec.seed))?;
        let variant = ModelVariant {
            key,
            checkpoint_ref: "mini:".into(),
            cased: key.expected_cased(),
            hidden_dim: spec.hidden,
        };
        Ok(Self { variant, config, vocab, params })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    key: String,
    checkpoint: String,
    cased: bool,
    hidden_dim: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegistry {
    variants: Vec<RawEntry>,
}

/// The eight encoder variants plus the reserved ELMo slot.
#[derive(Debug, Clone)]
pub struct Registry {
    pub variants: BTreeMap<VariantKey, ModelVariant>,
    /// Locator listed under `ELMo`, if any. Not loadable.
    pub elmo: Option<String>,
    base_dir: PathBuf,
}

impl Registry {
    pub fn get(&self, key: VariantKey) -> &ModelVariant {
        &self.variants[&key]
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn load(&self, key: VariantKey) -> Result<Checkpoint> {
        Checkpoint::load(self.get(key), &self.base_dir)
    }
}

fn check_resolvable(v: &ModelVariant, base: &Path) -> Result<()> {
    let err = |m: String| NeuralError::Registry(format!("{}: {m}", v.key));
    match Locator::parse(&v.checkpoint_ref, base).map_err(|e| err(e.to_string()))? {
        Locator::Dir(dir) => {
            for f in [CONFIG_FILE, VOCAB_FILE, WEIGHTS_FILE] {
                if !dir.join(f).is_file() {
                    return Err(err(format!("{} has no {f}", dir.display())));
                }
            }
            let cfg = read_config(&dir).map_err(|e| err(e.to_string()))?;
            if cfg.hidden_size != v.hidden_dim {
                return Err(err(format!("hidden size {} but registry says {}", cfg.hidden_size, v.hidden_dim)));
            }
        }
        Locator::Mini(spec) => {
            if spec.hidden != v.hidden_dim {
                return Err(err(format!("mini hidden {} but registry says {}", spec.hidden, v.hidden_dim)));
            }
            if let Some(p) = &spec.vocab {
                if !p.is_file() {
                    return Err(err(format!("vocab {} not found", p.display())));
                }
            }
        }
    }
    Ok(())
}

/// Reads a registry file. Relative locators resolve against its directory.
pub fn registry_load(path: impl AsRef<Path>) -> Result<Registry> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io(path))?;
    let raw: RawRegistry =
        serde_json::from_str(&text).map_err(|e| NeuralError::Registry(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut variants = BTreeMap::new();
    let mut elmo = None;
    for entry in raw.variants {
        if entry.key.eq_ignore_ascii_case("elmo") {
            if elmo.replace(entry.checkpoint).is_some() {
                return Err(NeuralError::Registry("duplicate key ELMo".into()));
            }
            continue;
        }
        let key: VariantKey = entry.key.parse()?;
        if entry.cased != key.expected_cased() {
            return Err(NeuralError::Registry(format!(
                "{key}: declared cased={} but only B-U is uncased",
                entry.cased
            )));
        }
        let v = ModelVariant { key, checkpoint_ref: entry.checkpoint, cased: entry.cased, hidden_dim: entry.hidden_dim };
        if variants.insert(key, v).is_some() {
            return Err(NeuralError::Registry(format!("duplicate key {key}")));
        }
    }
    let missing: Vec<&str> = VariantKey::ALL.iter().filter(|k| !variants.contains_key(k)).map(|k| k.name()).collect();
    if !missing.is_empty() {
        return Err(NeuralError::Registry(format!("missing checkpoint for {}", missing.join(", "))));
    }
    for v in variants.values() {
        check_resolvable(v, &base)?;
    }
    Ok(Registry { variants, elmo, base_dir: base })
}
