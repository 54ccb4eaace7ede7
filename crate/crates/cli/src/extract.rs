//! `extract`: encoder features for every split of a prepared bundle.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pharmvig_core::corpus::{Task, TrainVariant};
use pharmvig_core::textprep::{front_pad, Matrix};
use pharmvig_neural::{
    extract_embeddings_words, read_features, registry_load, write_features, EncoderSource, ExtractedFeatures,
    TrainedModel, VariantKey,
};

use crate::bundles::{load_split, train_split, SplitData};
use crate::config::ToolkitConfig;
use crate::fsutil::{read_json, sha256_hex, write_json};
use crate::models::ModelKey;
use crate::record::{load_record, run_path};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FINETUNED_MODEL_DIR: &str = "model";

pub fn features_dir(run_dir: &Path, task: Task, key: VariantKey, from_finetuned: Option<&str>) -> PathBuf {
    let name = match from_finetuned {
        Some(run) => format!("{}-ft-{run}", key.name().to_lowercase()),
        None => format!("{}-pretrained", key.name().to_lowercase()),
    };
    run_dir.join("features").join(task.name()).join(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub task: Task,
    pub variant: VariantKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_finetuned: Option<String>,
    pub max_seq_len: usize,
    /// Common front-padded length of every token matrix.
    pub rows: usize,
    /// Split → sha256 of the bundle file the features came from.
    pub bundle_digests: BTreeMap<String, String>,
    /// Split → sha256 of the feature file.
    pub feature_digests: BTreeMap<String, String>,
}

fn existing_splits(run_dir: &Path, task: Task) -> Result<Vec<SplitData>> {
    let mut out = Vec::new();
    for v in TrainVariant::ALL {
        if v != TrainVariant::Natural && task != Task::Presence {
            continue;
        }
        out.push(load_split(run_dir, task, &train_split(v))?);
    }
    out.push(load_split(run_dir, task, "dev")?);
    out.push(load_split(run_dir, task, "test")?);
    Ok(out)
}

/// Runs the encoder once per distinct example id, then front-pads every
/// split to the longest sequence seen in any split.
fn encode_all(
    source: &impl EncoderSource,
    splits: &[SplitData],
    max_seq_len: usize,
) -> Result<(Vec<ExtractedFeatures>, usize)> {
    let mut cache: HashMap<String, (Vec<f32>, Matrix)> = HashMap::new();
    for s in splits {
        let fresh: Vec<_> = s.items.iter().filter(|i| !cache.contains_key(&i.id)).collect();
        let mut seen = std::collections::HashSet::new();
        let fresh: Vec<_> = fresh.into_iter().filter(|i| seen.insert(i.id.clone())).collect();
        if fresh.is_empty() {
            continue;
        }
        let words: Vec<Vec<String>> = fresh.iter().map(|i| i.example.words.clone()).collect();
        let f = extract_embeddings_words(source, &words, max_seq_len)?;
        for ((item, cls), m) in fresh.iter().zip(f.cls_vectors).zip(f.token_matrices) {
            cache.insert(item.id.clone(), (cls, m.unpad()));
        }
    }
    let rows = cache.values().map(|(_, m)| m.rows).max().unwrap_or(0);
    let mut out = Vec::with_capacity(splits.len());
    for s in splits {
        let mut cls_vectors = Vec::with_capacity(s.items.len());
        let mut token_matrices = Vec::with_capacity(s.items.len());
        for item in &s.items {
            let (cls, m) = &cache[&item.id];
            cls_vectors.push(cls.clone());
            token_matrices.push(front_pad(m, rows)?);
        }
        out.push(ExtractedFeatures {
            cls_vectors,
            token_matrices,
            source_variant: source.variant().clone(),
            from_finetuned: source.is_finetuned(),
        });
    }
    Ok((out, rows))
}

pub fn extract(cfg: &ToolkitConfig, task: Task, key: VariantKey, from_finetuned: Option<&str>) -> Result<FeatureManifest> {
    let splits = existing_splits(&cfg.run_dir, task)?;
    let (features, max_seq_len) = match from_finetuned {
        Some(run) => {
            let rec = load_record(&cfg.run_dir, run)?;
            if rec.model != ModelKey::Finetune(key) {
                bail!("run {run} fine-tuned `{}`, not `{}`", rec.model, ModelKey::Finetune(key));
            }
            if rec.task != task {
                bail!("run {run} was fine-tuned for the {} task, not {task}", rec.task);
            }
            let model = TrainedModel::load(&run_path(&cfg.run_dir, run).join(FINETUNED_MODEL_DIR))?;
            let len = model.config.max_seq_len;
            (encode_all(&model, &splits, len)?, len)
        }
        None => {
            let path = cfg.registry.as_ref().context("extracting pretrained features needs `registry` in the config")?;
            let registry = registry_load(path)?;
            let ckpt = registry.load(key)?;
            let len = cfg.finetune.max_seq_len;
            (encode_all(&ckpt, &splits, len)?, len)
        }
    };
    let (features, rows) = features;
    let dir = features_dir(&cfg.run_dir, task, key, from_finetuned);
    let mut manifest = FeatureManifest {
        task,
        variant: key,
        from_finetuned: from_finetuned.map(str::to_string),
        max_seq_len,
        rows,
        bundle_digests: BTreeMap::new(),
        feature_digests: BTreeMap::new(),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for (s, f) in splits.iter().zip(&features) {
        let path = dir.join(format!("{}.feat", s.name));
        write_features(&path, f)?;
        let bytes = std::fs::read(&path).with_context(|| format!("reading back {}", path.display()))?;
        manifest.bundle_digests.insert(s.name.clone(), s.digest.clone());
        manifest.feature_digests.insert(s.name.clone(), sha256_hex(&bytes));
    }
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Features of one split, checked against the bundle they must match.
pub fn load_split_features(dir: &Path, split: &SplitData) -> Result<(ExtractedFeatures, String)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        bail!("no features at {}; run `extract` first", dir.display());
    }
    let manifest: FeatureManifest = read_json(&manifest_path)?;
    match manifest.bundle_digests.get(&split.name) {
        Some(d) if *d == split.digest => {}
        Some(_) => bail!("features in {} are stale for split {}; re-run `extract`", dir.display(), split.name),
        None => bail!("features in {} lack split {}", dir.display(), split.name),
    }
    let path = dir.join(format!("{}.feat", split.name));
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let digest = sha256_hex(&bytes);
    if manifest.feature_digests.get(&split.name) != Some(&digest) {
        bail!("{} does not match its manifest; re-run `extract`", path.display());
    }
    let f = read_features(&path)?;
    if f.len() != split.items.len() {
        bail!("{} holds {} examples but split {} has {}", path.display(), f.len(), split.name, split.items.len());
    }
    Ok((f, digest))
}
