//! Run records: what was trained, on which inputs, and how it scored.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pharmvig_core::baselines::{CrfConfig, LrConfig};
use pharmvig_core::corpus::{Task, TrainVariant};
use pharmvig_core::eval::{EpochMetrics, EvalReport};
use pharmvig_neural::downstream::{CnnClassifierConfig, LstmClassifierConfig};
use pharmvig_neural::FinetuneConfig;

use crate::fsutil::{read_json, sha256_hex, write_json};
use crate::models::ModelKey;

pub const FORMAT_VERSION: u32 = 1;
pub const RECORD_FILE: &str = "record.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

/// Fully resolved hyperparameters of one model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyper {
    MostCommon,
    NaiveBayes { alpha: f64, ngram_range: (usize, usize) },
    Crf(CrfConfig),
    Finetune(FinetuneConfig),
    FeaturesLr(LrConfig),
    FeaturesCnn(CnnClassifierConfig),
    FeaturesLstm(LstmClassifierConfig),
}

/// Everything needed to re-run a training command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub task: Task,
    pub model: ModelKey,
    pub trainset: TrainVariant,
    pub epochs: Option<usize>,
    pub seed: u64,
    /// Run whose fine-tuned encoder produced the features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_finetuned: Option<String>,
    pub hyper: Hyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    pub run_id: String,
    pub task: Task,
    pub model: ModelKey,
    pub trainset: TrainVariant,
    pub epochs: Option<usize>,
    pub seed: u64,
    pub request: TrainRequest,
    /// Input name → sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Per-epoch dev metrics (fine-tuning only).
    pub epoch_metrics: Vec<EpochMetrics>,
    /// Per-epoch training loss where the model reports one.
    pub train_loss_history: Vec<f64>,
    pub test: EvalReport,
    /// Artifact name → path relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
}

/// One evaluated test example. Tagging examples carry their words and one
/// label per word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
    pub gold: Vec<String>,
    pub pred: Vec<String>,
}

/// Readable prefix plus a digest of the request and its inputs, so an
/// identical rerun maps to the same id.
pub fn run_id(request: &TrainRequest, inputs: &BTreeMap<String, String>) -> Result<String> {
    let payload = serde_json::to_string(&(request, inputs))?;
    let hash = sha256_hex(payload.as_bytes());
    let epochs = request.epochs.map(|e| format!("-e{e}")).unwrap_or_default();
    Ok(format!(
        "{}-{}-{}{epochs}-s{}-{}",
        request.task,
        request.model,
        request.trainset,
        request.seed,
        &hash[..12]
    ))
}

pub fn runs_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("runs")
}

pub fn run_path(run_dir: &Path, run_id: &str) -> PathBuf {
    runs_dir(run_dir).join(run_id)
}

pub fn load_record(run_dir: &Path, run_id: &str) -> Result<RunRecord> {
    let path = run_path(run_dir, run_id).join(RECORD_FILE);
    if !path.is_file() {
        bail!("no run `{run_id}` under {}", runs_dir(run_dir).display());
    }
    let rec: RunRecord = read_json(&path)?;
    if rec.format_version != FORMAT_VERSION {
        bail!("run {run_id} has format_version {}, expected {FORMAT_VERSION}", rec.format_version);
    }
    Ok(rec)
}

/// Ids of every finalized run, sorted.
pub fn list_runs(run_dir: &Path) -> Result<Vec<String>> {
    let dir = runs_dir(run_dir);
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut ids = Vec::new();
    for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !name.starts_with('.') && entry.path().join(RECORD_FILE).is_file() {
            ids.push(name);
        }
    }
    ids.sort();
    Ok(ids)
}

/// Artifacts are written into a hidden staging directory which is renamed
/// into place only after the record itself is on disk.
pub struct Staging {
    pub dir: PathBuf,
    target: PathBuf,
}

impl Staging {
    pub fn begin(run_dir: &Path, run_id: &str, force: bool) -> Result<Self> {
        let target = run_path(run_dir, run_id);
        if target.exists() && !force {
            bail!("run {run_id} already exists at {}; pass --force to replace it", target.display());
        }
        let dir = runs_dir(run_dir).join(format!(".staging-{run_id}-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, target })
    }

    /// Throwaway directory for a replay; removed on drop.
    pub fn scratch(run_dir: &Path, run_id: &str) -> Result<Self> {
        let dir = runs_dir(run_dir).join(format!(".replay-{run_id}-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { target: dir.clone(), dir })
    }

    pub fn finish(self, record: &RunRecord) -> Result<PathBuf> {
        write_json(&self.dir.join(RECORD_FILE), record)?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target).with_context(|| format!("replacing {}", self.target.display()))?;
        }
        fs::rename(&self.dir, &self.target)
            .with_context(|| format!("moving {} to {}", self.dir.display(), self.target.display()))?;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.dir.exists() {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}
