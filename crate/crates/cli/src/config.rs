//! Toolkit configuration: data locations, registry, run directory and the
//! default hyperparameters every command starts from.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pharmvig_core::corpus::{DEFAULT_DEV_FRACTION, DEFAULT_TEST_FRACTION};

pub const RUN_DIR_ENV: &str = "PHARMVIG_RUN_DIR";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// Tab-separated review files.
    pub reviews_train: Option<PathBuf>,
    pub reviews_test: Option<PathBuf>,
    /// JSONL `{"tweet_id", "label"}` annotations.
    pub tweet_annotations: Option<PathBuf>,
    /// JSONL `{"tweet_id", "text"}` resolved tweet texts.
    pub tweet_texts: Option<PathBuf>,
    /// JSONL `{"tweet_id", "text", "spans"}` ADR mention annotations.
    pub ner: Option<PathBuf>,
}

impl DataPaths {
    fn all_mut(&mut self) -> [(&'static str, &mut Option<PathBuf>); 5] {
        [
            ("reviews_train", &mut self.reviews_train),
            ("reviews_test", &mut self.reviews_test),
            ("tweet_annotations", &mut self.tweet_annotations),
            ("tweet_texts", &mut self.tweet_texts),
            ("ner", &mut self.ner),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RebalanceFractions {
    /// Minority fraction after oversampling.
    pub oversample: f64,
    /// Minority fraction after undersampling.
    pub undersample: f64,
}

impl Default for RebalanceFractions {
    fn default() -> Self {
        Self { oversample: 0.5, undersample: 1.0 / 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneDefaults {
    pub max_seq_len: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub epochs: usize,
}

impl Default for FinetuneDefaults {
    fn default() -> Self {
        Self { max_seq_len: 128, batch_size: 32, learning_rate: 2e-5, epochs: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownstreamDefaults {
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub cnn_filter_widths: Vec<usize>,
    pub cnn_filters_per_width: usize,
    pub cnn_dropout: f32,
    pub lstm_hidden_dim: usize,
    pub lr_l2: f64,
    pub lr_learning_rate: f64,
    pub lr_epochs: usize,
}

impl Default for DownstreamDefaults {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 32,
            cnn_filter_widths: vec![3, 4, 5],
            cnn_filters_per_width: 64,
            cnn_dropout: 0.1,
            lstm_hidden_dim: 128,
            lr_l2: 1e-4,
            lr_learning_rate: 0.1,
            lr_epochs: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineDefaults {
    pub nb_alpha: f64,
    pub crf_l2: f64,
    pub crf_epochs: usize,
    pub crf_learning_rate: f64,
}

impl Default for BaselineDefaults {
    fn default() -> Self {
        Self { nb_alpha: 1.0, crf_l2: 1e-4, crf_epochs: 30, crf_learning_rate: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolkitConfig {
    pub data: DataPaths,
    pub registry: Option<PathBuf>,
    pub run_dir: PathBuf,
    pub seed: u64,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub rebalance: RebalanceFractions,
    pub finetune: FinetuneDefaults,
    pub downstream: DownstreamDefaults,
    pub baselines: BaselineDefaults,
}

impl Default for ToolkitConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            registry: None,
            run_dir: PathBuf::from("runs"),
            seed: 13,
            dev_fraction: DEFAULT_DEV_FRACTION,
            test_fraction: DEFAULT_TEST_FRACTION,
            rebalance: RebalanceFractions::default(),
            finetune: FinetuneDefaults::default(),
            downstream: DownstreamDefaults::default(),
            baselines: BaselineDefaults::default(),
        }
    }
}

impl ToolkitConfig {
    /// Reads a JSON config. Relative paths are taken from the config file's
    /// directory; every referenced file must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ToolkitConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve(&base);
        cfg.apply_env();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults rooted at `base`, with the environment override applied.
    pub fn defaults_in(base: &Path) -> Self {
        let mut cfg = Self::default();
        cfg.resolve(base);
        cfg.apply_env();
        cfg
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for (_, p) in self.data.all_mut() {
            if let Some(p) = p {
                join(p);
            }
        }
        if let Some(r) = &mut self.registry {
            join(r);
        }
        join(&mut self.run_dir);
    }

    fn apply_env(&mut self) {
        if let Some(dir) = env::var_os(RUN_DIR_ENV).filter(|d| !d.is_empty()) {
            self.run_dir = PathBuf::from(dir);
        }
    }

    pub fn validate(&mut self) -> Result<()> {
        let mut missing = Vec::new();
        for (name, p) in self.data.all_mut() {
            if let Some(p) = p {
                if !p.is_file() {
                    missing.push(format!("data.{name}: {}", p.display()));
                }
            }
        }
        if let Some(r) = &self.registry {
            if !r.is_file() {
                missing.push(format!("registry: {}", r.display()));
            }
        }
        if !missing.is_empty() {
            bail!("missing files:\n  {}", missing.join("\n  "));
        }
        for (name, f) in [("dev_fraction", self.dev_fraction), ("test_fraction", self.test_fraction)] {
            if !(0.0..1.0).contains(&f) {
                bail!("{name} {f} not in [0, 1)");
            }
        }
        if self.dev_fraction + self.test_fraction >= 1.0 {
            bail!("dev_fraction + test_fraction leaves no training data");
        }
        Ok(())
    }

    /// The named data paths, or an error listing every one that is unset.
    pub fn require(&self, names: &[&str]) -> Result<Vec<PathBuf>> {
        let mut data = self.data.clone();
        let all = data.all_mut();
        let mut found = Vec::new();
        let mut missing = Vec::new();
        for name in names {
            match all.iter().find(|(n, _)| n == name) {
                Some((_, Some(p))) => found.push(p.clone()),
                Some((_, None)) => missing.push(format!("data.{name}")),
                None => bail!("unknown data entry {name}"),
            }
        }
        if !missing.is_empty() {
            bail!("raw data not configured: {}", missing.join(", "));
        }
        Ok(found)
    }
}
