//! `prepare`: canonical JSONL bundles per task and their summary tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use pharmvig_core::corpus::{
    load_drug_reviews, load_ner_corpus, load_tweet_corpus, make_ner_bundle, make_presence_bundle,
    make_sentiment_bundle, JsonlResolver, NerRecord, RebalanceSpec, SentimentExample, Task, TrainVariant,
    TweetRecord,
};
use pharmvig_core::eval::render_table;
use pharmvig_core::{BioTag, Label, PresenceLabel, SentimentLabel};
use pharmvig_neural::{LabeledText, Supervised, Target};

use crate::config::ToolkitConfig;
use crate::fsutil::{parse_jsonl, sha256_hex, write_atomic, write_json, write_jsonl};

pub fn bundle_dir(run_dir: &Path, task: Task) -> PathBuf {
    run_dir.join("bundles").join(task.name())
}

pub fn train_split(variant: TrainVariant) -> String {
    format!("train_{}", variant.name())
}

fn split_path(run_dir: &Path, task: Task, split: &str) -> PathBuf {
    bundle_dir(run_dir, task).join(format!("{split}.jsonl"))
}

pub fn label_names(task: Task) -> Vec<&'static str> {
    match task {
        Task::Sentiment => SentimentLabel::names(),
        Task::Presence => PresenceLabel::names(),
        Task::Ner => BioTag::names(),
    }
}

pub fn positive_label(task: Task) -> Option<&'static str> {
    (task == Task::Presence).then(|| PresenceLabel::Adr.name())
}

/// Label counts of one split. For the tagging task the units are words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: String,
    pub examples: usize,
    pub counts: BTreeMap<String, usize>,
}

impl SplitSummary {
    fn units(&self) -> usize {
        self.counts.values().sum()
    }

    fn cell(&self, label: &str) -> String {
        let n = self.counts.get(label).copied().unwrap_or(0);
        format!("{n} ({:.1}%)", 100.0 * n as f64 / self.units().max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub task: Task,
    pub seed: u64,
    pub splits: Vec<SplitSummary>,
    /// Annotated tweets whose text could not be resolved.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unresolved_tweets: Option<usize>,
}

impl PrepareSummary {
    pub fn split(&self, name: &str) -> Option<&SplitSummary> {
        self.splits.iter().find(|s| s.split == name)
    }

    pub fn to_text(&self) -> String {
        let row_name = |split: &str| match split {
            "dev" => "Dev".to_string(),
            "test" => "Test".to_string(),
            _ => "Training".to_string(),
        };
        let mut out = match self.task {
            Task::Presence => {
                let pos = PresenceLabel::Adr.name();
                let cell = |s: &SplitSummary| {
                    let n = s.units();
                    let p = s.counts.get(pos).copied().unwrap_or(0);
                    format!("{n} ({:.0}% positive)", 100.0 * p as f64 / n.max(1) as f64)
                };
                let mut training = vec!["Training".to_string()];
                for v in TrainVariant::ALL {
                    training.push(self.split(&train_split(v)).map(cell).unwrap_or_default());
                }
                let mut rows = vec![training];
                for name in ["dev", "test"] {
                    if let Some(s) = self.split(name) {
                        rows.push(vec![row_name(name), cell(s)]);
                    }
                }
                render_table(&["Dataset", "Natural", "Oversampled", "Undersampled"], &rows)
            }
            task => {
                let labels = label_names(task);
                let mut headers = vec!["Dataset".to_string()];
                headers.extend(labels.iter().map(|l| capitalize(l)));
                let rows: Vec<Vec<String>> = self
                    .splits
                    .iter()
                    .map(|s| {
                        let mut row = vec![row_name(&s.split)];
                        row.extend(labels.iter().map(|l| s.cell(l)));
                        row
                    })
                    .collect();
                render_table(&headers, &rows)
            }
        };
        if let Some(n) = self.unresolved_tweets {
            out.push_str(&format!("unresolved tweets skipped: {n}\n"));
        }
        out
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleMeta {
    task: Task,
    seed: u64,
    dev_fraction: f64,
    test_fraction: f64,
    splits: Vec<String>,
}

fn summarize<T>(split: &str, items: &[T], count: impl Fn(&T, &mut BTreeMap<String, usize>)) -> SplitSummary {
    let mut counts = BTreeMap::new();
    for it in items {
        count(it, &mut counts);
    }
    SplitSummary { split: split.to_string(), examples: items.len(), counts }
}

fn write_splits<T: Serialize>(dir: &Path, splits: &[(String, &[T])]) -> Result<()> {
    for (name, items) in splits {
        write_jsonl(&dir.join(format!("{name}.jsonl")), items)?;
    }
    Ok(())
}

/// Builds and writes the bundle for `task`, returning its summary.
pub fn prepare(cfg: &ToolkitConfig, task: Task, seed: u64) -> Result<PrepareSummary> {
    let dir = bundle_dir(&cfg.run_dir, task);
    let mut unresolved_tweets = None;
    let (names, splits) = match task {
        Task::Sentiment => {
            let paths = cfg.require(&["reviews_train", "reviews_test"])?;
            let train = load_drug_reviews(&paths[0])?;
            let test = load_drug_reviews(&paths[1])?;
            let b = make_sentiment_bundle(&train, &test, cfg.dev_fraction, seed)?;
            let parts: Vec<(String, &[SentimentExample])> = vec![
                (train_split(TrainVariant::Natural), &b.train),
                ("dev".into(), &b.dev),
                ("test".into(), &b.test),
            ];
            write_splits(&dir, &parts)?;
            let sum = parts
                .iter()
                .map(|(n, xs)| summarize(n, xs, |x, c| *c.entry(x.label.name().to_string()).or_default() += 1))
                .collect();
            (parts.iter().map(|p| p.0.clone()).collect::<Vec<_>>(), sum)
        }
        Task::Presence => {
            let paths = cfg.require(&["tweet_annotations", "tweet_texts"])?;
            let resolver = JsonlResolver::load(&paths[1])?;
            let corpus = load_tweet_corpus(&paths[0], &resolver)?;
            unresolved_tweets = Some(corpus.skip_report.skipped);
            let natural = make_presence_bundle(&corpus.records, cfg.dev_fraction, cfg.test_fraction, seed)?;
            let mut over = RebalanceSpec::oversample(seed);
            over.target_minority_fraction = cfg.rebalance.oversample;
            let mut under = RebalanceSpec::undersample(seed);
            under.target_minority_fraction = cfg.rebalance.undersample;
            let over = natural.rebalanced(&over)?;
            let under = natural.rebalanced(&under)?;
            let parts: Vec<(String, &[TweetRecord])> = vec![
                (train_split(TrainVariant::Natural), &natural.train),
                (train_split(TrainVariant::Oversampled), &over.train),
                (train_split(TrainVariant::Undersampled), &under.train),
                ("dev".into(), &natural.dev),
                ("test".into(), &natural.test),
            ];
            write_splits(&dir, &parts)?;
            let sum = parts
                .iter()
                .map(|(n, xs)| {
                    summarize(n, xs, |x, c| *c.entry(PresenceLabel::from_bool(x.has_adr).name().to_string()).or_default() += 1)
                })
                .collect();
            (parts.iter().map(|p| p.0.clone()).collect(), sum)
        }
        Task::Ner => {
            let paths = cfg.require(&["ner"])?;
            let records = load_ner_corpus(&paths[0])?;
            let b = make_ner_bundle(&records, cfg.dev_fraction, cfg.test_fraction, seed)?;
            let parts: Vec<(String, &[NerRecord])> = vec![
                (train_split(TrainVariant::Natural), &b.train),
                ("dev".into(), &b.dev),
                ("test".into(), &b.test),
            ];
            write_splits(&dir, &parts)?;
            let sum = parts
                .iter()
                .map(|(n, xs)| {
                    summarize(n, xs, |x, c| {
                        for t in &x.bio_tags {
                            *c.entry(t.name().to_string()).or_default() += 1;
                        }
                    })
                })
                .collect();
            (parts.iter().map(|p| p.0.clone()).collect(), sum)
        }
    };
    let meta = BundleMeta {
        task,
        seed,
        dev_fraction: cfg.dev_fraction,
        test_fraction: if task == Task::Sentiment { 0.0 } else { cfg.test_fraction },
        splits: names,
    };
    write_json(&dir.join("bundle.json"), &meta)?;
    let summary = PrepareSummary { task, seed, splits, unresolved_tweets };
    write_json(&dir.join("summary.json"), &summary)?;
    write_atomic(&dir.join("summary.txt"), summary.to_text().as_bytes())?;
    Ok(summary)
}

/// One example of a split, in the form every model consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: String,
    pub example: LabeledText,
}

impl Item {
    pub fn class(&self) -> Option<usize> {
        match &self.example.target {
            Target::Class(c) => Some(*c),
            Target::Tags(_) => None,
        }
    }

    pub fn tags(&self) -> Option<&[BioTag]> {
        match &self.example.target {
            Target::Tags(t) => Some(t),
            Target::Class(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitData {
    pub name: String,
    pub items: Vec<Item>,
    /// sha256 of the split file.
    pub digest: String,
}

impl SplitData {
    pub fn classes(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.class().expect("classification split")).collect()
    }

    pub fn words(&self) -> Vec<Vec<String>> {
        self.items.iter().map(|i| i.example.words.clone()).collect()
    }

    pub fn examples(&self) -> Vec<LabeledText> {
        self.items.iter().map(|i| i.example.clone()).collect()
    }
}

fn items<T: DeserializeOwned + Supervised>(path: &Path, text: &str, id: impl Fn(&T) -> String) -> Result<Vec<Item>> {
    parse_jsonl::<T>(path, text)?
        .iter()
        .map(|r| Ok(Item { id: id(r), example: r.labeled()? }))
        .collect()
}

pub fn load_split(run_dir: &Path, task: Task, split: &str) -> Result<SplitData> {
    let path = split_path(run_dir, task, split);
    if !path.is_file() {
        bail!("{} not found; run `prepare --task {task}` first (or pick a training set that exists for this task)", path.display());
    }
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let items = match task {
        Task::Sentiment => items::<SentimentExample>(&path, &text, |r| r.id.clone())?,
        Task::Presence => items::<TweetRecord>(&path, &text, |r| r.tweet_id.clone())?,
        Task::Ner => items::<NerRecord>(&path, &text, |r| r.tweet_id.clone())?,
    };
    Ok(SplitData { name: split.to_string(), items, digest: sha256_hex(&bytes) })
}
