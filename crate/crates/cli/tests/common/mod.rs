#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;
use tempfile::TempDir;

use pharmvig_cli::ToolkitConfig;
use pharmvig_core::rng::seeded;
use pharmvig_neural::{fixtures, VariantKey};

const FILLER: &[&str] = &["this", "drug", "the", "was", "for", "me", "my", "today", "and", "it"];
const POSITIVE: &[&str] = &["great", "helped", "amazing", "relief", "wonderful", "better"];
const NEUTRAL: &[&str] = &["okay", "average", "unsure", "moderate", "mixed", "fine"];
const NEGATIVE: &[&str] = &["terrible", "worse", "useless", "awful", "horrible", "waste"];
const ADR: &[&str] = &["nausea", "dizzy", "headache", "rash", "insomnia", "cramps"];
const NO_ADR: &[&str] = &["refill", "pharmacy", "bought", "prescription", "pickup", "insurance"];

fn sentence(rng: &mut impl Rng, keys: &[&str]) -> Vec<String> {
    let len = rng.gen_range(2..5);
    let mut words: Vec<String> = (0..len).map(|_| FILLER.choose(rng).unwrap().to_string()).collect();
    for k in keys {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, k.to_string());
    }
    words
}

pub const REVIEW_HEADER: &str = "uniqueID\tdrugName\tcondition\treview\trating\tdate\tusefulCount\n";

/// Review TSV whose ratings cycle positive (9), neutral (5), negative (2)
/// with the given weights.
pub fn reviews_tsv(n: usize, first_id: usize, weights: [usize; 3], seed: u64) -> String {
    let mut rng = seeded(seed);
    let period: usize = weights.iter().sum();
    let mut out = REVIEW_HEADER.to_string();
    for i in 0..n {
        let r = i % period;
        let (rating, pool) = if r < weights[0] {
            (9, POSITIVE)
        } else if r < weights[0] + weights[1] {
            (5, NEUTRAL)
        } else {
            (2, NEGATIVE)
        };
        let keys: Vec<&str> = pool.choose_multiple(&mut rng, 2).copied().collect();
        let text = sentence(&mut rng, &keys).join(" ");
        writeln!(out, "{}\tDrugX\tPain\t\"{text}\"\t{rating}\tMay 20, 2012\t{}", first_id + i, i % 7).unwrap();
    }
    out
}

/// Annotation and text JSONL; every fifth tweet has an ADR and every
/// eleventh has no resolvable text.
pub fn tweets(n: usize, seed: u64) -> (String, String) {
    let mut rng = seeded(seed);
    let (mut ann, mut texts) = (String::new(), String::new());
    for i in 0..n {
        let adr = i % 5 == 0;
        writeln!(ann, "{}", json!({"tweet_id": format!("t{i}"), "label": u8::from(adr)})).unwrap();
        if i % 11 == 10 {
            continue;
        }
        let pool = if adr { ADR } else { NO_ADR };
        let keys: Vec<&str> = pool.choose_multiple(&mut rng, 2).copied().collect();
        writeln!(texts, "{}", json!({"tweet_id": format!("t{i}"), "text": sentence(&mut rng, &keys).join(" ")})).unwrap();
    }
    (ann, texts)
}

/// Mention JSONL with character-offset spans; two in three tweets carry one
/// ADR phrase.
pub fn ner_jsonl(n: usize, seed: u64) -> String {
    let mut out = String::new();
    for (i, ex) in fixtures::tagging(n, seed).into_iter().enumerate() {
        let tags = match &ex.target {
            pharmvig_neural::Target::Tags(t) => t.clone(),
            _ => unreachable!(),
        };
        let mut text = String::new();
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for (w, t) in ex.words.iter().zip(&tags) {
            if !text.is_empty() {
                text.push(' ');
            }
            let start = text.len();
            text.push_str(w);
            match t {
                pharmvig_core::BioTag::B => spans.push((start, text.len())),
                pharmvig_core::BioTag::I => spans.last_mut().unwrap().1 = text.len(),
                pharmvig_core::BioTag::O => {}
            }
        }
        writeln!(out, "{}", json!({"tweet_id": format!("n{i}"), "text": text, "spans": spans})).unwrap();
    }
    out
}

pub fn registry_json() -> String {
    let variants: Vec<_> = VariantKey::ALL
        .iter()
        .enumerate()
        .map(|(i, k)| {
            json!({
                "key": k.name(),
                "checkpoint": format!("mini:hidden=16,layers=1,heads=2,intermediate=32,max_position=64,dropout=0.1,seed={i},vocab=vocab.txt"),
                "cased": k.expected_cased(),
                "hidden_dim": 16,
            })
        })
        .collect();
    serde_json::to_string_pretty(&json!({ "variants": variants })).unwrap()
}

/// Raw data, a registry of miniature encoders and a config sized for
/// quick runs.
pub struct Workspace {
    pub dir: TempDir,
    pub config_path: PathBuf,
}

impl Workspace {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let write = |name: &str, content: &str| fs::write(root.join(name), content).unwrap();
        write("reviews_train.tsv", &reviews_tsv(60, 0, [3, 1, 1], 1));
        write("reviews_test.tsv", &reviews_tsv(25, 1000, [3, 1, 1], 2));
        let (ann, texts) = tweets(70, 3);
        write("tweet_annotations.jsonl", &ann);
        write("tweet_texts.jsonl", &texts);
        write("ner.jsonl", &ner_jsonl(45, 4));
        fixtures::vocab().save(root.join("vocab.txt")).unwrap();
        write("registry.json", &registry_json());
        let config = json!({
            "data": {
                "reviews_train": "reviews_train.tsv",
                "reviews_test": "reviews_test.tsv",
                "tweet_annotations": "tweet_annotations.jsonl",
                "tweet_texts": "tweet_texts.jsonl",
                "ner": "ner.jsonl",
            },
            "registry": "registry.json",
            "run_dir": "work",
            "seed": 7,
            "finetune": {"max_seq_len": 32, "batch_size": 8, "learning_rate": 1e-3, "epochs": 2},
            "downstream": {
                "epochs": 3,
                "batch_size": 8,
                "cnn_filter_widths": [1, 2],
                "cnn_filters_per_width": 4,
                "lstm_hidden_dim": 8,
                "lr_epochs": 20,
            },
            "baselines": {"crf_epochs": 5},
        });
        let config_path = root.join("config.json");
        fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
        Self { dir, config_path }
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn config(&self) -> ToolkitConfig {
        ToolkitConfig::load(&self.config_path).unwrap()
    }

    /// The same config with its run directory moved elsewhere.
    pub fn config_with_run_dir(&self, run_dir: &Path) -> ToolkitConfig {
        let mut cfg = self.config();
        cfg.run_dir = run_dir.to_path_buf();
        cfg
    }
}
