//! Tweet-level ADR annotations and pluggable tweet text resolution.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    /// `None` when the text could not be resolved; such records never enter a bundle.
    pub text: Option<String>,
    pub has_adr: bool,
}

/// Maps a tweet id to its text. A miss is not an error: deleted or protected
/// tweets are expected.
pub trait TweetTextResolver {
    fn resolve(&self, tweet_id: &str) -> Option<String>;
}

impl TweetTextResolver for HashMap<String, String> {
    fn resolve(&self, tweet_id: &str) -> Option<String> {
        self.get(tweet_id).cloned()
    }
}

#[derive(Debug, Deserialize)]
struct TextLine {
    tweet_id: String,
    text: String,
}

/// Resolver backed by a local JSONL file of `{"tweet_id", "text"}` objects.
#[derive(Debug, Clone, Default)]
pub struct JsonlResolver {
    texts: HashMap<String, String>,
}

impl JsonlResolver {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut texts = HashMap::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TextLine =
                serde_json::from_str(line).map_err(|e| Error::row(path, i + 1, e.to_string()))?;
            texts.insert(parsed.tweet_id, parsed.text);
        }
        Ok(JsonlResolver { texts })
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }
}

impl TweetTextResolver for JsonlResolver {
    fn resolve(&self, tweet_id: &str) -> Option<String> {
        self.texts.get(tweet_id).cloned()
    }
}

/// Resolver that issues `GET {base_url}/{tweet_id}` with a bearer token and
/// reads `text` (or `data.text`) from the JSON response. Any transport or
/// HTTP failure counts as a miss.
#[derive(Debug, Clone)]
pub struct HttpResolver {
    base_url: String,
    bearer_token: String,
    agent: ureq::Agent,
}

impl HttpResolver {
    pub fn new(base_url: impl Into<String>, bearer_token: impl Into<String>) -> Self {
        HttpResolver {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            bearer_token: bearer_token.into(),
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

impl TweetTextResolver for HttpResolver {
    fn resolve(&self, tweet_id: &str) -> Option<String> {
        let url = format!("{}/{}", self.base_url, tweet_id);
        let mut response = self
            .agent
            .get(&url)
            .header("Authorization", &format!("Bearer {}", self.bearer_token))
            .call()
            .ok()?;
        let body = response.body_mut().read_to_string().ok()?;
        let value: serde_json::Value = serde_json::from_str(&body).ok()?;
        value
            .get("text")
            .or_else(|| value.get("data").and_then(|d| d.get("text")))
            .and_then(|t| t.as_str())
            .map(str::to_string)
    }
}

#[derive(Debug, Deserialize)]
struct AnnotationLine {
    tweet_id: String,
    label: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub skipped: usize,
    pub skipped_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TweetCorpus {
    pub records: Vec<TweetRecord>,
    pub skip_report: SkipReport,
}

impl TweetCorpus {
    pub fn usable(&self) -> impl Iterator<Item = &TweetRecord> {
        self.records.iter().filter(|r| r.text.is_some())
    }

    pub fn usable_count(&self) -> usize {
        self.usable().count()
    }
}

pub fn load_tweet_corpus(annotation_path: impl AsRef<Path>, resolver: &dyn TweetTextResolver) -> Result<TweetCorpus> {
    let path = annotation_path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut skip_report = SkipReport::default();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let ann: AnnotationLine =
            serde_json::from_str(line).map_err(|e| Error::row(path, row, e.to_string()))?;
        if ann.label > 1 {
            return Err(Error::row(path, row, format!("label {} is not 0 or 1", ann.label)));
        }
        if !seen.insert(ann.tweet_id.clone()) {
            return Err(Error::row(path, row, format!("duplicate tweet id {}", ann.tweet_id)));
        }
        let text = resolver.resolve(&ann.tweet_id).filter(|t| !t.trim().is_empty());
        if text.is_none() {
            skip_report.skipped += 1;
            skip_report.skipped_ids.push(ann.tweet_id.clone());
        }
        records.push(TweetRecord {
            tweet_id: ann.tweet_id,
            text,
            has_adr: ann.label == 1,
        });
    }
    Ok(TweetCorpus { records, skip_report })
}
