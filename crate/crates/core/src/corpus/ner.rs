//! Character-offset ADR span annotations converted to word-level BIO tags.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::BioTag;
use crate::textprep::word_tokenize_with_offsets;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerRecord {
    pub tweet_id: String,
    pub text: String,
    /// ADR spans as `[start, end)` character offsets, sorted.
    pub spans: Vec<(usize, usize)>,
    pub words: Vec<String>,
    pub bio_tags: Vec<BioTag>,
}

impl NerRecord {
    pub fn new(tweet_id: impl Into<String>, text: impl Into<String>, spans: Vec<(usize, usize)>) -> Result<Self> {
        let text = text.into();
        let mut spans = spans;
        spans.sort_unstable();
        let (words, bio_tags) = spans_to_bio(&text, &spans)?;
        Ok(NerRecord {
            tweet_id: tweet_id.into(),
            text,
            spans,
            words,
            bio_tags,
        })
    }

    pub fn has_adr(&self) -> bool {
        !self.spans.is_empty()
    }
}

/// Tags the first word overlapping a span `B` and every later overlapping
/// word `I`. `spans` must be sorted.
pub fn spans_to_bio(text: &str, spans: &[(usize, usize)]) -> Result<(Vec<String>, Vec<BioTag>)> {
    let len = text.chars().count();
    for (k, &(start, end)) in spans.iter().enumerate() {
        if start >= end {
            return Err(Error::invalid(format!("empty or reversed span [{start}, {end})")));
        }
        if end > len {
            return Err(Error::invalid(format!("span [{start}, {end}) exceeds text length {len}")));
        }
        if k > 0 && spans[k - 1].1 > start {
            return Err(Error::invalid(format!(
                "span [{start}, {end}) overlaps [{}, {})",
                spans[k - 1].0,
                spans[k - 1].1
            )));
        }
    }
    let tokens = word_tokenize_with_offsets(text);
    let mut tags = vec![BioTag::O; tokens.len()];
    for &(start, end) in spans {
        let mut inside = false;
        for (tok, tag) in tokens.iter().zip(tags.iter_mut()) {
            if tok.start < end && start < tok.end && *tag == BioTag::O {
                *tag = if inside { BioTag::I } else { BioTag::B };
                inside = true;
            }
        }
    }
    Ok((tokens.into_iter().map(|t| t.text).collect(), tags))
}

#[derive(Debug, Deserialize)]
struct NerLine {
    tweet_id: String,
    text: String,
    #[serde(default)]
    spans: Vec<(usize, usize)>,
}

pub fn load_ner_corpus(path: impl AsRef<Path>) -> Result<Vec<NerRecord>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let parsed: NerLine = serde_json::from_str(line).map_err(|e| Error::row(path, row, e.to_string()))?;
        if !seen.insert(parsed.tweet_id.clone()) {
            return Err(Error::row(path, row, format!("duplicate tweet id {}", parsed.tweet_id)));
        }
        let record =
            NerRecord::new(parsed.tweet_id, parsed.text, parsed.spans).map_err(|e| Error::row(path, row, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}
