//! Drugs.com review TSV (UCI layout) and the rating-to-sentiment mapping.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::SentimentLabel;

pub const REVIEW_HEADER: [&str; 7] = [
    "uniqueID",
    "drugName",
    "condition",
    "review",
    "rating",
    "date",
    "usefulCount",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReview {
    pub review_id: String,
    pub drug_name: String,
    pub condition: String,
    pub text: String,
    pub rating: u8,
    /// ISO-8601 `YYYY-MM-DD`.
    pub date: String,
    pub useful_count: u32,
}

/// One labeled review. `id` is the source review id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentExample {
    pub id: String,
    pub text: String,
    pub label: SentimentLabel,
    pub source_rating: u8,
}

impl SentimentExample {
    pub fn from_review(review: &RawReview) -> Result<Self> {
        Ok(SentimentExample {
            id: review.review_id.clone(),
            text: review.text.clone(),
            label: map_rating_to_sentiment(i64::from(review.rating))?,
            source_rating: review.rating,
        })
    }
}

pub fn map_rating_to_sentiment(rating: i64) -> Result<SentimentLabel> {
    match rating {
        8..=10 => Ok(SentimentLabel::Positive),
        4..=7 => Ok(SentimentLabel::Neutral),
        1..=3 => Ok(SentimentLabel::Negative),
        _ => Err(Error::invalid(format!("rating {rating} outside 1..=10"))),
    }
}

/// Loads a tab-separated review file. The id column may be headed `uniqueID`
/// or left blank, as in the published files. Quoted fields may span lines.
pub fn load_drug_reviews(path: impl AsRef<Path>) -> Result<Vec<RawReview>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, 1, e))?;

    let header = reader.headers().map_err(|e| csv_error(path, 1, e))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let id_ok = matches!(names.first(), Some(&"uniqueID") | Some(&""));
    if names.len() != REVIEW_HEADER.len() || !id_ok || names[1..] != REVIEW_HEADER[1..] {
        return Err(Error::row(path, 1, format!("unexpected header {names:?}")));
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, row, e))?;
        let review = parse_review_row(&record).map_err(|m| Error::row(path, row, m))?;
        if !seen.insert(review.review_id.clone()) {
            return Err(Error::row(path, row, format!("duplicate review id {}", review.review_id)));
        }
        out.push(review);
    }
    Ok(out)
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::row(path, row, format!("{other:?}")),
    }
}

fn parse_review_row(record: &csv::StringRecord) -> std::result::Result<RawReview, String> {
    let field = |i: usize| record.get(i).unwrap_or("");
    let review_id = field(0).trim().to_string();
    if review_id.is_empty() {
        return Err("empty review id".into());
    }
    let rating = parse_rating(field(4))?;
    let text = clean_review_text(field(3));
    if text.is_empty() {
        return Err("review text is empty".into());
    }
    let useful_count = field(6)
        .trim()
        .parse::<u32>()
        .map_err(|_| format!("bad usefulCount `{}`", field(6)))?;
    Ok(RawReview {
        review_id,
        drug_name: field(1).trim().to_string(),
        condition: field(2).trim().to_string(),
        text,
        rating,
        date: parse_date(field(5))?,
        useful_count,
    })
}

/// Accepts integral ratings written as `9` or `9.0`.
fn parse_rating(raw: &str) -> std::result::Result<u8, String> {
    let value: f64 = raw.trim().parse().map_err(|_| format!("unparseable rating `{raw}`"))?;
    if value.fract() != 0.0 || !(1.0..=10.0).contains(&value) {
        return Err(format!("rating `{raw}` outside 1..=10"));
    }
    Ok(value as u8)
}

fn clean_review_text(raw: &str) -> String {
    let unescaped = html_escape::decode_html_entities(raw.trim());
    let t = unescaped.trim();
    let t = if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') {
        &t[1..t.len() - 1]
    } else {
        t
    };
    t.trim().to_string()
}

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// `2012-05-20` or `May 20, 2012` to ISO-8601.
fn parse_date(raw: &str) -> std::result::Result<String, String> {
    let raw = raw.trim();
    let bad = || format!("unparseable date `{raw}`");
    let (year, month, day) = if let Some((y, rest)) = raw.split_once('-') {
        let (m, d) = rest.split_once('-').ok_or_else(bad)?;
        (
            y.parse::<u32>().map_err(|_| bad())?,
            m.parse::<u32>().map_err(|_| bad())?,
            d.parse::<u32>().map_err(|_| bad())?,
        )
    } else {
        let (month_day, y) = raw.split_once(',').ok_or_else(bad)?;
        let (m, d) = month_day.trim().split_once(' ').ok_or_else(bad)?;
        let month = MONTHS.iter().position(|n| n.eq_ignore_ascii_case(m)).ok_or_else(bad)? as u32 + 1;
        (
            y.trim().parse::<u32>().map_err(|_| bad())?,
            month,
            d.trim().parse::<u32>().map_err(|_| bad())?,
        )
    };
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return Err(bad());
    }
    Ok(format!("{year:04}-{month:02}-{day:02}"))
}
