//! `evaluate`: metrics and error analysis from a run's stored predictions.

use std::path::PathBuf;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use pharmvig_core::corpus::Task;
use pharmvig_core::eval::{
    render_table, sentiment_error_breakdown, token_confusion_report, EvalReport, SentimentErrorBreakdown,
    TokenConfusionReport,
};
use pharmvig_core::{BioTag, SentimentLabel};

use crate::config::ToolkitConfig;
use crate::fsutil::{parse_jsonl, write_atomic, write_json};
use crate::record::{load_record, run_path, Prediction, PREDICTIONS_FILE};
use crate::train::score;

/// Errors sampled per category for manual reading.
pub const ERROR_SAMPLE: usize = 50;
/// Words listed per direction in the text report.
const TOP_WORDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub run_id: String,
    pub report: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment_errors: Option<SentimentErrorBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_report: Option<TokenConfusionReport>,
}

impl Evaluation {
    pub fn to_text(&self) -> String {
        let mut out = format!("run {}\n\n{}", self.run_id, self.report.to_text());
        if let Some(e) = &self.sentiment_errors {
            out.push_str(&format!(
                "\nmisclassified {} of {} ({:.1}%)\n",
                e.total_misclassified,
                e.evaluated,
                100.0 * e.error_rate()
            ));
            let rows = vec![
                vec!["to or from neutral".into(), e.neutral_involved.to_string(), format!("{:.1}%", 100.0 * e.neutral_share())],
                vec![
                    "negative as positive".into(),
                    e.false_positive.to_string(),
                    format!("{:.1}%", 100.0 * e.false_positive_share()),
                ],
                vec![
                    "positive as negative".into(),
                    e.false_negative.to_string(),
                    format!("{:.1}%", 100.0 * e.false_negative_share()),
                ],
            ];
            out.push_str(&render_table(&["error", "count", "share"], &rows));
            out.push_str(&format!("sampled false positives: {}\n", e.sampled_fp.join(" ")));
            out.push_str(&format!("sampled false negatives: {}\n", e.sampled_fn.join(" ")));
        }
        if let Some(t) = &self.token_report {
            for (title, counts) in [("missed ADR words (gold B/I, predicted O)", &t.fn_word_counts), ("spurious ADR words (gold O, predicted B/I)", &t.fp_word_counts)] {
                out.push_str(&format!("\n{title}\n"));
                let rows: Vec<Vec<String>> =
                    counts.iter().take(TOP_WORDS).map(|(w, n)| vec![w.clone(), n.to_string()]).collect();
                out.push_str(&render_table(&["word", "count"], &rows));
            }
        }
        out
    }
}

fn parse_labels<L: std::str::FromStr>(xs: &[String]) -> Result<Vec<L>>
where
    L::Err: std::error::Error + Send + Sync + 'static,
{
    Ok(xs.iter().map(|x| x.parse()).collect::<std::result::Result<Vec<L>, _>>()?)
}

/// Recomputes the test report and writes `eval/eval.json`, `eval/eval.txt`
/// and `eval/confusion.csv` inside the run directory.
pub fn evaluate(cfg: &ToolkitConfig, run: &str) -> Result<(Evaluation, PathBuf)> {
    let rec = load_record(&cfg.run_dir, run)?;
    let dir = run_path(&cfg.run_dir, run);
    let path = dir.join(PREDICTIONS_FILE);
    let text = std::fs::read_to_string(&path)?;
    let preds: Vec<Prediction> = parse_jsonl(&path, &text)?;
    let mut report = score(rec.task, &preds)?;
    report.mean_loss = rec.test.mean_loss;
    if report != rec.test {
        bail!("predictions of run {run} no longer reproduce its recorded test metrics");
    }
    let mut eval = Evaluation { run_id: rec.run_id.clone(), report, sentiment_errors: None, token_report: None };
    match rec.task {
        Task::Sentiment => {
            let golds: Vec<SentimentLabel> = parse_labels(&preds.iter().map(|p| p.gold[0].clone()).collect::<Vec<_>>())?;
            let guesses: Vec<SentimentLabel> = parse_labels(&preds.iter().map(|p| p.pred[0].clone()).collect::<Vec<_>>())?;
            let ids: Vec<&str> = preds.iter().map(|p| p.id.as_str()).collect();
            eval.sentiment_errors = Some(sentiment_error_breakdown(&golds, &guesses, &ids, ERROR_SAMPLE, rec.seed)?);
        }
        Task::Ner => {
            let golds = preds.iter().map(|p| parse_labels::<BioTag>(&p.gold)).collect::<Result<Vec<_>>>()?;
            let guesses = preds.iter().map(|p| parse_labels::<BioTag>(&p.pred)).collect::<Result<Vec<_>>>()?;
            let words: Vec<Vec<String>> = preds.iter().map(|p| p.words.clone().unwrap_or_default()).collect();
            eval.token_report = Some(token_confusion_report(&golds, &guesses, &words)?);
        }
        Task::Presence => {}
    }
    let out = dir.join("eval");
    write_json(&out.join("eval.json"), &eval)?;
    write_atomic(&out.join("eval.txt"), eval.to_text().as_bytes())?;
    write_atomic(&out.join("confusion.csv"), eval.report.confusion.to_csv().as_bytes())?;
    Ok((eval, out))
}
