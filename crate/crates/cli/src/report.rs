//! `report`: comparison tables over finished runs, as text and JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use pharmvig_core::corpus::{Task, TrainVariant};
use pharmvig_core::eval::render_table;

use crate::config::ToolkitConfig;
use crate::fsutil::{write_atomic, write_json};
use crate::models::ModelKey;
use crate::record::{list_runs, load_record, RunRecord};

/// Rounds to the three decimals shown in the text tables.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: f64,
    /// Shown in parentheses after the value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<f64>,
}

impl Cell {
    fn new(value: f64, secondary: Option<f64>) -> Self {
        Self { value: round3(value), secondary: secondary.map(round3) }
    }

    pub fn to_text(&self) -> String {
        match self.secondary {
            Some(s) => format!("{:.3} ({s:.3})", self.value),
            None => format!("{:.3}", self.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    pub cells: Vec<Option<Cell>>,
    /// Run behind each cell.
    pub runs: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = vec![r.label.clone()];
                v.extend(r.cells.iter().map(|c| c.map(|c| c.to_text()).unwrap_or_else(|| "-".into())));
                v
            })
            .collect();
        format!("{}\n{}", self.title, render_table(&self.headers, &rows))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<String>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn to_text(&self) -> String {
        self.tables.iter().map(Table::to_text).collect::<Vec<_>>().join("\n")
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

type RowKey = (ModelKey, bool, Option<usize>);

/// Sparse table keyed by row and column; a cell may be filled once.
struct Grid<C: Ord> {
    labels: BTreeMap<RowKey, String>,
    cols: BTreeSet<C>,
    cells: BTreeMap<(RowKey, C), (Cell, String)>,
}

impl<C: Ord + Clone> Grid<C> {
    fn new() -> Self {
        Self { labels: BTreeMap::new(), cols: BTreeSet::new(), cells: BTreeMap::new() }
    }

    fn put(&mut self, row: RowKey, label: String, col: C, cell: Cell, run: &str) -> Result<()> {
        if let Some((_, other)) = self.cells.get(&(row, col.clone())) {
            bail!("runs {other} and {run} fill the same `{label}` report cell; pass explicit run ids");
        }
        self.labels.insert(row, label);
        self.cols.insert(col.clone());
        self.cells.insert((row, col), (cell, run.to_string()));
        Ok(())
    }

    fn table(&self, name: &str, title: &str, first: &str, cols: &[C], header: impl Fn(&C) -> String) -> Option<Table> {
        if self.cells.is_empty() {
            return None;
        }
        let mut headers = vec![first.to_string()];
        headers.extend(cols.iter().map(&header));
        let rows = self
            .labels
            .iter()
            .map(|(key, label)| {
                let found: Vec<Option<&(Cell, String)>> = cols.iter().map(|c| self.cells.get(&(*key, c.clone()))).collect();
                Row {
                    label: label.clone(),
                    cells: found.iter().map(|f| f.map(|x| x.0)).collect(),
                    runs: found.iter().map(|f| f.map(|x| x.1.clone())).collect(),
                }
            })
            .collect();
        Some(Table { name: name.into(), title: title.into(), headers, rows })
    }

    fn present_cols(&self) -> Vec<C> {
        self.cols.iter().cloned().collect()
    }
}

fn epochs_header(e: &usize) -> String {
    if *e == 1 {
        "1 Epoch".into()
    } else {
        format!("{e} Epochs")
    }
}

fn row_key(r: &RunRecord) -> RowKey {
    let from_ft = r.request.from_finetuned.is_some();
    let epochs = matches!(r.model, ModelKey::Finetune(_)).then_some(r.epochs).flatten();
    (r.model, from_ft, epochs)
}

fn row_label(r: &RunRecord, with_epochs: bool) -> String {
    let base = r.model.display(r.request.from_finetuned.is_some());
    match (with_epochs, r.model, r.epochs) {
        (true, ModelKey::Finetune(_), Some(e)) => format!("{base} ({} {})", e, if e == 1 { "epoch" } else { "epochs" }),
        _ => base,
    }
}

/// Tables over the given runs (every run when `ids` is empty). Written to
/// `reports/report.txt` and `reports/report.json`.
pub fn report(cfg: &ToolkitConfig, ids: &[String]) -> Result<(Report, PathBuf)> {
    let ids = if ids.is_empty() { list_runs(&cfg.run_dir)? } else { ids.to_vec() };
    if ids.is_empty() {
        bail!("no runs to report under {}", cfg.run_dir.display());
    }
    let records = ids.iter().map(|id| load_record(&cfg.run_dir, id)).collect::<Result<Vec<_>>>()?;

    let mut sent_models: Grid<u8> = Grid::new();
    let mut sent_ft: Grid<usize> = Grid::new();
    let mut presence: Grid<TrainVariant> = Grid::new();
    let mut ner_models: Grid<u8> = Grid::new();
    let mut ner_ft: Grid<usize> = Grid::new();
    for r in &records {
        let t = &r.test;
        let id = r.run_id.as_str();
        let (key, label) = (row_key(r), row_label(r, false));
        match (r.task, r.model) {
            (Task::Sentiment, ModelKey::Finetune(_)) => {
                let e = r.epochs.unwrap_or(0);
                sent_ft.put((r.model, false, None), label, e, Cell::new(t.accuracy, t.mean_loss), id)?
            }
            (Task::Sentiment, _) => sent_models.put(key, label, 0, Cell::new(t.accuracy, None), id)?,
            (Task::Presence, _) => {
                let f = t.positive_f.unwrap_or(0.0);
                presence.put(key, row_label(r, true), r.trainset, Cell::new(f, Some(t.accuracy)), id)?
            }
            (Task::Ner, ModelKey::Finetune(_)) => {
                let e = r.epochs.unwrap_or(0);
                ner_ft.put((r.model, false, None), label, e, Cell::new(t.macro_f, Some(t.accuracy)), id)?
            }
            (Task::Ner, _) => {
                ner_models.put(key, label.clone(), 0, Cell::new(t.macro_f, None), id)?;
                ner_models.put(key, label, 1, Cell::new(t.accuracy, None), id)?
            }
        }
    }
    let tables: Vec<Table> = [
        sent_models.table("sentiment_models", "Sentiment: test accuracy", "Model", &[0], |_| "Test Accuracy".into()),
        sent_ft.table(
            "sentiment_finetune",
            "Sentiment: fine-tuned test accuracy (loss)",
            "Model",
            &sent_ft.present_cols(),
            epochs_header,
        ),
        presence.table(
            "presence",
            "ADR presence: positive-class F (accuracy)",
            "Model",
            &TrainVariant::ALL,
            |v| match v {
                TrainVariant::Natural => "Natural".into(),
                TrainVariant::Oversampled => "Oversampled".into(),
                TrainVariant::Undersampled => "Undersampled".into(),
            },
        ),
        ner_models.table("ner_models", "ADR tagging: macro F and accuracy", "Model", &[0, 1], |c| {
            if *c == 0 { "F-score".into() } else { "Accuracy".into() }
        }),
        ner_ft.table(
            "ner_finetune",
            "ADR tagging: fine-tuned macro F (accuracy)",
            "Model",
            &ner_ft.present_cols(),
            epochs_header,
        ),
    ]
    .into_iter()
    .flatten()
    .collect();

    let report = Report { runs: ids, tables };
    let dir = cfg.run_dir.join("reports");
    write_json(&dir.join("report.json"), &report)?;
    write_atomic(&dir.join("report.txt"), report.to_text().as_bytes())?;
    Ok((report, dir))
}
