//! Output files: summary JSON, the plain-text results table, rank tables,
//! training logs and sweep tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use grangernet_core::metrics::{Confusion, CvSummary, FoldReport, MetricSummary, RankTable};
use grangernet_core::train::EpochLog;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TABLE: &str = "summary.txt";
pub const TRAINING_LOG: &str = "training_log.jsonl";
pub const RANK_ASD: &str = "rank_asd.csv";
pub const RANK_CONTROL: &str = "rank_control.csv";
pub const ALPHA_SWEEP: &str = "alpha_sweep.csv";
pub const HEAD_SWEEP: &str = "head_sweep.csv";

/// Headline metrics of one fold, without per-subject detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub confusion: Confusion,
}

impl From<&FoldReport> for FoldMetrics {
    fn from(r: &FoldReport) -> Self {
        Self {
            fold: r.fold,
            accuracy: r.accuracy,
            auc: r.auc,
            recall: r.recall,
            precision: r.precision,
            confusion: r.confusion,
        }
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub subjects: usize,
    pub folds: Vec<FoldMetrics>,
    pub summary: CvSummary,
}

impl Summary {
    pub fn new(method: &str, reports: &[FoldReport]) -> Self {
        Self {
            method: method.to_string(),
            subjects: reports.iter().map(|r| r.subjects.len()).sum(),
            folds: reports.iter().map(FoldMetrics::from).collect(),
            summary: CvSummary::from_reports(reports),
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(Error::io(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, text)
}

fn cell(m: &Option<MetricSummary>) -> String {
    m.as_ref().map_or_else(|| "n/a".to_string(), ToString::to_string)
}

/// One row per method with the four headline metrics as `mean ± std`.
pub fn format_table(rows: &[&Summary]) -> String {
    let header = ["Method", "Accuracy", "AUC", "Recall", "Precision"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|s| {
            [
                s.method.clone(),
                cell(&s.summary.accuracy),
                cell(&s.summary.auc),
                cell(&s.summary.recall),
                cell(&s.summary.precision),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..5)
        .map(|c| body.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap())
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        writeln!(out, "{}", padded.join("  ").trim_end()).unwrap();
    };
    line(&mut out, &header);
    for r in &body {
        line(&mut out, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

/// Writes `summary.json` and `summary.txt` into `dir`.
pub fn write_summary(dir: &Path, summary: &Summary) -> Result<()> {
    write_json(&dir.join(SUMMARY_JSON), summary)?;
    write_file(&dir.join(SUMMARY_TABLE), format_table(&[summary]))
}

/// Writes `folds/fold_<k>.json` with the full per-subject report of each fold.
pub fn write_fold_reports(dir: &Path, reports: &[FoldReport]) -> Result<()> {
    let folds = dir.join("folds");
    fs::create_dir_all(&folds).map_err(Error::io(&folds))?;
    for r in reports {
        write_json(&folds.join(format!("fold_{}.json", r.fold)), r)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LogLine<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    fold: Option<usize>,
    #[serde(flatten)]
    epoch: &'a EpochLog,
}

/// One JSON object per epoch; `fold` is included when given.
pub fn format_training_log<'a>(runs: impl IntoIterator<Item = (Option<usize>, &'a [EpochLog])>) -> String {
    let mut out = String::new();
    for (fold, epochs) in runs {
        for epoch in epochs {
            out.push_str(&serde_json::to_string(&LogLine { fold, epoch }).expect("log line serializes"));
            out.push('\n');
        }
    }
    out
}

pub fn write_training_log<'a>(path: &Path, runs: impl IntoIterator<Item = (Option<usize>, &'a [EpochLog])>) -> Result<()> {
    write_file(path, format_training_log(runs))
}

#[derive(Serialize)]
struct RankRow<'a> {
    roi_index: usize,
    roi_name: &'a str,
    count: usize,
    population: &'a str,
}

/// Header is written even when the table is empty.
pub fn write_rank_table(path: &Path, table: &RankTable) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(Error::csv(path))?;
    w.write_record(["roi_index", "roi_name", "count", "population"])
        .map_err(Error::csv(path))?;
    for e in &table.entries {
        w.serialize(RankRow {
            roi_index: e.roi_index,
            roi_name: &e.roi_name,
            count: e.count,
            population: table.population.name(),
        })
        .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepRow {
    pub alpha: f64,
    pub val_accuracy: f64,
    pub val_freq_loss: f64,
    /// `val_freq_loss` divided by the largest value in the sweep.
    pub scaled_freq_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadSweepRow {
    pub heads: usize,
    pub val_accuracy: f64,
    pub val_freq_loss: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    for r in rows {
        w.serialize(r).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}
