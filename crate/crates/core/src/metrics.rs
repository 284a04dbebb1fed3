//! Classification metrics, forecast predictability, and channel rankings.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::data::{Label, DEGENERATE_VARIANCE};
use crate::error::{shape, Error, Result};
use crate::fmath;
use crate::linalg::Matrix;
use crate::train::EpochLog;

/// Per-channel `P_i = 1 − MSE_i / Var_i` of a forecast. Channels whose target
/// variance is at most `1e-12` have no score.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Predictability {
    pub per_roi: Vec<Option<f64>>,
    pub target_variance: Vec<f64>,
}

impl Predictability {
    pub fn undefined(&self) -> Vec<usize> {
        self.per_roi
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.is_none().then_some(i))
            .collect()
    }
}

/// Scores each row of `x_hat` against the same row of `target`, using the
/// population variance of the target row.
pub fn predictability(x_hat: &Matrix, target: &Matrix) -> Result<Predictability> {
    if x_hat.shape() != target.shape() {
        return Err(shape(alloc::format!(
            "forecast {:?} and target {:?} differ in shape",
            x_hat.shape(),
            target.shape()
        )));
    }
    if target.cols() == 0 {
        return Err(shape("empty target window"));
    }
    let t = target.cols() as f64;
    let mut per_roi = Vec::with_capacity(target.rows());
    let mut target_variance = Vec::with_capacity(target.rows());
    for i in 0..target.rows() {
        let (y, f) = (target.row(i), x_hat.row(i));
        let mean = y.iter().sum::<f64>() / t;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
        let mse = y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t;
        target_variance.push(var);
        per_roi.push((var > DEGENERATE_VARIANCE).then(|| 1.0 - mse / var));
    }
    let undefined = per_roi.iter().filter(|p| p.is_none()).count();
    if undefined > 0 {
        log::warn!("predictability undefined for {undefined} zero-variance channel(s)");
    }
    Ok(Predictability {
        per_roi,
        target_variance,
    })
}

/// Indices of the `k` most predictable channels, best first. Ties go to the
/// lower index. Channels without a score are skipped, so the list is shorter
/// than `k` when fewer than `k` are defined.
pub fn rank_rois(pred: &Predictability, k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = pred
        .per_roi
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.map(|v| (i, v)))
        .collect();
    if scored.len() < k {
        log::warn!("only {} channels have a predictability score; wanted {k}", scored.len());
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankEntry {
    pub roi_index: usize,
    pub roi_name: String,
    pub count: usize,
}

/// How often each channel made a subject's top-k list, within one class.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankTable {
    pub population: Label,
    /// Subjects contributing a list.
    pub subjects: usize,
    /// Sorted by count (descending), then index; only channels that appear.
    pub entries: Vec<RankEntry>,
}

impl RankTable {
    /// Zero-based position of `roi` in the table.
    pub fn position(&self, roi: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.roi_index == roi)
    }
}

/// Tallies per-subject top-k lists by class and keeps the `table_len` most
/// frequent channels of each. Returns `(ASD table, control table)`.
pub fn aggregate_rankings(
    rankings: &[(Label, Vec<usize>)],
    roi_names: &[String],
    table_len: usize,
) -> (RankTable, RankTable) {
    let table = |population: Label| {
        let mut counts = vec![0usize; roi_names.len()];
        let mut subjects = 0;
        for (_, list) in rankings.iter().filter(|(l, _)| *l == population) {
            subjects += 1;
            for &i in list {
                counts[i] += 1;
            }
        }
        if subjects == 0 {
            log::warn!("no correctly classified {} subjects; rank table is empty", population.name());
        }
        let mut entries: Vec<RankEntry> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &count)| RankEntry {
                roi_index: i,
                roi_name: roi_names[i].clone(),
                count,
            })
            .collect();
        entries.sort_by(|a, b| b.count.cmp(&a.count).then(a.roi_index.cmp(&b.roi_index)));
        entries.truncate(table_len);
        RankTable {
            population,
            subjects,
            entries,
        }
    };
    (table(Label::Asd), table(Label::Control))
}

/// Area under the ROC curve, computed by the trapezoid rule over score
/// thresholds with tied scores handled as one step. This equals the
/// probability that a random positive outscores a random negative, counting
/// ties as one half.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    let pos = scores.iter().filter(|s| s.1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    if scores.iter().any(|s| !s.0.is_finite()) {
        return Err(Error::NonFinite("AUC score".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let (tp0, fp0) = (tp, fp);
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0.total_cmp(&score) == Ordering::Equal {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
    }
    Ok(area / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `None` without positives.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `None` without positive predictions.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Confusion counts with `p >= threshold` predicted positive.
pub fn confusion(scores: &[(f64, bool)], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for &(p, y) in scores {
        match (p >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubjectResult {
    pub subject_id: String,
    pub label: Label,
    pub p: f64,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub predictability: Option<Predictability>,
}

impl SubjectResult {
    pub fn correct(&self, threshold: f64) -> bool {
        (self.p >= threshold) == (self.label == Label::Asd)
    }
}

/// Test-set results of one cross-validation fold.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldReport {
    pub fold: usize,
    pub accuracy: f64,
    /// `None` when the test set holds one class only.
    pub auc: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub confusion: Confusion,
    pub subjects: Vec<SubjectResult>,
    pub epochs: Vec<EpochLog>,
}

impl FoldReport {
    /// Builds the report from per-subject probabilities.
    pub fn new(fold: usize, subjects: Vec<SubjectResult>, epochs: Vec<EpochLog>) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::Config(alloc::format!("fold {fold} has no test subjects")));
        }
        let scores: Vec<(f64, bool)> = subjects.iter().map(|s| (s.p, s.label == Label::Asd)).collect();
        let c = confusion(&scores, DEFAULT_THRESHOLD);
        let auc = match auc(&scores) {
            Ok(a) => Some(a),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            fold,
            accuracy: c.accuracy(),
            auc,
            recall: c.recall(),
            precision: c.precision(),
            confusion: c,
            subjects,
            epochs,
        })
    }
}

/// Mean and sample standard deviation over folds where the metric is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub folds: usize,
}

impl MetricSummary {
    /// `None` when no value is defined. The standard deviation of a single
    /// value is reported as 0.
    pub fn from_values(values: impl IntoIterator<Item = Option<f64>>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() < 2 {
            0.0
        } else {
            fmath::sqrt(v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0))
        };
        Some(Self {
            mean,
            std,
            folds: v.len(),
        })
    }
}

/// Renders as a percentage with one decimal, e.g. `70.0% ± 7.1%`.
impl fmt::Display for MetricSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}% ± {:.1}%", 100.0 * self.mean, 100.0 * self.std)
    }
}

/// Cross-validation summary over fold reports.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvSummary {
    pub accuracy: Option<MetricSummary>,
    pub auc: Option<MetricSummary>,
    pub recall: Option<MetricSummary>,
    pub precision: Option<MetricSummary>,
}

impl CvSummary {
    pub fn from_reports(reports: &[FoldReport]) -> Self {
        Self {
            accuracy: MetricSummary::from_values(reports.iter().map(|r| Some(r.accuracy))),
            auc: MetricSummary::from_values(reports.iter().map(|r| r.auc)),
            recall: MetricSummary::from_values(reports.iter().map(|r| r.recall)),
            precision: MetricSummary::from_values(reports.iter().map(|r| r.precision)),
        }
    }
}
