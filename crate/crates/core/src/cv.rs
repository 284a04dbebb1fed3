//! Stratified k-fold cross-validation with per-fold validation sets.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::cpm::{cpm_train_eval, CpmOutcome};
use crate::data::{Dataset, Label, Sample};
use crate::error::{Error, Result};
use crate::loss::freq_loss;
use crate::metrics::{predictability, rank_rois, CvSummary, FoldReport, SubjectResult, DEFAULT_THRESHOLD};
use crate::model::{forward, ModelConfig, NetworkParams};
use crate::optim::TrainConfig;
use crate::rng;
use crate::train::{train, TrainOutcome};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_VAL_FRACTION: f64 = 0.125;

/// Subject indices of one fold. Each list is sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitPlan {
    pub seed: u64,
    pub folds: Vec<FoldSplit>,
}

const CLASS_STREAM: u64 = 1 << 32;
const VAL_STREAM: u64 = 2 << 32;

/// Stratified split into `k` test folds. Each class is shuffled and dealt
/// round-robin over the folds, continuing where the previous class stopped,
/// so fold sizes differ by at most one and per-class counts by at most one.
/// Each fold's validation set takes `round(val_fraction · m)` of the `m`
/// non-test subjects of each class.
pub fn make_splits(labels: &[Label], k: usize, seed: u64, val_fraction: f64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if labels.len() < 2 * k {
        return Err(Error::Config(format!("{} subjects are too few for {k} folds", labels.len())));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!("validation fraction {val_fraction} is outside [0, 1)")));
    }
    let classes = [Label::Control, Label::Asd];
    let mut fold_of = alloc::vec![0usize; labels.len()];
    let mut next = 0;
    for (c, &class) in classes.iter().enumerate() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            return Err(Error::Config(format!("no {} subjects", class.name())));
        }
        members.shuffle(&mut rng::stream(seed, CLASS_STREAM + c as u64));
        for i in members {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    let folds = (0..k)
        .map(|f| {
            let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
            let mut val = Vec::new();
            let mut train = Vec::new();
            for (c, &class) in classes.iter().enumerate() {
                let mut pool: Vec<usize> = (0..labels.len())
                    .filter(|&i| fold_of[i] != f && labels[i] == class)
                    .collect();
                pool.shuffle(&mut rng::stream(seed, VAL_STREAM + (f * classes.len() + c) as u64));
                let n_val = libm::round(val_fraction * pool.len() as f64) as usize;
                val.extend_from_slice(&pool[..n_val]);
                train.extend_from_slice(&pool[n_val..]);
            }
            train.sort_unstable();
            val.sort_unstable();
            FoldSplit { train, val, test }
        })
        .collect();
    Ok(SplitPlan { seed, folds })
}

/// Settings of a cross-validated model run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct CvConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub folds: usize,
    pub val_fraction: f64,
    /// Split seed; fold `f` trains with `derive_seed(train.seed, f)`.
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            folds: DEFAULT_FOLDS,
            val_fraction: DEFAULT_VAL_FRACTION,
            seed: 0,
        }
    }
}

impl CvConfig {
    /// Training settings for fold `fold`.
    pub fn fold_train_config(&self, fold: usize) -> TrainConfig {
        TrainConfig {
            seed: rng::derive_seed(self.train.seed, fold as u64),
            ..self.train.clone()
        }
    }
}

fn pick(samples: &[Sample], idx: &[usize]) -> Vec<Sample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

/// Probability and forecast predictability for every sample.
pub fn evaluate(params: &NetworkParams, samples: &[Sample]) -> Result<Vec<SubjectResult>> {
    samples
        .iter()
        .map(|s| {
            let (f, p) = forward(&s.pair, params)?;
            Ok(SubjectResult {
                subject_id: s.subject_id.clone(),
                label: s.label,
                p,
                predictability: Some(predictability(&f.x_hat, &s.pair.target)?),
            })
        })
        .collect()
}

/// A trained fold: its test report and final parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRun {
    pub report: FoldReport,
    pub params: NetworkParams,
}

/// Trains on fold `fold`'s training split and reports on its test split.
/// The validation split only feeds the per-epoch log.
pub fn run_model_fold(samples: &[Sample], plan: &SplitPlan, fold: usize, cfg: &CvConfig) -> Result<FoldRun> {
    let wrap = |e: Error| Error::Fold {
        fold,
        source: Box::new(e),
    };
    let split = plan
        .folds
        .get(fold)
        .ok_or_else(|| Error::Config(format!("fold {fold} is not in the plan")))?;
    let tc = cfg.fold_train_config(fold);
    let TrainOutcome { params, epochs, .. } =
        train(&pick(samples, &split.train), &pick(samples, &split.val), cfg.model, &tc).map_err(wrap)?;
    let subjects = evaluate(&params, &pick(samples, &split.test)).map_err(wrap)?;
    let report = FoldReport::new(fold, subjects, epochs).map_err(wrap)?;
    Ok(FoldRun { report, params })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvOutcome {
    pub reports: Vec<FoldReport>,
    pub summary: CvSummary,
}

impl CvOutcome {
    /// Orders reports by fold index and summarizes them.
    pub fn from_reports(mut reports: Vec<FoldReport>) -> Self {
        reports.sort_by_key(|r| r.fold);
        let summary = CvSummary::from_reports(&reports);
        Self { reports, summary }
    }
}

/// Runs every fold in order. The first failing fold aborts the run.
pub fn run_cv(samples: &[Sample], plan: &SplitPlan, cfg: &CvConfig) -> Result<CvOutcome> {
    let reports = (0..plan.folds.len())
        .map(|f| run_model_fold(samples, plan, f, cfg).map(|r| r.report))
        .collect::<Result<Vec<_>>>()?;
    Ok(CvOutcome::from_reports(reports))
}

/// The CPM baseline on fold `fold`.
pub fn run_cpm_fold(dataset: &Dataset, plan: &SplitPlan, fold: usize, alpha_grid: &[f64]) -> Result<CpmOutcome> {
    let split = plan
        .folds
        .get(fold)
        .ok_or_else(|| Error::Config(format!("fold {fold} is not in the plan")))?;
    cpm_train_eval(
        fold,
        &dataset.select(&split.train),
        &dataset.select(&split.val),
        &dataset.select(&split.test),
        alpha_grid,
    )
    .map_err(|e| Error::Fold {
        fold,
        source: Box::new(e),
    })
}

/// Top-`k` channel lists of the correctly classified test subjects of all
/// folds, in fold and subject order.
pub fn correct_rankings(reports: &[FoldReport], k: usize) -> Vec<(Label, Vec<usize>)> {
    reports
        .iter()
        .flat_map(|r| &r.subjects)
        .filter(|s| s.correct(DEFAULT_THRESHOLD))
        .filter_map(|s| s.predictability.as_ref().map(|p| (s.label, rank_rois(p, k))))
        .collect()
}

/// Result of training once with a candidate setting for a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub val_accuracy: f64,
    /// Mean frequency loss of the validation forecasts.
    pub val_freq_loss: f64,
}

/// Trains on the first fold's training split and scores its validation split.
pub fn sweep_point(samples: &[Sample], plan: &SplitPlan, model: ModelConfig, train_cfg: &TrainConfig) -> Result<SweepPoint> {
    let split = plan.folds.first().ok_or_else(|| Error::Config("empty split plan".into()))?;
    if split.val.is_empty() {
        return Err(Error::Config("sweeps need a non-empty validation split".into()));
    }
    let out = train(&pick(samples, &split.train), &[], model, train_cfg)?;
    let val = pick(samples, &split.val);
    let mut correct = 0;
    let mut freq = 0.0;
    for s in &val {
        let (f, p) = forward(&s.pair, &out.params)?;
        if (p >= DEFAULT_THRESHOLD) == (s.label == Label::Asd) {
            correct += 1;
        }
        freq += freq_loss(&f.x_hat, &s.pair.target)?;
    }
    Ok(SweepPoint {
        val_accuracy: correct as f64 / val.len() as f64,
        val_freq_loss: freq / val.len() as f64,
    })
}

/// Divides every value by the maximum, so the largest becomes 1.
pub fn scale_by_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().map(|v| v / max).collect()
}
