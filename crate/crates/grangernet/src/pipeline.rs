//! The commands behind the CLI, usable as library calls.
//!
//! Fold-level work runs on a dedicated thread pool of `jobs` workers. Every
//! fold and sweep point is seeded independently and results are merged in
//! index order, so outputs do not depend on `jobs`.

use std::fs;
use std::path::{Path, PathBuf};

use grangernet_core::cpm::CpmOutcome;
use grangernet_core::cv::{
    self, correct_rankings, evaluate, make_splits, run_cpm_fold, run_model_fold, scale_by_max, sweep_point, CvOutcome,
    SplitPlan,
};
use grangernet_core::data::{prepare, qc_filter, Dataset, Sample};
use grangernet_core::gradcheck::check_network;
use grangernet_core::metrics::{aggregate_rankings, FoldReport, RankTable};
use grangernet_core::model::{ModelConfig, NetworkParams};
use grangernet_core::synth::make_dataset;
use grangernet_core::train::train;
use grangernet_core::var::{fit_var, var_predictability};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::report::{self, AlphaSweepRow, HeadSweepRow, Summary};

pub const MODEL_METHOD: &str = "grangernet";
pub const CPM_METHOD: &str = "cpm";
pub const SPLITS_FILE: &str = "splits.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Runs `f(0..n)` on `jobs` threads and returns the results in index order.
/// When several items fail, the lowest index's error is returned.
pub fn run_indexed<T, F>(jobs: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..n).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

fn atlas_for(cfg: &RunConfig, manifest: &Path) -> Result<Vec<String>> {
    if let Some(path) = &cfg.data.atlas {
        return io::load_atlas(path);
    }
    let sibling = manifest.with_file_name("atlas.csv");
    if sibling.exists() {
        io::load_atlas(&sibling)
    } else {
        Ok(io::default_atlas())
    }
}

/// Loads the configured dataset and applies the mean-FD filter when a
/// threshold is set.
pub fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let manifest = cfg.manifest()?;
    let phenotypes = cfg
        .data
        .phenotypes
        .clone()
        .unwrap_or_else(|| manifest.with_file_name("phenotypes.csv"));
    let atlas = atlas_for(cfg, manifest)?;
    let dataset = io::load_dataset(manifest, &phenotypes, &cfg.data.fd_column, atlas)?;
    let dataset = match cfg.data.fd_threshold {
        Some(thr) => {
            let kept = qc_filter(&dataset, thr)?;
            info!("mean-FD filter at {thr} mm kept {} of {} subjects", kept.len(), dataset.len());
            kept
        }
        None => dataset,
    };
    if dataset.is_empty() {
        return Err(grangernet_core::Error::Data("no subjects left to analyze".into()).into());
    }
    Ok(dataset)
}

fn prepared(cfg: &RunConfig, dataset: &Dataset) -> Result<(ModelConfig, Vec<Sample>)> {
    let model = cfg.model_for(dataset.n_channels())?;
    let samples = prepare(dataset, model.lag)?;
    for s in &samples {
        if !s.degenerate_channels.is_empty() {
            warn!("subject {}: constant channels {:?} set to zero", s.subject_id, s.degenerate_channels);
        }
    }
    Ok((model, samples))
}

/// Simulates the configured synthetic dataset into `out`; returns the
/// manifest path.
pub fn synth(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let spec = cfg.synth.spec()?;
    let dataset = make_dataset(&spec)?;
    create_dir(out)?;
    let manifest = io::write_dataset(out, &dataset)?;
    let mut effective = cfg.clone();
    effective.data.manifest = Some(manifest.clone());
    effective.dump(out)?;
    Ok(manifest)
}

/// Trains on every subject and writes a checkpoint and the training log.
pub fn train_all(cfg: &RunConfig, out: &Path) -> Result<NetworkParams> {
    let dataset = load_data(cfg)?;
    let (model, samples) = prepared(cfg, &dataset)?;
    let outcome = train(&samples, &[], model, &cfg.train)?;
    create_dir(out)?;
    checkpoint::save(&out.join(CHECKPOINT_FILE), &outcome.params, cfg.train.seed)?;
    report::write_training_log(&out.join(report::TRAINING_LOG), [(None, outcome.epochs.as_slice())])?;
    cfg.dump(out)?;
    Ok(outcome.params)
}

/// What `cv` produced beyond the summary files.
#[derive(Debug, Clone)]
pub struct CvRun {
    pub plan: SplitPlan,
    pub outcome: CvOutcome,
    pub params: Vec<NetworkParams>,
    pub summary: Summary,
    pub tables: (RankTable, RankTable),
}

#[derive(Debug, Clone, Default)]
pub struct CvOptions {
    pub alpha_sweep: Option<Vec<f64>>,
    pub head_sweep: Option<Vec<usize>>,
    pub cpm_baseline: bool,
}

pub fn splits_for(cfg: &RunConfig, dataset: &Dataset) -> Result<SplitPlan> {
    Ok(make_splits(&dataset.labels(), cfg.cv.folds, cfg.cv.seed, cfg.cv.val_fraction)?)
}

/// Rank tables from the correctly classified test subjects of `reports`.
pub fn rank_tables(cfg: &RunConfig, reports: &[FoldReport], atlas: &[String]) -> (RankTable, RankTable) {
    let rankings = correct_rankings(reports, cfg.rank.per_subject);
    let (asd, control) = aggregate_rankings(&rankings, atlas, cfg.rank.table_len);
    for t in [&asd, &control] {
        if t.subjects == 0 {
            warn!("no correctly classified {} subjects; its rank table is empty", t.population.name());
        }
    }
    (asd, control)
}

fn write_rank_tables(dir: &Path, (asd, control): &(RankTable, RankTable)) -> Result<()> {
    report::write_rank_table(&dir.join(report::RANK_ASD), asd)?;
    report::write_rank_table(&dir.join(report::RANK_CONTROL), control)
}

/// Cross-validates the network, plus any requested sweeps and baseline.
pub fn cross_validate(cfg: &RunConfig, out: &Path, opts: &CvOptions) -> Result<CvRun> {
    let dataset = load_data(cfg)?;
    let (model, samples) = prepared(cfg, &dataset)?;
    let plan = splits_for(cfg, &dataset)?;
    let cv_cfg = cv::CvConfig {
        model,
        ..cfg.cv_config()
    };
    let jobs = cfg.jobs();
    create_dir(out)?;
    let mut effective = cfg.clone();
    effective.model = model;
    effective.dump(out)?;
    report::write_json(&out.join(SPLITS_FILE), &plan)?;

    let runs = run_indexed(jobs, plan.folds.len(), |f| {
        let run = run_model_fold(&samples, &plan, f, &cv_cfg)?;
        info!("fold {f}: test accuracy {:.3}", run.report.accuracy);
        Ok(run)
    })?;
    let (reports, params): (Vec<_>, Vec<_>) = runs.into_iter().map(|r| (r.report, r.params)).unzip();
    let outcome = CvOutcome::from_reports(reports);
    let summary = Summary::new(MODEL_METHOD, &outcome.reports);
    report::write_json(&out.join(report::SUMMARY_JSON), &summary)?;
    report::write_fold_reports(out, &outcome.reports)?;
    report::write_training_log(
        &out.join(report::TRAINING_LOG),
        outcome.reports.iter().map(|r| (Some(r.fold), r.epochs.as_slice())),
    )?;
    let tables = rank_tables(cfg, &outcome.reports, &dataset.atlas_labels);
    write_rank_tables(out, &tables)?;
    let dir = out.join("checkpoints");
    create_dir(&dir)?;
    for (f, p) in params.iter().enumerate() {
        checkpoint::save(&dir.join(format!("fold_{f}.json")), p, cv_cfg.fold_train_config(f).seed)?;
    }

    let mut table_rows = vec![summary.clone()];
    if opts.cpm_baseline {
        let cpm = cpm_folds(cfg, &dataset, &plan)?;
        let dir = out.join(CPM_METHOD);
        create_dir(&dir)?;
        table_rows.push(write_cpm(&dir, &cpm)?);
    }
    report::write_file(
        &out.join(report::SUMMARY_TABLE),
        report::format_table(&table_rows.iter().collect::<Vec<_>>()),
    )?;

    if let Some(alphas) = &opts.alpha_sweep {
        let rows = alpha_sweep(cfg, &samples, &plan, model, alphas)?;
        report::write_csv(&out.join(report::ALPHA_SWEEP), &rows)?;
    }
    if let Some(heads) = &opts.head_sweep {
        let rows = head_sweep(cfg, &samples, &plan, model, heads)?;
        report::write_csv(&out.join(report::HEAD_SWEEP), &rows)?;
    }
    Ok(CvRun {
        plan,
        outcome,
        params,
        summary,
        tables,
    })
}

/// Trains once per alpha on the first fold and scores its validation split.
pub fn alpha_sweep(
    cfg: &RunConfig,
    samples: &[Sample],
    plan: &SplitPlan,
    model: ModelConfig,
    alphas: &[f64],
) -> Result<Vec<AlphaSweepRow>> {
    let base = cfg.cv_config().fold_train_config(0);
    let points = run_indexed(cfg.jobs(), alphas.len(), |i| {
        let tc = grangernet_core::optim::TrainConfig {
            alpha: alphas[i],
            ..base.clone()
        };
        Ok(sweep_point(samples, plan, model, &tc)?)
    })?;
    let scaled = scale_by_max(&points.iter().map(|p| p.val_freq_loss).collect::<Vec<_>>());
    Ok(alphas
        .iter()
        .zip(&points)
        .zip(scaled)
        .map(|((&alpha, p), s)| AlphaSweepRow {
            alpha,
            val_accuracy: p.val_accuracy,
            val_freq_loss: p.val_freq_loss,
            scaled_freq_loss: s,
        })
        .collect())
}

/// Trains once per head count on the first fold and scores its validation
/// split.
pub fn head_sweep(
    cfg: &RunConfig,
    samples: &[Sample],
    plan: &SplitPlan,
    model: ModelConfig,
    heads: &[usize],
) -> Result<Vec<HeadSweepRow>> {
    let base = cfg.cv_config().fold_train_config(0);
    run_indexed(cfg.jobs(), heads.len(), |i| {
        let m = ModelConfig {
            heads: heads[i],
            ..model
        };
        m.validate()?;
        let p = sweep_point(samples, plan, m, &base)?;
        Ok(HeadSweepRow {
            heads: heads[i],
            val_accuracy: p.val_accuracy,
            val_freq_loss: p.val_freq_loss,
        })
    })
}

fn cpm_folds(cfg: &RunConfig, dataset: &Dataset, plan: &SplitPlan) -> Result<Vec<CpmOutcome>> {
    run_indexed(cfg.jobs(), plan.folds.len(), |f| {
        Ok(run_cpm_fold(dataset, plan, f, &cfg.cpm.alpha_grid)?)
    })
}

#[derive(Serialize)]
struct CpmAlphaRow {
    fold: usize,
    alpha: f64,
    val_accuracy: f64,
    selected: bool,
}

fn write_cpm(dir: &Path, outcomes: &[CpmOutcome]) -> Result<Summary> {
    let reports: Vec<FoldReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    let summary = Summary::new(CPM_METHOD, &reports);
    report::write_summary(dir, &summary)?;
    report::write_fold_reports(dir, &reports)?;
    let rows: Vec<CpmAlphaRow> = outcomes
        .iter()
        .flat_map(|o| {
            o.validation.iter().map(move |&(alpha, acc)| CpmAlphaRow {
                fold: o.report.fold,
                alpha,
                val_accuracy: acc,
                selected: alpha == o.alpha,
            })
        })
        .collect();
    report::write_csv(&dir.join("alpha_validation.csv"), &rows)?;
    Ok(summary)
}

/// Cross-validates the connectivity ridge baseline.
pub fn baseline_cpm(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let dataset = load_data(cfg)?;
    let plan = splits_for(cfg, &dataset)?;
    let outcomes = cpm_folds(cfg, &dataset, &plan)?;
    create_dir(out)?;
    cfg.dump(out)?;
    report::write_json(&out.join(SPLITS_FILE), &plan)?;
    write_cpm(out, &outcomes)
}

#[derive(Serialize)]
struct VarCoefRow<'a> {
    subject_id: &'a str,
    lag: usize,
    target: usize,
    source: usize,
    value: f64,
}

#[derive(Serialize)]
struct VarPredRow<'a> {
    subject_id: &'a str,
    label: &'a str,
    roi_index: usize,
    roi_name: &'a str,
    predictability: Option<f64>,
    r_squared: f64,
}

/// Fits a VAR model to every z-scored subject and writes the coefficients
/// and per-channel predictability.
pub fn baseline_var(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dataset = load_data(cfg)?;
    let lag = cfg.var.lag;
    let fits = run_indexed(cfg.jobs(), dataset.len(), |i| {
        let s = &dataset.subjects[i];
        let (z, _) = grangernet_core::data::normalize(&s.x);
        let fit = fit_var(&z, lag).map_err(|e| {
            grangernet_core::Error::Data(format!("subject {}: {e}", s.subject_id))
        })?;
        let pred = var_predictability(&fit, &z)?;
        Ok((fit, pred))
    })?;
    create_dir(out)?;
    cfg.dump(out)?;
    let coef_path = out.join("var_coefficients.csv");
    let mut coefs = csv::Writer::from_path(&coef_path).map_err(Error::csv(&coef_path))?;
    let pred_path = out.join("var_predictability.csv");
    let mut preds = csv::Writer::from_path(&pred_path).map_err(Error::csv(&pred_path))?;
    for (s, (fit, pred)) in dataset.subjects.iter().zip(&fits) {
        for (l, a) in fit.model.coeffs.iter().enumerate() {
            for target in 0..a.rows() {
                for source in 0..a.cols() {
                    coefs
                        .serialize(VarCoefRow {
                            subject_id: &s.subject_id,
                            lag: l + 1,
                            target,
                            source,
                            value: a[(target, source)],
                        })
                        .map_err(Error::csv(&coef_path))?;
                }
            }
        }
        for (i, p) in pred.per_roi.iter().enumerate() {
            preds
                .serialize(VarPredRow {
                    subject_id: &s.subject_id,
                    label: s.label.name(),
                    roi_index: i,
                    roi_name: &dataset.atlas_labels[i],
                    predictability: *p,
                    r_squared: fit.r_squared[i],
                })
                .map_err(Error::csv(&pred_path))?;
        }
    }
    coefs.flush().map_err(Error::io(&coef_path))?;
    preds.flush().map_err(Error::io(&pred_path))
}

/// Where `rank` takes its models from.
#[derive(Debug, Clone)]
pub enum RankSource {
    /// One checkpoint; every subject of the configured data is scored.
    Checkpoint(PathBuf),
    /// A `cv` output directory with per-fold checkpoints; each fold's model
    /// scores that fold's test subjects.
    CvDir(PathBuf),
}

/// Scores subjects with trained models and writes the two rank tables.
pub fn rank(cfg: &RunConfig, source: &RankSource, out: &Path) -> Result<(RankTable, RankTable)> {
    let dataset = load_data(cfg)?;
    let (_, samples) = prepared(cfg, &dataset)?;
    let reports = match source {
        RankSource::Checkpoint(path) => {
            let (params, _) = checkpoint::load(path)?;
            let subjects = evaluate(&params, &samples)?;
            vec![FoldReport::new(0, subjects, Vec::new())?]
        }
        RankSource::CvDir(dir) => {
            let split_path = dir.join(SPLITS_FILE);
            let text = fs::read_to_string(&split_path).map_err(Error::io(&split_path))?;
            let plan: SplitPlan = serde_json::from_str(&text).map_err(|source| Error::Json {
                path: split_path.clone(),
                source,
            })?;
            if plan.folds.iter().flat_map(|f| &f.test).any(|&i| i >= samples.len()) {
                return Err(Error::Config(format!(
                    "{} does not match the loaded data",
                    split_path.display()
                )));
            }
            run_indexed(cfg.jobs(), plan.folds.len(), |f| {
                let (params, _) = checkpoint::load(&dir.join("checkpoints").join(format!("fold_{f}.json")))?;
                let test: Vec<Sample> = plan.folds[f].test.iter().map(|&i| samples[i].clone()).collect();
                Ok(FoldReport::new(f, evaluate(&params, &test)?, Vec::new())?)
            })?
        }
    };
    let tables = rank_tables(cfg, &reports, &dataset.atlas_labels);
    create_dir(out)?;
    write_rank_tables(out, &tables)?;
    Ok(tables)
}

/// Toy shapes of the whole-network gradient check.
pub const GRADCHECK_MODEL: ModelConfig = ModelConfig {
    n_channels: 3,
    hidden: 8,
    heads: 2,
    lag: 1,
};
pub const GRADCHECK_T: usize = 10;

/// Largest relative error of the analytic gradient on the toy network.
pub fn gradcheck(alpha: f64, seed: u64) -> Result<f64> {
    Ok(check_network(GRADCHECK_MODEL, GRADCHECK_T, alpha, seed)?)
}

