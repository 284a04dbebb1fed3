use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use grangernet::config::RunConfig;
use grangernet::pipeline::{self, CvOptions, RankSource};
use grangernet::report;

/// Forecast-then-classify network for multichannel time series.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed for simulation, splits and training.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DataArgs {
    /// Manifest CSV (`subject_id,path`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Phenotype CSV (default: `phenotypes.csv` next to the manifest).
    #[arg(long)]
    phenotypes: Option<PathBuf>,
    /// Atlas label CSV (`index,name`).
    #[arg(long)]
    atlas: Option<PathBuf>,
    /// Drop subjects whose mean FD exceeds this many millimeters.
    #[arg(long)]
    fd_threshold: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    /// Weight of the frequency loss.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a two-class planted-causality dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        subjects_per_class: Option<usize>,
        #[arg(long)]
        t_len: Option<usize>,
    },
    /// Train on every subject and save a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Cross-validate the network.
    Cv {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Also train once per listed alpha on the first fold.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        alpha_sweep: Option<Vec<f64>>,
        /// Also train once per listed head count on the first fold.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        head_sweep: Option<Vec<usize>>,
        /// Also cross-validate a baseline on the same splits.
        #[arg(long, value_parser = ["cpm"])]
        baseline: Option<String>,
    },
    /// Rank channels by predictability for correctly classified subjects.
    Rank {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint scoring every subject of the data.
        #[arg(long, conflicts_with = "cv_dir", required_unless_present = "cv_dir")]
        checkpoint: Option<PathBuf>,
        /// `cv` output directory; each fold's model scores its test subjects.
        #[arg(long)]
        cv_dir: Option<PathBuf>,
        /// Channels kept per subject.
        #[arg(long)]
        per_subject: Option<usize>,
    },
    /// Run a baseline.
    Baseline {
        #[command(subcommand)]
        which: Baseline,
    },
    /// Check analytic gradients of a toy network against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 12)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum Baseline {
    /// Per-subject VAR fits: coefficients and predictability.
    Var {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        lag: Option<usize>,
    },
    /// Connectivity ridge regression, cross-validated.
    Cpm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
}

fn load_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.jobs.is_some() {
        cfg.jobs = common.jobs;
    }
    if let Some(seed) = common.seed {
        cfg.synth.seed = seed;
        cfg.cv.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, d: DataArgs) {
    if d.data.is_some() {
        cfg.data.manifest = d.data;
    }
    if d.phenotypes.is_some() {
        cfg.data.phenotypes = d.phenotypes;
    }
    if d.atlas.is_some() {
        cfg.data.atlas = d.atlas;
    }
    if d.fd_threshold.is_some() {
        cfg.data.fd_threshold = d.fd_threshold;
    }
}

fn apply_train(cfg: &mut RunConfig, t: TrainArgs) {
    if let Some(v) = t.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = t.hidden {
        cfg.model.hidden = v;
    }
    if let Some(v) = t.heads {
        cfg.model.heads = v;
    }
    if let Some(v) = t.alpha {
        cfg.train.alpha = v;
    }
    if let Some(v) = t.batch_size {
        cfg.train.batch_size = v;
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth {
            common,
            subjects_per_class,
            t_len,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(v) = subjects_per_class {
                cfg.synth.subjects_per_class = v;
            }
            if let Some(v) = t_len {
                cfg.synth.t_len = v;
            }
            cfg.validate()?;
            let manifest = pipeline::synth(&cfg, &common.out)?;
            println!("wrote {}", manifest.display());
        }
        Command::Train { common, data, train } => {
            let mut cfg = load_config(&common)?;
            apply_data(&mut cfg, data);
            apply_train(&mut cfg, train);
            cfg.validate()?;
            pipeline::train_all(&cfg, &common.out)?;
            println!("wrote {}", common.out.join(pipeline::CHECKPOINT_FILE).display());
        }
        Command::Cv {
            common,
            data,
            train,
            alpha_sweep,
            head_sweep,
            baseline,
        } => {
            let mut cfg = load_config(&common)?;
            apply_data(&mut cfg, data);
            apply_train(&mut cfg, train);
            if let Some(v) = &alpha_sweep {
                if !v.is_empty() {
                    cfg.sweep.alphas = v.clone();
                }
            }
            if let Some(v) = &head_sweep {
                if !v.is_empty() {
                    cfg.sweep.heads = v.clone();
                }
            }
            cfg.validate()?;
            let opts = CvOptions {
                alpha_sweep: alpha_sweep.map(|_| cfg.sweep.alphas.clone()),
                head_sweep: head_sweep.map(|_| cfg.sweep.heads.clone()),
                cpm_baseline: baseline.is_some(),
            };
            pipeline::cross_validate(&cfg, &common.out, &opts)?;
            let table = std::fs::read_to_string(common.out.join(report::SUMMARY_TABLE))
                .context("reading the summary table back")?;
            print!("{table}");
        }
        Command::Rank {
            common,
            data,
            checkpoint,
            cv_dir,
            per_subject,
        } => {
            let mut cfg = load_config(&common)?;
            apply_data(&mut cfg, data);
            if let Some(v) = per_subject {
                cfg.rank.per_subject = v;
            }
            cfg.validate()?;
            let source = match (checkpoint, cv_dir) {
                (Some(p), None) => RankSource::Checkpoint(p),
                (None, Some(d)) => RankSource::CvDir(d),
                _ => bail!("give exactly one of --checkpoint and --cv-dir"),
            };
            let (asd, control) = pipeline::rank(&cfg, &source, &common.out)?;
            for t in [&asd, &control] {
                let top: Vec<&str> = t.entries.iter().map(|e| e.roi_name.as_str()).collect();
                println!("{} ({} subjects): {}", t.population.name(), t.subjects, top.join(", "));
            }
        }
        Command::Baseline { which } => match which {
            Baseline::Var { common, data, lag } => {
                let mut cfg = load_config(&common)?;
                apply_data(&mut cfg, data);
                if let Some(v) = lag {
                    cfg.var.lag = v;
                }
                cfg.validate()?;
                pipeline::baseline_var(&cfg, &common.out)?;
                println!("wrote {}", common.out.display());
            }
            Baseline::Cpm { common, data } => {
                let mut cfg = load_config(&common)?;
                apply_data(&mut cfg, data);
                cfg.validate()?;
                let summary = pipeline::baseline_cpm(&cfg, &common.out)?;
                print!("{}", report::format_table(&[&summary]));
            }
        },
        Command::Gradcheck { alpha, seed } => {
            let err = pipeline::gradcheck(alpha, seed)?;
            println!("max relative error {err:.3e}");
            if !(err < 1e-4) {
                bail!("gradient check failed: {err:.3e} >= 1e-4");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
