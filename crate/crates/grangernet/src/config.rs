//! TOML run configuration. Every section is optional and unknown keys are
//! rejected. Command-line flags override the file; the effective
//! configuration is written next to every output.

use std::fs;
use std::path::{Path, PathBuf};

use grangernet_core::cpm::default_alpha_grid;
use grangernet_core::cv::{CvConfig, DEFAULT_FOLDS, DEFAULT_VAL_FRACTION};
use grangernet_core::model::ModelConfig;
use grangernet_core::optim::TrainConfig;
use grangernet_core::synth::{PlantedDesign, SynthSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::DEFAULT_FD_COLUMN;

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// `subject_id,path` CSV.
    pub manifest: Option<PathBuf>,
    /// Defaults to `phenotypes.csv` next to the manifest.
    pub phenotypes: Option<PathBuf>,
    /// `index,name` CSV. Defaults to `atlas.csv` next to the manifest when
    /// present, otherwise the bundled AAL-116 labels.
    pub atlas: Option<PathBuf>,
    pub fd_column: String,
    /// Mean-FD cutoff in millimeters; subjects above it are dropped.
    pub fd_threshold: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            phenotypes: None,
            atlas: None,
            fd_column: DEFAULT_FD_COLUMN.to_string(),
            fd_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub design: PlantedDesign,
    pub t_len: usize,
    pub subjects_per_class: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            design: PlantedDesign::default(),
            t_len: 150,
            subjects_per_class: 100,
            burn_in: 100,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn spec(&self) -> grangernet_core::Result<SynthSpec> {
        let mut spec = SynthSpec::from_design(&self.design, self.t_len, self.subjects_per_class, self.seed)?;
        spec.burn_in = self.burn_in;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSettings {
    pub folds: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            val_fraction: DEFAULT_VAL_FRACTION,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub heads: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 0.01, 0.001, 0.0001],
            heads: vec![1, 2, 4, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankConfig {
    /// Channels kept from each subject's predictability ranking.
    pub per_subject: usize,
    /// Rows in each population table.
    pub table_len: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            per_subject: 10,
            table_len: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpmConfig {
    pub alpha_grid: Vec<f64>,
}

impl Default for CpmConfig {
    fn default() -> Self {
        Self {
            alpha_grid: default_alpha_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarConfig {
    pub lag: usize,
}

impl Default for VarConfig {
    fn default() -> Self {
        Self { lag: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Worker threads for fold-level parallelism; all cores when unset.
    pub jobs: Option<usize>,
    pub data: DataConfig,
    pub synth: SynthConfig,
    /// `n_channels` is replaced by the channel count of the loaded data.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub cv: CvSettings,
    pub sweep: SweepConfig,
    pub rank: RankConfig,
    pub cpm: CpmConfig,
    pub var: VarConfig,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Writes the effective configuration into `dir`.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        let path = dir.join(EFFECTIVE_CONFIG_FILE);
        fs::write(&path, self.to_toml()).map_err(Error::io(&path))
    }

    pub fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            model: self.model,
            train: self.train.clone(),
            folds: self.cv.folds,
            val_fraction: self.cv.val_fraction,
            seed: self.cv.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1");
        }
        self.train.validate()?;
        if self.cv.folds < 2 {
            return bad("cv.folds must be at least 2");
        }
        if !(0.0..1.0).contains(&self.cv.val_fraction) {
            return bad("cv.val_fraction must lie in [0, 1)");
        }
        if self.sweep.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("sweep.alphas must be finite and non-negative");
        }
        if self.sweep.heads.contains(&0) {
            return bad("sweep.heads must be positive");
        }
        if self.rank.per_subject == 0 || self.rank.table_len == 0 {
            return bad("rank sizes must be positive");
        }
        if self.cpm.alpha_grid.is_empty() || self.cpm.alpha_grid.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return bad("cpm.alpha_grid must hold positive finite values");
        }
        if self.var.lag == 0 {
            return bad("var.lag must be at least 1");
        }
        Ok(())
    }

    /// Model settings for data with `n_channels` channels.
    pub fn model_for(&self, n_channels: usize) -> grangernet_core::Result<ModelConfig> {
        let model = ModelConfig {
            n_channels,
            ..self.model
        };
        model.validate()?;
        Ok(model)
    }

    pub fn manifest(&self) -> Result<&Path> {
        self.data
            .manifest
            .as_deref()
            .ok_or_else(|| Error::Config("no data manifest given (use --data or [data].manifest)".into()))
    }
}
