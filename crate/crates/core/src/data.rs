//! Subjects, quality-control filtering, per-channel z-scoring and lag splits.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{shape, Error, Result};
use crate::fmath;
use crate::linalg::Matrix;

/// Variance below this marks a channel as degenerate.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Binary subject label: `Control = 0`, `Asd = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Label {
    Control,
    Asd,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Control => 0.0,
            Label::Asd => 1.0,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Control),
            1 => Some(Label::Asd),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Control => "control",
            Label::Asd => "ASD",
        }
    }
}

/// One subject's channel-by-time signal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiTimeSeries {
    pub subject_id: String,
    pub label: Label,
    /// Mean framewise displacement in millimeters.
    pub mean_fd: Option<f64>,
    /// `N x T`.
    pub x: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<RoiTimeSeries>,
    pub atlas_labels: Vec<String>,
}

impl Dataset {
    /// Checks that subjects share the channel count, that subject IDs are
    /// unique, that values are finite, and that there is one atlas label per
    /// channel.
    pub fn new(subjects: Vec<RoiTimeSeries>, atlas_labels: Vec<String>) -> Result<Self> {
        let n = atlas_labels.len();
        let mut ids = BTreeSet::new();
        for s in &subjects {
            if s.x.rows() != n {
                return Err(shape(format!(
                    "subject {} has {} channels, atlas has {n}",
                    s.subject_id,
                    s.x.rows()
                )));
            }
            if !s.x.is_finite() {
                return Err(Error::Data(format!("subject {} has non-finite values", s.subject_id)));
            }
            if !ids.insert(s.subject_id.as_str()) {
                return Err(Error::Data(format!("duplicate subject id {}", s.subject_id)));
            }
        }
        Ok(Self {
            subjects,
            atlas_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.atlas_labels.len()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.subjects.iter().map(|s| s.label).collect()
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
            atlas_labels: self.atlas_labels.clone(),
        }
    }
}

/// Generic channel names `ROI_0 .. ROI_{n-1}`.
pub fn generic_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("ROI_{i}")).collect()
}

/// Keeps subjects with `mean_fd <= fd_threshold`, preserving order.
pub fn qc_filter(dataset: &Dataset, fd_threshold: f64) -> Result<Dataset> {
    let missing: Vec<String> = dataset
        .subjects
        .iter()
        .filter(|s| s.mean_fd.is_none_or(|v| !v.is_finite()))
        .map(|s| s.subject_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingMeanFd(missing));
    }
    Ok(Dataset {
        subjects: dataset
            .subjects
            .iter()
            .filter(|s| s.mean_fd.is_some_and(|fd| fd <= fd_threshold))
            .cloned()
            .collect(),
        atlas_labels: dataset.atlas_labels.clone(),
    })
}

/// Z-scored copy of `x` (per channel, population variance) and the indices
/// of degenerate channels, which are set to zero.
pub fn normalize(x: &Matrix) -> (Matrix, Vec<usize>) {
    let mut out = x.clone();
    let mut degenerate = Vec::new();
    let t = x.cols() as f64;
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / t;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
        if !(var >= DEGENERATE_VARIANCE) {
            row.iter_mut().for_each(|v| *v = 0.0);
            degenerate.push(r);
        } else {
            let sd = fmath::sqrt(var);
            row.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        }
    }
    (out, degenerate)
}

/// Input and target windows separated by `lag` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LagPair {
    /// Columns `0 .. T-lag` of the source.
    pub input: Matrix,
    /// Columns `lag .. T` of the source.
    pub target: Matrix,
    pub lag: usize,
}

pub fn lag_split(x: &Matrix, lag: usize) -> Result<LagPair> {
    let t = x.cols();
    if lag == 0 || lag >= t {
        return Err(shape(format!("lag {lag} needs 1 <= lag < T = {t}")));
    }
    Ok(LagPair {
        input: x.slice_cols(0, t - lag),
        target: x.slice_cols(lag, t),
        lag,
    })
}

/// A subject ready for the network: z-scored and lag-split.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub subject_id: String,
    pub label: Label,
    pub pair: LagPair,
    pub degenerate_channels: Vec<usize>,
}

/// Normalizes and lag-splits every subject. Each subject needs
/// `T >= 2·lag + 2`.
pub fn prepare(dataset: &Dataset, lag: usize) -> Result<Vec<Sample>> {
    dataset
        .subjects
        .iter()
        .map(|s| {
            if s.x.cols() < 2 * lag + 2 {
                return Err(shape(format!(
                    "subject {} has {} time points; lag {lag} needs at least {}",
                    s.subject_id,
                    s.x.cols(),
                    2 * lag + 2
                )));
            }
            let (z, degenerate) = normalize(&s.x);
            if !degenerate.is_empty() {
                log::warn!("subject {}: degenerate channels {:?} set to zero", s.subject_id, degenerate);
            }
            Ok(Sample {
                subject_id: s.subject_id.clone(),
                label: s.label,
                pair: lag_split(&z, lag)?,
                degenerate_channels: degenerate,
            })
        })
        .collect()
}
