//! JSON checkpoints: the model configuration, the training seed and every
//! parameter tensor by name.
//!
//! ```json
//! {
//!   "format": "grangernet-checkpoint",
//!   "version": 1,
//!   "model": { "n_channels": 10, "hidden": 16, "heads": 4, "lag": 1 },
//!   "seed": 0,
//!   "tensors": [ { "name": "encoder.w", "rows": 64, "cols": 26, "data": [ ... ] }, ... ]
//! }
//! ```
//!
//! `data` is row-major. Floats are written in shortest round-trip form, so a
//! save/load cycle reproduces the parameters bit for bit.

use std::fs;
use std::path::Path;

use grangernet_core::model::{ModelConfig, NetworkParams, TENSOR_NAMES};
use grangernet_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "grangernet-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub seed: u64,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(params: &NetworkParams, seed: u64) -> Self {
        let tensors = TENSOR_NAMES
            .iter()
            .zip(params.tensors())
            .map(|(name, m)| NamedTensor {
                name: (*name).to_string(),
                rows: m.rows(),
                cols: m.cols(),
                data: m.data().to_vec(),
            })
            .collect();
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            model: params.config,
            seed,
            tensors,
        }
    }

    pub fn params(&self) -> grangernet_core::Result<NetworkParams> {
        let named = self
            .tensors
            .iter()
            .map(|t| Ok((t.name.as_str(), Matrix::from_vec(t.rows, t.cols, t.data.clone())?)))
            .collect::<grangernet_core::Result<Vec<_>>>()?;
        NetworkParams::from_named(self.model, named)
    }
}

pub fn save(path: &Path, params: &NetworkParams, seed: u64) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::new(params, seed)).expect("checkpoint serializes");
    fs::write(path, json).map_err(Error::io(path))
}

pub fn load(path: &Path) -> Result<(NetworkParams, u64)> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    if ck.format != FORMAT {
        return Err(bad(format!("unknown format {:?}", ck.format)));
    }
    if ck.version != VERSION {
        return Err(bad(format!("unsupported version {}", ck.version)));
    }
    let params = ck.params().map_err(|e| bad(e.to_string()))?;
    Ok((params, ck.seed))
}
