//! Text formats for subject series, phenotypes, manifests and atlas labels.
//!
//! Subject files hold one time point per row and one channel per column,
//! separated by commas or whitespace, with an optional header row. The first
//! row counts as a header when any of its fields fails to parse as a number.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use grangernet_core::data::{Dataset, Label, RoiTimeSeries};
use grangernet_core::{Error as CoreError, Matrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FD_COLUMN: &str = "func_mean_fd";

const DEFAULT_ATLAS: &str = include_str!("../assets/aal116.csv");

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Parses subject text into an `N x T` matrix. `path` only labels errors.
pub fn parse_subject(text: &str, n_expected: usize, path: &Path) -> Result<Matrix> {
    let format_err = |line: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut first = true;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(line);
        let parsed: Vec<Option<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        if std::mem::take(&mut first) && parsed.iter().any(Option::is_none) {
            continue;
        }
        let values = parsed
            .into_iter()
            .zip(&fields)
            .map(|(v, f)| v.ok_or_else(|| format_err(lineno, format!("not a number: {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(format_err(lineno, format!("expected {w} fields, found {}", values.len())));
            }
            Some(_) => {}
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(CoreError::Data(format!("{}:{lineno}: non-finite value {v}", path.display())).into());
        }
        rows.push(values);
    }
    let cols = width.unwrap_or(0);
    if cols != n_expected {
        return Err(CoreError::Shape(format!(
            "{}: {cols} columns, expected {n_expected}",
            path.display()
        ))
        .into());
    }
    Ok(Matrix::from_rows(&rows)?.transpose())
}

pub fn load_subject(path: &Path, n_expected: usize) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_subject(&text, n_expected, path)
}

/// Renders an `N x T` matrix as comma-separated text, one time point per
/// row. Values use the shortest representation that parses back exactly.
pub fn format_subject(x: &Matrix, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(names) = header {
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for t in 0..x.cols() {
        for i in 0..x.rows() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{:?}", x[(i, t)]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_subject(path: &Path, x: &Matrix, header: Option<&[String]>) -> Result<()> {
    fs::write(path, format_subject(x, header)).map_err(Error::io(path))
}

#[derive(Debug, Deserialize, Serialize)]
struct AtlasRow {
    index: usize,
    name: String,
}

fn parse_atlas<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut names = Vec::new();
    for (i, row) in rdr.deserialize::<AtlasRow>().enumerate() {
        let row = row.map_err(Error::csv(path))?;
        if row.index != i {
            return Err(Error::Format {
                path: path.to_path_buf(),
                line: i + 2,
                msg: format!("expected index {i}, found {}", row.index),
            });
        }
        names.push(row.name);
    }
    Ok(names)
}

/// The 116 AAL region names in atlas order.
pub fn default_atlas() -> Vec<String> {
    parse_atlas(DEFAULT_ATLAS.as_bytes(), Path::new("aal116.csv")).expect("bundled atlas is well formed")
}

/// Reads an `index,name` CSV whose indices run `0, 1, 2, ...`.
pub fn load_atlas(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(Error::io(path))?;
    parse_atlas(file, path)
}

pub fn write_atlas(path: &Path, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    for (index, name) in names.iter().enumerate() {
        w.serialize(AtlasRow {
            index,
            name: name.clone(),
        })
        .map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phenotype {
    pub subject_id: String,
    pub label: Label,
    pub mean_fd: Option<f64>,
}

fn dx_to_label(dx: &str) -> Option<Label> {
    match dx.trim() {
        "1" => Some(Label::Asd),
        "2" => Some(Label::Control),
        _ => None,
    }
}

/// Reads a phenotype CSV with `SUB_ID`, `DX_GROUP` (1 = ASD, 2 = control) and
/// a mean-FD column. Empty, non-numeric or negative FD entries (the ABIDE
/// tables use `-9999`) count as missing.
pub fn load_phenotypes(path: &Path, fd_column: &str) -> Result<Vec<Phenotype>> {
    let mut rdr = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let headers = rdr.headers().map_err(Error::csv(path))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("missing column {name}"),
        })
    };
    let (id_col, dx_col, fd_col) = (column("SUB_ID")?, column("DX_GROUP")?, column(fd_column)?);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(Error::csv(path))?;
        let line = i + 2;
        let dx = &record[dx_col];
        let label = dx_to_label(dx).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            line,
            msg: format!("DX_GROUP must be 1 or 2, found {dx:?}"),
        })?;
        let mean_fd = record[fd_col].trim().parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0);
        out.push(Phenotype {
            subject_id: record[id_col].trim().to_string(),
            label,
            mean_fd,
        });
    }
    Ok(out)
}

pub fn write_phenotypes(path: &Path, rows: &[Phenotype]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(["SUB_ID", "DX_GROUP", DEFAULT_FD_COLUMN]).map_err(Error::csv(path))?;
    for p in rows {
        let dx = match p.label {
            Label::Asd => "1",
            Label::Control => "2",
        };
        let fd = p.mean_fd.map(|v| format!("{v:?}")).unwrap_or_default();
        w.write_record([p.subject_id.as_str(), dx, fd.as_str()]).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub path: PathBuf,
}

/// Reads a `subject_id,path` CSV. Relative paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut rdr = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    rdr.deserialize::<ManifestEntry>()
        .map(|row| {
            let mut row = row.map_err(Error::csv(path))?;
            if row.path.is_relative() {
                row.path = base.join(&row.path);
            }
            Ok(row)
        })
        .collect()
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    for e in entries {
        w.serialize(e).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// Loads every manifest subject, joined with its phenotype row.
pub fn load_dataset(manifest: &Path, phenotypes: &Path, fd_column: &str, atlas: Vec<String>) -> Result<Dataset> {
    let entries = load_manifest(manifest)?;
    let pheno: HashMap<String, Phenotype> = load_phenotypes(phenotypes, fd_column)?
        .into_iter()
        .map(|p| (p.subject_id.clone(), p))
        .collect();
    let n = atlas.len();
    let subjects = entries
        .par_iter()
        .map(|e| {
            let p = pheno.get(&e.subject_id).ok_or_else(|| {
                CoreError::Data(format!("subject {} has no phenotype row", e.subject_id))
            })?;
            Ok(RoiTimeSeries {
                subject_id: e.subject_id.clone(),
                label: p.label,
                mean_fd: p.mean_fd,
                x: load_subject(&e.path, n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(subjects, atlas)?)
}

/// Writes `subjects/<id>.csv`, `manifest.csv`, `phenotypes.csv` and
/// `atlas.csv` under `dir` and returns the manifest path.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    let sub_dir = dir.join("subjects");
    fs::create_dir_all(&sub_dir).map_err(Error::io(&sub_dir))?;
    dataset.subjects.par_iter().try_for_each(|s| {
        write_subject(
            &sub_dir.join(format!("{}.csv", s.subject_id)),
            &s.x,
            Some(&dataset.atlas_labels),
        )
    })?;
    let entries: Vec<ManifestEntry> = dataset
        .subjects
        .iter()
        .map(|s| ManifestEntry {
            subject_id: s.subject_id.clone(),
            path: Path::new("subjects").join(format!("{}.csv", s.subject_id)),
        })
        .collect();
    let pheno: Vec<Phenotype> = dataset
        .subjects
        .iter()
        .map(|s| Phenotype {
            subject_id: s.subject_id.clone(),
            label: s.label,
            mean_fd: s.mean_fd,
        })
        .collect();
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &entries)?;
    write_phenotypes(&dir.join("phenotypes.csv"), &pheno)?;
    write_atlas(&dir.join("atlas.csv"), &dataset.atlas_labels)?;
    Ok(manifest)
}
