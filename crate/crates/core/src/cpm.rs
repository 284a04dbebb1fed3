//! Connectome-based predictive modeling: Pearson connectivity features and
//! ridge regression on the class label.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{Dataset, DEGENERATE_VARIANCE};
use crate::error::{Error, Result};
use crate::fmath;
use crate::linalg::{solve_spd, Matrix};
use crate::metrics::{FoldReport, SubjectResult, DEFAULT_THRESHOLD};

/// Upper triangle (row-major, diagonal excluded) of the channel correlation
/// matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FcVector {
    pub features: Vec<f64>,
}

/// Pearson correlations between all channel pairs of an `N x T` series.
/// A channel with variance at most `1e-12` correlates as 0 with everything.
pub fn fc_features(x: &Matrix) -> FcVector {
    let (n, t) = x.shape();
    let tf = t as f64;
    let mut centered = x.clone();
    let mut norms = Vec::with_capacity(n);
    for r in 0..n {
        let row = centered.row_mut(r);
        let mean = row.iter().sum::<f64>() / tf;
        row.iter_mut().for_each(|v| *v -= mean);
        let ss = row.iter().map(|v| v * v).sum::<f64>();
        norms.push((ss / tf > DEGENERATE_VARIANCE).then(|| fmath::sqrt(ss)));
    }
    let degenerate = norms.iter().filter(|v| v.is_none()).count();
    if degenerate > 0 {
        log::warn!("{degenerate} flat channel(s) get zero correlation");
    }
    let mut features = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            features.push(match (norms[i], norms[j]) {
                (Some(a), Some(b)) => {
                    let c = centered.row(i).iter().zip(centered.row(j)).map(|(u, v)| u * v).sum::<f64>();
                    (c / (a * b)).clamp(-1.0, 1.0)
                }
                _ => 0.0,
            });
        }
    }
    FcVector { features }
}

/// `y ≈ intercept + wᵀx`, with the intercept left unpenalized.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Ridge regression of `y` on the rows of `x` (`n x p`). Columns are
/// centered first. The `p x p` normal equations are solved when `n >= p`,
/// the equivalent `n x n` dual system otherwise.
pub fn ridge_fit(x: &Matrix, y: &[f64], alpha: f64) -> Result<RidgeModel> {
    let (n, p) = x.shape();
    if n == 0 || y.len() != n {
        return Err(Error::Config(format!("ridge needs matching non-empty data: {n} rows, {} targets", y.len())));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("ridge alpha must be positive, got {alpha}")));
    }
    let x_mean: Vec<f64> = (0..p).map(|c| x.col(c).iter().sum::<f64>() / n as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xc = x.clone();
    for r in 0..n {
        xc.row_mut(r).iter_mut().zip(&x_mean).for_each(|(v, m)| *v -= m);
    }
    let yc = Matrix::column(y.iter().map(|v| v - y_mean).collect());
    let weights = if n >= p {
        let mut gram = xc.t_matmul(&xc)?;
        for i in 0..p {
            gram[(i, i)] += alpha;
        }
        solve_spd(&gram, &xc.t_matmul(&yc)?)?.into_data()
    } else {
        let mut k = xc.matmul_t(&xc)?;
        for i in 0..n {
            k[(i, i)] += alpha;
        }
        xc.t_matmul(&solve_spd(&k, &yc)?)?.into_data()
    };
    let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(RidgeModel {
        weights,
        intercept,
        alpha,
    })
}

/// Ten log-spaced values from 0.5 to 5·10⁹.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..10).map(|i| 0.5 * libm::pow(10.0, 10.0 * i as f64 / 9.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CpmOutcome {
    pub report: FoldReport,
    pub alpha: f64,
    /// `(alpha, validation accuracy)` for every grid point.
    pub validation: Vec<(f64, f64)>,
}

fn features_of(d: &Dataset) -> Result<(Matrix, Vec<f64>)> {
    let rows: Vec<Vec<f64>> = d.subjects.iter().map(|s| fc_features(&s.x).features).collect();
    let x = Matrix::from_rows(&rows)?;
    Ok((x, d.subjects.iter().map(|s| s.label.as_f64()).collect()))
}

fn accuracy(model: &RidgeModel, x: &Matrix, y: &[f64]) -> f64 {
    let correct = (0..x.rows())
        .filter(|&r| (model.predict(x.row(r)) >= DEFAULT_THRESHOLD) == (y[r] == 1.0))
        .count();
    correct as f64 / x.rows() as f64
}

/// Fits ridge models over `alpha_grid` on `train`, picks the alpha with the
/// best `val` accuracy (ties go to the larger alpha), and reports on `test`.
/// Predictions are clipped to `[0, 1]` to serve as scores.
pub fn cpm_train_eval(
    fold: usize,
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
    alpha_grid: &[f64],
) -> Result<CpmOutcome> {
    if train.is_empty() || val.is_empty() || test.is_empty() || alpha_grid.is_empty() {
        return Err(Error::Config("CPM needs non-empty train, validation and test sets and alphas".into()));
    }
    let (xt, yt) = features_of(train)?;
    let (xv, yv) = features_of(val)?;
    let mut best: Option<(f64, RidgeModel)> = None;
    let mut validation = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        let model = ridge_fit(&xt, &yt, alpha)?;
        let acc = accuracy(&model, &xv, &yv);
        validation.push((alpha, acc));
        let better = match &best {
            None => true,
            Some((b, m)) => acc > *b || (acc == *b && alpha > m.alpha),
        };
        if better {
            best = Some((acc, model));
        }
    }
    let (_, model) = best.expect("grid is non-empty");
    let subjects = test
        .subjects
        .iter()
        .map(|s| SubjectResult {
            subject_id: s.subject_id.clone(),
            label: s.label,
            p: model.predict(&fc_features(&s.x).features).clamp(0.0, 1.0),
            predictability: None,
        })
        .collect();
    Ok(CpmOutcome {
        report: FoldReport::new(fold, subjects, Vec::new())?,
        alpha: model.alpha,
        validation,
    })
}
