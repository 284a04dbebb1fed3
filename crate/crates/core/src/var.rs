//! Least-squares VAR estimation and the predictability of its one-step
//! forecasts.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, solve_spd, Matrix};
use crate::metrics::{predictability, Predictability};
use crate::synth::VarModel;

/// Ridge added to the normal equations when the regressors are
/// (numerically) rank deficient.
pub const FALLBACK_RIDGE: f64 = 1e-8;

/// Relative pivot size below which the regressor Gram matrix is treated as
/// singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VarFit {
    /// Estimated `A_τ`; `noise_sigma` is the root mean residual variance.
    pub model: VarModel,
    pub intercept: Vec<f64>,
    /// Mean squared residual per channel over the fitted window.
    pub residual_variance: Vec<f64>,
    pub r_squared: Vec<f64>,
    pub ridge_used: bool,
}

/// Stacked lag regressors: row `t − L` is `[x(t−1); …; x(t−L)]` for
/// `t = L .. T`.
fn lagged(x: &Matrix, lag: usize) -> Matrix {
    let (n, t) = x.shape();
    let mut z = Matrix::zeros(t - lag, n * lag);
    for s in lag..t {
        let row = z.row_mut(s - lag);
        for tau in 1..=lag {
            for c in 0..n {
                row[(tau - 1) * n + c] = x[(c, s - tau)];
            }
        }
    }
    z
}

fn column_means(m: &Matrix) -> Vec<f64> {
    let r = m.rows() as f64;
    (0..m.cols()).map(|c| m.col(c).iter().sum::<f64>() / r).collect()
}

fn center(m: &mut Matrix, means: &[f64]) {
    for r in 0..m.rows() {
        for (v, mu) in m.row_mut(r).iter_mut().zip(means) {
            *v -= mu;
        }
    }
}

/// Ordinary least squares of every channel on `L` lags of all channels plus
/// an intercept. Needs `T > N·L + 10`.
pub fn fit_var(x: &Matrix, lag: usize) -> Result<VarFit> {
    let (n, t) = x.shape();
    if lag == 0 {
        return Err(Error::Config("lag order must be at least 1".into()));
    }
    if t <= n * lag + 10 {
        return Err(Error::Data(format!(
            "{t} samples are too few for a lag-{lag} VAR on {n} channels (need more than {})",
            n * lag + 10
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("VAR input".into()));
    }
    let mut z = lagged(x, lag);
    let mut y = x.slice_cols(lag, t).transpose();
    let z_mean = column_means(&z);
    let y_mean = column_means(&y);
    center(&mut z, &z_mean);
    center(&mut y, &y_mean);

    let mut gram = z.t_matmul(&z)?;
    let rhs = z.t_matmul(&y)?;
    let max_diag = (0..gram.rows()).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let well_posed = match cholesky(&gram) {
        Ok(l) => (0..l.rows()).all(|i| l[(i, i)] * l[(i, i)] > PIVOT_TOLERANCE * max_diag),
        Err(_) => false,
    };
    if !well_posed {
        log::warn!("VAR regressors are rank deficient; adding ridge {FALLBACK_RIDGE}");
        for i in 0..gram.rows() {
            gram[(i, i)] += FALLBACK_RIDGE;
        }
    }
    // beta is (N·L) x N: column j holds channel j's coefficients
    let beta = solve_spd(&gram, &rhs)?;

    let coeffs: Vec<Matrix> = (0..lag)
        .map(|tau| {
            let mut a = Matrix::zeros(n, n);
            for j in 0..n {
                for c in 0..n {
                    a[(j, c)] = beta[(tau * n + c, j)];
                }
            }
            a
        })
        .collect();
    let intercept: Vec<f64> = (0..n)
        .map(|j| y_mean[j] - (0..n * lag).map(|k| z_mean[k] * beta[(k, j)]).sum::<f64>())
        .collect();
    let fitted = z.matmul(&beta)?;
    let samples = y.rows() as f64;
    let mut residual_variance = Vec::with_capacity(n);
    let mut r_squared = Vec::with_capacity(n);
    for j in 0..n {
        let ss_res: f64 = (0..y.rows()).map(|s| (y[(s, j)] - fitted[(s, j)]).powi(2)).sum();
        let ss_tot: f64 = (0..y.rows()).map(|s| y[(s, j)] * y[(s, j)]).sum();
        residual_variance.push(ss_res / samples);
        r_squared.push(if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 });
    }
    let noise_sigma = libm::sqrt(residual_variance.iter().sum::<f64>() / n as f64);
    Ok(VarFit {
        model: VarModel { coeffs, noise_sigma },
        intercept,
        residual_variance,
        r_squared,
        ridge_used: !well_posed,
    })
}

impl VarFit {
    /// One-step-ahead forecasts of columns `L .. T` of `x`.
    pub fn forecast(&self, x: &Matrix) -> Result<Matrix> {
        let n = self.model.n();
        let lag = self.model.lag_order();
        if x.rows() != n || x.cols() <= lag {
            return Err(crate::error::shape(format!(
                "VAR fit for {n} channels and lag {lag} cannot forecast a {:?} series",
                x.shape()
            )));
        }
        let mut out = Matrix::zeros(n, x.cols() - lag);
        for t in lag..x.cols() {
            for j in 0..n {
                let mut v = self.intercept[j];
                for (tau, a) in self.model.coeffs.iter().enumerate() {
                    for c in 0..n {
                        v += a[(j, c)] * x[(c, t - tau - 1)];
                    }
                }
                out[(j, t - lag)] = v;
            }
        }
        Ok(out)
    }
}

/// Predictability of the fit's one-step forecasts of `x`.
pub fn var_predictability(fit: &VarFit, x: &Matrix) -> Result<Predictability> {
    let forecast = fit.forecast(x)?;
    predictability(&forecast, &x.slice_cols(fit.model.lag_order(), x.cols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_radius;
    use crate::rng;
    use crate::synth::{simulate, PlantedDesign, SynthSpec};
    use alloc::vec;
    use rand::Rng;

    fn random_stable(n: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        let mut a = Matrix::from_vec(n, n, (0..n * n).map(|_| r.random_range(-0.5..0.5)).collect()).unwrap();
        let rho = spectral_radius(&a);
        if rho > 0.8 {
            a = a.scale(0.8 / rho);
        }
        a
    }

    fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
    }

    /// Strongly self-coupled channels with weak sparse cross-coupling.
    fn persistent_design() -> PlantedDesign {
        PlantedDesign {
            diagonal: (0.85, 0.95),
            off_diagonal: (0.05, 0.15),
            planted: vec![],
            max_radius: 0.97,
            ..Default::default()
        }
    }

    #[test]
    fn recovers_coefficients_from_simulation() {
        for seed in 0..20 {
            let a = persistent_design().build(seed).unwrap().0.coeffs[0].clone();
            let model = VarModel {
                coeffs: vec![a.clone()],
                noise_sigma: 0.1,
            };
            let x = simulate(&model, 2000, 100, &mut rng::seeded(seed + 100)).unwrap();
            let fit = fit_var(&x, 1).unwrap();
            let err = rel_frobenius(&fit.model.coeffs[0], &a);
            assert!(err < 0.05, "seed {seed}: relative error {err}");
            assert!(!fit.ridge_used);
        }
    }

    #[test]
    fn noiseless_system_is_recovered_exactly() {
        let n = 4;
        let a = Matrix::from_rows(&[
            [0.9, 0.1, 0.0, 0.0],
            [0.0, 0.7, 0.3, 0.0],
            [0.0, 0.0, 0.5, -0.4],
            [0.4, 0.0, 0.0, -0.6],
        ])
        .unwrap();
        // a rotation-rich start keeps the regressors full rank
        let mut x = Matrix::zeros(n, 40);
        x.set_col(0, &[1.0, -2.0, 0.5, 3.0]);
        for t in 1..40 {
            let next = a.matmul(&Matrix::column(x.col(t - 1))).unwrap();
            x.set_col(t, next.data());
        }
        let fit = fit_var(&x, 1).unwrap();
        assert!(fit.model.coeffs[0].max_abs_diff(&a) < 1e-8);
        assert!(fit.intercept.iter().all(|c| c.abs() < 1e-8));
        let p = var_predictability(&fit, &x).unwrap();
        assert!(p.per_roi.iter().all(|v| (v.unwrap() - 1.0).abs() < 1e-6));
    }

    #[test]
    fn white_noise_has_no_structure() {
        let n = 3;
        let t = 3000;
        let model = VarModel {
            coeffs: vec![Matrix::zeros(n, n)],
            noise_sigma: 1.0,
        };
        let x = simulate(&model, t, 10, &mut rng::seeded(3)).unwrap();
        let fit = fit_var(&x, 1).unwrap();
        // standard error of each slope: sqrt(σ̂² · (Z_cᵀ Z_c)⁻¹_kk)
        let mut z = lagged(&x, 1);
        let m = column_means(&z);
        center(&mut z, &m);
        let inv = solve_spd(&z.t_matmul(&z).unwrap(), &Matrix::identity(n)).unwrap();
        for j in 0..n {
            for k in 0..n {
                let se = libm::sqrt(fit.residual_variance[j] * inv[(k, k)]);
                assert!(fit.model.coeffs[0][(j, k)].abs() < 3.0 * se);
            }
            assert!(fit.r_squared[j] < 0.01);
        }
        let p = var_predictability(&fit, &x).unwrap();
        assert!(p.per_roi.iter().all(|v| v.unwrap().abs() < 3.0 / libm::sqrt(t as f64)));
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let a = random_stable(5, 4);
        let model = VarModel {
            coeffs: vec![a.clone(), a.scale(-0.3)],
            noise_sigma: 0.5,
        };
        let mut model = model;
        model.rescale_to(0.9);
        let x = simulate(&model, 400, 50, &mut rng::seeded(5)).unwrap();
        let fit = fit_var(&x, 2).unwrap();
        let forecast = fit.forecast(&x).unwrap();
        let resid = x.slice_cols(2, x.cols()).sub(&forecast).unwrap();
        let z = lagged(&x, 2);
        let cross = resid.matmul(&z).unwrap();
        let scale = resid.frobenius_norm() * z.frobenius_norm();
        assert!(cross.data().iter().all(|v| v.abs() / scale < 1e-8));
        assert!(resid.row(0).iter().sum::<f64>().abs() < 1e-8 * scale);
    }

    #[test]
    fn predictability_equals_one_minus_residual_ratio() {
        let spec = SynthSpec::planted(6).unwrap();
        let x = spec.simulate_subject(0).unwrap().x;
        let fit = fit_var(&x, 1).unwrap();
        let p = var_predictability(&fit, &x).unwrap();
        for j in 0..x.rows() {
            let want = 1.0 - fit.residual_variance[j] / p.target_variance[j];
            assert!((p.per_roi[j].unwrap() - want).abs() < 1e-10);
            assert!((fit.r_squared[j] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn planted_targets_are_most_predictable_in_class_one() {
        let design = PlantedDesign::default();
        let spec = SynthSpec::from_design(&design, 2000, 1, 7).unwrap();
        let x = spec.simulate_subject(1).unwrap().x;
        let fit = fit_var(&x, 1).unwrap();
        let p = var_predictability(&fit, &x).unwrap();
        let top = crate::metrics::rank_rois(&p, 2);
        let mut top = top;
        top.sort();
        assert_eq!(top, design.targets());
    }

    #[test]
    fn rank_deficient_input_uses_ridge() {
        let mut r = rng::seeded(8);
        let mut x = Matrix::zeros(3, 60);
        for t in 0..60 {
            let v: f64 = r.random_range(-1.0..1.0);
            x.set_col(t, &[v, 2.0 * v, r.random_range(-1.0..1.0)]);
        }
        let fit = fit_var(&x, 1).unwrap();
        assert!(fit.ridge_used);
        assert!(fit.model.coeffs[0].is_finite());
    }

    #[test]
    fn too_short_series_is_rejected() {
        assert!(matches!(fit_var(&Matrix::zeros(10, 20), 1), Err(Error::Data(_))));
    }
}
