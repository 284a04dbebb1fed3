//! Central-difference verification of analytic gradients.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{lag_split, LagPair};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{batch_loss, loss_and_grad, ModelConfig, NetworkParams};
use crate::rng;

/// Finite-difference step for whole-network checks. Smaller steps lose more
/// to roundoff in the long recurrences than they gain in truncation error.
pub const NETWORK_STEP: f64 = 1e-3;

/// Compares `grad(θ)` against `(f(θ+ε·e_j) − f(θ−ε·e_j)) / 2ε` for every
/// coordinate `j` and returns the largest relative error, where the
/// denominator is `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F, G>(f: F, grad: G, theta: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let errors = grad_check_each(f, grad, theta, eps)?;
    Ok(errors.into_iter().fold(0.0, f64::max))
}

/// Per-coordinate relative errors; same contract as [`grad_check`].
pub fn grad_check_each<F, G>(f: F, grad: G, theta: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let f0 = f(theta);
    if !f0.is_finite() {
        return Err(Error::NonFinite(format!("objective at θ is {f0}")));
    }
    let analytic = grad(theta);
    if analytic.len() != theta.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            theta.len()
        )));
    }
    if let Some(j) = analytic.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("analytic gradient at coordinate {j}")));
    }
    let mut probe = theta.to_vec();
    let mut errors = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let orig = probe[j];
        probe[j] = orig + eps;
        let up = f(&probe);
        probe[j] = orig - eps;
        let down = f(&probe);
        probe[j] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {j} ± ε")));
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[j];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        errors.push((a - numeric).abs() / denom);
    }
    Ok(errors)
}

/// Checks the gradient of the total loss of a randomly initialized network
/// on a two-subject batch (labels 0 and 1) of uniform noise with `t_len`
/// samples, over every parameter. Returns the largest relative error.
pub fn check_network(config: ModelConfig, t_len: usize, alpha: f64, seed: u64) -> Result<f64> {
    let mut rng = rng::seeded(seed);
    let params = NetworkParams::init(config, &mut rng)?;
    let n = config.n_channels;
    let pairs = (0..2)
        .map(|_| {
            let x = Matrix::from_vec(n, t_len, (0..n * t_len).map(|_| rng.random_range(-1.0..1.0)).collect())?;
            lag_split(&x, config.lag)
        })
        .collect::<Result<Vec<LagPair>>>()?;
    let batch: Vec<(&LagPair, f64)> = pairs.iter().zip([0.0, 1.0]).collect();
    batch_loss(&params, &batch, alpha)?;
    let with = |theta: &[f64]| {
        let mut p = params.clone();
        p.set_flat(theta);
        p
    };
    let f = |theta: &[f64]| batch_loss(&with(theta), &batch, alpha).map_or(f64::NAN, |l| l.total);
    let g = |theta: &[f64]| {
        loss_and_grad(&with(theta), &batch, alpha).map_or_else(|_| alloc::vec![f64::NAN; theta.len()], |(_, g)| g.to_flat())
    };
    grad_check(f, g, &params.to_flat(), NETWORK_STEP)
}
