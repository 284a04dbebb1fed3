//! Frequency-domain forecast loss, binary cross-entropy, and their scaled sum.

use crate::autodiff::spectrum_differences;
use crate::error::{shape, Error, Result};
use crate::fmath;
use crate::fourier::Twiddles;
use crate::linalg::Matrix;
use alloc::format;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

pub(crate) fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Loss components of a batch. `total == bce + alpha * freq`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub bce: f64,
    pub freq: f64,
    pub total: f64,
    pub alpha: f64,
}

impl LossBreakdown {
    pub fn new(bce: f64, freq: f64, alpha: f64) -> Self {
        Self {
            bce,
            freq,
            total: combine(bce, freq, alpha),
            alpha,
        }
    }
}

/// `bce + alpha·freq`; with `alpha == 0` the result is `bce` bit for bit.
pub(crate) fn combine(bce: f64, freq: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        bce
    } else {
        bce + alpha * freq
    }
}

/// Sum over channels and DFT bins of the complex modulus of the spectrum
/// difference between each row of `x_hat` and of `x`.
pub fn freq_loss(x_hat: &Matrix, x: &Matrix) -> Result<f64> {
    if x_hat.shape() != x.shape() {
        return Err(shape(format!(
            "forecast is {}x{}, target is {}x{}",
            x_hat.rows(),
            x_hat.cols(),
            x.rows(),
            x.cols()
        )));
    }
    if x.cols() == 0 {
        return Err(shape("frequency loss over zero time points"));
    }
    Ok(spectrum_differences(&Twiddles::new(x.cols()), x_hat, x).0)
}

/// `−(y·ln p + (1−y)·ln(1−p))` with `p` clamped away from 0 and 1.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = clamp_probability(p);
    -(y * fmath::ln(p) + (1.0 - y) * fmath::ln(1.0 - p))
}

/// Sums per-subject BCE and frequency loss over the batch; the total is
/// `Σ bce + alpha·Σ freq`.
pub fn total_loss(batch: &[(f64, f64, &Matrix, &Matrix)], alpha: f64) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Config(format!("alpha must be non-negative, got {alpha}")));
    }
    let mut b = 0.0;
    let mut f = 0.0;
    for &(p, y, x_hat, x) in batch {
        b += bce(p, y);
        f += freq_loss(x_hat, x)?;
    }
    Ok(LossBreakdown::new(b, f, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use core::f64::consts::{LN_2, PI};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn oracle(x_hat: &Matrix, x: &Matrix) -> f64 {
        let n = x.cols() as f64;
        let mut total = 0.0;
        for ch in 0..x.rows() {
            for k in 0..x.cols() {
                let (mut re, mut im) = (0.0, 0.0);
                for t in 0..x.cols() {
                    let ang = -2.0 * PI * (k * t) as f64 / n;
                    let d = x_hat[(ch, t)] - x[(ch, t)];
                    re += d * libm::cos(ang);
                    im += d * libm::sin(ang);
                }
                total += libm::sqrt(re * re + im * im);
            }
        }
        total
    }

    #[test]
    fn freq_loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 3, 9);
        assert_eq!(freq_loss(&x, &x).unwrap(), 0.0);
        let imp = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0]]).unwrap();
        assert!((freq_loss(&Matrix::zeros(1, 4), &imp).unwrap() - 4.0).abs() < 1e-12);
        let y = random(&mut rng, 3, 9);
        assert!((freq_loss(&y, &x).unwrap() - oracle(&y, &x)).abs() < 1e-9);
        assert!(freq_loss(&Matrix::zeros(2, 3), &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn bce_examples() {
        assert!((bce(0.5, 1.0) - LN_2).abs() < 1e-15);
        assert!((bce(0.5, 0.0) - LN_2).abs() < 1e-15);
        assert!((bce(1.0 - 1e-7, 1.0) - 1e-7).abs() < 1e-12);
        assert!((bce(0.9, 0.0) - 2.302585092994046).abs() < 1e-12);
        assert!(bce(1.0, 0.0).is_finite() && bce(0.0, 1.0).is_finite());
    }

    #[test]
    fn total_loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (a, b) = (random(&mut rng, 2, 5), random(&mut rng, 2, 5));
        let zero = total_loss(&[(0.3, 1.0, &a, &b)], 0.0).unwrap();
        assert_eq!(zero.total, zero.bce);
        let one = total_loss(&[(0.5, 1.0, &a, &a)], 1e-4).unwrap();
        assert!((one.total - LN_2).abs() < 1e-15);
        let s1 = total_loss(&[(0.3, 1.0, &a, &b)], 0.1).unwrap();
        let s2 = total_loss(&[(0.8, 0.0, &b, &a)], 0.1).unwrap();
        let both = total_loss(&[(0.3, 1.0, &a, &b), (0.8, 0.0, &b, &a)], 0.1).unwrap();
        assert!((both.total - (s1.total + s2.total)).abs() < 1e-12);
        assert!(total_loss(&[], 0.1).is_err());
        assert!(total_loss(&[(0.3, 1.0, &a, &b)], -1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn freq_loss_is_a_metric(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..4);
            let t = rng.random_range(1..12);
            let (a, b, c) = (random(&mut rng, n, t), random(&mut rng, n, t), random(&mut rng, n, t));
            let ab = freq_loss(&a, &b).unwrap();
            proptest::prop_assert!(ab >= 0.0);
            proptest::prop_assert!((ab - freq_loss(&b, &a).unwrap()).abs() < 1e-12);
            proptest::prop_assert!(ab <= freq_loss(&a, &c).unwrap() + freq_loss(&c, &b).unwrap() + 1e-9);
        }

        #[test]
        fn total_monotone_in_alpha(seed in 0u64..300, a1 in 0.0f64..1.0, a2 in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = (random(&mut rng, 2, 6), random(&mut rng, 2, 6));
            let batch: Vec<_> = [(0.4, 1.0, &x, &y)].to_vec();
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let l = total_loss(&batch, lo).unwrap();
            let h = total_loss(&batch, hi).unwrap();
            proptest::prop_assert!(l.total <= h.total);
            proptest::prop_assert!((h.total - (h.bce + hi * h.freq)).abs() < 1e-12);
        }
    }
}
