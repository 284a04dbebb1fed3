//! Naive discrete Fourier transform of real sequences.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{shape, Result};
use crate::fmath;

/// Full-length spectrum of a real sequence: `bins[k] = (re, im)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub bins: Vec<(f64, f64)>,
}

impl ComplexSpectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// `|self[k] - other[k]|` for every bin.
    pub fn abs_diff(&self, other: &ComplexSpectrum) -> Vec<f64> {
        self.bins
            .iter()
            .zip(&other.bins)
            .map(|(a, b)| fmath::hypot(a.0 - b.0, a.1 - b.1))
            .collect()
    }
}

/// `cos` and `sin` of `2π m / n` for `m in 0..n`. Products `k·t` are reduced
/// mod `n` before lookup so every bin uses exactly the same twiddles.
#[derive(Debug, Clone)]
pub(crate) struct Twiddles {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Twiddles {
    pub(crate) fn new(n: usize) -> Self {
        let (sin, cos) = (0..n)
            .map(|m| fmath::sin_cos(2.0 * PI * m as f64 / n as f64))
            .unzip();
        Self { cos, sin }
    }

    #[inline]
    pub(crate) fn len(&self) -> usize {
        self.cos.len()
    }

    #[inline]
    pub(crate) fn at(&self, k: usize, t: usize) -> (f64, f64) {
        let m = (k * t) % self.cos.len();
        (self.cos[m], self.sin[m])
    }

    /// Spectrum of `x`, which must have the table's length.
    pub(crate) fn transform(&self, x: &[f64]) -> ComplexSpectrum {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        let bins = (0..n)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    let (c, s) = self.at(k, t);
                    re += v * c;
                    im -= v * s;
                }
                (re, im)
            })
            .collect();
        ComplexSpectrum { bins }
    }
}

/// `X(k) = Σ_t x(t)·exp(−2πi·k·t/T)` for `k = 0..T`.
pub fn dft(x: &[f64]) -> Result<ComplexSpectrum> {
    if x.is_empty() {
        return Err(shape("dft of an empty sequence"));
    }
    Ok(Twiddles::new(x.len()).transform(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Definition sum with the angle computed directly from k·t, no table.
    fn definition(x: &[f64]) -> Vec<(f64, f64)> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|k| {
                x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                    let ang = -2.0 * PI * (k as f64) * (t as f64) / n;
                    (re + v * libm::cos(ang), im + v * libm::sin(ang))
                })
            })
            .collect()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn constant_sequence_is_pure_dc() {
        let s = dft(&[2.5; 6]).unwrap();
        assert!((s.bins[0].0 - 15.0).abs() < 1e-12 && s.bins[0].1.abs() < 1e-12);
        for b in &s.bins[1..] {
            assert!(b.0.abs() < 1e-12 && b.1.abs() < 1e-12);
        }
    }

    #[test]
    fn nyquist_tone() {
        let s = dft(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        for (k, b) in s.bins.iter().enumerate() {
            let want = if k == 2 { 4.0 } else { 0.0 };
            assert!((b.0 - want).abs() < 1e-12 && b.1.abs() < 1e-12, "bin {k}: {b:?}");
        }
    }

    #[test]
    fn matches_definition_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(&mut rng, 8);
        let s = dft(&x).unwrap();
        for (a, b) in s.bins.iter().zip(definition(&x)) {
            assert!((a.0 - b.0).abs() < 1e-10 && (a.1 - b.1).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_is_shape_error() {
        assert!(dft(&[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn linear(seed in 0u64..500, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..24);
            let x = random(&mut rng, n);
            let y = random(&mut rng, n);
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let (sx, sy, sc) = (dft(&x).unwrap(), dft(&y).unwrap(), dft(&combo).unwrap());
            for k in 0..n {
                let re = a * sx.bins[k].0 + b * sy.bins[k].0;
                let im = a * sx.bins[k].1 + b * sy.bins[k].1;
                proptest::prop_assert!((sc.bins[k].0 - re).abs() < 1e-10);
                proptest::prop_assert!((sc.bins[k].1 - im).abs() < 1e-10);
            }
        }

        #[test]
        fn conjugate_symmetric(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..32);
            let s = dft(&random(&mut rng, n)).unwrap();
            for k in 1..n {
                let (a, b) = (s.bins[k], s.bins[n - k]);
                proptest::prop_assert!((a.0 - b.0).abs() < 1e-10 && (a.1 + b.1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn abs_diff_of_unit_impulse_is_flat() {
        let a = dft(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = dft(&vec![0.0; 4]).unwrap();
        assert_eq!(a.abs_diff(&b), vec![1.0; 4]);
    }
}
