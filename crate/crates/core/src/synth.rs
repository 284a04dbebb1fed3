//! Two-class synthetic datasets from linear VAR processes with planted,
//! class-specific causal edges.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{generic_labels, Dataset, Label, RoiTimeSeries};
use crate::error::{shape, Error, Result};
use crate::fmath;
use crate::linalg::{spectral_radius, Matrix};
use crate::rng;

/// `x(t) = Σ_τ A_τ x(t−τ) + ε(t)` with `ε ~ N(0, σ² I)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VarModel {
    /// `A_1 .. A_L`, each `N x N`.
    pub coeffs: Vec<Matrix>,
    pub noise_sigma: f64,
}

impl VarModel {
    pub fn n(&self) -> usize {
        self.coeffs.first().map_or(0, Matrix::rows)
    }

    pub fn lag_order(&self) -> usize {
        self.coeffs.len()
    }

    /// The `NL x NL` companion matrix of the recursion.
    pub fn companion(&self) -> Matrix {
        let (n, l) = (self.n(), self.lag_order());
        let mut c = Matrix::zeros(n * l, n * l);
        for (tau, a) in self.coeffs.iter().enumerate() {
            for r in 0..n {
                for k in 0..n {
                    c[(r, tau * n + k)] = a[(r, k)];
                }
            }
        }
        for i in n..n * l {
            c[(i, i - n)] = 1.0;
        }
        c
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.companion())
    }

    /// Checks shapes, finiteness and stationarity.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Config("VAR model needs at least one lag and one channel".into()));
        }
        if self.coeffs.iter().any(|a| a.shape() != (n, n)) {
            return Err(shape("VAR coefficient matrices must all be N x N"));
        }
        if self.coeffs.iter().any(|a| !a.is_finite()) || !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::NonFinite("VAR coefficients or noise scale".into()));
        }
        let radius = self.spectral_radius();
        if radius >= 1.0 {
            return Err(Error::NonStationary { radius });
        }
        Ok(())
    }

    /// Scales `A_τ` by `s^τ`, which multiplies every companion eigenvalue by
    /// `s`, so that the spectral radius is at most `max_radius`.
    pub fn rescale_to(&mut self, max_radius: f64) {
        let radius = self.spectral_radius();
        if radius > max_radius {
            let s = max_radius / radius;
            for (tau, a) in self.coeffs.iter_mut().enumerate() {
                *a = a.scale(fmath::powi(s, tau as i32 + 1));
            }
        }
    }
}

/// Runs the recursion from a zero state, discards `burn_in` samples and
/// returns the next `t_len` as an `N x t_len` matrix.
pub fn simulate<R: Rng>(model: &VarModel, t_len: usize, burn_in: usize, rng: &mut R) -> Result<Matrix> {
    model.validate()?;
    let (n, l) = (model.n(), model.lag_order());
    if burn_in < 10 * l {
        return Err(Error::Config(format!("burn-in {burn_in} is shorter than 10 x lag order {l}")));
    }
    let noise = Normal::new(0.0, model.noise_sigma).map_err(|e| Error::Config(format!("noise scale: {e}")))?;
    let total = burn_in + t_len;
    // history[t] is x(t); the first l states are the zero initial condition
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(total + l);
    history.resize(l, alloc::vec![0.0; n]);
    for _ in 0..total {
        let t = history.len();
        let mut x: Vec<f64> = (0..n).map(|_| noise.sample(rng)).collect();
        for (tau, a) in model.coeffs.iter().enumerate() {
            let past = &history[t - tau - 1];
            for (r, xr) in x.iter_mut().enumerate() {
                *xr += a.row(r).iter().zip(past).map(|(c, v)| c * v).sum::<f64>();
            }
        }
        history.push(x);
    }
    let mut out = Matrix::zeros(n, t_len);
    for (c, state) in history[l + burn_in..].iter().enumerate() {
        out.set_col(c, state);
    }
    Ok(out)
}

/// Generator of the default class pair: a sparse stable base process for
/// class 0, and the same process plus directed edges into a few target
/// channels for class 1.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PlantedDesign {
    pub n: usize,
    pub noise_sigma: f64,
    /// Self-coupling drawn uniformly from this range.
    pub diagonal: (f64, f64),
    /// Probability that an off-diagonal entry is non-zero.
    pub density: f64,
    /// Magnitude range of non-zero off-diagonal entries; signs are random.
    pub off_diagonal: (f64, f64),
    /// `(target, sources)`: class 1 adds `edge_weight` on every
    /// `source → target` coefficient. Targets get no other incoming edges,
    /// so in class 0 only their own past predicts them.
    pub planted: Vec<(usize, Vec<usize>)>,
    pub edge_weight: f64,
    pub max_radius: f64,
}

impl Default for PlantedDesign {
    fn default() -> Self {
        Self {
            n: 10,
            noise_sigma: 0.5,
            diagonal: (0.2, 0.4),
            density: 0.1,
            off_diagonal: (0.1, 0.3),
            planted: alloc::vec![(0, alloc::vec![2, 3, 4]), (1, alloc::vec![5, 6, 7])],
            edge_weight: 0.4,
            max_radius: 0.95,
        }
    }
}

impl PlantedDesign {
    pub fn targets(&self) -> Vec<usize> {
        self.planted.iter().map(|(t, _)| *t).collect()
    }

    /// Builds the lag-1 class models from `seed`.
    pub fn build(&self, seed: u64) -> Result<(VarModel, VarModel)> {
        let n = self.n;
        if n == 0 || !(0.0..=1.0).contains(&self.density) || !(self.max_radius > 0.0 && self.max_radius < 1.0) {
            return Err(Error::Config(format!("invalid planted design: {self:?}")));
        }
        for (t, sources) in &self.planted {
            if *t >= n || sources.iter().any(|s| *s >= n || s == t) {
                return Err(Error::Config(format!("planted edge into {t} from {sources:?} is out of range")));
            }
        }
        let mut rng = rng::seeded(seed);
        let mut a = Matrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                a[(r, c)] = if r == c {
                    rng.random_range(self.diagonal.0..=self.diagonal.1)
                } else if rng.random_bool(self.density) {
                    let m = rng.random_range(self.off_diagonal.0..=self.off_diagonal.1);
                    if rng.random_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                } else {
                    0.0
                };
            }
        }
        for (t, _) in &self.planted {
            for c in (0..n).filter(|c| c != t) {
                a[(*t, c)] = 0.0;
            }
        }
        let mut class0 = VarModel {
            coeffs: alloc::vec![a],
            noise_sigma: self.noise_sigma,
        };
        class0.rescale_to(self.max_radius);
        let mut class1 = class0.clone();
        for (t, sources) in &self.planted {
            for &s in sources {
                class1.coeffs[0][(*t, s)] += self.edge_weight;
            }
        }
        class1.rescale_to(self.max_radius);
        Ok((class0, class1))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub t_len: usize,
    pub subjects_per_class: usize,
    pub burn_in: usize,
    pub class0: VarModel,
    pub class1: VarModel,
    pub seed: u64,
}

impl SynthSpec {
    /// The default planted design: 10 channels, 150 samples, 10 subjects per
    /// class, with class-1 edges into channels 0 and 1.
    pub fn planted(seed: u64) -> Result<Self> {
        Self::from_design(&PlantedDesign::default(), 150, 10, seed)
    }

    pub fn from_design(design: &PlantedDesign, t_len: usize, subjects_per_class: usize, seed: u64) -> Result<Self> {
        let (class0, class1) = design.build(rng::derive_seed(seed, u64::MAX))?;
        Ok(Self {
            t_len,
            subjects_per_class,
            burn_in: 100,
            class0,
            class1,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.class0.n()
    }

    pub fn validate(&self) -> Result<()> {
        self.class0.validate()?;
        self.class1.validate()?;
        if self.class0.n() != self.class1.n() || self.class0.lag_order() != self.class1.lag_order() {
            return Err(Error::Config("class models must share channel count and lag order".into()));
        }
        if self.t_len == 0 || self.subjects_per_class == 0 {
            return Err(Error::Config("t_len and subjects_per_class must be positive".into()));
        }
        Ok(())
    }

    /// Model and label of subject `i` (class 0 first).
    pub fn subject_class(&self, i: usize) -> (&VarModel, Label) {
        if i < self.subjects_per_class {
            (&self.class0, Label::Control)
        } else {
            (&self.class1, Label::Asd)
        }
    }

    pub fn subject_id(i: usize) -> alloc::string::String {
        format!("synth-{i:04}")
    }

    /// Simulates subject `i` from its own seed, independent of every other
    /// subject.
    pub fn simulate_subject(&self, i: usize) -> Result<RoiTimeSeries> {
        let (model, label) = self.subject_class(i);
        let x = simulate(model, self.t_len, self.burn_in, &mut rng::stream(self.seed, i as u64))?;
        Ok(RoiTimeSeries {
            subject_id: Self::subject_id(i),
            label,
            mean_fd: Some(0.0),
            x,
        })
    }
}

/// `subjects_per_class` simulations of each class, class 0 first.
pub fn make_dataset(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let subjects = (0..2 * spec.subjects_per_class)
        .map(|i| spec.simulate_subject(i))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(subjects, generic_labels(spec.n()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ar1(a: f64, sigma: f64) -> VarModel {
        VarModel {
            coeffs: vec![Matrix::scalar(a)],
            noise_sigma: sigma,
        }
    }

    fn lag1_autocorr(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        let cov = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>();
        cov / var
    }

    #[test]
    fn zero_coefficients_give_white_noise() {
        let model = VarModel {
            coeffs: vec![Matrix::zeros(3, 3)],
            noise_sigma: 1.0,
        };
        let t = 4000;
        let x = simulate(&model, t, 10, &mut rng::seeded(1)).unwrap();
        for r in 0..3 {
            assert!(lag1_autocorr(x.row(r)).abs() < 3.0 / fmath::sqrt(t as f64));
        }
    }

    #[test]
    fn ar1_variance_matches_closed_form() {
        let x = simulate(&ar1(0.9, 1.0), 5000, 100, &mut rng::seeded(2)).unwrap();
        let v = x.row(0);
        let m = v.iter().sum::<f64>() / 5000.0;
        let var = v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 4999.0;
        let want = 1.0 / (1.0 - 0.81);
        assert!((var - want).abs() / want < 0.15, "variance {var}");
    }

    #[test]
    fn simulation_is_deterministic() {
        let (c0, _) = PlantedDesign::default().build(5).unwrap();
        let a = simulate(&c0, 50, 20, &mut rng::seeded(9)).unwrap();
        let b = simulate(&c0, 50, 20, &mut rng::seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(matches!(
            simulate(&ar1(1.2, 1.0), 10, 10, &mut rng::seeded(0)),
            Err(Error::NonStationary { .. })
        ));
        assert!(matches!(simulate(&ar1(0.5, 1.0), 10, 5, &mut rng::seeded(0)), Err(Error::Config(_))));
    }

    #[test]
    fn companion_of_two_lags() {
        let m = VarModel {
            coeffs: vec![Matrix::scalar(0.5), Matrix::scalar(0.2)],
            noise_sigma: 1.0,
        };
        assert_eq!(m.companion(), Matrix::from_rows(&[[0.5, 0.2], [1.0, 0.0]]).unwrap());
        // roots of z² − 0.5 z − 0.2
        let want = (0.5 + fmath::sqrt(0.25 + 0.8)) / 2.0;
        assert!((m.spectral_radius() - want).abs() < 1e-9);
        let mut scaled = m.clone();
        scaled.rescale_to(0.5);
        assert!((scaled.spectral_radius() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn planted_design_structure() {
        let spec = SynthSpec::planted(3).unwrap();
        spec.validate().unwrap();
        assert!(spec.class0.spectral_radius() <= 0.95 + 1e-9);
        assert!(spec.class1.spectral_radius() <= 0.95 + 1e-9);
        let diff = spec.class1.coeffs[0].sub(&spec.class0.coeffs[0]).unwrap();
        for r in 2..10 {
            assert!(diff.row(r).iter().all(|v| v.abs() < 0.2), "row {r} should barely change");
        }
        assert!(diff[(0, 2)] > 0.2 && diff[(1, 5)] > 0.2);
    }

    #[test]
    fn dataset_layout_and_determinism() {
        let spec = SynthSpec::planted(4).unwrap();
        let d = make_dataset(&spec).unwrap();
        assert_eq!(d.len(), 20);
        assert_eq!(d.labels().iter().filter(|l| **l == Label::Asd).count(), 10);
        assert_eq!(d.subjects[0].x.shape(), (10, 150));
        assert_eq!(d, make_dataset(&spec).unwrap());
        assert_eq!(d.subjects[13], spec.simulate_subject(13).unwrap());
    }

    /// Sum of squared one-step residuals of `x` under `model`.
    fn residual_ss(model: &VarModel, x: &Matrix) -> f64 {
        let a = &model.coeffs[0];
        let mut ss = 0.0;
        for t in 1..x.cols() {
            let prev = x.col(t - 1);
            for r in 0..x.rows() {
                let pred: f64 = a.row(r).iter().zip(&prev).map(|(c, v)| c * v).sum();
                ss += (x[(r, t)] - pred) * (x[(r, t)] - pred);
            }
        }
        ss
    }

    /// Accuracy of the Gaussian likelihood-ratio rule. Both classes share the
    /// noise scale, so the rule picks the model with smaller residuals.
    fn likelihood_ratio_accuracy(spec: &SynthSpec) -> f64 {
        let d = make_dataset(spec).unwrap();
        let correct = d
            .subjects
            .iter()
            .filter(|s| {
                let guess = residual_ss(&spec.class1, &s.x) < residual_ss(&spec.class0, &s.x);
                guess == (s.label == Label::Asd)
            })
            .count();
        correct as f64 / d.len() as f64
    }

    #[test]
    fn default_classes_are_separable_by_likelihood_ratio() {
        let design = PlantedDesign::default();
        let spec = SynthSpec::from_design(&design, 150, 100, 11).unwrap();
        assert!(likelihood_ratio_accuracy(&spec) >= 0.95);
    }

    #[test]
    fn separability_grows_with_edge_weight() {
        let acc: Vec<f64> = [0.02, 0.06, 0.2]
            .iter()
            .map(|&w| {
                let design = PlantedDesign {
                    edge_weight: w,
                    ..Default::default()
                };
                likelihood_ratio_accuracy(&SynthSpec::from_design(&design, 150, 100, 12).unwrap())
            })
            .collect();
        assert!(acc[0] <= acc[1] && acc[1] <= acc[2], "{acc:?}");
        assert!(acc[0] < acc[2]);
    }
}
