//! Deterministic mini-batch training.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::loss::{combine, LossBreakdown};
use crate::model::{forward, loss_and_grad, ModelConfig, NetworkParams};
use crate::optim::{adam_step, clip_global_norm, global_norm, lr_schedule, AdamState, TrainConfig};
use crate::rng;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

/// Per-epoch summary. Loss components are means per subject.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub bce: f64,
    pub freq: f64,
    pub total: f64,
    pub val_accuracy: Option<f64>,
    /// Optimizer steps in this epoch whose gradient was clipped.
    pub clipped: usize,
}

/// One optimizer step. Loss components are sums over the batch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepLog {
    pub epoch: usize,
    pub batch: usize,
    pub subjects: usize,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub epochs: Vec<EpochLog>,
    pub steps: Vec<StepLog>,
}

/// Splits a subject order into batches of at most `batch_size` subjects
/// sharing a series length. Groups appear in order of their first member,
/// and members keep their relative order.
pub fn make_batches(order: &[usize], lengths: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
    for (pos, &i) in order.iter().enumerate() {
        groups.entry(lengths[i]).or_insert_with(|| (pos, Vec::new())).1.push(i);
    }
    let mut groups: Vec<(usize, Vec<usize>)> = groups.into_values().collect();
    groups.sort_by_key(|g| g.0);
    groups
        .into_iter()
        .flat_map(|(_, members)| members.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect::<Vec<_>>())
        .collect()
}

/// Class-1 probability for every sample.
pub fn predict(params: &NetworkParams, samples: &[Sample]) -> Result<Vec<f64>> {
    samples.iter().map(|s| forward(&s.pair, params).map(|(_, p)| p)).collect()
}

/// Accuracy at threshold 0.5.
pub fn accuracy(params: &NetworkParams, samples: &[Sample]) -> Result<f64> {
    let probs = predict(params, samples)?;
    let correct = probs
        .iter()
        .zip(samples)
        .filter(|(p, s)| (**p >= 0.5) == (s.label.as_f64() == 1.0))
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Initializes parameters from `cfg.seed` and trains on `samples`.
/// Validation accuracy is logged each epoch when `val` is non-empty.
pub fn train(samples: &[Sample], val: &[Sample], model: ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let init = NetworkParams::init(model, &mut rng::stream(cfg.seed, INIT_STREAM))?;
    train_from(init, samples, val, cfg, &mut |_| {})
}

/// Trains starting from `params`, calling `on_epoch` after every epoch.
pub fn train_from(
    mut params: NetworkParams,
    samples: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("no training subjects".into()));
    }
    let lengths: Vec<usize> = samples.iter().map(|s| s.pair.input.cols()).collect();
    let mut shuffle_rng = rng::stream(cfg.seed, SHUFFLE_STREAM);
    let mut adam = AdamState::for_network(&params);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut steps = Vec::new();

    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        order.shuffle(&mut shuffle_rng);
        let (mut bce, mut freq, mut clipped) = (0.0, 0.0, 0);
        for (b, members) in make_batches(&order, &lengths, cfg.batch_size).into_iter().enumerate() {
            let batch: Vec<_> = members
                .iter()
                .map(|&i| (&samples[i].pair, samples[i].label.as_f64()))
                .collect();
            let (loss, mut grads) = loss_and_grad(&params, &batch, cfg.alpha)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {b}")));
            }
            let grad_norm = global_norm(grads.tensors());
            let was_clipped = clip_global_norm(&mut grads, cfg.clip_norm).is_some();
            if was_clipped {
                clipped += 1;
                log::debug!("epoch {epoch} batch {b}: gradient norm {grad_norm:.3} clipped to {}", cfg.clip_norm);
            }
            adam_step(&mut params, &grads, &mut adam, lr, cfg)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
            bce += loss.bce;
            freq += loss.freq;
            steps.push(StepLog {
                epoch,
                batch: b,
                subjects: members.len(),
                loss,
                grad_norm,
                clipped: was_clipped,
            });
        }
        let n = samples.len() as f64;
        let (bce, freq) = (bce / n, freq / n);
        let val_accuracy = if val.is_empty() {
            None
        } else {
            Some(accuracy(&params, val)?)
        };
        let log = EpochLog {
            epoch,
            lr,
            bce,
            freq,
            total: combine(bce, freq, cfg.alpha),
            val_accuracy,
            clipped,
        };
        on_epoch(&log);
        epochs.push(log);
    }
    Ok(TrainOutcome { params, epochs, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{lag_split, normalize, Label};
    use crate::linalg::Matrix;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n_subjects: usize, n: usize, t: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_subjects)
            .map(|i| {
                let x = Matrix::from_vec(n, t, (0..n * t).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
                let (z, _) = normalize(&x);
                Sample {
                    subject_id: format!("s{i}"),
                    label: if i % 2 == 0 { Label::Control } else { Label::Asd },
                    pair: lag_split(&z, 1).unwrap(),
                    degenerate_channels: vec![],
                }
            })
            .collect()
    }

    fn small() -> ModelConfig {
        ModelConfig {
            n_channels: 3,
            hidden: 8,
            heads: 2,
            lag: 1,
        }
    }

    #[test]
    fn batches_group_equal_lengths_in_order() {
        let lengths = [5, 7, 5, 5, 7, 9];
        let order = [3, 1, 0, 5, 4, 2];
        let b = make_batches(&order, &lengths, 2);
        assert_eq!(b, vec![vec![3, 0], vec![2], vec![1, 4], vec![5]]);
    }

    #[test]
    fn same_seed_same_trace() {
        let data = toy(6, 3, 12, 1);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            alpha: 0.01,
            seed: 9,
            ..Default::default()
        };
        let a = train(&data, &data[..2], small(), &cfg).unwrap();
        let b = train(&data, &data[..2], small(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epochs.len(), 3);
        assert_eq!(a.steps.len(), 6);
        assert!(a.epochs.iter().all(|e| e.val_accuracy.is_some()));
    }

    #[test]
    fn logged_total_matches_components() {
        let data = toy(5, 3, 10, 2);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 2,
            alpha: 0.05,
            ..Default::default()
        };
        let out = train(&data, &[], small(), &cfg).unwrap();
        for s in &out.steps {
            assert!((s.loss.total - (s.loss.bce + 0.05 * s.loss.freq)).abs() < 1e-10);
        }
        for e in &out.epochs {
            assert!((e.total - (e.bce + 0.05 * e.freq)).abs() < 1e-10);
            assert!(e.val_accuracy.is_none());
        }
    }

    #[test]
    fn zero_alpha_total_is_bce_bit_for_bit() {
        let data = toy(4, 3, 10, 3);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            alpha: 0.0,
            ..Default::default()
        };
        let out = train(&data, &[], small(), &cfg).unwrap();
        for s in &out.steps {
            assert_eq!(s.loss.total.to_bits(), s.loss.bce.to_bits());
            assert!(s.loss.freq > 0.0);
        }
        for e in &out.epochs {
            assert_eq!(e.total.to_bits(), e.bce.to_bits());
        }
    }

    #[test]
    fn vanishing_learning_rate_keeps_initialization() {
        let data = toy(4, 3, 10, 4);
        let cfg = TrainConfig {
            lr0: 1e-300,
            epochs: 2,
            ..Default::default()
        };
        let init = NetworkParams::init(small(), &mut rng::stream(cfg.seed, INIT_STREAM)).unwrap();
        let out = train(&data, &[], small(), &cfg).unwrap();
        for (a, b) in out.params.tensors().iter().zip(init.tensors()) {
            assert!(a.max_abs_diff(b) < 1e-290);
        }
    }

    #[test]
    fn epoch_callback_sees_every_epoch() {
        let data = toy(3, 3, 8, 5);
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let init = NetworkParams::init(small(), &mut rng::seeded(0)).unwrap();
        let mut seen = Vec::new();
        train_from(init, &data, &[], &cfg, &mut |e| seen.push(e.epoch)).unwrap();
        assert_eq!(seen, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn overfits_eight_subjects() {
        let data = toy(8, 3, 20, 6);
        let cfg = TrainConfig {
            epochs: 500,
            batch_size: 8,
            lr_halving_period: 1000,
            alpha: 1e-4,
            seed: 1,
            ..Default::default()
        };
        let out = train(&data, &[], small(), &cfg).unwrap();
        assert_eq!(out.steps.len(), 500);
        let last = out.steps.last().unwrap().loss.bce;
        assert!(last < 0.05, "final batch BCE {last}");
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(train(&[], &[], small(), &TrainConfig::default()).is_err());
    }
}
