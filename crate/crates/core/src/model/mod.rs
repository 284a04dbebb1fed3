//! The forecast-classify network.
//!
//! ```text
//!   input N x T' ──► encoder LSTM ──► embeddings H x T'
//!                                        │
//!               ┌────────────────────────┴───────────────┐
//!               ▼                                        ▼
//!   decoder LSTM ► decoder LSTM ► linear H→N    attention pool ► dense H→H/2 (tanh)
//!               │                                        ► dense H/2→1 (sigmoid)
//!               ▼                                        ▼
//!        forecast x̂ N x T'                           probability p
//! ```
//!
//! Column `j` of the forecast predicts target column `j`, i.e. the signal one
//! lag after input column `j`, and depends only on input columns `0..=j`.

pub mod attention;
pub mod lstm;

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::data::LagPair;
use crate::error::{shape, Error, Result};
use crate::fmath;
use crate::linalg::Matrix;
use crate::loss::{combine, LossBreakdown};

pub use attention::AttentionParams;
pub use lstm::{lstm_cell, LstmParams, LstmState};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ModelConfig {
    /// Channels (ROIs) per subject.
    pub n_channels: usize,
    /// Hidden size `H` of every LSTM layer and of the attention block.
    pub hidden: usize,
    /// Attention heads; must divide `hidden`.
    pub heads: usize,
    /// Forecast lag in samples.
    pub lag: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_channels: 116,
            hidden: 64,
            heads: 4,
            lag: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.hidden < 2 || self.heads == 0 || self.lag == 0 {
            return Err(Error::Config(format!(
                "channels, heads and lag must be positive and hidden >= 2: {self:?}"
            )));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_hidden(&self) -> usize {
        self.hidden / 2
    }
}

/// Dense classifier `H → H/2 (tanh) → 1 (sigmoid)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// Every trainable tensor of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: ModelConfig,
    pub encoder: LstmParams,
    pub decoder: [LstmParams; 2],
    /// Forecast projection `N x H` and bias `N x 1`.
    pub proj_w: Matrix,
    pub proj_b: Matrix,
    pub attention: AttentionParams,
    pub head: HeadParams,
}

pub const TENSOR_COUNT: usize = 16;

/// Stable names of the tensors, in [`NetworkParams::tensors`] order.
pub const TENSOR_NAMES: [&str; TENSOR_COUNT] = [
    "encoder.w",
    "encoder.b",
    "decoder0.w",
    "decoder0.b",
    "decoder1.w",
    "decoder1.b",
    "proj.w",
    "proj.b",
    "attn.w_q",
    "attn.w_k",
    "attn.w_v",
    "attn.w_o",
    "head.w1",
    "head.b1",
    "head.w2",
    "head.b2",
];

impl NetworkParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (n, h, h2) = (config.n_channels, config.hidden, config.head_hidden());
        Ok(Self {
            config,
            encoder: LstmParams::zeros(n, h),
            decoder: [LstmParams::zeros(h, h), LstmParams::zeros(h, h)],
            proj_w: Matrix::zeros(n, h),
            proj_b: Matrix::zeros(n, 1),
            attention: AttentionParams::zeros(h),
            head: HeadParams {
                w1: Matrix::zeros(h2, h),
                b1: Matrix::zeros(h2, 1),
                w2: Matrix::zeros(1, h2),
                b2: Matrix::zeros(1, 1),
            },
        })
    }

    /// Uniform `±1/√fan_in` weights; LSTM forget biases 1, other biases 0.
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let (n, h) = (config.n_channels, config.hidden);
        p.encoder = LstmParams::init(n, h, rng);
        p.decoder = [LstmParams::init(h, h, rng), LstmParams::init(h, h, rng)];
        uniform(&mut p.proj_w, h, rng);
        p.attention = AttentionParams::init(h, rng);
        uniform(&mut p.head.w1, h, rng);
        uniform(&mut p.head.w2, config.head_hidden(), rng);
        Ok(p)
    }

    pub fn tensors(&self) -> [&Matrix; TENSOR_COUNT] {
        [
            &self.encoder.w,
            &self.encoder.b,
            &self.decoder[0].w,
            &self.decoder[0].b,
            &self.decoder[1].w,
            &self.decoder[1].b,
            &self.proj_w,
            &self.proj_b,
            &self.attention.w_q,
            &self.attention.w_k,
            &self.attention.w_v,
            &self.attention.w_o,
            &self.head.w1,
            &self.head.b1,
            &self.head.w2,
            &self.head.b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; TENSOR_COUNT] {
        let [d0, d1] = &mut self.decoder;
        [
            &mut self.encoder.w,
            &mut self.encoder.b,
            &mut d0.w,
            &mut d0.b,
            &mut d1.w,
            &mut d1.b,
            &mut self.proj_w,
            &mut self.proj_b,
            &mut self.attention.w_q,
            &mut self.attention.w_k,
            &mut self.attention.w_v,
            &mut self.attention.w_o,
            &mut self.head.w1,
            &mut self.head.b1,
            &mut self.head.w2,
            &mut self.head.b2,
        ]
    }

    /// Rebuilds parameters from named tensors, checking every shape against
    /// `config`.
    pub fn from_named(config: ModelConfig, named: Vec<(&str, Matrix)>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut seen = [false; TENSOR_COUNT];
        for (name, m) in named {
            let idx = TENSOR_NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::Data(format!("unknown tensor `{name}`")))?;
            let tensors = p.tensors_mut();
            let slot = &mut *tensors[idx];
            if slot.shape() != m.shape() {
                return Err(shape(format!(
                    "tensor `{name}` is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    slot.rows(),
                    slot.cols()
                )));
            }
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("tensor `{name}`")));
            }
            *slot = m;
            seen[idx] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!("tensor `{}` missing", TENSOR_NAMES[i])));
        }
        Ok(p)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|m| m.data().len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|m| m.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_parameters());
        let mut off = 0;
        for m in self.tensors_mut() {
            let len = m.data().len();
            m.data_mut().copy_from_slice(&flat[off..off + len]);
            off += len;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }
}

fn uniform<R: Rng>(m: &mut Matrix, fan_in: usize, rng: &mut R) {
    let bound = 1.0 / fmath::sqrt(fan_in as f64);
    m.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-bound..=bound));
}

/// Forecast plus encoder embeddings for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub x_hat: Matrix,
    pub embeddings: Matrix,
}

/// Tape handles for every tensor of a [`NetworkParams`].
pub(crate) struct ParamVars([Var; TENSOR_COUNT]);

impl ParamVars {
    pub(crate) fn register(tape: &mut Tape, params: &NetworkParams, trainable: bool) -> Self {
        let tensors = params.tensors();
        Self(core::array::from_fn(|i| {
            if trainable {
                tape.param(tensors[i].clone())
            } else {
                tape.constant(tensors[i].clone())
            }
        }))
    }

    pub(crate) fn vars(&self) -> &[Var; TENSOR_COUNT] {
        &self.0
    }
}

pub(crate) struct ForwardVars {
    pub embeddings: Var,
    pub x_hat: Var,
    pub p: Var,
}

fn check_input(config: &ModelConfig, input: &Matrix) -> Result<()> {
    if input.rows() != config.n_channels || input.cols() == 0 {
        return Err(shape(format!(
            "input is {}x{}, model expects {} channels and at least one step",
            input.rows(),
            input.cols(),
            config.n_channels
        )));
    }
    if !input.is_finite() {
        return Err(Error::NonFinite("network input".into()));
    }
    Ok(())
}

fn encode_on_tape(tape: &mut Tape, v: &[Var; TENSOR_COUNT], input: Var) -> Var {
    tape.lstm(input, v[0], v[1])
}

fn decode_on_tape(tape: &mut Tape, v: &[Var; TENSOR_COUNT], emb: Var) -> Var {
    let h1 = tape.lstm(emb, v[2], v[3]);
    let h2 = tape.lstm(h1, v[4], v[5]);
    let y = tape.matmul(v[6], h2);
    tape.add_column(y, v[7])
}

fn classify_on_tape(tape: &mut Tape, v: &[Var; TENSOR_COUNT], pooled: Var) -> Var {
    let z = tape.matmul(v[12], pooled);
    let z = tape.add_column(z, v[13]);
    let z = tape.tanh(z);
    let logit = tape.matmul(v[14], z);
    let logit = tape.add_column(logit, v[15]);
    tape.sigmoid(logit)
}

pub(crate) fn forward_on_tape(
    tape: &mut Tape,
    pv: &ParamVars,
    config: &ModelConfig,
    input: &Matrix,
) -> ForwardVars {
    let v = pv.vars();
    let x = tape.constant(input.clone());
    let embeddings = encode_on_tape(tape, v, x);
    let x_hat = decode_on_tape(tape, v, embeddings);
    let pool = attention::pool_on_tape(tape, embeddings, [v[8], v[9], v[10], v[11]], config.heads);
    let p = classify_on_tape(tape, v, pool.pooled);
    ForwardVars {
        embeddings,
        x_hat,
        p,
    }
}

/// Encoder hidden states (`H x T'`) for an `N x T'` input.
pub fn encode(input: &Matrix, params: &NetworkParams) -> Result<Matrix> {
    check_input(&params.config, input)?;
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, false);
    let x = tape.constant(input.clone());
    let e = encode_on_tape(&mut tape, pv.vars(), x);
    Ok(tape.value(e).clone())
}

/// Forecast (`N x T'`) decoded from encoder embeddings (`H x T'`).
pub fn decode(embeddings: &Matrix, params: &NetworkParams) -> Result<Matrix> {
    if embeddings.rows() != params.config.hidden || embeddings.cols() == 0 {
        return Err(shape("embeddings must be H x T' with T' >= 1"));
    }
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, false);
    let e = tape.constant(embeddings.clone());
    let y = decode_on_tape(&mut tape, pv.vars(), e);
    Ok(tape.value(y).clone())
}

/// Multihead attention over time steps followed by a mean over time.
pub fn attention_pool(embeddings: &Matrix, attention: &AttentionParams, heads: usize) -> Result<Vec<f64>> {
    attention_eval(embeddings, attention, heads).map(|(pooled, _)| pooled)
}

/// Per-head attention matrices (`T' x T'`, rows sum to one).
pub fn attention_weights(
    embeddings: &Matrix,
    attention: &AttentionParams,
    heads: usize,
) -> Result<Vec<Matrix>> {
    attention_eval(embeddings, attention, heads).map(|(_, w)| w)
}

fn attention_eval(
    embeddings: &Matrix,
    attention: &AttentionParams,
    heads: usize,
) -> Result<(Vec<f64>, Vec<Matrix>)> {
    let h = embeddings.rows();
    if heads == 0 || h % heads != 0 {
        return Err(Error::Config(format!("hidden size {h} is not divisible by {heads} heads")));
    }
    if attention.w_q.shape() != (h, h) || embeddings.cols() == 0 {
        return Err(shape("attention weights must be H x H and T' >= 1"));
    }
    let mut tape = Tape::new();
    let e = tape.constant(embeddings.clone());
    let w = [
        tape.constant(attention.w_q.clone()),
        tape.constant(attention.w_k.clone()),
        tape.constant(attention.w_v.clone()),
        tape.constant(attention.w_o.clone()),
    ];
    let pool = attention::pool_on_tape(&mut tape, e, w, heads);
    let weights = pool.weights.iter().map(|&v| tape.value(v).clone()).collect();
    Ok((tape.value(pool.pooled).data().to_vec(), weights))
}

/// Class-1 probability from a pooled `H`-vector.
pub fn classify(pooled: &[f64], params: &NetworkParams) -> Result<f64> {
    if pooled.len() != params.config.hidden {
        return Err(shape("pooled vector must have H entries"));
    }
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, false);
    let x = tape.constant(Matrix::column(pooled.to_vec()));
    let p = classify_on_tape(&mut tape, pv.vars(), x);
    Ok(tape.value(p).item())
}

/// Runs the whole network on one subject.
pub fn forward(pair: &LagPair, params: &NetworkParams) -> Result<(ForecastResult, f64)> {
    forward_input(&pair.input, params)
}

pub fn forward_input(input: &Matrix, params: &NetworkParams) -> Result<(ForecastResult, f64)> {
    check_input(&params.config, input)?;
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params, false);
    let f = forward_on_tape(&mut tape, &pv, &params.config, input);
    let result = ForecastResult {
        x_hat: tape.value(f.x_hat).clone(),
        embeddings: tape.value(f.embeddings).clone(),
    };
    Ok((result, tape.value(f.p).item()))
}

/// Batch loss `Σ bce + α·Σ freq` and its gradient with respect to every
/// parameter, as a [`NetworkParams`]-shaped value. Subjects are processed in
/// slice order and their gradients summed in that order.
pub fn loss_and_grad(
    params: &NetworkParams,
    batch: &[(&LagPair, f64)],
    alpha: f64,
) -> Result<(LossBreakdown, NetworkParams)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut grads = NetworkParams::zeros(params.config)?;
    let (mut bce_sum, mut freq_sum) = (0.0, 0.0);
    for &(pair, y) in batch {
        check_input(&params.config, &pair.input)?;
        if pair.target.shape() != pair.input.shape() {
            return Err(shape("target and input shapes differ"));
        }
        let mut tape = Tape::new();
        let pv = ParamVars::register(&mut tape, params, true);
        let f = forward_on_tape(&mut tape, &pv, &params.config, &pair.input);
        let bce = tape.bce(f.p, y);
        let freq = tape.freq_loss(f.x_hat, &pair.target);
        bce_sum += tape.value(bce).item();
        freq_sum += tape.value(freq).item();
        // α = 0 leaves the frequency term off the graph entirely.
        let objective = if alpha == 0.0 {
            bce
        } else {
            let scaled = tape.scale(freq, alpha);
            tape.add(bce, scaled)
        };
        let g = tape.backward(objective);
        for (slot, var) in grads.tensors_mut().into_iter().zip(pv.vars()) {
            if let Some(gm) = g.get(*var) {
                slot.add_assign(gm);
            }
        }
    }
    let breakdown = LossBreakdown {
        bce: bce_sum,
        freq: freq_sum,
        total: combine(bce_sum, freq_sum, alpha),
        alpha,
    };
    Ok((breakdown, grads))
}

/// Plain evaluation of the batch loss (no gradient).
pub fn batch_loss(params: &NetworkParams, batch: &[(&LagPair, f64)], alpha: f64) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let (mut b, mut f) = (0.0, 0.0);
    for &(pair, y) in batch {
        let (res, p) = forward(pair, params)?;
        b += crate::loss::bce(p, y);
        f += crate::loss::freq_loss(&res.x_hat, &pair.target)?;
    }
    Ok(LossBreakdown {
        bce: b,
        freq: f,
        total: combine(b, f, alpha),
        alpha,
    })
}
