//! Single LSTM cell, gate order `i, f, g, o`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{shape, Result};
use crate::fmath;
use crate::linalg::{dot, Matrix};

/// Weights of one LSTM layer: `w` is `4H x (D+H)` acting on `[x_t; h_{t-1}]`,
/// `b` is `4H x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w: Matrix,
    pub b: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Matrix::zeros(4 * hidden, input + hidden),
            b: Matrix::zeros(4 * hidden, 1),
        }
    }

    /// Uniform `±1/√(D+H)` weights, forget-gate bias 1, other biases 0.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / fmath::sqrt((input + hidden) as f64);
        let mut p = Self::zeros(input, hidden);
        p.w.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-bound..=bound));
        for j in hidden..2 * hidden {
            p.b[(j, 0)] = 1.0;
        }
        p
    }

    pub fn hidden_size(&self) -> usize {
        self.w.rows() / 4
    }

    pub fn input_size(&self) -> usize {
        self.w.cols() - self.hidden_size()
    }
}

pub(crate) struct LstmParamsRef<'a> {
    pub w: &'a Matrix,
    pub b: &'a Matrix,
    pub input: usize,
    pub hidden: usize,
}

/// One update from `xh = [x_t; h_{t-1}]` and `c_prev`. Writes the activated
/// gates, the new cell and the new hidden state.
pub(crate) fn step(
    p: &LstmParamsRef<'_>,
    xh: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    c_out: &mut [f64],
    h_out: &mut [f64],
) {
    let h = p.hidden;
    debug_assert_eq!(xh.len(), p.input + h);
    for (r, g) in gates.iter_mut().enumerate() {
        let z = p.b[(r, 0)] + dot(p.w.row(r), xh);
        *g = if (2 * h..3 * h).contains(&r) {
            fmath::tanh(z)
        } else {
            fmath::sigmoid(z)
        };
    }
    for j in 0..h {
        let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        let c = f * c_prev[j] + i * g;
        c_out[j] = c;
        h_out[j] = o * fmath::tanh(c);
    }
}

/// `c' = f∘c + i∘g`, `h' = o∘tanh(c')`; returns `(h', state')`.
pub fn lstm_cell(x: &[f64], state: &LstmState, params: &LstmParams) -> Result<(Vec<f64>, LstmState)> {
    let (d, h) = (params.input_size(), params.hidden_size());
    if x.len() != d || state.h.len() != h || state.c.len() != h || params.b.shape() != (4 * h, 1) {
        return Err(shape(format!(
            "lstm cell expects input {d} and state {h}, got input {} and state {}/{}",
            x.len(),
            state.h.len(),
            state.c.len()
        )));
    }
    let mut xh = Vec::with_capacity(d + h);
    xh.extend_from_slice(x);
    xh.extend_from_slice(&state.h);
    let r = LstmParamsRef {
        w: &params.w,
        b: &params.b,
        input: d,
        hidden: h,
    };
    let mut gates = vec![0.0; 4 * h];
    let mut next = LstmState::zeros(h);
    step(&r, &xh, &state.c, &mut gates, &mut next.c, &mut next.h);
    Ok((next.h.clone(), next))
}
