//! Multihead self-attention over time steps, collapsed to one vector by a
//! mean over time.
//!
//! Each column of the `H x T` embedding matrix is a token. Head `j` owns rows
//! `j·d_k .. (j+1)·d_k` of `W_Q`, `W_K`, `W_V` (each `H x H`, `d_k = H/h`) and
//! the matching column block of the combiner `W_O`.

use alloc::vec::Vec;
use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::fmath;
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
}

impl AttentionParams {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            w_q: Matrix::zeros(hidden, hidden),
            w_k: Matrix::zeros(hidden, hidden),
            w_v: Matrix::zeros(hidden, hidden),
            w_o: Matrix::zeros(hidden, hidden),
        }
    }

    pub fn init<R: Rng>(hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden);
        let bound = 1.0 / fmath::sqrt(hidden as f64);
        for m in [&mut p.w_q, &mut p.w_k, &mut p.w_v, &mut p.w_o] {
            m.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..=bound));
        }
        p
    }
}

pub(crate) struct PoolVars {
    pub pooled: Var,
    /// Per head, `T x T`; row `q` holds the weights query `q` puts on each key.
    pub weights: Vec<Var>,
}

pub(crate) fn pool_on_tape(
    tape: &mut Tape,
    emb: Var,
    [w_q, w_k, w_v, w_o]: [Var; 4],
    heads: usize,
) -> PoolVars {
    let hidden = tape.value(emb).rows();
    let dk = hidden / heads;
    let scale = 1.0 / fmath::sqrt(dk as f64);
    let q = tape.matmul(w_q, emb);
    let k = tape.matmul(w_k, emb);
    let v = tape.matmul(w_v, emb);
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for j in 0..heads {
        let (lo, hi) = (j * dk, (j + 1) * dk);
        let qj = tape.slice_rows(q, lo, hi);
        let kj = tape.slice_rows(k, lo, hi);
        let vj = tape.slice_rows(v, lo, hi);
        let qt = tape.transpose(qj);
        let scores = tape.matmul(qt, kj);
        let scores = tape.scale(scores, scale);
        let a = tape.softmax_rows(scores);
        let at = tape.transpose(a);
        outs.push(tape.matmul(vj, at));
        weights.push(a);
    }
    let cat = tape.concat_rows(&outs);
    let combined = tape.matmul(w_o, cat);
    let pooled = tape.mean_cols(combined);
    PoolVars { pooled, weights }
}
