//! Matrix-valued reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! value. [`Tape::backward`] walks the nodes in reverse, accumulating the
//! vector-Jacobian product of each operation into its parents. Every node is
//! a [`Matrix`]; scalars are `1x1`.
//!
//! The operation set is small and closed: matrix product, elementwise
//! add/sub/mul, column-broadcast bias, tanh, sigmoid, transpose, row slicing
//! and concatenation, row-wise softmax, column mean, full sum, and three fused
//! operations with hand-written backward passes: a whole LSTM layer unrolled
//! over time, the frequency-domain loss, and clamped binary cross-entropy.
//!
//! ```
//! use grangernet_core::autodiff::Tape;
//! use grangernet_core::Matrix;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Matrix::scalar(3.0));
//! let y = tape.mul(x, x);
//! let grads = tape.backward(y);
//! assert_eq!(tape.value(y).item(), 9.0);
//! assert_eq!(grads.get(x).unwrap().item(), 6.0);
//! ```

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape, Result};
use crate::fourier::Twiddles;
use crate::linalg::{dot, Matrix};
use crate::loss::{clamp_probability, PROB_CLAMP};
use crate::fmath;
use crate::model::lstm::{self, LstmParamsRef};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddColumn(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Transpose(Var),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    SoftmaxRows(Var),
    MeanCols(Var),
    Sum(Var),
    Lstm(Box<LstmTrace>),
    FreqLoss(Box<FreqTrace>),
    Bce { p: Var, y: f64 },
}

#[derive(Debug)]
struct LstmTrace {
    input: Var,
    w: Var,
    b: Var,
    /// Activated gates `[i, f, g, o]` per step, `4H` values each.
    gates: Vec<f64>,
    /// Cell states `c_{-1}, c_0, .., c_{T-1}`, `H` values each.
    cells: Vec<f64>,
}

#[derive(Debug)]
struct FreqTrace {
    pred: Var,
    twiddles: Twiddles,
    /// Per channel, per bin: `(re, im, modulus)` of the spectrum difference.
    spectra: Vec<(f64, f64, f64)>,
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for one backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of the tape output with respect to every node that requires one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Moves the gradient out; a node that received no gradient yields `None`.
    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self
            .value(a)
            .matmul(self.value(b))
            .expect("matmul shape mismatch on tape");
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).add(self.value(b)).expect("add shape mismatch");
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).sub(self.value(b)).expect("sub shape mismatch");
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shape mismatch");
        let value = self.value(a).zip_with(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// `m + b·1ᵀ`: adds column vector `b` to every column of `m`.
    pub fn add_column(&mut self, m: Var, b: Var) -> Var {
        let (mv, bv) = (self.value(m), self.value(b));
        assert_eq!(bv.shape(), (mv.rows(), 1), "bias must be a column matching rows");
        let mut value = mv.clone();
        for r in 0..value.rows() {
            let br = bv[(r, 0)];
            value.row_mut(r).iter_mut().for_each(|x| *x += br);
        }
        let rg = self.rg(m) || self.rg(b);
        self.push(value, Op::AddColumn(m, b), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(fmath::tanh);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(fmath::sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice_rows(start, end);
        let rg = self.rg(a);
        self.push(value, Op::SliceRows(a, start), rg)
    }

    /// Stacks the parts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows column mismatch");
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Matrix::from_vec(rows, cols, data).expect("consistent concat");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Softmax applied independently to each row.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.rg(a);
        self.push(value, Op::SoftmaxRows(a), rg)
    }

    /// Mean over columns: `r x c -> r x 1`.
    pub fn mean_cols(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let c = v.cols() as f64;
        let value = Matrix::column((0..v.rows()).map(|r| v.row(r).iter().sum::<f64>() / c).collect());
        let rg = self.rg(a);
        self.push(value, Op::MeanCols(a), rg)
    }

    /// Sum of all entries as a `1x1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    /// Runs an LSTM layer over the columns of `input` (`D x T`) from a zero
    /// state. `w` is `4H x (D+H)` acting on `[x_t; h_{t-1}]`, `b` is `4H x 1`,
    /// gate order `i, f, g, o`. Returns the hidden states as `H x T`.
    pub fn lstm(&mut self, input: Var, w: Var, b: Var) -> Var {
        let (x, wm, bm) = (self.value(input), self.value(w), self.value(b));
        let (d, steps) = x.shape();
        let h = wm.rows() / 4;
        assert_eq!(wm.shape(), (4 * h, d + h), "lstm weight shape");
        assert_eq!(bm.shape(), (4 * h, 1), "lstm bias shape");
        let params = LstmParamsRef { w: wm, b: bm, input: d, hidden: h };

        let mut out = Matrix::zeros(h, steps);
        let mut gates = vec![0.0; 4 * h * steps];
        let mut cells = vec![0.0; h * (steps + 1)];
        let mut xh = vec![0.0; d + h];
        let mut h_prev = vec![0.0; h];
        let mut h_next = vec![0.0; h];
        for t in 0..steps {
            for (r, slot) in xh[..d].iter_mut().enumerate() {
                *slot = x[(r, t)];
            }
            xh[d..].copy_from_slice(&h_prev);
            let (c_prev, c_rest) = cells[t * h..].split_at_mut(h);
            lstm::step(
                &params,
                &xh,
                c_prev,
                &mut gates[t * 4 * h..(t + 1) * 4 * h],
                &mut c_rest[..h],
                &mut h_next,
            );
            out.set_col(t, &h_next);
            core::mem::swap(&mut h_prev, &mut h_next);
        }
        let rg = self.rg(input) || self.rg(w) || self.rg(b);
        let trace = LstmTrace {
            input,
            w,
            b,
            gates,
            cells,
        };
        self.push(out, Op::Lstm(Box::new(trace)), rg)
    }

    /// `Σ_i Σ_k |DFT(pred_i)(k) − DFT(target_i)(k)|` over the rows (channels)
    /// of `pred`, as a `1x1`.
    pub fn freq_loss(&mut self, pred: Var, target: &Matrix) -> Var {
        let pv = self.value(pred);
        assert_eq!(pv.shape(), target.shape(), "freq loss shape mismatch");
        let twiddles = Twiddles::new(pv.cols());
        let (total, spectra) = spectrum_differences(&twiddles, pv, target);
        let rg = self.rg(pred);
        let trace = FreqTrace {
            pred,
            twiddles,
            spectra,
        };
        self.push(Matrix::scalar(total), Op::FreqLoss(Box::new(trace)), rg)
    }

    /// Binary cross-entropy of the `1x1` probability `p` against label `y`,
    /// with `p` clamped to `[1e-7, 1 − 1e-7]`.
    pub fn bce(&mut self, p: Var, y: f64) -> Var {
        let pc = clamp_probability(self.value(p).item());
        let value = -(y * fmath::ln(pc) + (1.0 - y) * fmath::ln(1.0 - pc));
        let rg = self.rg(p);
        self.push(Matrix::scalar(value), Op::Bce { p, y }, rg)
    }

    /// Reverse pass from the `1x1` node `out`.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Matrix::scalar(1.0));
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let ga = g.matmul_t(self.value(*b)).expect("shapes");
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = self.value(*a).t_matmul(g).expect("shapes");
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let ga = g.zip_with(self.value(*b), |x, y| x * y);
                let gb = g.zip_with(self.value(*a), |x, y| x * y);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::AddColumn(m, b) => {
                self.accumulate(grads, *m, g.clone());
                let gb = Matrix::column((0..g.rows()).map(|r| g.row(r).iter().sum()).collect());
                self.accumulate(grads, *b, gb);
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.scale(*s)),
            Op::Tanh(a) => {
                let ga = g.zip_with(&node.value, |gi, y| gi * (1.0 - y * y));
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = g.zip_with(&node.value, |gi, y| gi * y * (1.0 - y));
                self.accumulate(grads, *a, ga);
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::SliceRows(a, start) => {
                let parent = self.value(*a);
                let mut ga = Matrix::zeros(parent.rows(), parent.cols());
                let c = parent.cols();
                ga.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                self.accumulate(grads, *a, ga);
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    self.accumulate(grads, p, g.slice_rows(start, start + rows));
                    start += rows;
                }
            }
            Op::SoftmaxRows(a) => {
                let s = &node.value;
                let mut ga = Matrix::zeros(s.rows(), s.cols());
                for r in 0..s.rows() {
                    let (sr, gr) = (s.row(r), g.row(r));
                    let inner = dot(sr, gr);
                    for (o, (&si, &gi)) in ga.row_mut(r).iter_mut().zip(sr.iter().zip(gr)) {
                        *o = si * (gi - inner);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::MeanCols(a) => {
                let parent = self.value(*a);
                let c = parent.cols();
                let mut ga = Matrix::zeros(parent.rows(), c);
                for r in 0..parent.rows() {
                    let v = g[(r, 0)] / c as f64;
                    ga.row_mut(r).iter_mut().for_each(|x| *x = v);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let parent = self.value(*a);
                self.accumulate(grads, *a, Matrix::filled(parent.rows(), parent.cols(), g.item()));
            }
            Op::Lstm(trace) => self.lstm_backward(node, trace, g, grads),
            Op::FreqLoss(trace) => {
                let pred = self.value(trace.pred);
                let (n, len) = pred.shape();
                let scale = g.item();
                let mut gp = Matrix::zeros(n, len);
                for ch in 0..n {
                    let spec = &trace.spectra[ch * len..(ch + 1) * len];
                    for t in 0..len {
                        let mut acc = 0.0;
                        for (k, &(re, im, modulus)) in spec.iter().enumerate() {
                            // d|D_k|/dd_t; subgradient 0 where D_k == 0
                            if modulus > 0.0 {
                                let (c, s) = trace.twiddles.at(k, t);
                                acc += (re * c - im * s) / modulus;
                            }
                        }
                        gp[(ch, t)] = scale * acc;
                    }
                }
                self.accumulate(grads, trace.pred, gp);
            }
            Op::Bce { p, y } => {
                let pv = self.value(*p).item();
                let d = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&pv) {
                    -y / pv + (1.0 - y) / (1.0 - pv)
                } else {
                    0.0
                };
                self.accumulate(grads, *p, Matrix::scalar(g.item() * d));
            }
        }
    }

    fn lstm_backward(&self, node: &Node, tr: &LstmTrace, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let x = self.value(tr.input);
        let wm = self.value(tr.w);
        let (d, steps) = x.shape();
        let h = wm.rows() / 4;
        let hs = &node.value;

        let mut gw = Matrix::zeros(4 * h, d + h);
        let mut gb = Matrix::zeros(4 * h, 1);
        let mut gx = Matrix::zeros(d, steps);
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let mut xh = vec![0.0; d + h];
        let mut dxh = vec![0.0; d + h];

        for t in (0..steps).rev() {
            let gate = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
            let c_prev = &tr.cells[t * h..(t + 1) * h];
            let c = &tr.cells[(t + 1) * h..(t + 2) * h];
            for j in 0..h {
                let (i_g, f_g, g_g, o_g) = (gate[j], gate[h + j], gate[2 * h + j], gate[3 * h + j]);
                let dh = g[(j, t)] + dh_next[j];
                let tc = fmath::tanh(c[j]);
                let d_o = dh * tc;
                let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * g_g * i_g * (1.0 - i_g);
                dz[h + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
                dz[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
                dz[3 * h + j] = d_o * o_g * (1.0 - o_g);
                dc_next[j] = dc * f_g;
            }
            for (r, slot) in xh[..d].iter_mut().enumerate() {
                *slot = x[(r, t)];
            }
            for j in 0..h {
                xh[d + j] = if t == 0 { 0.0 } else { hs[(j, t - 1)] };
            }
            dxh.iter_mut().for_each(|v| *v = 0.0);
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == 0.0 {
                    continue;
                }
                gb[(r, 0)] += dzr;
                for ((gwv, &xv), (dv, &wv)) in gw
                    .row_mut(r)
                    .iter_mut()
                    .zip(&xh)
                    .zip(dxh.iter_mut().zip(wm.row(r)))
                {
                    *gwv += dzr * xv;
                    *dv += dzr * wv;
                }
            }
            for (r, &v) in dxh[..d].iter().enumerate() {
                gx[(r, t)] = v;
            }
            dh_next.copy_from_slice(&dxh[d..]);
        }
        self.accumulate(grads, tr.input, gx);
        self.accumulate(grads, tr.w, gw);
        self.accumulate(grads, tr.b, gb);
    }
}

/// Total modulus and per-bin `(re, im, |·|)` of `DFT(pred_i) − DFT(target_i)`
/// for every row. The DFT is linear, so the difference is taken in time.
pub(crate) fn spectrum_differences(
    twiddles: &Twiddles,
    pred: &Matrix,
    target: &Matrix,
) -> (f64, Vec<(f64, f64, f64)>) {
    let (n, len) = pred.shape();
    let mut spectra = Vec::with_capacity(n * len);
    let mut total = 0.0;
    let mut diff = vec![0.0; len];
    for ch in 0..n {
        for (d, (a, b)) in diff.iter_mut().zip(pred.row(ch).iter().zip(target.row(ch))) {
            *d = a - b;
        }
        for (re, im) in twiddles.transform(&diff).bins {
            let m = fmath::hypot(re, im);
            total += m;
            spectra.push((re, im, m));
        }
    }
    (total, spectra)
}

/// Softmax of a vector. The maximum is subtracted first, so large but equal
/// inputs do not overflow.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(shape("softmax of an empty vector"));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = fmath::exp(*x - max);
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Runs `grad_check` on a function of one matrix built by `build`.
    fn check(x0: Matrix, build: impl Fn(&mut Tape, Var) -> Var) -> f64 {
        let shape = x0.shape();
        let eval = |theta: &[f64]| {
            let mut tape = Tape::new();
            let x = tape.param(Matrix::from_vec(shape.0, shape.1, theta.to_vec()).unwrap());
            let y = build(&mut tape, x);
            tape.value(y).item()
        };
        let grad = |theta: &[f64]| {
            let mut tape = Tape::new();
            let x = tape.param(Matrix::from_vec(shape.0, shape.1, theta.to_vec()).unwrap());
            let y = build(&mut tape, x);
            tape.backward(y).get(x).unwrap().data().to_vec()
        };
        grad_check(eval, grad, x0.data(), 1e-5).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let big = softmax(&[1000.0, 1000.0, 1000.0]).unwrap();
        assert!(big.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        // 40-digit reference values
        let want = [0.090_030_573_170_380_46, 0.244_728_471_054_797_65, 0.665_240_955_774_821_9];
        for (p, w) in softmax(&[1.0, 2.0, 3.0]).unwrap().iter().zip(want) {
            assert!((p - w).abs() < 1e-15);
        }
        assert!(softmax(&[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn softmax_is_a_shift_invariant_distribution(
            v in proptest::collection::vec(-50.0f64..50.0, 1..12),
            c in -100.0f64..100.0,
        ) {
            let p = softmax(&v).unwrap();
            proptest::prop_assert!(p.iter().all(|x| *x > 0.0));
            proptest::prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            for (a, b) in p.iter().zip(softmax(&shifted).unwrap()) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn elementwise_ops_pass_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random(&mut rng, 3, 4);
        let k = random(&mut rng, 4, 2);
        let b = random(&mut rng, 3, 1);
        assert!(check(m.clone(), |t, x| { let y = t.tanh(x); t.sum(y) }) < 1e-7);
        assert!(check(m.clone(), |t, x| { let y = t.sigmoid(x); let z = t.mul(y, x); t.sum(z) }) < 1e-7);
        assert!(check(m.clone(), |t, x| {
            let kk = t.constant(k.clone());
            let y = t.matmul(x, kk);
            let y = t.tanh(y);
            t.sum(y)
        }) < 1e-7);
        assert!(check(m.clone(), |t, x| {
            let bb = t.constant(b.clone());
            let y = t.add_column(x, bb);
            let y = t.mul(y, y);
            t.sum(y)
        }) < 1e-7);
        assert!(check(b.clone(), |t, x| {
            let mm = t.constant(m.clone());
            let y = t.add_column(mm, x);
            let y = t.sigmoid(y);
            t.sum(y)
        }) < 1e-7);
        assert!(check(m.clone(), |t, x| {
            let tr = t.transpose(x);
            let a = t.slice_rows(tr, 1, 3);
            let c = t.slice_rows(tr, 0, 2);
            let s = t.sub(a, c);
            let cat = t.concat_rows(&[s, a]);
            let cat = t.scale(cat, 0.7);
            let y = t.tanh(cat);
            t.sum(y)
        }) < 1e-7);
    }

    #[test]
    fn softmax_and_mean_pass_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random(&mut rng, 3, 5);
        let w = random(&mut rng, 3, 5);
        let err = check(m, |t, x| {
            let s = t.softmax_rows(x);
            let ww = t.constant(w.clone());
            let y = t.mul(s, ww);
            let y = t.mean_cols(y);
            let y = t.tanh(y);
            t.sum(y)
        });
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn lstm_passes_grad_check_for_every_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d, h, steps) = (3, 4, 6);
        let x = random(&mut rng, d, steps);
        let w = random(&mut rng, 4 * h, d + h);
        let b = random(&mut rng, 4 * h, 1);
        let probe = random(&mut rng, h, steps);
        let loss = |t: &mut Tape, xv: Var, wv: Var, bv: Var| {
            let hs = t.lstm(xv, wv, bv);
            let p = t.constant(probe.clone());
            let y = t.mul(hs, p);
            t.sum(y)
        };
        let (w2, b2) = (w.clone(), b.clone());
        assert!(check(x.clone(), |t, xv| {
            let wv = t.constant(w2.clone());
            let bv = t.constant(b2.clone());
            loss(t, xv, wv, bv)
        }) < 1e-6);
        let x2 = x.clone();
        assert!(check(w.clone(), |t, wv| {
            let xv = t.constant(x2.clone());
            let bv = t.constant(b.clone());
            loss(t, xv, wv, bv)
        }) < 1e-6);
        assert!(check(b.clone(), |t, bv| {
            let xv = t.constant(x.clone());
            let wv = t.constant(w.clone());
            loss(t, xv, wv, bv)
        }) < 1e-6);
    }

    #[test]
    fn freq_loss_and_bce_pass_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pred = random(&mut rng, 2, 7);
        let target = random(&mut rng, 2, 7);
        assert!(check(pred, |t, x| t.freq_loss(x, &target)) < 1e-6);
        let z = Matrix::scalar(0.3);
        assert!(check(z, |t, x| { let p = t.sigmoid(x); t.bce(p, 1.0) }) < 1e-8);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::scalar(2.0));
        let p = t.param(Matrix::scalar(3.0));
        let y = t.mul(c, p);
        let g = t.backward(y);
        assert!(g.get(c).is_none());
        assert_eq!(g.get(p).unwrap().item(), 2.0);
    }

    #[test]
    fn freq_loss_subgradient_at_zero_difference_is_zero() {
        let mut t = Tape::new();
        let target = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let p = t.param(target.clone());
        let y = t.freq_loss(p, &target);
        assert_eq!(t.value(y).item(), 0.0);
        let g = t.backward(y);
        assert!(g.get(p).unwrap().data().iter().all(|&v| v == 0.0));
    }
}
