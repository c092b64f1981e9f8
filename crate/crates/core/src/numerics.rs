//! Dense linear algebra, the LSTM cell and log-domain probability helpers.
//!
//! Every dot product in the crate goes through [`dot`], so a batched matrix
//! product is bit-identical to the corresponding sequence of matrix-vector
//! products.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::Mul;

use crate::{Error, Result};

const LANES: usize = 16;

/// Pairwise fold of the lane accumulators: lane `l` absorbs lane
/// `l + width / 2` until one remains.
#[inline(always)]
fn reduce(mut acc: [f64; LANES]) -> f64 {
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for l in 0..width {
            acc[l] += acc[l + width];
        }
    }
    acc[0]
}

/// Inner product with a fixed sixteen-lane accumulation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ac = a.chunks_exact(LANES);
    let bc = b.chunks_exact(LANES);
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ar.iter().zip(br) {
        tail += x * y;
    }
    reduce(acc) + tail
}


/// Row-major dense matrix of 64-bit reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "matrix data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix data"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "matrix row",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Applies `f` to every entry. Used to derive variants of synthetic
    /// weights; callers must keep entries finite.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.cols {
            return Err(Error::DimensionMismatch {
                what: "matvec input",
                expected: self.cols,
                found: len,
            });
        }
        Ok(())
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_input(v.len())?;
        let mut out = vec![0.0; self.rows];
        self.matvec_into(v, &mut out);
        Ok(out)
    }

    /// Unchecked-shape variant for hot loops; panics on mismatch.
    #[inline]
    pub(crate) fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), v);
        }
    }

    /// Products against many inputs at once. Each weight row is streamed
    /// once and applied to every input while it is hot in cache; results are
    /// bit-identical to calling [`Matrix::matvec`] per input.
    pub fn matvec_batch(&self, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        for x in inputs {
            self.check_input(x.len())?;
        }
        let mut out = vec![vec![0.0; self.rows]; inputs.len()];
        self.matvec_batch_into(inputs, &mut out);
        Ok(out)
    }

    pub(crate) fn matvec_batch_into(&self, inputs: &[&[f64]], out: &mut [Vec<f64>]) {
        debug_assert_eq!(inputs.len(), out.len());
        for r in 0..self.rows {
            let w = self.row(r);
            for b in 0..inputs.len() {
                out[b][r] = dot(w, inputs[b]);
            }
        }
    }
}

pub fn matvec(m: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    m.matvec(v)
}

/// Natural-log probability. `-inf` is probability zero; NaN never occurs.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
#[repr(transparent)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value > 0.0 {
            return Err(Error::NonFinite("log-probability"));
        }
        Ok(LogProb(value))
    }

    /// Wraps a value produced by log-domain arithmetic without checking the
    /// upper bound (rounding can leave sums a few ulps above zero).
    #[inline]
    pub fn from_raw(value: f64) -> Self {
        debug_assert!(!value.is_nan());
        LogProb(value)
    }

    pub fn from_prob(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::NonFinite("probability"));
        }
        Ok(LogProb(libm::log(p)))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        libm::exp(self.0)
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    #[inline]
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Product of probabilities.
impl Mul for LogProb {
    type Output = LogProb;

    #[inline]
    fn mul(self, rhs: LogProb) -> LogProb {
        LogProb(self.0 + rhs.0)
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// `ln(exp(a) + exp(b))`.
#[inline]
pub fn log_add(a: LogProb, b: LogProb) -> LogProb {
    let (hi, lo) = if a.0 >= b.0 { (a.0, b.0) } else { (b.0, a.0) };
    if hi == f64::NEG_INFINITY {
        return LogProb::ZERO;
    }
    LogProb(hi + libm::log1p(libm::exp(lo - hi)))
}

pub fn log_sum_exp(terms: &[LogProb]) -> Result<LogProb> {
    let max = terms
        .iter()
        .map(|t| t.0)
        .max_by(f64::total_cmp)
        .ok_or(Error::Empty("log_sum_exp terms"))?;
    if max == f64::NEG_INFINITY {
        return Ok(LogProb::ZERO);
    }
    let s: f64 = terms.iter().map(|t| libm::exp(t.0 - max)).sum();
    Ok(LogProb(max + libm::log(s)))
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<LogProb>> {
    if logits.is_empty() {
        return Err(Error::Empty("log_softmax logits"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log_softmax logits"));
    }
    let mut out = vec![LogProb::ZERO; logits.len()];
    log_softmax_into(logits, &mut out);
    Ok(out)
}

pub(crate) fn log_softmax_into(logits: &[f64], out: &mut [LogProb]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logits.iter().map(|&v| libm::exp(v - max)).sum();
    let lse = max + libm::log(s);
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = LogProb(v - lse);
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// One LSTM layer. Gate rows are stacked in the order input, forget,
/// candidate, output; a single bias vector covers both products.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    w_ih: Matrix,
    w_hh: Matrix,
    bias: Vec<f64>,
}

impl LstmLayer {
    pub fn new(w_ih: Matrix, w_hh: Matrix, bias: Vec<f64>) -> Result<Self> {
        let hidden = w_hh.cols();
        if w_hh.rows() != 4 * hidden {
            return Err(Error::DimensionMismatch {
                what: "lstm recurrent weights rows",
                expected: 4 * hidden,
                found: w_hh.rows(),
            });
        }
        if w_ih.rows() != 4 * hidden {
            return Err(Error::DimensionMismatch {
                what: "lstm input weights rows",
                expected: 4 * hidden,
                found: w_ih.rows(),
            });
        }
        if bias.len() != 4 * hidden {
            return Err(Error::DimensionMismatch {
                what: "lstm bias",
                expected: 4 * hidden,
                found: bias.len(),
            });
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lstm bias"));
        }
        Ok(LstmLayer { w_ih, w_hh, bias })
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmLayer {
            w_ih: Matrix::zeros(4 * hidden, input_dim),
            w_hh: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols()
    }

    pub fn w_ih(&self) -> &Matrix {
        &self.w_ih
    }

    pub fn w_hh(&self) -> &Matrix {
        &self.w_hh
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn check(&self, x: usize, h: usize, c: usize) -> Result<()> {
        let hid = self.hidden();
        for (what, expected, found) in [
            ("lstm input", self.input_dim(), x),
            ("lstm hidden state", hid, h),
            ("lstm cell state", hid, c),
        ] {
            if expected != found {
                return Err(Error::DimensionMismatch {
                    what,
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }

    /// Gate nonlinearities from the summed pre-activations.
    fn finish(&self, pre: &[f64], c_prev: &[f64]) -> LstmState {
        let n = self.hidden();
        let mut h = vec![0.0; n];
        let mut c = vec![0.0; n];
        for j in 0..n {
            let i = sigmoid(pre[j]);
            let f = sigmoid(pre[n + j]);
            let g = libm::tanh(pre[2 * n + j]);
            let o = sigmoid(pre[3 * n + j]);
            c[j] = f * c_prev[j] + i * g;
            h[j] = o * libm::tanh(c[j]);
        }
        LstmState { h, c }
    }

    pub fn step(&self, x: &[f64], prev: &LstmState) -> Result<LstmState> {
        self.check(x.len(), prev.h.len(), prev.c.len())?;
        let rows = 4 * self.hidden();
        let mut a = vec![0.0; rows];
        let mut b = vec![0.0; rows];
        self.w_ih.matvec_into(x, &mut a);
        self.w_hh.matvec_into(&prev.h, &mut b);
        for r in 0..rows {
            a[r] = (a[r] + b[r]) + self.bias[r];
        }
        Ok(self.finish(&a, &prev.c))
    }

    /// Advances several independent cells through this layer with one pass
    /// over the weights. Row `i` of the result equals `step(xs[i], prev[i])`
    /// bit for bit.
    pub fn step_batch(&self, xs: &[&[f64]], prev: &[&LstmState]) -> Result<Vec<LstmState>> {
        if xs.len() != prev.len() {
            return Err(Error::DimensionMismatch {
                what: "lstm batch",
                expected: xs.len(),
                found: prev.len(),
            });
        }
        for (x, p) in xs.iter().zip(prev) {
            self.check(x.len(), p.h.len(), p.c.len())?;
        }
        let rows = 4 * self.hidden();
        let mut a = vec![vec![0.0; rows]; xs.len()];
        let mut b = vec![vec![0.0; rows]; xs.len()];
        let hs: Vec<&[f64]> = prev.iter().map(|p| p.h.as_slice()).collect();
        self.w_ih.matvec_batch_into(xs, &mut a);
        self.w_hh.matvec_batch_into(&hs, &mut b);
        Ok(a
            .iter_mut()
            .zip(&b)
            .zip(prev)
            .map(|((a, b), p)| {
                for r in 0..rows {
                    a[r] = (a[r] + b[r]) + self.bias[r];
                }
                self.finish(a, &p.c)
            })
            .collect())
    }
}

/// Hidden and cell vectors of one LSTM layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

pub fn lstm_cell_step(
    layer: &LstmLayer,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let prev = LstmState {
        h: h_prev.to_vec(),
        c: c_prev.to_vec(),
    };
    let s = layer.step(x, &prev)?;
    Ok((s.h, s.c))
}
