//! Straight-line reimplementations used as test oracles. Nothing here calls
//! into the decoder or network code under test except to read parameters.

#![allow(dead_code)]

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnnt_core::model::{init_model, ModelConfig};
use rnnt_core::{Label, Matrix, ModelWeights};

struct Layer {
    w_ih: Vec<Vec<f64>>,
    w_hh: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Scalar network: nested `Vec` weights, left-to-right sums.
pub struct Net {
    pub cfg: ModelConfig,
    emb: Vec<Vec<f64>>,
    enc: Vec<Layer>,
    pred: Vec<Layer>,
    w_e: Vec<Vec<f64>>,
    w_p: Vec<Vec<f64>>,
    b_z: Vec<f64>,
    w_z: Vec<Vec<f64>>,
    b_s: Vec<f64>,
}

fn reshape(data: &[f64], cols: usize) -> Vec<Vec<f64>> {
    data.chunks(cols).map(|r| r.to_vec()).collect()
}

fn mv(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| {
            let mut s = 0.0;
            for j in 0..x.len() {
                s += row[j] * x[j];
            }
            s
        })
        .collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn cell(layer: &Layer, x: &[f64], prev: &Cell) -> Cell {
    let n = prev.h.len();
    let a = mv(&layer.w_ih, x);
    let b = mv(&layer.w_hh, &prev.h);
    let pre: Vec<f64> = (0..4 * n).map(|r| a[r] + b[r] + layer.bias[r]).collect();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    for j in 0..n {
        let i = sig(pre[j]);
        let f = sig(pre[n + j]);
        let g = pre[2 * n + j].tanh();
        let o = sig(pre[3 * n + j]);
        c[j] = f * prev.c[j] + i * g;
        h[j] = o * c[j].tanh();
    }
    Cell { h, c }
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = v.iter().map(|x| (x - m).exp()).sum();
    v.iter().map(|x| x - m - s.ln()).collect()
}

pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl Net {
    pub fn new(w: &ModelWeights) -> Self {
        let cfg = *w.config();
        let layout = cfg.param_layout();
        let blocks = w.blocks();
        let mut it = layout.iter().zip(blocks);
        let mut next = || {
            let (spec, data) = it.next().unwrap();
            reshape(data, spec.cols)
        };
        let emb = next();
        let mut stack = |n: usize| -> Vec<Layer> {
            (0..n)
                .map(|_| Layer {
                    w_ih: next(),
                    w_hh: next(),
                    bias: next().concat(),
                })
                .collect()
        };
        let enc = stack(cfg.enc_layers);
        let pred = stack(cfg.pred_layers);
        let w_e = next();
        let w_p = next();
        let b_z = next().concat();
        let w_z = next();
        let b_s = next().concat();
        Net {
            cfg,
            emb,
            enc,
            pred,
            w_e,
            w_p,
            b_z,
            w_z,
            b_s,
        }
    }

    fn zero_cells(&self, n: usize) -> Vec<Cell> {
        vec![
            Cell {
                h: vec![0.0; self.cfg.enc_hidden],
                c: vec![0.0; self.cfg.enc_hidden],
            };
            n
        ]
    }

    pub fn lstm(&self, encoder: bool, layer: usize, x: &[f64], prev: &Cell) -> Cell {
        let l = if encoder { &self.enc[layer] } else { &self.pred[layer] };
        cell(l, x, prev)
    }

    pub fn encode(&self, x: &Matrix) -> Vec<Vec<f64>> {
        let mut cells = self.zero_cells(self.enc.len());
        let mut out = Vec::new();
        for t in 0..x.rows() {
            let mut input = x.row(t).to_vec();
            for (l, layer) in self.enc.iter().enumerate() {
                cells[l] = cell(layer, &input, &cells[l]);
                input = cells[l].h.clone();
            }
            out.push(input);
        }
        out
    }

    /// Prediction-network cells after feeding the start symbol then `labels`.
    pub fn pred_cells(&self, labels: &[Label]) -> Vec<Cell> {
        let mut cells = self.zero_cells(self.pred.len());
        for &k in std::iter::once(&0).chain(labels) {
            let mut input = self.emb[k as usize].clone();
            for (l, layer) in self.pred.iter().enumerate() {
                cells[l] = cell(layer, &input, &cells[l]);
                input = cells[l].h.clone();
            }
        }
        cells
    }

    pub fn posterior_from_cells(&self, h_enc: &[f64], cells: &[Cell]) -> Vec<f64> {
        let e = mv(&self.w_e, h_enc);
        let p = mv(&self.w_p, &cells.last().unwrap().h);
        let z: Vec<f64> = (0..e.len()).map(|j| (e[j] + p[j] + self.b_z[j]).tanh()).collect();
        let logits: Vec<f64> = mv(&self.w_z, &z).iter().zip(&self.b_s).map(|(a, b)| a + b).collect();
        log_softmax(&logits)
    }

    /// `log Pr(. | labels, frame)` recomputed from scratch.
    pub fn posterior(&self, h_enc: &[f64], labels: &[Label]) -> Vec<f64> {
        self.posterior_from_cells(h_enc, &self.pred_cells(labels))
    }
}

/// One label, one hidden unit. Label-dominant from the start state
/// (logits [0, 3]); after any emission the blank logit is near 10 and the
/// label logit near -7.
pub fn switching_model() -> ModelWeights {
    let blocks = vec![
        vec![0.0, 5.0],
        vec![0.0; 4],
        vec![0.0; 4],
        vec![0.0; 4],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0; 4],
        vec![0.0; 4],
        vec![0.0],
        vec![10.0],
        vec![0.0],
        vec![10.0, -10.0],
        vec![0.0, 3.0],
    ];
    ModelWeights::from_blocks(ModelConfig::tiny(1, 1, 1), blocks).unwrap()
}

/// Seeded small instance: model plus a `T x F` feature matrix.
pub fn instance(seed: u64, frames: usize, labels: usize, hidden: usize) -> (ModelWeights, Matrix) {
    let input_dim = 3;
    let w = init_model(ModelConfig::tiny(input_dim, hidden, labels), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let data = (0..frames * input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    (w, Matrix::from_vec(frames, input_dim, data).unwrap())
}

/// Same as [`instance`] with the output layer scaled so that posteriors are
/// far from uniform.
pub fn peaked_instance(seed: u64, frames: usize, labels: usize, gain: f64, blank_bias: f64) -> (ModelWeights, Matrix) {
    let (w, x) = instance(seed, frames, labels, 6);
    (w.with_output_calibration(gain, blank_bias).unwrap(), x)
}

/// Exact `log Pr(y)` for every `y` with `|y| <= max_len`, by enumerating
/// every alignment: at each lattice point either a label is emitted (stay on
/// the frame) or a blank moves to the next frame.
pub fn path_enumeration(net: &Net, x: &Matrix, max_len: usize) -> Vec<(Vec<Label>, f64)> {
    let h = net.encode(x);
    let mut table: Vec<(Vec<Label>, f64)> = Vec::new();
    let mut labels = Vec::new();
    walk(net, &h, 0, &mut labels, 0.0, max_len, &mut table);
    table
}

fn walk(
    net: &Net,
    h: &[Vec<f64>],
    t: usize,
    labels: &mut Vec<Label>,
    logp: f64,
    max_len: usize,
    table: &mut Vec<(Vec<Label>, f64)>,
) {
    if t == h.len() {
        match table.iter_mut().find(|(y, _)| y == labels) {
            Some(entry) => entry.1 = log_add(entry.1, logp),
            None => table.push((labels.clone(), logp)),
        }
        return;
    }
    let post = net.posterior(&h[t], labels);
    walk(net, h, t + 1, labels, logp + post[0], max_len, table);
    if labels.len() < max_len {
        for k in 1..post.len() {
            labels.push(k as Label);
            walk(net, h, t, labels, logp + post[k], max_len, table);
            labels.pop();
        }
    }
}

/// Length-normalized argmax with the decoders' tie-breaking.
pub fn best_normalized(table: &[(Vec<Label>, f64)]) -> (Vec<Label>, f64) {
    let mut best: Option<(Vec<Label>, f64)> = None;
    for (y, lp) in table {
        let s = lp / y.len().max(1) as f64;
        let better = match &best {
            None => true,
            Some((by, bs)) => s > *bs || (s == *bs && (y.len(), y) < (by.len(), by)),
        };
        if better {
            best = Some((y.clone(), s));
        }
    }
    best.unwrap()
}

/// One-step constrained search written out per hypothesis, recomputing every
/// prediction state from its label history.
pub fn osc_oracle(w: &ModelWeights, x: &Matrix, width: usize, alpha: usize) -> (Vec<Label>, f64) {
    let net = Net::new(w);
    let h = net.encode(x);
    let k_max = w.config().num_labels;
    let rank = |a: &(Vec<Label>, f64, usize), b: &(Vec<Label>, f64, usize)| -> Ordering {
        b.1.total_cmp(&a.1)
            .then(a.0.len().cmp(&b.0.len()))
            .then_with(|| a.0.cmp(&b.0))
            .then(a.2.cmp(&b.2))
    };
    let mut beam: Vec<(Vec<Label>, f64)> = vec![(vec![], 0.0)];
    for h_t in &h {
        let a = beam.clone();
        let mut scores = Vec::new();
        for (y, lp) in &a {
            let mut s = *lp;
            for (p, plp) in &a {
                if p.len() < y.len() && y.len() - p.len() <= alpha && y.starts_with(p) {
                    let mut term = *plp;
                    for j in p.len()..y.len() {
                        term += net.posterior(h_t, &y[..j])[y[j] as usize];
                    }
                    s = log_add(s, term);
                }
            }
            scores.push(s);
        }
        let posts: Vec<Vec<f64>> = a.iter().map(|(y, _)| net.posterior(h_t, y)).collect();
        let mut v: Vec<(Vec<Label>, f64, usize)> = Vec::new();
        for i in 0..a.len() {
            for k in 1..=k_max {
                let mut y = a[i].0.clone();
                y.push(k as Label);
                v.push((y, scores[i] + posts[i][k], i));
            }
        }
        v.sort_by(rank);
        v.truncate(width);
        v.retain(|(y, _, _)| !a.iter().any(|(z, _)| z == y));
        let mut pool: Vec<(Vec<Label>, f64, usize)> = Vec::new();
        for i in 0..a.len() {
            pool.push((a[i].0.clone(), scores[i] + posts[i][0], i));
        }
        for (y, lp, parent) in v {
            let blank = net.posterior(h_t, &y)[0];
            pool.push((y, lp + blank, parent));
        }
        pool.sort_by(rank);
        pool.truncate(width);
        beam = pool.into_iter().map(|(y, lp, _)| (y, lp)).collect();
    }
    let table: Vec<(Vec<Label>, f64)> = beam;
    let (y, _) = best_normalized(&table);
    let lp = table.iter().find(|(z, _)| *z == y).unwrap().1;
    (y, lp)
}
