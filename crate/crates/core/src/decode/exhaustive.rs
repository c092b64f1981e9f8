//! Brute-force decoding for small problems: every label sequence up to a
//! length bound is scored by the forward recursion over the time/label
//! lattice. A path may emit any number of labels at a frame and leaves the
//! frame with a blank; the sequence is complete once the blank at the last
//! frame has been taken.

use alloc::vec::Vec;

use super::select_final_from;
use crate::model::{encode, posterior_projected, predictor_start, predictor_step, EncoderOutput, Label, ModelWeights, PredState, BLANK};
use crate::numerics::{log_add, LogProb, Matrix};
use crate::{Error, Result};

/// Joint-network evaluations allowed by default (sequences times frames).
pub const DEFAULT_EXHAUSTIVE_BUDGET: u128 = 5_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ExhaustiveResult {
    /// Argmax of the length-normalized score.
    pub labels: Vec<Label>,
    pub logp: LogProb,
    pub score: f64,
    /// Every sequence with `|y| <= max_len`, in depth-first label order.
    pub table: Vec<(Vec<Label>, LogProb)>,
}

impl ExhaustiveResult {
    pub fn logp_of(&self, labels: &[Label]) -> Option<LogProb> {
        self.table.iter().find(|(y, _)| y == labels).map(|(_, p)| *p)
    }
}

pub fn exhaustive_decode(w: &ModelWeights, features: &Matrix, max_len: usize) -> Result<ExhaustiveResult> {
    exhaustive_decode_encoded(w, &encode(w, features)?, max_len, DEFAULT_EXHAUSTIVE_BUDGET)
}

pub fn exhaustive_decode_encoded(
    w: &ModelWeights,
    enc: &EncoderOutput,
    max_len: usize,
    budget: u128,
) -> Result<ExhaustiveResult> {
    let frames = enc.frames();
    if frames == 0 {
        return Err(Error::Empty("feature frames"));
    }
    let k = w.config().num_labels as u128;
    let mut sequences: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=max_len {
        sequences = sequences.saturating_add(level);
        level = level.saturating_mul(k);
    }
    let evaluations = sequences.saturating_mul(frames as u128);
    if evaluations > budget {
        return Err(Error::BudgetExceeded {
            sequences,
            evaluations,
            budget,
        });
    }

    let mut search = Search {
        w,
        enc,
        max_len,
        labels: Vec::new(),
        table: Vec::new(),
    };
    let start = predictor_start(w);
    let rows = search.rows(&start)?;
    // alpha(t, 0): blanks only
    let mut alpha = Vec::with_capacity(frames);
    let mut acc = LogProb::ONE;
    for t in 0..frames {
        alpha.push(acc);
        acc = acc * rows[t][BLANK as usize];
    }
    search.visit(&start, &rows, &alpha)?;

    let (labels, logp, score) = select_final_from(search.table.iter().map(|(y, p)| (y.as_slice(), *p)))?;
    Ok(ExhaustiveResult {
        labels,
        logp,
        score,
        table: search.table,
    })
}

struct Search<'a> {
    w: &'a ModelWeights,
    enc: &'a EncoderOutput,
    max_len: usize,
    labels: Vec<Label>,
    table: Vec<(Vec<Label>, LogProb)>,
}

impl Search<'_> {
    fn rows(&self, state: &PredState) -> Result<Vec<Vec<LogProb>>> {
        (0..self.enc.frames())
            .map(|t| posterior_projected(self.w, self.enc.projection(t), state))
            .collect()
    }

    // `alpha[t]`: probability of being at frame t having emitted exactly
    // the current labels and not yet left the frame.
    fn visit(&mut self, state: &PredState, rows: &[Vec<LogProb>], alpha: &[LogProb]) -> Result<()> {
        let last = rows.len() - 1;
        self.table.push((self.labels.clone(), alpha[last] * rows[last][BLANK as usize]));
        if self.labels.len() == self.max_len {
            return Ok(());
        }
        for k in 1..=self.w.config().num_labels as Label {
            let child = predictor_step(self.w, k, state)?;
            let child_rows = self.rows(&child)?;
            let mut next = Vec::with_capacity(rows.len());
            for t in 0..rows.len() {
                let emit = alpha[t] * rows[t][k as usize];
                let stay = if t == 0 {
                    LogProb::ZERO
                } else {
                    next[t - 1] * child_rows[t - 1][BLANK as usize]
                };
                next.push(log_add(stay, emit));
            }
            self.labels.push(k);
            self.visit(&child, &child_rows, &next)?;
            self.labels.pop();
        }
        Ok(())
    }
}
