//! Frame-synchronous beam search with an open-ended expansion loop, and the
//! variant with expansion and state pruning.
//!
//! Per frame, the incoming beam `A` first absorbs prefix probabilities (no
//! length cap). Then the most probable member of `A` is popped repeatedly:
//! its blank continuation goes to `B` and every label extension goes back
//! into `A` with an incomplete score. The loop runs until `B` holds `W`
//! hypotheses more probable than anything left in `A`. No duplication check
//! is made, so `B` may hold the same label sequence twice.

use alloc::collections::BinaryHeap;
use alloc::rc::Rc;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use super::{
    normalized_score, prefix_search, rank_order, select_final_from, Beam, DecodeOutput, FramePosteriors,
    FrameTrace, Hypothesis, ImprovedParams, PredNode, StepStats, TraceHyp, WorkCounters,
};
use crate::model::{encode, predictor_start, predictor_step, EncoderOutput, Label, ModelWeights, BLANK};
use crate::numerics::{LogProb, Matrix};
use crate::{Error, Result};

/// Pops allowed per frame before the loop is declared runaway.
pub const MAX_POPS_PER_FRAME: usize = 1 << 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReferenceHooks {
    /// Fill [`DecodeOutput::step_stats`].
    pub instrument: bool,
    pub collect_trace: bool,
}

pub fn decode_reference(w: &ModelWeights, features: &Matrix, width: usize) -> Result<DecodeOutput> {
    decode_reference_with(w, &encode(w, features)?, width, ReferenceHooks::default())
}

pub fn decode_reference_encoded(w: &ModelWeights, enc: &EncoderOutput, width: usize) -> Result<DecodeOutput> {
    decode_reference_with(w, enc, width, ReferenceHooks::default())
}

/// [`decode_reference`] with expansion and prefix histograms collected.
pub fn decode_reference_instrumented(w: &ModelWeights, features: &Matrix, width: usize) -> Result<DecodeOutput> {
    let hooks = ReferenceHooks {
        instrument: true,
        ..Default::default()
    };
    decode_reference_with(w, &encode(w, features)?, width, hooks)
}

pub fn decode_reference_with(
    w: &ModelWeights,
    enc: &EncoderOutput,
    width: usize,
    hooks: ReferenceHooks,
) -> Result<DecodeOutput> {
    if width == 0 {
        return Err(Error::InvalidParams("beam width must be >= 1"));
    }
    run(w, enc, width, None, hooks)
}

pub fn decode_improved(w: &ModelWeights, features: &Matrix, params: ImprovedParams) -> Result<DecodeOutput> {
    decode_improved_with(w, &encode(w, features)?, params, ReferenceHooks::default())
}

pub fn decode_improved_encoded(w: &ModelWeights, enc: &EncoderOutput, params: ImprovedParams) -> Result<DecodeOutput> {
    decode_improved_with(w, enc, params, ReferenceHooks::default())
}

/// The expansion loop with two prunes: a label is pushed only if its
/// log-posterior is within `expand_beam` of the best label (the best is
/// always pushed), and the loop exits once the best hypothesis in `B` leads
/// the best remaining in `A` by more than `state_beam`.
pub fn decode_improved_with(
    w: &ModelWeights,
    enc: &EncoderOutput,
    params: ImprovedParams,
    hooks: ReferenceHooks,
) -> Result<DecodeOutput> {
    params.validate()?;
    run(w, enc, params.beam, Some((params.expand_beam, params.state_beam)), hooks)
}

enum Source {
    Resting(usize),
    Grown { parent: Rc<PredNode>, label: Label },
}

struct Pending {
    logp: LogProb,
    labels: Vec<Label>,
    root: usize,
    src: Source,
}

// Max-heap order: the better hypothesis compares greater.
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(other.logp, &other.labels, other.root, self.logp, &self.labels, self.root)
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

#[derive(Clone, Copy, PartialEq)]
struct Score(LogProb);

impl Eq for Score {}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn run(
    w: &ModelWeights,
    enc: &EncoderOutput,
    width: usize,
    margins: Option<(f64, f64)>,
    hooks: ReferenceHooks,
) -> Result<DecodeOutput> {
    let num_labels = w.config().num_labels;
    let mut counters = WorkCounters::default();
    let mut stats = hooks.instrument.then(StepStats::default);
    let mut trace: Option<Vec<FrameTrace>> = hooks.collect_trace.then(Vec::new);

    let mut beam = alloc::vec![Hypothesis::empty(predictor_start(w))];

    for t in 0..enc.frames() {
        let a = core::mem::take(&mut beam);
        let mut cache = FramePosteriors::new(w, enc, t);

        let scores = prefix_search(&a, usize::MAX, &mut cache, |d| {
            if let Some(s) = stats.as_mut() {
                s.record_prefix(d);
            }
        })?;

        let mut pending: BinaryHeap<Pending> = a
            .iter()
            .zip(&scores)
            .enumerate()
            .map(|(i, (h, &logp))| Pending {
                logp,
                labels: h.labels.clone(),
                root: i,
                src: Source::Resting(i),
            })
            .collect();
        let mut b: Vec<Hypothesis> = Vec::new();
        // The W best scores in B, worst on top.
        let mut top: BinaryHeap<Reverse<Score>> = BinaryHeap::with_capacity(width + 1);
        let mut best_b = LogProb::ZERO;
        let mut explored: Vec<Vec<Label>> = Vec::new();
        let mut pops = 0usize;

        while let Some(max_a) = pending.peek().map(|p| p.logp) {
            if top.len() == width && top.peek().is_some_and(|r| r.0 .0 > max_a) {
                break;
            }
            if let Some((_, state_beam)) = margins {
                if !b.is_empty() && best_b.value() > max_a.value() + state_beam {
                    break;
                }
            }
            pops += 1;
            if pops > MAX_POPS_PER_FRAME {
                return Err(Error::IterationCap { frame: t, pops });
            }
            let y = pending.pop().expect("peeked");
            let node = match y.src {
                Source::Resting(i) => a[i].node.clone(),
                Source::Grown { parent, label } => {
                    counters.predictor_steps += 1;
                    PredNode::child(&parent, predictor_step(w, label, parent.state())?)
                }
            };
            let post = cache.get(&node)?;

            let done = y.logp * post[BLANK as usize];
            if top.len() < width {
                top.push(Reverse(Score(done)));
            } else if top.peek().is_some_and(|r| done.value() > r.0 .0.value()) {
                top.pop();
                top.push(Reverse(Score(done)));
            }
            if done.value() > best_b.value() {
                best_b = done;
            }

            let threshold = match margins {
                Some((expand_beam, _)) => {
                    let best = post[1..].iter().map(|p| p.value()).fold(f64::NEG_INFINITY, f64::max);
                    best - expand_beam
                }
                None => f64::NEG_INFINITY,
            };
            let argmax = (1..=num_labels)
                .reduce(|m, k| if post[k].value() > post[m].value() { k } else { m })
                .expect("at least one label");
            for k in 1..=num_labels {
                let keep = k == argmax || (margins.is_none() || post[k].value() > threshold);
                if !keep {
                    continue;
                }
                let logp = y.logp * post[k];
                // Strictly below the W-th best in B: can never be popped.
                if top.len() == width && top.peek().is_some_and(|r| logp.value() < r.0 .0.value()) {
                    continue;
                }
                let mut labels = y.labels.clone();
                labels.push(k as Label);
                pending.push(Pending {
                    logp,
                    labels,
                    root: y.root,
                    src: Source::Grown {
                        parent: node.clone(),
                        label: k as Label,
                    },
                });
            }

            if trace.is_some() {
                explored.push(y.labels.clone());
            }
            b.push(Hypothesis {
                labels: y.labels,
                logp: done,
                node,
                parent_index: Some(y.root),
            });
        }
        counters.expansion_pops += pops;
        counters.single_posteriors += cache.evaluations;

        beam = Beam::select(b, width).into_items();

        if let Some(s) = stats.as_mut() {
            for h in &beam {
                let root = h.parent_index.expect("every member has a root");
                s.record_expansion(h.labels.len() - a[root].labels.len());
            }
        }
        if let Some(trace) = trace.as_mut() {
            trace.push(FrameTrace {
                beam: beam
                    .iter()
                    .map(|h| TraceHyp {
                        labels: h.labels.clone(),
                        logp: h.logp,
                        parent_index: h.parent_index,
                        parent_len: h.parent_index.map(|i| a[i].labels.len()),
                    })
                    .collect(),
                expanded: explored,
                dropped_duplicates: 0,
            });
        }
    }

    let (labels, logp, score) = select_final_from(beam.iter().map(|h| (h.labels.as_slice(), h.logp)))?;
    debug_assert_eq!(score, normalized_score(logp, labels.len()));
    Ok(DecodeOutput {
        labels,
        logp,
        score,
        frames_processed: enc.frames(),
        wall_time: Default::default(),
        step_stats: stats,
        counters,
        final_beam: beam.iter().map(|h| (h.labels.clone(), h.logp)).collect(),
        trace,
    })
}
