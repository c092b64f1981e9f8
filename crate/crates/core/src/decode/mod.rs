//! Transducer decoders and their shared bookkeeping.
//!
//! All scores are natural-log probabilities. A hypothesis resting in a beam
//! between frames carries a *complete* score: its last factor is a blank
//! probability at the frame just consumed. Scores ending in a label factor
//! are *incomplete* and must be multiplied by a blank before they can rest.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::time::Duration;

use crate::model::{
    posterior_projected, predictor_step, EncoderOutput, Label, ModelWeights, PredState,
};
use crate::numerics::{log_add, LogProb};
use crate::{Error, Result};

mod exhaustive;
mod greedy;
mod osc;
mod reference;
mod stats;

pub use exhaustive::{exhaustive_decode, exhaustive_decode_encoded, ExhaustiveResult, DEFAULT_EXHAUSTIVE_BUDGET};
pub use greedy::{decode_greedy, decode_greedy_encoded};
pub use osc::{decode_osc, decode_osc_encoded, decode_osc_with, OscHooks};
pub use reference::{
    decode_improved, decode_improved_encoded, decode_reference, decode_reference_encoded,
    decode_improved_with, decode_reference_instrumented, decode_reference_with, ReferenceHooks, MAX_POPS_PER_FRAME,
};
pub use stats::{aggregate_step_stats, RatioTable, StepStats};

/// Node of a persistent list of prediction-network states. A hypothesis
/// points at the node for its full label history; walking `parent` yields
/// the states of every prefix without recomputation.
#[derive(Debug)]
pub struct PredNode {
    state: PredState,
    depth: usize,
    parent: Option<Rc<PredNode>>,
}

impl PredNode {
    pub fn root(state: PredState) -> Rc<Self> {
        Rc::new(PredNode {
            state,
            depth: 0,
            parent: None,
        })
    }

    pub fn child(parent: &Rc<PredNode>, state: PredState) -> Rc<Self> {
        Rc::new(PredNode {
            state,
            depth: parent.depth + 1,
            parent: Some(parent.clone()),
        })
    }

    pub fn state(&self) -> &PredState {
        &self.state
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// The node for the prefix of length `depth`.
    pub fn ancestor(self: &Rc<Self>, depth: usize) -> &Rc<PredNode> {
        assert!(depth <= self.depth);
        let mut node = self;
        while node.depth > depth {
            node = node.parent.as_ref().expect("depth > 0 has a parent");
        }
        node
    }
}

impl Drop for PredNode {
    // Unlink iteratively so long label histories cannot overflow the stack.
    fn drop(&mut self) {
        let mut next = self.parent.take();
        while let Some(node) = next {
            match Rc::try_unwrap(node) {
                Ok(mut inner) => next = inner.parent.take(),
                Err(_) => break,
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub labels: Vec<Label>,
    pub logp: LogProb,
    pub node: Rc<PredNode>,
    /// Index of the hypothesis in the previous beam this one grew from.
    pub parent_index: Option<usize>,
}

impl Hypothesis {
    pub fn empty(start: PredState) -> Self {
        Hypothesis {
            labels: Vec::new(),
            logp: LogProb::ONE,
            node: PredNode::root(start),
            parent_index: None,
        }
    }

    pub fn pred_state(&self) -> &PredState {
        &self.node.state
    }
}

/// Score-ordered, width-bounded set of hypotheses.
///
/// The one-step constrained decoder keeps its beams duplicate-free; the
/// reference decoder, like the algorithm it transcribes, can hold the same
/// label sequence twice.
#[derive(Clone, Debug)]
pub struct Beam {
    items: Vec<Hypothesis>,
    width: usize,
}

impl Beam {
    pub fn new(width: usize) -> Self {
        Beam {
            items: Vec::new(),
            width,
        }
    }

    /// Keeps the `width` best candidates under [`rank_order`].
    pub fn select(mut candidates: Vec<Hypothesis>, width: usize) -> Self {
        candidates.sort_by(|a, b| {
            rank_order(
                a.logp,
                &a.labels,
                a.parent_index.unwrap_or(0),
                b.logp,
                &b.labels,
                b.parent_index.unwrap_or(0),
            )
        });
        candidates.truncate(width);
        Beam {
            items: candidates,
            width,
        }
    }

    pub fn items(&self) -> &[Hypothesis] {
        &self.items
    }

    pub fn into_items(self) -> Vec<Hypothesis> {
        self.items
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn has_duplicates(&self) -> bool {
        has_duplicate_labels(self.items.iter().map(|h| h.labels.as_slice()))
    }
}

pub(crate) fn has_duplicate_labels<'a>(seqs: impl Iterator<Item = &'a [Label]>) -> bool {
    let mut v: Vec<&[Label]> = seqs.collect();
    v.sort();
    v.windows(2).any(|p| p[0] == p[1])
}

/// Beam ordering: higher score first, then shorter sequence, then
/// lexicographically smaller labels, then lower parent index.
pub fn rank_order(
    a_logp: LogProb,
    a_labels: &[Label],
    a_parent: usize,
    b_logp: LogProb,
    b_labels: &[Label],
    b_parent: usize,
) -> Ordering {
    b_logp
        .total_cmp(&a_logp)
        .then(a_labels.len().cmp(&b_labels.len()))
        .then_with(|| a_labels.cmp(b_labels))
        .then(a_parent.cmp(&b_parent))
}

/// [`rank_order`] for sequences given as `prefix ++ [last]` without building
/// them.
pub(crate) fn rank_order_ext(
    a: (LogProb, &[Label], Option<Label>, usize),
    b: (LogProb, &[Label], Option<Label>, usize),
) -> Ordering {
    let len = |p: &[Label], l: Option<Label>| p.len() + usize::from(l.is_some());
    b.0.total_cmp(&a.0)
        .then(len(a.1, a.2).cmp(&len(b.1, b.2)))
        .then_with(|| a.1.iter().chain(a.2.iter()).cmp(b.1.iter().chain(b.2.iter())))
        .then(a.3.cmp(&b.3))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscParams {
    pub beam: usize,
    /// Longest prefix-to-hypothesis length difference the prefix search
    /// considers. Zero disables the prefix search.
    pub alpha: usize,
}

impl OscParams {
    pub fn new(beam: usize, alpha: usize) -> Result<Self> {
        let p = OscParams { beam, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::InvalidParams("beam width must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImprovedParams {
    pub beam: usize,
    /// Labels whose log-posterior trails the best label by more than this
    /// are not expanded.
    pub expand_beam: f64,
    /// The expansion loop stops once the best complete hypothesis leads the
    /// best pending one by more than this.
    pub state_beam: f64,
}

impl ImprovedParams {
    pub const DEFAULT_EXPAND_BEAM: f64 = 2.3;
    pub const DEFAULT_STATE_BEAM: f64 = 4.6;

    pub fn new(beam: usize, expand_beam: f64, state_beam: f64) -> Result<Self> {
        let p = ImprovedParams {
            beam,
            expand_beam,
            state_beam,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_defaults(beam: usize) -> Result<Self> {
        ImprovedParams::new(beam, Self::DEFAULT_EXPAND_BEAM, Self::DEFAULT_STATE_BEAM)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::InvalidParams("beam width must be >= 1"));
        }
        if !(self.expand_beam >= 0.0) || !(self.state_beam >= 0.0) {
            return Err(Error::InvalidParams("pruning margins must be >= 0"));
        }
        Ok(())
    }
}

/// Counts of network work done by a decode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WorkCounters {
    /// Batched joint-network calls over the incoming beam (one per frame).
    pub batched_posterior_calls: usize,
    pub max_batched_posterior_width: usize,
    /// Batched prediction + blank-scoring calls for freshly expanded
    /// hypotheses.
    pub rescoring_calls: usize,
    pub max_rescoring_width: usize,
    /// Expansions not rescored because they already trailed `W` blank
    /// continuations.
    pub bound_skipped: usize,
    /// Hypotheses removed from `A` by an expansion loop.
    pub expansion_pops: usize,
    pub predictor_steps: usize,
    /// Joint-network rows evaluated one at a time.
    pub single_posteriors: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceHyp {
    pub labels: Vec<Label>,
    pub logp: LogProb,
    pub parent_index: Option<usize>,
    /// Label length of the parent in the incoming beam.
    pub parent_len: Option<usize>,
}

/// Per-frame snapshot collected when tracing is requested.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameTrace {
    /// Beam after the frame.
    pub beam: Vec<TraceHyp>,
    /// Label sequences expanded (popped, or blank-rescored) during the frame.
    pub expanded: Vec<Vec<Label>>,
    pub dropped_duplicates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutput {
    pub labels: Vec<Label>,
    /// Unnormalized log-probability of `labels`.
    pub logp: LogProb,
    /// `logp / max(|labels|, 1)`.
    pub score: f64,
    pub frames_processed: usize,
    /// Filled in by callers that own a clock; zero otherwise.
    pub wall_time: Duration,
    pub step_stats: Option<StepStats>,
    pub counters: WorkCounters,
    /// Final beam, best first.
    pub final_beam: Vec<(Vec<Label>, LogProb)>,
    pub trace: Option<Vec<FrameTrace>>,
}

pub fn normalized_score(logp: LogProb, len: usize) -> f64 {
    logp.value() / len.max(1) as f64
}

/// Highest `logp / max(|y|, 1)`; ties go to the shorter, then the
/// lexicographically smaller sequence.
pub fn select_final(beam: &[Hypothesis]) -> Result<(Vec<Label>, f64)> {
    select_final_from(beam.iter().map(|h| (h.labels.as_slice(), h.logp))).map(|(l, _, s)| (l, s))
}

pub(crate) fn select_final_from<'a>(
    items: impl Iterator<Item = (&'a [Label], LogProb)>,
) -> Result<(Vec<Label>, LogProb, f64)> {
    let mut best: Option<(&[Label], LogProb, f64)> = None;
    for (labels, logp) in items {
        let s = normalized_score(logp, labels.len());
        let better = match best {
            None => true,
            Some((bl, _, bs)) => s
                .total_cmp(&bs)
                .then(bl.len().cmp(&labels.len()))
                .then_with(|| bl.cmp(labels))
                == Ordering::Greater,
        };
        if better {
            best = Some((labels, logp, s));
        }
    }
    let (l, lp, s) = best.ok_or(Error::Empty("final beam"))?;
    Ok((l.to_vec(), lp, s))
}

/// `log Pr(full | prefix, t)`: the chain of label posteriors at one frame
/// that extends `prefix_hyp` to `full`, advancing the prediction network
/// through each intermediate prefix.
pub fn prefix_extension_logprob(
    w: &ModelWeights,
    prefix_hyp: &Hypothesis,
    full: &[Label],
    h_enc: &[f64],
) -> Result<LogProb> {
    let n = prefix_hyp.labels.len();
    if full.len() <= n || full[..n] != prefix_hyp.labels[..] {
        return Err(Error::NotAPrefix);
    }
    let proj = crate::model::project_encoder(w, h_enc)?;
    let mut state = prefix_hyp.pred_state().clone();
    let mut total = LogProb::ONE;
    for (j, &k) in full.iter().enumerate().skip(n) {
        let post = posterior_projected(w, &proj, &state)?;
        total = total * post[k as usize];
        if j + 1 < full.len() {
            state = predictor_step(w, k, &state)?;
        }
    }
    Ok(total)
}

/// Per-frame memo of joint-network rows keyed by prediction node identity.
/// Entries hold a reference to their node so addresses stay unique for the
/// life of the memo.
pub(crate) struct FramePosteriors<'a> {
    w: &'a ModelWeights,
    enc_proj: &'a [f64],
    memo: BTreeMap<usize, (Rc<PredNode>, Rc<[LogProb]>)>,
    pub evaluations: usize,
}

impl<'a> FramePosteriors<'a> {
    pub fn new(w: &'a ModelWeights, enc: &'a EncoderOutput, t: usize) -> Self {
        FramePosteriors {
            w,
            enc_proj: enc.projection(t),
            memo: BTreeMap::new(),
            evaluations: 0,
        }
    }

    pub fn insert(&mut self, node: &Rc<PredNode>, row: &[LogProb]) {
        self.memo
            .entry(Rc::as_ptr(node) as usize)
            .or_insert_with(|| (node.clone(), Rc::from(row)));
    }

    pub fn get(&mut self, node: &Rc<PredNode>) -> Result<Rc<[LogProb]>> {
        let key = Rc::as_ptr(node) as usize;
        if let Some((_, row)) = self.memo.get(&key) {
            return Ok(row.clone());
        }
        let row: Rc<[LogProb]> = posterior_projected(self.w, self.enc_proj, &node.state)?.into();
        self.evaluations += 1;
        self.memo.insert(key, (node.clone(), row.clone()));
        Ok(row)
    }
}

/// Prefix search over a beam: every hypothesis absorbs the probability of
/// reaching it within this frame from each shorter beam member that is a
/// prefix of it, limited to length differences `<= max_diff`. Uses the
/// scores as they stand entering the frame. Calls `on_pair` with each
/// length difference considered.
pub(crate) fn prefix_search(
    beam: &[Hypothesis],
    max_diff: usize,
    cache: &mut FramePosteriors<'_>,
    mut on_pair: impl FnMut(usize),
) -> Result<Vec<LogProb>> {
    let mut out = Vec::with_capacity(beam.len());
    let mut prefixes: Vec<usize> = Vec::new();
    let mut factors: Vec<LogProb> = Vec::new();
    for y in beam {
        let ly = y.labels.len();
        prefixes.clear();
        prefixes.extend(beam.iter().enumerate().filter_map(|(i, p)| {
            let lp = p.labels.len();
            (lp < ly && ly - lp <= max_diff && y.labels[..lp] == p.labels[..]).then_some(i)
        }));
        let Some(shortest) = prefixes.iter().map(|&i| beam[i].labels.len()).min() else {
            out.push(y.logp);
            continue;
        };
        // factors[j - shortest] = log Pr(y_j | y_..j, t)
        factors.clear();
        factors.resize(ly - shortest, LogProb::ZERO);
        let mut node = y.node.ancestor(ly - 1);
        for j in (shortest..ly).rev() {
            let row = cache.get(node)?;
            factors[j - shortest] = row[y.labels[j] as usize];
            if j > shortest {
                node = node.parent.as_ref().expect("depth > 0 has a parent");
            }
        }
        let mut acc = y.logp;
        for &i in &prefixes {
            let p = &beam[i];
            let lp = p.labels.len();
            on_pair(ly - lp);
            let mut term = p.logp;
            for f in &factors[lp - shortest..] {
                term = term * *f;
            }
            acc = log_add(acc, term);
        }
        out.push(acc);
    }
    Ok(out)
}
