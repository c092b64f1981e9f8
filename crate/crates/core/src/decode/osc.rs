//! One-step constrained beam search.
//!
//! Each hypothesis may grow by at most one label per frame, so every frame
//! has the same shape:
//!
//! 1. constrained prefix search over the incoming beam `A`;
//! 2. one batched joint-network call for all of `A`;
//! 3. split into blank continuations `S` (complete) and the `|A| * |K|`
//!    label expansions `V` (incomplete);
//! 4. keep the top `W` of `V` (local pruning);
//! 5. drop expansions whose label sequence is already in `A`;
//! 6. one batched prediction step plus joint call to multiply the survivors
//!    by their blank probability;
//! 7. keep the top `W` of `S` and the rescored expansions (global pruning).
//!
//! There is no data-dependent loop: the work per frame is bounded by the
//! beam width alone.

use alloc::vec::Vec;

use super::{
    has_duplicate_labels, normalized_score, prefix_search, rank_order_ext, select_final_from, DecodeOutput,
    FramePosteriors, FrameTrace, Hypothesis, OscParams, PredNode, TraceHyp, WorkCounters,
};
use crate::model::{
    batched_posterior_projected, batched_predictor_step, encode, posterior_projected, predictor_start,
    predictor_step, EncoderOutput, Label, ModelWeights, PosteriorMatrix, PredState, BLANK,
};
use crate::numerics::{LogProb, Matrix};
use crate::Result;

/// Switches for validation runs. The default is the production decoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OscHooks {
    /// Keep expansions that duplicate a member of the incoming beam.
    pub skip_duplication_check: bool,
    /// Skip the prefix search regardless of `alpha`.
    pub skip_prefix_search: bool,
    /// Evaluate network rows one hypothesis at a time instead of batched.
    pub unbatched: bool,
    pub collect_trace: bool,
}

pub fn decode_osc(w: &ModelWeights, features: &Matrix, params: OscParams) -> Result<DecodeOutput> {
    params.validate()?;
    decode_osc_with(w, &encode(w, features)?, params, OscHooks::default())
}

pub fn decode_osc_encoded(w: &ModelWeights, enc: &EncoderOutput, params: OscParams) -> Result<DecodeOutput> {
    decode_osc_with(w, enc, params, OscHooks::default())
}

#[derive(Clone, Copy)]
struct Expansion {
    logp: LogProb,
    parent: usize,
    label: Label,
}

enum Source {
    Stay(usize),
    Grown(usize),
}

fn joint_rows(
    w: &ModelWeights,
    enc_proj: &[f64],
    states: &[&PredState],
    unbatched: bool,
) -> Result<PosteriorMatrix> {
    if !unbatched {
        return batched_posterior_projected(w, enc_proj, states);
    }
    let rows: Vec<Vec<LogProb>> = states
        .iter()
        .map(|s| posterior_projected(w, enc_proj, s))
        .collect::<Result<_>>()?;
    PosteriorMatrix::from_rows(rows)
}

pub fn decode_osc_with(
    w: &ModelWeights,
    enc: &EncoderOutput,
    params: OscParams,
    hooks: OscHooks,
) -> Result<DecodeOutput> {
    params.validate()?;
    let width = params.beam;
    let num_labels = w.config().num_labels;
    let mut counters = WorkCounters::default();
    let mut trace: Option<Vec<FrameTrace>> = hooks.collect_trace.then(Vec::new);

    let mut beam = alloc::vec![Hypothesis::empty(predictor_start(w))];

    for t in 0..enc.frames() {
        let a = core::mem::take(&mut beam);
        let enc_proj = enc.projection(t);
        let mut cache = FramePosteriors::new(w, enc, t);

        // Joint network over the whole incoming beam.
        let states: Vec<&PredState> = a.iter().map(|h| h.pred_state()).collect();
        let post = joint_rows(w, enc_proj, &states, hooks.unbatched)?;
        counters.batched_posterior_calls += 1;
        counters.max_batched_posterior_width = counters.max_batched_posterior_width.max(a.len());
        for (i, h) in a.iter().enumerate() {
            cache.insert(&h.node, post.row(i));
        }

        // Constrained prefix search on the scores entering this frame.
        let scores: Vec<LogProb> = if params.alpha > 0 && !hooks.skip_prefix_search {
            prefix_search(&a, params.alpha, &mut cache, |_| {})?
        } else {
            a.iter().map(|h| h.logp).collect()
        };
        counters.single_posteriors += cache.evaluations;

        // Incomplete expansion scores, then local pruning to the top W.
        let mut expansions: Vec<Expansion> = Vec::with_capacity(a.len() * num_labels);
        for (i, s) in scores.iter().enumerate() {
            let row = post.row(i);
            for k in 1..=num_labels {
                expansions.push(Expansion {
                    logp: *s * row[k],
                    parent: i,
                    label: k as Label,
                });
            }
        }
        let cmp = |x: &Expansion, y: &Expansion| {
            rank_order_ext(
                (x.logp, &a[x.parent].labels, Some(x.label), x.parent),
                (y.logp, &a[y.parent].labels, Some(y.label), y.parent),
            )
        };
        if expansions.len() > width {
            expansions.select_nth_unstable_by(width - 1, cmp);
            expansions.truncate(width);
        }
        expansions.sort_by(cmp);

        // Duplication check: an expansion already present in A is dropped.
        let before = expansions.len();
        if !hooks.skip_duplication_check {
            expansions.retain(|e| {
                let parent = &a[e.parent].labels;
                !a.iter().any(|h| {
                    h.labels.len() == parent.len() + 1
                        && h.labels.last() == Some(&e.label)
                        && h.labels[..parent.len()] == parent[..]
                })
            });
        }
        let dropped = before - expansions.len();

        // Blank rescoring can only lower a score. An expansion already below
        // the W-th best blank continuation cannot survive global pruning, so
        // its prediction step is skipped without changing the result.
        let stay: Vec<LogProb> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| *s * post.get(i, BLANK))
            .collect();
        if stay.len() >= width {
            let mut sorted = stay.clone();
            sorted.select_nth_unstable_by(width - 1, |x, y| y.total_cmp(x));
            let floor = sorted[width - 1];
            let n = expansions.len();
            expansions.retain(|e| e.logp.value() >= floor.value());
            counters.bound_skipped += n - expansions.len();
        }

        // Blank rescoring of the surviving expansions.
        let mut grown_states: Vec<PredState> = Vec::new();
        let mut grown_scores: Vec<LogProb> = Vec::new();
        if !expansions.is_empty() {
            let labels: Vec<Label> = expansions.iter().map(|e| e.label).collect();
            let parents: Vec<&PredState> = expansions.iter().map(|e| a[e.parent].pred_state()).collect();
            grown_states = if hooks.unbatched {
                labels
                    .iter()
                    .zip(&parents)
                    .map(|(&k, s)| predictor_step(w, k, s))
                    .collect::<Result<_>>()?
            } else {
                batched_predictor_step(w, &labels, &parents)?
            };
            let refs: Vec<&PredState> = grown_states.iter().collect();
            let blank = joint_rows(w, enc_proj, &refs, hooks.unbatched)?;
            grown_scores = expansions
                .iter()
                .enumerate()
                .map(|(n, e)| e.logp * blank.get(n, BLANK))
                .collect();
            counters.rescoring_calls += 1;
            counters.max_rescoring_width = counters.max_rescoring_width.max(expansions.len());
            counters.predictor_steps += expansions.len();
        }

        // Global pruning over blank continuations and rescored expansions.
        let mut pool: Vec<(LogProb, Source)> = Vec::with_capacity(a.len() + expansions.len());
        for (i, s) in stay.iter().enumerate() {
            pool.push((*s, Source::Stay(i)));
        }
        for (n, s) in grown_scores.iter().enumerate() {
            pool.push((*s, Source::Grown(n)));
        }
        let key = |src: &Source| match *src {
            Source::Stay(i) => (a[i].labels.as_slice(), None, i),
            Source::Grown(n) => {
                let e = &expansions[n];
                (a[e.parent].labels.as_slice(), Some(e.label), e.parent)
            }
        };
        pool.sort_by(|x, y| {
            let (xl, xk, xp) = key(&x.1);
            let (yl, yk, yp) = key(&y.1);
            rank_order_ext((x.0, xl, xk, xp), (y.0, yl, yk, yp))
        });
        pool.truncate(width);

        let mut grown_states: Vec<Option<PredState>> = grown_states.into_iter().map(Some).collect();
        for (logp, src) in pool {
            let h = match src {
                Source::Stay(i) => Hypothesis {
                    labels: a[i].labels.clone(),
                    logp,
                    node: a[i].node.clone(),
                    parent_index: Some(i),
                },
                Source::Grown(n) => {
                    let e = expansions[n];
                    let mut labels = a[e.parent].labels.clone();
                    labels.push(e.label);
                    let state = grown_states[n].take().expect("each expansion used once");
                    Hypothesis {
                        labels,
                        logp,
                        node: PredNode::child(&a[e.parent].node, state),
                        parent_index: Some(e.parent),
                    }
                }
            };
            beam.push(h);
        }

        debug_assert!(beam.len() <= width);
        debug_assert!(beam
            .iter()
            .all(|h| h.labels.len() <= a[h.parent_index.unwrap()].labels.len() + 1));
        debug_assert!(
            hooks.skip_duplication_check || !has_duplicate_labels(beam.iter().map(|h| h.labels.as_slice()))
        );

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
                expanded: expansions
                    .iter()
                    .map(|e| {
                        let mut l = a[e.parent].labels.clone();
                        l.push(e.label);
                        l
                    })
                    .collect(),
                dropped_duplicates: dropped,
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
        step_stats: None,
        counters,
        final_beam: beam.iter().map(|h| (h.labels.clone(), h.logp)).collect(),
        trace,
    })
}
