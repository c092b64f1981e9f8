use alloc::vec;
use alloc::vec::Vec;

use super::{normalized_score, DecodeOutput, WorkCounters};
use crate::model::{encode, posterior_projected, predictor_start, predictor_step, EncoderOutput, Label, ModelWeights, BLANK};
use crate::numerics::{LogProb, Matrix};
use crate::Result;

/// Frame-synchronous greedy search with at most one emission per frame.
///
/// At each frame the argmax over blank and labels is taken (ties go to
/// blank, then the lowest label). A label is emitted and the prediction
/// network advanced; either way the decoder moves to the next frame. The
/// returned `logp` is the sum of the chosen log-posteriors.
pub fn decode_greedy(w: &ModelWeights, features: &Matrix) -> Result<DecodeOutput> {
    decode_greedy_encoded(w, &encode(w, features)?)
}

pub fn decode_greedy_encoded(w: &ModelWeights, enc: &EncoderOutput) -> Result<DecodeOutput> {
    let mut state = predictor_start(w);
    let mut labels: Vec<Label> = Vec::new();
    let mut logp = LogProb::ONE;
    let mut counters = WorkCounters::default();
    for t in 0..enc.frames() {
        let post = posterior_projected(w, enc.projection(t), &state)?;
        counters.single_posteriors += 1;
        let mut best = BLANK;
        for k in 1..post.len() {
            if post[k].value() > post[best as usize].value() {
                best = k as Label;
            }
        }
        logp = logp * post[best as usize];
        if best != BLANK {
            labels.push(best);
            state = predictor_step(w, best, &state)?;
            counters.predictor_steps += 1;
        }
    }
    Ok(DecodeOutput {
        score: normalized_score(logp, labels.len()),
        final_beam: vec![(labels.clone(), logp)],
        labels,
        logp,
        frames_processed: enc.frames(),
        wall_time: Default::default(),
        step_stats: None,
        counters,
        trace: None,
    })
}
