mod common;

use common::{instance, osc_oracle, peaked_instance};
use rnnt_core::decode::{decode_greedy, decode_osc, decode_osc_with, OscHooks, OscParams};
use rnnt_core::model::{encode, ModelConfig};
use rnnt_core::{Label, Matrix, ModelWeights};

#[test]
fn matches_unbatched_transliteration() {
    let mut n = 0;
    for seed in 0..120u64 {
        let frames = 1 + (seed % 8) as usize;
        let labels = 1 + (seed % 5) as usize;
        let width = 1 + (seed % 8) as usize;
        let alpha = 1 + (seed % 2) as usize;
        let (w, x) = if seed % 3 == 0 {
            peaked_instance(seed, frames, labels, 6.0, 1.0)
        } else {
            instance(seed, frames, labels, 5)
        };
        let got = decode_osc(&w, &x, OscParams::new(width, alpha).unwrap()).unwrap();
        let (labels_want, logp_want) = osc_oracle(&w, &x, width, alpha);
        assert_eq!(got.labels, labels_want, "seed {seed}");
        assert!((got.logp.value() - logp_want).abs() < 1e-9, "seed {seed}");
        n += 1;
    }
    assert!(n >= 100);
}

#[test]
fn example_instance_matches_transliteration() {
    let (w, x) = instance(42, 3, 2, 6);
    let got = decode_osc(&w, &x, OscParams::new(4, 2).unwrap()).unwrap();
    let (labels, logp) = osc_oracle(&w, &x, 4, 2);
    assert_eq!(got.labels, labels);
    assert!((got.logp.value() - logp).abs() < 1e-9);
}

#[test]
fn unbatched_hook_is_bit_identical() {
    for seed in 0..30u64 {
        let (w, x) = peaked_instance(seed, 6, 4, 5.0, 1.5);
        let enc = encode(&w, &x).unwrap();
        let p = OscParams::new(1 + (seed % 6) as usize, 2).unwrap();
        let a = decode_osc_with(&w, &enc, p, OscHooks::default()).unwrap();
        let hooks = OscHooks {
            unbatched: true,
            ..Default::default()
        };
        let b = decode_osc_with(&w, &enc, p, hooks).unwrap();
        assert_eq!(a.final_beam, b.final_beam);
    }
}

fn traced(w: &ModelWeights, x: &Matrix, p: OscParams, skip_dedup: bool) -> Vec<rnnt_core::decode::FrameTrace> {
    let hooks = OscHooks {
        collect_trace: true,
        skip_duplication_check: skip_dedup,
        ..Default::default()
    };
    decode_osc_with(w, &encode(w, x).unwrap(), p, hooks).unwrap().trace.unwrap()
}

#[test]
fn width_one_step_and_distinctness_hold_every_frame() {
    for seed in 0..40u64 {
        let (w, x) = peaked_instance(seed, 7, 3, 4.0, 0.5);
        let p = OscParams::new(1 + (seed % 7) as usize, 1 + (seed % 3) as usize).unwrap();
        for frame in traced(&w, &x, p, false) {
            assert!(frame.beam.len() <= p.beam);
            assert!(frame.expanded.len() <= p.beam);
            for h in &frame.beam {
                assert!(h.labels.len() <= h.parent_len.unwrap() + 1);
            }
            let mut seqs: Vec<&Vec<Label>> = frame.beam.iter().map(|h| &h.labels).collect();
            seqs.sort();
            seqs.dedup();
            assert_eq!(seqs.len(), frame.beam.len());
        }
    }
}

#[test]
fn disabling_the_duplication_check_admits_duplicates() {
    // Three symbols with flat posteriors: at the second frame the empty
    // hypothesis re-expands into [1], which is already resting in the beam.
    let w = ModelWeights::bias_only(ModelConfig::tiny(2, 3, 2), &[0.0, 0.0, 0.0]).unwrap();
    let x = Matrix::zeros(3, 2);
    let p = OscParams::new(4, 1).unwrap();
    let with_dups = traced(&w, &x, p, true);
    let dup_frames = with_dups
        .iter()
        .filter(|f| {
            let mut s: Vec<&Vec<Label>> = f.beam.iter().map(|h| &h.labels).collect();
            s.sort();
            s.windows(2).any(|p| p[0] == p[1])
        })
        .count();
    assert!(dup_frames > 0);
    let clean = traced(&w, &x, p, false);
    assert!(clean[1].dropped_duplicates > 0);
}

#[test]
fn work_is_one_batched_call_of_each_kind_per_frame() {
    for seed in 0..20u64 {
        let t = 3 + (seed % 6) as usize;
        let (w, x) = peaked_instance(seed, t, 4, 4.0, 1.0);
        let p = OscParams::new(1 + (seed % 8) as usize, 2).unwrap();
        let out = decode_osc(&w, &x, p).unwrap();
        let c = out.counters;
        assert_eq!(c.batched_posterior_calls, t);
        assert!(c.max_batched_posterior_width <= p.beam);
        assert!(c.rescoring_calls <= t);
        assert!(c.max_rescoring_width <= p.beam);
        assert_eq!(c.expansion_pops, 0);
    }
}

#[test]
fn blank_dominant_gives_empty_output() {
    let logits = [2.0f64, -1.0, -1.5];
    let w = ModelWeights::bias_only(ModelConfig::tiny(2, 3, 2), &logits).unwrap();
    let p_blank = common::log_softmax(&logits)[0];
    for (width, alpha) in [(1, 0), (3, 1), (8, 2)] {
        let out = decode_osc(&w, &Matrix::zeros(5, 2), OscParams::new(width, alpha).unwrap()).unwrap();
        assert!(out.labels.is_empty());
        // prefix search only ever adds mass to longer hypotheses
        assert!((out.logp.value() - 5.0 * p_blank).abs() < 1e-12);
    }
}

#[test]
fn alpha_zero_equals_skipped_prefix_search() {
    for seed in 0..20u64 {
        let (w, x) = peaked_instance(seed, 6, 3, 4.0, 0.0);
        let enc = encode(&w, &x).unwrap();
        let p = OscParams::new(5, 0).unwrap();
        let a = decode_osc_with(&w, &enc, p, OscHooks::default()).unwrap();
        let hooks = OscHooks {
            skip_prefix_search: true,
            ..Default::default()
        };
        let b = decode_osc_with(&w, &enc, OscParams::new(5, 3).unwrap(), hooks).unwrap();
        assert_eq!(a.final_beam, b.final_beam);
    }
}

#[test]
fn width_one_agrees_with_greedy_when_blank_follows_emissions() {
    // Greedy compares Pr(blank) with Pr(k*); width-one OSC compares Pr(blank)
    // with Pr(k*) Pr(blank | y + k*). They agree when blank dominates
    // throughout, and when blank is near certain right after an emission.
    let x = Matrix::zeros(5, 1);
    let w = ModelWeights::bias_only(ModelConfig::tiny(1, 3, 2), &[1.0, 0.5, 0.0]).unwrap();
    let g = decode_greedy(&w, &x).unwrap();
    let o = decode_osc(&w, &x, OscParams::new(1, 1).unwrap()).unwrap();
    assert!(g.labels.is_empty());
    assert_eq!(g.labels, o.labels);

    let w = common::switching_model();
    let g = decode_greedy(&w, &x).unwrap();
    let o = decode_osc(&w, &x, OscParams::new(1, 1).unwrap()).unwrap();
    assert_eq!(g.labels, vec![1]);
    assert_eq!(g.labels, o.labels);
}

#[test]
fn width_one_diverges_from_greedy_on_label_dominant_bias_only() {
    // Greedy emits every frame; width-one OSC never does, since
    // Pr(k) Pr(blank) < Pr(blank) when the posterior ignores history.
    let w = ModelWeights::bias_only(ModelConfig::tiny(2, 3, 2), &[0.0, 2.0, 0.0]).unwrap();
    let x = Matrix::zeros(5, 2);
    let g = decode_greedy(&w, &x).unwrap();
    let o = decode_osc(&w, &x, OscParams::new(1, 1).unwrap()).unwrap();
    assert_eq!(g.labels, vec![1; 5]);
    assert!(o.labels.is_empty());
}
