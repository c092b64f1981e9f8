//! Error rates and timing statistics.

use alloc::vec;
use alloc::vec::Vec;
use core::time::Duration;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditOps {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditOps {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

impl core::ops::Add for EditOps {
    type Output = EditOps;

    fn add(self, o: EditOps) -> EditOps {
        EditOps {
            substitutions: self.substitutions + o.substitutions,
            insertions: self.insertions + o.insertions,
            deletions: self.deletions + o.deletions,
        }
    }
}

/// Levenshtein alignment of `hyp` against `reference`.
///
/// A deletion is a reference token missing from the hypothesis, an insertion
/// an extra hypothesis token. When several alignments share the minimal
/// cost the backtrace prefers substitution, then deletion, then insertion.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> EditOps {
    let (n, m) = (hyp.len(), reference.len());
    let width = m + 1;
    let mut d = vec![0usize; (n + 1) * width];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * width] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * width + j - 1] + usize::from(hyp[i - 1] != reference[j - 1]);
            let del = d[i * width + j - 1] + 1;
            let ins = d[(i - 1) * width + j] + 1;
            d[i * width + j] = sub.min(del).min(ins);
        }
    }
    let mut ops = EditOps::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let same = hyp[i - 1] == reference[j - 1];
            if d[(i - 1) * width + j - 1] + usize::from(!same) == here {
                if !same {
                    ops.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i * width + j - 1] + 1 == here {
            ops.deletions += 1;
            j -= 1;
        } else {
            ops.insertions += 1;
            i -= 1;
        }
    }
    ops
}

/// `total / ref_len`. An empty reference counts as length one so a
/// degenerate entry still yields a finite rate.
pub fn error_rate(ops: &EditOps, ref_len: usize) -> f64 {
    ops.total() as f64 / ref_len.max(1) as f64
}

/// Pooled rate over a corpus: summed edits over summed reference lengths.
pub fn corpus_error_rate(items: &[(EditOps, usize)]) -> f64 {
    let edits: usize = items.iter().map(|(o, _)| o.total()).sum();
    let len: usize = items.iter().map(|(_, l)| l).sum();
    error_rate(
        &EditOps {
            substitutions: edits,
            ..EditOps::default()
        },
        len,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingSample {
    pub wall_time: Duration,
    pub audio_duration: Duration,
}

/// Real-time factor: processing time over audio duration.
pub fn rtf(s: &TimingSample) -> Result<f64> {
    if s.audio_duration.is_zero() || s.wall_time.is_zero() {
        return Err(Error::NonPositiveDuration);
    }
    Ok(s.wall_time.as_secs_f64() / s.audio_duration.as_secs_f64())
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p/100 * n)`,
/// clamped to `[1, n]`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile values"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidPercentile);
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = libm::ceil(p / 100.0 * n as f64) as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}
