use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Expansion and prefix-search histograms of an instrumented decode.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    /// Labels added within one frame by a hypothesis of the outgoing beam,
    /// relative to the incoming hypothesis it grew from, to occurrences.
    /// Zero expansions are recorded too.
    pub expansion_counts: BTreeMap<usize, u64>,
    /// `|y| - |prefix|` for every beam member `y` and every beam member
    /// that is a strict prefix of it, to occurrences.
    pub prefix_len_diffs: BTreeMap<usize, u64>,
}

impl StepStats {
    pub fn record_expansion(&mut self, n: usize) {
        *self.expansion_counts.entry(n).or_default() += 1;
    }

    pub fn record_prefix(&mut self, diff: usize) {
        *self.prefix_len_diffs.entry(diff).or_default() += 1;
    }

    pub fn merge(&mut self, other: &StepStats) {
        for (&k, &v) in &other.expansion_counts {
            *self.expansion_counts.entry(k).or_default() += v;
        }
        for (&k, &v) in &other.prefix_len_diffs {
            *self.prefix_len_diffs.entry(k).or_default() += v;
        }
    }
}

/// Percentage tables, one `(bucket, percent)` row per observed bucket.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatioTable {
    /// Excludes the zero-expansion bucket.
    pub expansion: Vec<(usize, f64)>,
    pub prefix: Vec<(usize, f64)>,
    /// Occurrences of frames-hypotheses that expanded zero times.
    pub zero_expansions: u64,
}

fn to_percent(hist: &BTreeMap<usize, u64>, skip_zero: bool) -> Vec<(usize, f64)> {
    let rows: Vec<(usize, u64)> = hist
        .iter()
        .filter(|&(&k, &v)| v > 0 && !(skip_zero && k == 0))
        .map(|(&k, &v)| (k, v))
        .collect();
    let total: u64 = rows.iter().map(|(_, v)| v).sum();
    rows.into_iter()
        .map(|(k, v)| (k, (v as f64 * 100.0) / total as f64))
        .collect()
}

/// Merges histograms and normalizes each to percent of its occurrences.
pub fn aggregate_step_stats(stats: &[StepStats]) -> Result<RatioTable> {
    let mut merged = StepStats::default();
    for s in stats {
        merged.merge(s);
    }
    let any = merged
        .expansion_counts
        .values()
        .chain(merged.prefix_len_diffs.values())
        .any(|&v| v > 0);
    if !any {
        return Err(Error::Empty("step statistics"));
    }
    Ok(RatioTable {
        expansion: to_percent(&merged.expansion_counts, true),
        prefix: to_percent(&merged.prefix_len_diffs, false),
        zero_expansions: merged.expansion_counts.get(&0).copied().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn hist(pairs: &[(usize, u64)]) -> BTreeMap<usize, u64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn expansion_fixture_reproduces_percentages() {
        let s = StepStats {
            expansion_counts: hist(&[(0, 123), (1, 9773), (2, 224), (3, 3)]),
            prefix_len_diffs: hist(&[(1, 8442), (2, 1393), (3, 165)]),
        };
        let t = aggregate_step_stats(&[s]).unwrap();
        assert_eq!(t.expansion, vec![(1, 97.73), (2, 2.24), (3, 0.03)]);
        assert_eq!(t.prefix, vec![(1, 84.42), (2, 13.93), (3, 1.65)]);
        assert_eq!(t.zero_expansions, 123);
    }

    #[test]
    fn single_bucket_is_hundred_percent() {
        let s = StepStats {
            expansion_counts: hist(&[(1, 5)]),
            ..Default::default()
        };
        let t = aggregate_step_stats(&[s]).unwrap();
        assert_eq!(t.expansion, vec![(1, 100.0)]);
        assert!(t.prefix.is_empty());
    }

    #[test]
    fn merging_sums_counts() {
        let a = StepStats {
            expansion_counts: hist(&[(1, 3)]),
            ..Default::default()
        };
        let b = StepStats {
            expansion_counts: hist(&[(1, 1), (2, 4)]),
            ..Default::default()
        };
        let t = aggregate_step_stats(&[a, b]).unwrap();
        assert_eq!(t.expansion, vec![(1, 50.0), (2, 50.0)]);
    }

    #[test]
    fn all_empty_is_error() {
        assert!(aggregate_step_stats(&[]).is_err());
        assert!(aggregate_step_stats(&[StepStats::default()]).is_err());
    }

    #[test]
    fn zero_only_expansions_leave_table_empty() {
        let s = StepStats {
            expansion_counts: hist(&[(0, 7)]),
            ..Default::default()
        };
        let t = aggregate_step_stats(&[s]).unwrap();
        assert!(t.expansion.is_empty());
        assert_eq!(t.zero_expansions, 7);
    }
}
