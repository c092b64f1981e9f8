//! Timing grid over decoder configurations.
//!
//! Utterances are encoded once, in small batches, outside the timed region;
//! the clock covers the search over the encoder output. For each utterance
//! every configuration is decoded once untimed, then `R` timed repeats are
//! interleaved across configurations and the best is kept.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rnnt_core::metrics::{corpus_error_rate, edit_distance, percentile, rtf, TimingSample};
use rnnt_core::model::encode_batch;
use rnnt_core::{Label, Matrix, ModelWeights};
use serde::Serialize;

use crate::corpus::Utterance;
use crate::decoders::{DecoderConfig, DecoderKind};
use crate::result_log::ResultRecord;
use crate::transcript::TranscriptFile;

/// Timer ticks an utterance must span before its timing is trusted.
pub const MIN_TIMER_TICKS: u32 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchOptions {
    pub repeats: usize,
    pub warmup: bool,
    /// Utterances encoded together.
    pub encode_group: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            repeats: 3,
            warmup: true,
            encode_group: 8,
        }
    }
}

/// Best-of-R timing and first-run hypothesis of one configuration on every
/// utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct CellTimings {
    pub config: DecoderConfig,
    pub times: Vec<Duration>,
    pub audio_ms: Vec<u32>,
    pub hypotheses: Vec<Vec<Label>>,
    /// Unnormalized log-probability and normalized score of each hypothesis.
    pub scores: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellReport {
    pub cell: String,
    pub decoder: String,
    pub beam: Option<usize>,
    pub alpha: Option<usize>,
    pub expand_beam: Option<f64>,
    pub state_beam: Option<f64>,
    pub utterances: usize,
    pub rt90: f64,
    pub mean_rtf: f64,
    /// RT-90 over the RT-90 of the next smaller beam of the same family.
    pub ratio_to_previous_beam: Option<f64>,
    pub error_rate: Option<f64>,
}

/// RT-90 at the largest beam over RT-90 at the smallest, per family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyRatio {
    pub family: String,
    pub low_beam: usize,
    pub high_beam: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BenchReport {
    pub cells: Vec<CellReport>,
    pub ratios: Vec<FamilyRatio>,
    pub warnings: Vec<String>,
}

/// Smallest nonzero step of the monotonic clock.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..64 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

/// Runs every configuration over the corpus. `on_utterance` is called after
/// each utterance with its index, for progress reporting.
pub fn run_bench(
    w: &ModelWeights,
    corpus: &[Utterance],
    configs: &[DecoderConfig],
    opts: BenchOptions,
    mut on_utterance: impl FnMut(usize),
) -> rnnt_core::Result<Vec<CellTimings>> {
    if opts.repeats == 0 {
        return Err(rnnt_core::Error::InvalidParams("repeats must be >= 1"));
    }
    let mut cells: Vec<CellTimings> = configs
        .iter()
        .map(|c| CellTimings {
            config: c.clone(),
            times: Vec::with_capacity(corpus.len()),
            audio_ms: Vec::with_capacity(corpus.len()),
            hypotheses: Vec::with_capacity(corpus.len()),
            scores: Vec::with_capacity(corpus.len()),
        })
        .collect();
    let mut done = 0;
    for group in corpus.chunks(opts.encode_group.max(1)) {
        let feats: Vec<&Matrix> = group.iter().map(|u| &u.file.features).collect();
        let encoded = encode_batch(w, &feats)?;
        for (u, enc) in group.iter().zip(&encoded) {
            if opts.warmup {
                for c in configs {
                    std::hint::black_box(c.run(w, enc)?);
                }
            }
            let mut best = vec![Duration::MAX; configs.len()];
            let mut first: Vec<Option<(Vec<Label>, f64, f64)>> = vec![None; configs.len()];
            for _ in 0..opts.repeats {
                for (i, c) in configs.iter().enumerate() {
                    let start = Instant::now();
                    let out = c.run(w, enc)?;
                    let elapsed = start.elapsed();
                    best[i] = best[i].min(elapsed);
                    first[i].get_or_insert((out.labels, out.logp.value(), out.score));
                }
            }
            for (i, cell) in cells.iter_mut().enumerate() {
                cell.times.push(best[i]);
                cell.audio_ms.push(u.file.audio_duration_ms);
                let (labels, logp, score) = first[i].take().expect("at least one repeat");
                cell.hypotheses.push(labels);
                cell.scores.push((logp, score));
            }
            on_utterance(done);
            done += 1;
        }
    }
    Ok(cells)
}

/// Per-utterance records of a bench run, one per cell and utterance.
pub fn bench_records(corpus: &[Utterance], cells: &[CellTimings]) -> Vec<ResultRecord> {
    let mut out = Vec::new();
    for cell in cells {
        for (i, u) in corpus.iter().enumerate() {
            out.push(cell.config.record_parts(
                &u.id,
                cell.hypotheses[i].clone(),
                cell.scores[i],
                cell.times[i],
                u.file.audio_duration_ms,
            ));
        }
    }
    out
}

/// Builds the report from recorded timings. Pure: the same timings always
/// give the same report.
pub fn build_report(
    corpus_ids: &[String],
    cells: &[CellTimings],
    transcripts: Option<&TranscriptFile>,
    resolution: Duration,
) -> rnnt_core::Result<BenchReport> {
    let mut report = BenchReport::default();
    let floor = resolution * MIN_TIMER_TICKS;
    for cell in cells {
        let rtfs = cell
            .times
            .iter()
            .zip(&cell.audio_ms)
            .map(|(&t, &ms)| {
                rtf(&TimingSample {
                    wall_time: t.max(Duration::from_nanos(1)),
                    audio_duration: Duration::from_millis(ms as u64),
                })
            })
            .collect::<rnnt_core::Result<Vec<f64>>>()?;
        let short = cell.times.iter().filter(|&&t| t < floor).count();
        if short > 0 {
            report.warnings.push(format!(
                "{}: {short} utterance(s) timed under {MIN_TIMER_TICKS} timer ticks ({resolution:?} per tick)",
                cell.config
            ));
        }
        let error_rate = transcripts.map(|t| {
            let items: Vec<_> = corpus_ids
                .iter()
                .zip(&cell.hypotheses)
                .map(|(id, hyp)| {
                    let r = t.get(id).unwrap_or(&[]);
                    (edit_distance(hyp, r), r.len())
                })
                .collect();
            corpus_error_rate(&items)
        });
        let c = &cell.config;
        report.cells.push(CellReport {
            cell: c.to_string(),
            decoder: c.kind.name().to_string(),
            beam: c.kind.uses_beam().then_some(c.beam),
            alpha: (c.kind == DecoderKind::Osc).then_some(c.alpha),
            expand_beam: (c.kind == DecoderKind::Improved).then_some(c.expand_beam),
            state_beam: (c.kind == DecoderKind::Improved).then_some(c.state_beam),
            utterances: rtfs.len(),
            rt90: percentile(&rtfs, 90.0)?,
            mean_rtf: rtfs.iter().sum::<f64>() / rtfs.len() as f64,
            ratio_to_previous_beam: None,
            error_rate,
        });
    }

    let mut families: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, cell) in cells.iter().enumerate() {
        if cell.config.kind.uses_beam() {
            families.entry(cell.config.family()).or_default().push(i);
        }
    }
    for (family, mut idx) in families {
        idx.sort_by_key(|&i| cells[i].config.beam);
        for pair in idx.windows(2) {
            let (lo, hi) = (&report.cells[pair[0]], &report.cells[pair[1]]);
            report.cells[pair[1]].ratio_to_previous_beam = Some(hi.rt90 / lo.rt90);
        }
        if idx.len() >= 2 {
            let (lo, hi) = (idx[0], idx[idx.len() - 1]);
            report.ratios.push(FamilyRatio {
                family,
                low_beam: cells[lo].config.beam,
                high_beam: cells[hi].config.beam,
                ratio: report.cells[hi].rt90 / report.cells[lo].rt90,
            });
        }
    }
    Ok(report)
}

impl BenchReport {
    pub fn cell(&self, decoder: &str, beam: usize, alpha: Option<usize>) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.decoder == decoder && c.beam == Some(beam) && (alpha.is_none() || c.alpha == alpha))
    }

    pub fn ratio(&self, family: &str) -> Option<&FamilyRatio> {
        self.ratios.iter().find(|r| r.family == family)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<28} {:>6} {:>12} {:>12} {:>10} {:>10}",
            "configuration", "utts", "RT-90", "mean RTF", "x prev W", "err rate"
        );
        for c in &self.cells {
            let ratio = c.ratio_to_previous_beam.map_or("-".to_string(), |r| format!("{r:.3}"));
            let err = c.error_rate.map_or("-".to_string(), |e| format!("{e:.4}"));
            let _ = writeln!(
                s,
                "{:<28} {:>6} {:>12.6} {:>12.6} {:>10} {:>10}",
                c.cell, c.utterances, c.rt90, c.mean_rtf, ratio, err
            );
        }
        for r in &self.ratios {
            let _ = writeln!(
                s,
                "{}: RT-90(W={}) / RT-90(W={}) = {:.3}",
                r.family, r.high_beam, r.low_beam, r.ratio
            );
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    /// One JSON line per cell, then per family ratio, then per warning.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for c in &self.cells {
            let v = serde_json::json!({ "kind": "cell", "cell": c });
            let _ = writeln!(s, "{v}");
        }
        for r in &self.ratios {
            let v = serde_json::json!({ "kind": "ratio", "ratio": r });
            let _ = writeln!(s, "{v}");
        }
        for w in &self.warnings {
            let v = serde_json::json!({ "kind": "warning", "message": w });
            let _ = writeln!(s, "{v}");
        }
        s
    }
}
