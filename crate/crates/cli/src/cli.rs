//! Command-line surface. [`run`] parses arguments and returns the exit code:
//! 0 success, 1 failure, 2 usage, 3 resource or budget, 4 data mismatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnnt_core::decode::{aggregate_step_stats, decode_reference_with, FrameTrace, RatioTable, ReferenceHooks, StepStats};
use rnnt_core::metrics::{corpus_error_rate, edit_distance, percentile};
use rnnt_core::model::{encode, init_model};
use rnnt_core::{ModelConfig, ModelWeights};

use crate::bench::{bench_records, build_report, run_bench, timer_resolution, BenchOptions};
use crate::corpus::{load_corpus, Utterance, FEATURE_EXTENSION};
use crate::decoders::{DecoderConfig, DecoderKind};
use crate::error::FormatError;
use crate::feature_file::write_features;
use crate::model_file::{read_model, write_model};
use crate::result_log::{append_records, read_records, ResultRecord};
use crate::synth::synth_utterance;
use crate::transcript::TranscriptFile;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Resource(String),
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Decode(rnnt_core::Error),
    #[error("{0}")]
    Output(#[from] std::io::Error),
}

impl From<rnnt_core::Error> for CliError {
    fn from(e: rnnt_core::Error) -> Self {
        match e {
            rnnt_core::Error::BudgetExceeded { .. } | rnnt_core::Error::IterationCap { .. } => {
                CliError::Resource(e.to_string())
            }
            e => CliError::Decode(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Resource(_) => EXIT_RESOURCE,
            CliError::Mismatch(_) => EXIT_MISMATCH,
            _ => EXIT_FAILURE,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "rnnt", version, about = "RNN transducer beam-search decoders and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic model file.
    GenModel(GenModelArgs),
    /// Write synthetic feature files.
    GenFeatures(GenFeaturesArgs),
    /// Decode utterances and append one result record per utterance.
    Decode(DecodeArgs),
    /// Time a grid of decoder configurations.
    Bench(BenchArgs),
    /// Expansion and prefix statistics of the reference beam search.
    Stats(StatsArgs),
    /// Decode under two configurations and report agreement.
    Compare(CompareArgs),
    /// Score a result log against reference transcripts.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Timit,
    Librispeech,
    Tiny,
}

#[derive(Args, Debug)]
struct GenModelArgs {
    #[arg(long, value_enum, default_value = "tiny")]
    preset: Preset,
    #[arg(long)]
    input_dim: Option<usize>,
    #[arg(long)]
    enc_layers: Option<usize>,
    /// Hidden size of every LSTM layer.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    pred_layers: Option<usize>,
    #[arg(long)]
    pred_hidden: Option<usize>,
    #[arg(long)]
    joint_dim: Option<usize>,
    /// Non-blank labels.
    #[arg(long)]
    labels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output-layer gain.
    #[arg(long, default_value_t = 1.0)]
    gain: f64,
    /// Added to the blank logit after the gain.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    blank_bias: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenFeaturesArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Fixed frame count; overrides the range.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, default_value_t = 200)]
    min_frames: usize,
    #[arg(long, default_value_t = 600)]
    max_frames: usize,
    #[arg(long, default_value_t = 80)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    frame_ms: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "utt")]
    prefix: String,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature files or directories of them.
    #[arg(long, num_args = 1.., required = true)]
    features: Vec<PathBuf>,
    #[arg(long, value_enum)]
    decoder: DecoderKind,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long)]
    expand_beam: Option<f64>,
    #[arg(long)]
    state_beam: Option<f64>,
    /// Oracle only: longest label sequence enumerated (default T).
    #[arg(long)]
    max_len: Option<usize>,
    /// Oracle only: allowed lattice evaluations.
    #[arg(long)]
    budget: Option<u128>,
    /// OSC only: evaluate hypotheses one at a time.
    #[arg(long)]
    unbatched: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    features: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "ref,osc")]
    decoders: Vec<DecoderKind>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    beams: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    alphas: Vec<usize>,
    #[arg(long)]
    expand_beam: Option<f64>,
    #[arg(long)]
    state_beam: Option<f64>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Decode each utterance once untimed before the timed repeats.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    warmup: bool,
    #[arg(long)]
    transcripts: Option<PathBuf>,
    /// Line-delimited report, one record per cell.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-utterance result records.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    features: Vec<PathBuf>,
    #[arg(long, default_value_t = 4)]
    beam: usize,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    features: Vec<PathBuf>,
    /// First configuration, e.g. `osc:beam=4,alpha=1`.
    #[arg(long)]
    a: String,
    /// Second configuration, e.g. `osc:beam=4,alpha=1,unbatched`.
    #[arg(long)]
    b: String,
    /// Collect per-frame traces to locate the first divergent frame.
    #[arg(long)]
    trace: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    transcripts: PathBuf,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::GenModel(a) => gen_model(a, out),
        Command::GenFeatures(a) => gen_features(a, out),
        Command::Decode(a) => decode(a, out, err),
        Command::Bench(a) => bench(a, out, err),
        Command::Stats(a) => stats(a, out),
        Command::Compare(a) => compare(a, out),
        Command::Eval(a) => eval(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn gen_model(a: GenModelArgs, out: &mut dyn Write) -> Result<()> {
    let mut c = match a.preset {
        Preset::Timit => ModelConfig::timit_like(),
        Preset::Librispeech => ModelConfig::librispeech_like(),
        Preset::Tiny => ModelConfig::tiny(4, 8, 5),
    };
    if let Some(h) = a.hidden {
        c.enc_hidden = h;
        c.pred_hidden = h;
        c.joint_dim = h;
    }
    let overrides = [
        (a.input_dim, &mut c.input_dim),
        (a.enc_layers, &mut c.enc_layers),
        (a.pred_layers, &mut c.pred_layers),
        (a.pred_hidden, &mut c.pred_hidden),
        (a.joint_dim, &mut c.joint_dim),
        (a.labels, &mut c.num_labels),
    ];
    for (v, field) in overrides {
        if let Some(v) = v {
            *field = v;
        }
    }
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let w = init_model(c, a.seed)?
        .with_output_calibration(a.gain, a.blank_bias)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_model(&a.out, &w)?;
    let params: usize = c.param_layout().iter().map(|b| b.len()).sum();
    writeln!(
        out,
        "wrote {}: F={} encoder {}x{} predictor {}x{} joint {} labels {} ({params} parameters)",
        a.out.display(),
        c.input_dim,
        c.enc_layers,
        c.enc_hidden,
        c.pred_layers,
        c.pred_hidden,
        c.joint_dim,
        c.num_labels
    )?;
    Ok(())
}

fn gen_features(a: GenFeaturesArgs, out: &mut dyn Write) -> Result<()> {
    if a.dim == 0 || a.frame_ms == 0 {
        return Err(CliError::Usage("--dim and --frame-ms must be >= 1".into()));
    }
    let (lo, hi) = match a.frames {
        Some(t) => (t, t),
        None => (a.min_frames, a.max_frames),
    };
    if lo == 0 || lo > hi {
        return Err(CliError::Usage(format!("invalid frame range {lo}..={hi}")));
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| FormatError::io(&a.out_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for i in 0..a.count {
        let frames = rng.random_range(lo..=hi);
        let file = synth_utterance(frames, a.dim, rng.random(), a.frame_ms);
        let path = a.out_dir.join(format!("{}{i:04}.{FEATURE_EXTENSION}", a.prefix));
        write_features(&path, &file)?;
    }
    writeln!(out, "wrote {} feature files to {}", a.count, a.out_dir.display())?;
    Ok(())
}

fn load(model: &Path, features: &[PathBuf]) -> Result<(ModelWeights, Vec<Utterance>)> {
    let w = read_model(model)?;
    let corpus = load_corpus(features)?;
    if corpus.is_empty() {
        return Err(CliError::Usage("no feature files given".into()));
    }
    for u in &corpus {
        if u.file.features.cols() != w.config().input_dim {
            return Err(CliError::Mismatch(format!(
                "{}: feature dimension {} but the model expects {}",
                u.id,
                u.file.features.cols(),
                w.config().input_dim
            )));
        }
    }
    Ok((w, corpus))
}

fn decode_config(a: &DecodeArgs, err: &mut dyn Write) -> Result<DecoderConfig> {
    let kind = a.decoder;
    let conflict = |flag: &str| Err(CliError::Usage(format!("{flag} does not apply to --decoder {}", kind.name())));
    if a.beam.is_some() && !kind.uses_beam() {
        return conflict("--beam");
    }
    if a.alpha.is_some() && kind != DecoderKind::Osc {
        return conflict("--alpha");
    }
    if a.unbatched && kind != DecoderKind::Osc {
        return conflict("--unbatched");
    }
    if (a.expand_beam.is_some() || a.state_beam.is_some()) && kind != DecoderKind::Improved {
        return conflict("--expand-beam/--state-beam");
    }
    if (a.max_len.is_some() || a.budget.is_some()) && kind != DecoderKind::Oracle {
        return conflict("--max-len/--budget");
    }
    let mut c = DecoderConfig::new(kind);
    if let Some(b) = a.beam {
        c.beam = b;
    }
    if kind == DecoderKind::Osc && a.alpha.is_none() {
        writeln!(err, "note: --alpha not given, using alpha = 1")?;
    }
    c.alpha = a.alpha.unwrap_or(1);
    c.expand_beam = a.expand_beam.unwrap_or(c.expand_beam);
    c.state_beam = a.state_beam.unwrap_or(c.state_beam);
    c.max_len = a.max_len;
    c.budget = a.budget.unwrap_or(c.budget);
    c.unbatched = a.unbatched;
    if kind.uses_beam() && c.beam == 0 {
        return Err(CliError::Usage("--beam must be >= 1".into()));
    }
    if !(c.expand_beam >= 0.0 && c.state_beam >= 0.0) {
        return Err(CliError::Usage("pruning margins must be >= 0".into()));
    }
    Ok(c)
}

fn decode(a: DecodeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config = decode_config(&a, err)?;
    let (w, corpus) = load(&a.model, &a.features)?;
    let mut records = Vec::with_capacity(corpus.len());
    for u in &corpus {
        let start = Instant::now();
        let enc = encode(&w, &u.file.features)?;
        let mut result = config.run(&w, &enc)?;
        result.wall_time = start.elapsed();
        let labels: Vec<String> = result.labels.iter().map(|l| l.to_string()).collect();
        writeln!(out, "{}\t{}\t{:.6}", u.id, labels.join(" "), result.logp.value())?;
        records.push(config.record(&u.id, &result, u.file.audio_duration_ms));
    }
    if let Some(path) = &a.out {
        append_records(path, &records)?;
    }
    Ok(())
}

fn bench(a: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    if a.repeats == 0 {
        return Err(CliError::Usage("--repeats must be >= 1".into()));
    }
    if a.beams.contains(&0) {
        return Err(CliError::Usage("--beams must be >= 1".into()));
    }
    let mut configs = Vec::new();
    for &kind in &a.decoders {
        let mut base = DecoderConfig::new(kind);
        base.expand_beam = a.expand_beam.unwrap_or(base.expand_beam);
        base.state_beam = a.state_beam.unwrap_or(base.state_beam);
        let beams: &[usize] = if kind.uses_beam() { &a.beams } else { &[1] };
        for &beam in beams {
            if kind == DecoderKind::Osc {
                for &alpha in &a.alphas {
                    configs.push(base.clone().with_beam(beam).with_alpha(alpha));
                }
            } else {
                configs.push(base.clone().with_beam(beam));
            }
        }
    }
    let (w, corpus) = load(&a.model, &a.features)?;
    let transcripts = a.transcripts.as_deref().map(TranscriptFile::read).transpose()?;
    if let Some(t) = &transcripts {
        let missing: Vec<&str> = corpus.iter().filter(|u| t.get(&u.id).is_none()).map(|u| u.id.as_str()).collect();
        if !missing.is_empty() {
            return Err(CliError::Mismatch(format!("no transcript for: {}", missing.join(", "))));
        }
    }
    let opts = BenchOptions {
        repeats: a.repeats,
        warmup: a.warmup,
        ..BenchOptions::default()
    };
    let total = corpus.len();
    let cells = run_bench(&w, &corpus, &configs, opts, |i| {
        let _ = writeln!(err, "bench: utterance {}/{total}", i + 1);
    })?;
    let ids: Vec<String> = corpus.iter().map(|u| u.id.clone()).collect();
    let report = build_report(&ids, &cells, transcripts.as_ref(), timer_resolution())?;
    out.write_all(report.render().as_bytes())?;
    if let Some(path) = &a.report {
        std::fs::write(path, report.to_jsonl()).map_err(|e| FormatError::io(path, e))?;
    }
    if let Some(path) = &a.out {
        append_records(path, &bench_records(&corpus, &cells))?;
    }
    Ok(())
}

/// Expansion and prefix tables in percent, one row per bucket.
pub fn render_ratio_tables(stats: &[StepStats]) -> String {
    let table: Option<RatioTable> = aggregate_step_stats(stats).ok();
    let mut s = String::new();
    s.push_str("expansions per frame  ratio (%)\n");
    match &table {
        Some(t) if !t.expansion.is_empty() => {
            for (n, p) in &t.expansion {
                s.push_str(&format!("{n:>21}  {p:>9.2}\n"));
            }
        }
        _ => s.push_str("  (empty: every hypothesis expanded zero times)\n"),
    }
    let zero = table.as_ref().map_or(0, |t| t.zero_expansions);
    s.push_str(&format!("zero-expansion occurrences: {zero}\n"));
    s.push_str("prefix |y|-|y'|        ratio (%)\n");
    match &table {
        Some(t) if !t.prefix.is_empty() => {
            for (d, p) in &t.prefix {
                s.push_str(&format!("{d:>21}  {p:>9.2}\n"));
            }
        }
        _ => s.push_str("  (empty: no prefix pairs in any beam)\n"),
    }
    s
}

fn stats(a: StatsArgs, out: &mut dyn Write) -> Result<()> {
    if a.beam == 0 {
        return Err(CliError::Usage("--beam must be >= 1".into()));
    }
    let (w, corpus) = load(&a.model, &a.features)?;
    let hooks = ReferenceHooks {
        instrument: true,
        ..Default::default()
    };
    let mut all = Vec::with_capacity(corpus.len());
    for u in &corpus {
        let enc = encode(&w, &u.file.features)?;
        let r = decode_reference_with(&w, &enc, a.beam, hooks)?;
        all.push(r.step_stats.unwrap_or_default());
    }
    writeln!(out, "reference beam search, W={}, {} utterances", a.beam, corpus.len())?;
    out.write_all(render_ratio_tables(&all).as_bytes())?;
    Ok(())
}

/// First frame whose beams hold different label sequences.
pub fn first_divergent_frame(a: &[FrameTrace], b: &[FrameTrace]) -> Option<usize> {
    let key = |f: &FrameTrace| {
        let mut v: Vec<Vec<u32>> = f.beam.iter().map(|h| h.labels.clone()).collect();
        v.sort();
        v
    };
    (0..a.len().max(b.len())).find(|&t| match (a.get(t), b.get(t)) {
        (Some(x), Some(y)) => key(x) != key(y),
        _ => true,
    })
}

fn compare(a: CompareArgs, out: &mut dyn Write) -> Result<()> {
    let parse = |s: &str| s.parse::<DecoderConfig>().map_err(CliError::Usage);
    let mut ca = parse(&a.a)?;
    let mut cb = parse(&a.b)?;
    ca.trace = a.trace;
    cb.trace = a.trace;
    let (w, corpus) = load(&a.model, &a.features)?;
    writeln!(out, "A: {ca}\nB: {cb}")?;
    let mut agree = 0;
    for u in &corpus {
        let enc = encode(&w, &u.file.features)?;
        let ra = ca.run(&w, &enc)?;
        let rb = cb.run(&w, &enc)?;
        let same = ra.labels == rb.labels;
        agree += usize::from(same);
        let delta = ra.logp.value() - rb.logp.value();
        let frame = match (&ra.trace, &rb.trace) {
            (Some(x), Some(y)) => first_divergent_frame(x, y).map_or("none".to_string(), |t| t.to_string()),
            _ => "-".to_string(),
        };
        writeln!(
            out,
            "{}\t{}\tlogp delta {delta:+.3e}\tfirst divergent frame {frame}",
            u.id,
            if same { "agree" } else { "differ" }
        )?;
    }
    writeln!(
        out,
        "agreement: {agree}/{} ({:.2}%)",
        corpus.len(),
        100.0 * agree as f64 / corpus.len() as f64
    )?;
    Ok(())
}

fn record_key(r: &ResultRecord) -> String {
    let mut k = r.decoder.clone();
    if let Some(b) = r.beam {
        k.push_str(&format!(" W={b}"));
    }
    if let Some(a) = r.alpha {
        k.push_str(&format!(" a={a}"));
    }
    if let (Some(e), Some(s)) = (r.expand_beam, r.state_beam) {
        k.push_str(&format!(" e={e} s={s}"));
    }
    k
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let records = read_records(&a.results)?;
    let transcripts = TranscriptFile::read(&a.transcripts)?;
    let mut groups: Vec<(String, Vec<&ResultRecord>)> = Vec::new();
    for r in &records {
        let k = record_key(r);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(r),
            None => groups.push((k, vec![r])),
        }
    }
    let mut unmatched: Vec<String> = Vec::new();
    for (key, rs) in &groups {
        let mut items = Vec::new();
        let mut rtfs = Vec::new();
        for r in rs {
            match transcripts.get(&r.utterance_id) {
                Some(reference) => items.push((edit_distance(&r.labels, reference), reference.len())),
                None => unmatched.push(format!("{} (result of {key}, no transcript)", r.utterance_id)),
            }
            if r.audio_duration_ms > 0 {
                rtfs.push(r.wall_time_ms / r.audio_duration_ms as f64);
            }
        }
        for (id, _) in &transcripts.entries {
            if !rs.iter().any(|r| &r.utterance_id == id) {
                unmatched.push(format!("{id} (transcript, no result from {key})"));
            }
        }
        let rate = corpus_error_rate(&items);
        let rt90 = percentile(&rtfs, 90.0).map_or("-".to_string(), |v| format!("{v:.6}"));
        writeln!(out, "{key}: {} utterances, error rate {rate:.4}, RT-90 {rt90}", items.len())?;
    }
    if !unmatched.is_empty() {
        for u in &unmatched {
            writeln!(out, "unmatched: {u}")?;
        }
        return Err(CliError::Mismatch(format!("{} unmatched utterance id(s)", unmatched.len())));
    }
    Ok(())
}
