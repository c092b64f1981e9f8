//! Decoder selection shared by the `decode`, `bench` and `compare` commands.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rnnt_core::decode::{
    decode_greedy_encoded, decode_improved_with, decode_osc_with, decode_reference_with, exhaustive_decode_encoded,
    DecodeOutput, ImprovedParams, OscHooks, OscParams, ReferenceHooks, WorkCounters, DEFAULT_EXHAUSTIVE_BUDGET,
};
use rnnt_core::model::EncoderOutput;
use rnnt_core::ModelWeights;

use crate::result_log::ResultRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum DecoderKind {
    Greedy,
    Ref,
    Improved,
    Osc,
    Oracle,
}

impl DecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Greedy => "greedy",
            DecoderKind::Ref => "ref",
            DecoderKind::Improved => "improved",
            DecoderKind::Osc => "osc",
            DecoderKind::Oracle => "oracle",
        }
    }

    pub fn uses_beam(self) -> bool {
        matches!(self, DecoderKind::Ref | DecoderKind::Improved | DecoderKind::Osc)
    }
}

impl FromStr for DecoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "greedy" => DecoderKind::Greedy,
            "ref" | "reference" => DecoderKind::Ref,
            "improved" => DecoderKind::Improved,
            "osc" => DecoderKind::Osc,
            "oracle" => DecoderKind::Oracle,
            _ => return Err(format!("unknown decoder {s:?}")),
        })
    }
}

/// A fully specified decoder configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderConfig {
    pub kind: DecoderKind,
    pub beam: usize,
    pub alpha: usize,
    pub expand_beam: f64,
    pub state_beam: f64,
    /// Longest sequence the oracle enumerates; `None` means one per frame.
    pub max_len: Option<usize>,
    pub budget: u128,
    /// OSC only: evaluate hypotheses one at a time.
    pub unbatched: bool,
    pub trace: bool,
}

impl DecoderConfig {
    pub fn new(kind: DecoderKind) -> Self {
        DecoderConfig {
            kind,
            beam: 4,
            alpha: 1,
            expand_beam: ImprovedParams::DEFAULT_EXPAND_BEAM,
            state_beam: ImprovedParams::DEFAULT_STATE_BEAM,
            max_len: None,
            budget: DEFAULT_EXHAUSTIVE_BUDGET,
            unbatched: false,
            trace: false,
        }
    }

    pub fn with_beam(mut self, beam: usize) -> Self {
        self.beam = beam;
        self
    }

    pub fn with_alpha(mut self, alpha: usize) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn run(&self, w: &ModelWeights, enc: &EncoderOutput) -> rnnt_core::Result<DecodeOutput> {
        match self.kind {
            DecoderKind::Greedy => decode_greedy_encoded(w, enc),
            DecoderKind::Ref => decode_reference_with(
                w,
                enc,
                self.beam,
                ReferenceHooks {
                    collect_trace: self.trace,
                    ..Default::default()
                },
            ),
            DecoderKind::Improved => decode_improved_with(
                w,
                enc,
                ImprovedParams::new(self.beam, self.expand_beam, self.state_beam)?,
                ReferenceHooks {
                    collect_trace: self.trace,
                    ..Default::default()
                },
            ),
            DecoderKind::Osc => decode_osc_with(
                w,
                enc,
                OscParams::new(self.beam, self.alpha)?,
                OscHooks {
                    unbatched: self.unbatched,
                    collect_trace: self.trace,
                    ..Default::default()
                },
            ),
            DecoderKind::Oracle => {
                let r = exhaustive_decode_encoded(w, enc, self.max_len.unwrap_or(enc.frames()), self.budget)?;
                Ok(DecodeOutput {
                    final_beam: vec![(r.labels.clone(), r.logp)],
                    labels: r.labels,
                    logp: r.logp,
                    score: r.score,
                    frames_processed: enc.frames(),
                    wall_time: Default::default(),
                    step_stats: None,
                    counters: WorkCounters::default(),
                    trace: None,
                })
            }
        }
    }

    pub fn record(&self, utterance_id: &str, out: &DecodeOutput, audio_duration_ms: u32) -> ResultRecord {
        self.record_parts(
            utterance_id,
            out.labels.clone(),
            (out.logp.value(), out.score),
            out.wall_time,
            audio_duration_ms,
        )
    }

    pub fn record_parts(
        &self,
        utterance_id: &str,
        labels: Vec<rnnt_core::Label>,
        (logp, score): (f64, f64),
        wall_time: Duration,
        audio_duration_ms: u32,
    ) -> ResultRecord {
        let mut r = ResultRecord::new(utterance_id, self.kind.name(), labels, logp, score);
        if self.kind.uses_beam() {
            r.beam = Some(self.beam);
        }
        match self.kind {
            DecoderKind::Osc => r.alpha = Some(self.alpha),
            DecoderKind::Improved => {
                r.expand_beam = Some(self.expand_beam);
                r.state_beam = Some(self.state_beam);
            }
            _ => {}
        }
        r.wall_time_ms = wall_time.as_secs_f64() * 1e3;
        r.audio_duration_ms = audio_duration_ms;
        r
    }

    /// The configuration minus the beam width, used to group cells that
    /// differ only in `W`.
    pub fn family(&self) -> String {
        match self.kind {
            DecoderKind::Osc => format!("osc a={}", self.alpha),
            DecoderKind::Improved => format!("improved e={} s={}", self.expand_beam, self.state_beam),
            k => k.name().to_string(),
        }
    }
}

impl fmt::Display for DecoderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        if self.kind.uses_beam() {
            write!(f, " W={}", self.beam)?;
        }
        match self.kind {
            DecoderKind::Osc => write!(f, " a={}", self.alpha)?,
            DecoderKind::Improved => write!(f, " e={} s={}", self.expand_beam, self.state_beam)?,
            DecoderKind::Oracle => match self.max_len {
                Some(n) => write!(f, " max_len={n}")?,
                None => f.write_str(" max_len=T")?,
            },
            _ => {}
        }
        if self.unbatched {
            f.write_str(" unbatched")?;
        }
        Ok(())
    }
}

/// Parses `kind[:key=value,...]`, e.g. `osc:beam=4,alpha=2,unbatched`.
impl FromStr for DecoderConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut c = DecoderConfig::new(kind.parse()?);
        for item in rest.split(',').filter(|i| !i.is_empty()) {
            let (key, value) = item.split_once('=').unwrap_or((item, ""));
            let num = || value.parse::<f64>().map_err(|_| format!("bad value for {key}: {value:?}"));
            let int = || value.parse::<usize>().map_err(|_| format!("bad value for {key}: {value:?}"));
            match key {
                "beam" | "w" => c.beam = int()?,
                "alpha" | "a" => c.alpha = int()?,
                "expand-beam" | "e" => c.expand_beam = num()?,
                "state-beam" | "s" => c.state_beam = num()?,
                "max-len" => c.max_len = Some(int()?),
                "unbatched" if value.is_empty() => c.unbatched = true,
                _ => return Err(format!("unknown option {item:?}")),
            }
        }
        if c.unbatched && c.kind != DecoderKind::Osc {
            return Err("unbatched applies to osc only".to_string());
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_config_strings() {
        let c: DecoderConfig = "osc:beam=8,alpha=2,unbatched".parse().unwrap();
        assert_eq!((c.kind, c.beam, c.alpha, c.unbatched), (DecoderKind::Osc, 8, 2, true));
        assert_eq!(c.to_string(), "osc W=8 a=2 unbatched");
        let c: DecoderConfig = "improved:w=5,e=1.5,s=3".parse().unwrap();
        assert_eq!((c.expand_beam, c.state_beam), (1.5, 3.0));
        assert_eq!("greedy".parse::<DecoderConfig>().unwrap().to_string(), "greedy");
        assert!("ref:unbatched".parse::<DecoderConfig>().is_err());
        assert!("osc:beam=x".parse::<DecoderConfig>().is_err());
        assert!("beam".parse::<DecoderConfig>().is_err());
    }

    #[test]
    fn family_ignores_width() {
        let a = DecoderConfig::new(DecoderKind::Osc).with_beam(5);
        let b = a.clone().with_beam(20);
        assert_eq!(a.family(), b.family());
        assert_ne!(a.family(), a.clone().with_alpha(2).family());
    }
}
