//! Line-delimited JSON decode results, one record per utterance.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rnnt_core::Label;
use serde::{Deserialize, Serialize};

use crate::bytes::read_file;
use crate::error::{FormatError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub utterance_id: String,
    pub decoder: String,
    pub beam: Option<usize>,
    pub alpha: Option<usize>,
    pub expand_beam: Option<f64>,
    pub state_beam: Option<f64>,
    pub labels: Vec<Label>,
    /// `None` when the hypothesis has probability zero.
    pub logp: Option<f64>,
    pub score: Option<f64>,
    pub wall_time_ms: f64,
    pub audio_duration_ms: u32,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl ResultRecord {
    pub fn new(utterance_id: &str, decoder: &str, labels: Vec<Label>, logp: f64, score: f64) -> Self {
        ResultRecord {
            utterance_id: utterance_id.to_string(),
            decoder: decoder.to_string(),
            beam: None,
            alpha: None,
            expand_beam: None,
            state_beam: None,
            labels,
            logp: finite(logp),
            score: finite(score),
            wall_time_ms: 0.0,
            audio_duration_ms: 0,
        }
    }
}

pub fn append_records(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("records serialize"));
        text.push('\n');
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| FormatError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| FormatError::io(path, e))
}

pub fn parse_records(text: &str) -> Result<Vec<ResultRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| FormatError::ResultLog { line: i + 1, source }))
        .collect()
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let bytes = read_file(path)?;
    parse_records(&String::from_utf8_lossy(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut a = ResultRecord::new("u1", "osc", vec![1, 2], -3.5, -1.75);
        a.beam = Some(4);
        a.alpha = Some(1);
        let b = ResultRecord::new("u2", "greedy", vec![], f64::NEG_INFINITY, f64::NEG_INFINITY);
        append_records(&path, &[a.clone()]).unwrap();
        append_records(&path, &[b.clone()]).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back, vec![a, b]);
        assert_eq!(back[1].logp, None);
    }

    #[test]
    fn malformed_line_is_named() {
        let err = parse_records("{}\n").unwrap_err();
        assert!(matches!(err, FormatError::ResultLog { line: 1, .. }));
    }
}
