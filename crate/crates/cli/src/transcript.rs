//! Reference transcripts: one `utterance_id<TAB>labels` line per utterance,
//! labels as space-separated integers in `[1, K]`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rnnt_core::Label;

use crate::bytes::{read_file, write_file};
use crate::error::{FormatError, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TranscriptFile {
    pub entries: Vec<(String, Vec<Label>)>,
}

impl TranscriptFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |reason: String| FormatError::Transcript { line: line_no, reason };
            if line.is_empty() {
                continue;
            }
            let (id, labels) = line
                .split_once('\t')
                .ok_or_else(|| err("missing tab separator".to_string()))?;
            if id.is_empty() {
                return Err(err("empty utterance id".to_string()));
            }
            if !seen.insert(id.to_string()) {
                return Err(err(format!("duplicate utterance id {id}")));
            }
            let labels = labels
                .split_ascii_whitespace()
                .map(|tok| match tok.parse::<Label>() {
                    Ok(0) => Err(err("label 0 is the blank and cannot appear".to_string())),
                    Ok(v) => Ok(v),
                    Err(_) => Err(err(format!("not a label: {tok:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            entries.push((id.to_string(), labels));
        }
        Ok(TranscriptFile { entries })
    }

    /// Rejects labels above `num_labels`.
    pub fn check_vocabulary(&self, num_labels: usize) -> Result<()> {
        for (i, (id, labels)) in self.entries.iter().enumerate() {
            if let Some(bad) = labels.iter().find(|&&l| l as usize > num_labels) {
                return Err(FormatError::Transcript {
                    line: i + 1,
                    reason: format!("label {bad} of {id} exceeds vocabulary of {num_labels}"),
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[Label]> {
        self.entries.iter().find(|(k, _)| k == id).map(|(_, v)| v.as_slice())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, labels) in &self.entries {
            out.push_str(id);
            out.push('\t');
            for (i, l) in labels.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{l}");
            }
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|e| FormatError::Transcript {
            line: 0,
            reason: format!("not UTF-8: {e}"),
        })?;
        TranscriptFile::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text().as_bytes())
    }
}
