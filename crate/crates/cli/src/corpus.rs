//! Feature files on disk as a list of utterances.

use std::path::{Path, PathBuf};

use crate::error::{FormatError, Result};
use crate::feature_file::{read_features, FeatureFile};

pub const FEATURE_EXTENSION: &str = "rntf";

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub file: FeatureFile,
}

fn utterance_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Expands directories to their `.rntf` files in name order; plain files
/// are taken as given.
pub fn feature_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| FormatError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x == FEATURE_EXTENSION))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn load_corpus(inputs: &[PathBuf]) -> Result<Vec<Utterance>> {
    feature_paths(inputs)?
        .iter()
        .map(|p| {
            Ok(Utterance {
                id: utterance_id(p),
                file: read_features(p)?,
            })
        })
        .collect()
}
