//! `RNTF` feature files.
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `RNTF` |
//! | 2 | version (u16, currently 1) |
//! | 4 | frames `T` (u32, >= 1) |
//! | 4 | feature dimension `F` (u32, >= 1) |
//! | 4 | audio duration in milliseconds (u32, >= 1) |
//! | 4·T·F | frames, row-major IEEE-754 binary32 |

use std::path::Path;

use rnnt_core::Matrix;

use crate::bytes::{put_f32s, read_file, write_file, Reader};
use crate::error::{FormatError, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"RNTF";
pub const FEATURE_VERSION: u16 = 1;
pub const FEATURE_HEADER_LEN: usize = 4 + 2 + 3 * 4;

/// One utterance of acoustic features with the duration of its audio.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFile {
    pub features: Matrix,
    pub audio_duration_ms: u32,
}

impl FeatureFile {
    pub fn new(features: Matrix, audio_duration_ms: u32) -> Result<Self> {
        let f = FeatureFile {
            features,
            audio_duration_ms,
        };
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<()> {
        let invalid = |field, reason: &str| {
            Err(FormatError::InvalidHeader {
                field,
                reason: reason.to_string(),
            })
        };
        if self.features.rows() == 0 {
            return invalid("frames", "must be at least 1");
        }
        if self.features.cols() == 0 {
            return invalid("feature_dim", "must be at least 1");
        }
        if self.audio_duration_ms == 0 {
            return invalid("audio_duration_ms", "must be at least 1");
        }
        if u32::try_from(self.features.rows()).is_err() {
            return invalid("frames", "exceeds u32");
        }
        if u32::try_from(self.features.cols()).is_err() {
            return invalid("feature_dim", "exceeds u32");
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check()?;
        let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 4 * self.features.data().len());
        out.extend_from_slice(&FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.features.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.features.cols() as u32).to_le_bytes());
        out.extend_from_slice(&self.audio_duration_ms.to_le_bytes());
        put_f32s(&mut out, self.features.data(), "frames")?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(FEATURE_MAGIC)?;
        let version = r.u16("header")?;
        if version != FEATURE_VERSION {
            return Err(FormatError::VersionMismatch {
                expected: FEATURE_VERSION,
                found: version,
            });
        }
        let t = r.u32("header")?;
        let f = r.u32("header")?;
        let duration = r.u32("header")?;
        for (v, field) in [(t, "frames"), (f, "feature_dim"), (duration, "audio_duration_ms")] {
            if v == 0 {
                return Err(FormatError::InvalidHeader {
                    field,
                    reason: "must be at least 1".to_string(),
                });
            }
        }
        let needed = 4 * t as u128 * f as u128;
        let available = r.remaining();
        if needed > available as u128 {
            return Err(FormatError::Truncated {
                what: "frames".to_string(),
                needed,
                available,
            });
        }
        if needed < available as u128 {
            return Err(FormatError::TrailingBytes {
                what: "frames",
                count: available as u128 - needed,
            });
        }
        let data = r.f32s(t as usize * f as usize, "frames")?;
        r.finish("frames")?;
        Ok(FeatureFile {
            features: Matrix::from_vec(t as usize, f as usize, data)?,
            audio_duration_ms: duration,
        })
    }
}

pub fn write_features(path: &Path, file: &FeatureFile) -> Result<()> {
    write_file(path, &file.to_bytes()?)
}

pub fn read_features(path: &Path) -> Result<FeatureFile> {
    FeatureFile::from_bytes(&read_file(path)?)
}
