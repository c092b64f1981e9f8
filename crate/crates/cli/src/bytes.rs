//! Little-endian cursor over an in-memory file image.

use crate::error::{FormatError, Result};

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(FormatError::Truncated {
                what: what.to_string(),
                needed: n as u128,
                available: self.remaining(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let n = self.remaining().min(4);
        let found = &self.buf[self.pos..self.pos + n];
        if found != expected {
            return Err(FormatError::BadMagic {
                expected,
                found: found.to_vec(),
            });
        }
        self.pos += 4;
        Ok(())
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Widens `n` little-endian `f32` values, rejecting NaN and infinities.
    pub fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(4 * n, what)?;
        bytes
            .chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if v.is_finite() {
                    Ok(v as f64)
                } else {
                    Err(FormatError::NonFinite { what: what.to_string() })
                }
            })
            .collect()
    }

    pub fn finish(&self, what: &'static str) -> Result<()> {
        match self.remaining() {
            0 => Ok(()),
            count => Err(FormatError::TrailingBytes {
                what,
                count: count as u128,
            }),
        }
    }
}

/// Narrows to `f32`, rejecting values that do not fit.
pub(crate) fn put_f32s(out: &mut Vec<u8>, values: &[f64], what: &str) -> Result<()> {
    out.reserve(4 * values.len());
    for &v in values {
        let x = v as f32;
        if !x.is_finite() {
            return Err(FormatError::NonFinite { what: what.to_string() });
        }
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(())
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| FormatError::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| FormatError::io(path, e))
}
