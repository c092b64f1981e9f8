//! `RNTW` model files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `RNTW` |
//! | 2 | version (u16, currently 1) |
//! | 28 | `F, enc_layers, D, pred_layers, pred_hidden, joint_dim, K` as u32 |
//! | ... | parameter blocks as IEEE-754 binary32 |
//!
//! Blocks follow [`ModelConfig::param_layout`]: embedding, encoder layers
//! bottom up (`w_ih`, `w_hh`, `bias`, gates ordered i, f, g, o), predictor
//! layers, then `W_e`, `W_p`, `b_z`, `W_z`, `b_s`. Matrices are row-major.
//! Nothing may follow the last block.

use std::path::Path;

use rnnt_core::{ModelConfig, ModelWeights};

use crate::bytes::{put_f32s, read_file, write_file, Reader};
use crate::error::{FormatError, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"RNTW";
pub const MODEL_VERSION: u16 = 1;
pub const MODEL_HEADER_LEN: usize = 4 + 2 + 7 * 4;

const CONFIG_FIELDS: [&str; 7] = [
    "input_dim",
    "enc_layers",
    "enc_hidden",
    "pred_layers",
    "pred_hidden",
    "joint_dim",
    "num_labels",
];

fn config_fields(c: &ModelConfig) -> [usize; 7] {
    [
        c.input_dim,
        c.enc_layers,
        c.enc_hidden,
        c.pred_layers,
        c.pred_hidden,
        c.joint_dim,
        c.num_labels,
    ]
}

/// Block names and element counts in file order, computed lazily in wide
/// integers so that a hostile header cannot overflow or allocate.
pub(crate) fn block_sizes(c: &ModelConfig) -> impl Iterator<Item = (String, u128)> + '_ {
    let d = c.enc_hidden as u128;
    let vocab = c.num_labels as u128 + 1;
    let layers = move |prefix: &'static str, count: usize, first_in: u128| {
        (0..count).flat_map(move |l| {
            let input = if l == 0 { first_in } else { d };
            [
                (format!("{prefix}.{l}.w_ih"), 4 * d * input),
                (format!("{prefix}.{l}.w_hh"), 4 * d * d),
                (format!("{prefix}.{l}.bias"), 4 * d),
            ]
        })
    };
    let j = c.joint_dim as u128;
    std::iter::once(("pred.embedding".to_string(), vocab * d))
        .chain(layers("enc", c.enc_layers, c.input_dim as u128))
        .chain(layers("pred", c.pred_layers, d))
        .chain([
            ("joint.w_enc".to_string(), j * d),
            ("joint.w_pred".to_string(), j * d),
            ("joint.bias".to_string(), j),
            ("out.weight".to_string(), vocab * j),
            ("out.bias".to_string(), vocab),
        ])
}

pub fn model_to_bytes(w: &ModelWeights) -> Result<Vec<u8>> {
    let c = w.config();
    let mut out = Vec::with_capacity(MODEL_HEADER_LEN);
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for (v, name) in config_fields(c).into_iter().zip(CONFIG_FIELDS) {
        let v = u32::try_from(v).map_err(|_| FormatError::OutOfRange { what: name.to_string() })?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (block, values) in c.param_layout().iter().zip(w.blocks()) {
        put_f32s(&mut out, values, &block.name)?;
    }
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelWeights> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let version = r.u16("header")?;
    if version != MODEL_VERSION {
        return Err(FormatError::VersionMismatch {
            expected: MODEL_VERSION,
            found: version,
        });
    }
    let mut f = [0usize; 7];
    for v in &mut f {
        *v = r.u32("header")? as usize;
    }
    let config = ModelConfig {
        input_dim: f[0],
        enc_layers: f[1],
        enc_hidden: f[2],
        pred_layers: f[3],
        pred_hidden: f[4],
        joint_dim: f[5],
        num_labels: f[6],
    };
    if let Err(e) = config.validate() {
        return Err(FormatError::InvalidHeader {
            field: "config",
            reason: e.to_string(),
        });
    }

    let available = r.remaining();
    let mut needed: u128 = 0;
    for (name, len) in block_sizes(&config) {
        needed += 4 * len;
        if needed > available as u128 {
            return Err(FormatError::Truncated {
                what: format!("block {name}"),
                needed,
                available,
            });
        }
    }
    if needed < available as u128 {
        return Err(FormatError::TrailingBytes {
            what: "last parameter block",
            count: available as u128 - needed,
        });
    }

    let blocks = config
        .param_layout()
        .iter()
        .map(|b| r.f32s(b.len(), &b.name))
        .collect::<Result<Vec<_>>>()?;
    r.finish("last parameter block")?;
    Ok(ModelWeights::from_blocks(config, blocks)?)
}

pub fn write_model(path: &Path, w: &ModelWeights) -> Result<()> {
    write_file(path, &model_to_bytes(w)?)
}

pub fn read_model(path: &Path) -> Result<ModelWeights> {
    model_from_bytes(&read_file(path)?)
}
