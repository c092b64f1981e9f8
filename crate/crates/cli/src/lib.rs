//! File formats, synthetic data and the command-line driver for the
//! `rnnt-core` decoders.
//!
//! * [`model_file`]: `RNTW` weight files.
//! * [`feature_file`]: `RNTF` feature files.
//! * [`transcript`]: tab-separated reference transcripts.
//! * [`result_log`]: line-delimited JSON decode results.
//! * [`bench`]: the timing grid behind `rnnt bench`.
//! * [`cli`]: argument parsing and the subcommands.

mod bytes;

pub mod bench;
pub mod cli;
pub mod corpus;
pub mod decoders;
pub mod error;
pub mod feature_file;
pub mod model_file;
pub mod result_log;
pub mod synth;
pub mod transcript;

pub use error::{FormatError, Result};
