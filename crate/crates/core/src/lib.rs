//! RNN transducer inference without the standard library.
//!
//! The crate holds everything that is pure computation: dense numerics, the
//! encoder / prediction / joint networks, the beam-search decoders and the
//! evaluation metrics. File formats, timing and the command-line driver live
//! in the `rnnt-cli` companion crate.
//!
//! Decoders provided:
//!
//! * [`decode::decode_greedy`]: one emission per frame, argmax.
//! * [`decode::decode_reference`]: the classic transducer beam search with an
//!   unbounded expansion loop per frame.
//! * [`decode::decode_improved`]: the same loop with `expand_beam` and
//!   `state_beam` pruning.
//! * [`decode::decode_osc`]: one-step constrained beam search. Every frame is
//!   a fixed number of batched network calls, no expansion loop.
//! * [`decode::exhaustive_decode`]: lattice forward recursion over every
//!   label sequence, used as an oracle on tiny problems.

#![no_std]

extern crate alloc;

pub mod decode;
pub mod metrics;
pub mod model;
pub mod numerics;

mod error;

pub use error::{Error, Result};
pub use model::{Label, ModelConfig, ModelWeights, BLANK};
pub use numerics::{LogProb, Matrix};
