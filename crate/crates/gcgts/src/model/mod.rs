//! The grid tagging model: configuration, per-sentence index plumbing, and
//! the network itself (fusion encoder, grid construction, convolutions,
//! iterative inference, masked grid loss).

mod config;
mod index;
mod net;

pub use config::{EncoderKind, ModelConfig, Preset, PRESETS};
pub use index::GridIndex;
pub use net::{argmax_labels, Forward, Model, TapeBinding};
