//! Minimal dense-tensor engine: row-major tensors, a reverse-mode gradient
//! tape, a named parameter store, seeded initialization, and Adam. This is
//! the sole numeric substrate of the crate.

mod adam;
mod params;
mod rng;
mod tape;
mod tensor;

pub use adam::Adam;
pub use params::ParamStore;
pub use rng::{fnv1a, glorot, param_rng, SplitMix64};
pub use tape::{Tape, Var};
pub use tensor::{Scalar, Tensor};
