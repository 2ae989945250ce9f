//! On-disk formats: model checkpoints, frozen-vector sidecars, and PGM
//! renderings of grid probabilities.

mod checkpoint;
mod pgm;
mod vectors;

pub use checkpoint::{load, save, CheckpointError, CHECKPOINT_MAGIC};
pub use pgm::{pgm_bytes, write_pgm};
pub use vectors::{VectorTable, VectorsError, VECTORS_MAGIC};
