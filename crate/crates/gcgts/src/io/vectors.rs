//! Sidecar file of frozen character vectors for the file-backed encoder.
//!
//! Layout: the ASCII header line `GCVEC1`, then one block per sentence — an
//! ASCII line `<id> <n> <d_h>` followed by `n * d_h` little-endian f32 bytes.
//! Blocks are keyed by the sentence's ordinal id in its corpus file, and a
//! write → read round trip preserves every bit.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::Sentence;
use crate::numkit::Tensor;

pub const VECTORS_MAGIC: &str = "GCVEC1";

#[derive(Debug, Error)]
pub enum VectorsError {
    #[error("not a vector sidecar: expected first line {VECTORS_MAGIC:?}, got {0:?}")]
    BadMagic(String),
    #[error("block {ordinal}: malformed block line {line:?} (want \"<id> <n> <d_h>\")")]
    BadBlockLine { ordinal: usize, line: String },
    #[error("block {ordinal}: duplicate sentence id {id}")]
    DuplicateId { ordinal: usize, id: usize },
    #[error("block {ordinal}: file ends inside the payload ({want} bytes expected)")]
    Truncated { ordinal: usize, want: usize },
    #[error("sentence {id}: no block in the vector sidecar")]
    Missing { id: usize },
    #[error(
        "sentence {id}: sidecar block is {got_n}x{got_d}, \
         the model expects {want_n}x{want_d}"
    )]
    WrongShape { id: usize, got_n: usize, got_d: usize, want_n: usize, want_d: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// In-memory view of a sidecar file: one `[n, d_h]` matrix per sentence id.
#[derive(Debug, Default)]
pub struct VectorTable {
    blocks: HashMap<usize, Tensor<f32>>,
}

impl VectorTable {
    pub fn read(path: &Path) -> Result<VectorTable, VectorsError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end_matches('\n') != VECTORS_MAGIC {
            return Err(VectorsError::BadMagic(line.trim_end_matches('\n').to_string()));
        }
        let mut blocks = HashMap::new();
        for ordinal in 0.. {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                break;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed: Option<(usize, usize, usize)> = match fields.as_slice() {
                [id, n, d] => {
                    match (id.parse(), n.parse(), d.parse()) {
                        (Ok(id), Ok(n), Ok(d)) => Some((id, n, d)),
                        _ => None,
                    }
                }
                _ => None,
            };
            let Some((id, n, d)) = parsed else {
                return Err(VectorsError::BadBlockLine {
                    ordinal,
                    line: line.trim_end_matches('\n').to_string(),
                });
            };
            let mut payload = vec![0u8; n * d * 4];
            r.read_exact(&mut payload)
                .map_err(|_| VectorsError::Truncated { ordinal, want: n * d * 4 })?;
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            if blocks.insert(id, Tensor::new(vec![n, d], data)).is_some() {
                return Err(VectorsError::DuplicateId { ordinal, id });
            }
        }
        Ok(VectorTable { blocks })
    }

    pub fn write<'a, I>(path: &Path, blocks: I) -> Result<(), VectorsError>
    where
        I: IntoIterator<Item = (usize, &'a Tensor<f32>)>,
    {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{VECTORS_MAGIC}")?;
        for (id, t) in blocks {
            assert!(t.rank() == 2, "vector block must be [n, d_h], got {:?}", t.shape());
            writeln!(w, "{id} {} {}", t.dim(0), t.dim(1))?;
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn get(&self, id: usize) -> Option<&Tensor<f32>> {
        self.blocks.get(&id)
    }

    /// The block for one sentence, checked against the sentence length and
    /// the model width.
    pub fn for_sentence(
        &self,
        sentence: &Sentence,
        d_h: usize,
    ) -> Result<&Tensor<f32>, VectorsError> {
        let id = sentence.id;
        let t = self.blocks.get(&id).ok_or(VectorsError::Missing { id })?;
        if t.dim(0) != sentence.n_chars() || t.dim(1) != d_h {
            return Err(VectorsError::WrongShape {
                id,
                got_n: t.dim(0),
                got_d: t.dim(1),
                want_n: sentence.n_chars(),
                want_d: d_h,
            });
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

// ── Tests ────────────────────────────────────────────────────────────────
