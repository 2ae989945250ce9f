//! Single-file model checkpoints.
//!
//! Layout: the magic bytes `GCGTS1`, a little-endian u32 giving the manifest
//! length, the JSON manifest, then every tensor's data as little-endian f32
//! in manifest order. The manifest records the model configuration, the
//! vocabulary lists, and a tensor directory of (name, shape, dtype, byte
//! offset into the payload). Directory offsets tile the payload exactly, and
//! save → load → save reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Vocabs;
use crate::model::{Model, ModelConfig};
use crate::numkit::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"GCGTS1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: expected magic {:?}", std::str::from_utf8(CHECKPOINT_MAGIC).unwrap())]
    BadMagic,
    #[error("file ends inside the {section}")]
    Truncated { section: &'static str },
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("configuration rejected: {0}")]
    Config(String),
    #[error("tensor directory: {0}")]
    Directory(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    vocabs: VocabLists,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct VocabLists {
    chars: Vec<String>,
    pos: Vec<String>,
    rels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

pub fn save(path: &Path, model: &Model<f32>) -> Result<(), CheckpointError> {
    let mut tensors = Vec::new();
    let mut offset = 0u64;
    for (name, t) in model.store.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: "f32".to_string(),
            offset,
        });
        offset += 4 * t.len() as u64;
    }
    let manifest = Manifest {
        config: model.config.clone(),
        vocabs: VocabLists {
            chars: model.vocabs.char_list().to_vec(),
            pos: model.vocabs.pos_list().to_vec(),
            rels: model.vocabs.rel_list().to_vec(),
        },
        tensors,
    };
    let manifest = serde_json::to_vec(&manifest)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&u32::try_from(manifest.len()).expect("manifest fits u32").to_le_bytes())?;
    w.write_all(&manifest)?;
    for (_, t) in model.store.iter() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model<f32>, CheckpointError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < CHECKPOINT_MAGIC.len() + 4 {
        return Err(CheckpointError::Truncated { section: "header" });
    }
    let (magic, rest) = bytes.split_at(CHECKPOINT_MAGIC.len());
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let (len, rest) = rest.split_at(4);
    let manifest_len = u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize;
    if rest.len() < manifest_len {
        return Err(CheckpointError::Truncated { section: "manifest" });
    }
    let (manifest, payload) = rest.split_at(manifest_len);
    let manifest: Manifest = serde_json::from_slice(manifest)?;
    manifest.config.validate().map_err(CheckpointError::Config)?;
    let vocabs =
        Vocabs::from_lists(manifest.vocabs.chars, manifest.vocabs.pos, manifest.vocabs.rels);

    // The directory must agree with what this configuration registers, and
    // its offsets must tile the payload exactly.
    let reference: Model<f32> = Model::new(manifest.config.clone(), vocabs.clone(), 0);
    if manifest.tensors.len() != reference.store.len() {
        return Err(CheckpointError::Directory(format!(
            "{} tensors in file, the configuration registers {}",
            manifest.tensors.len(),
            reference.store.len()
        )));
    }
    let mut store = ParamStore::new();
    let mut offset = 0u64;
    for (entry, (want_name, want)) in manifest.tensors.iter().zip(reference.store.iter()) {
        if entry.name != want_name || entry.shape != want.shape() {
            return Err(CheckpointError::Directory(format!(
                "entry '{}' {:?} where the configuration registers '{}' {:?}",
                entry.name,
                entry.shape,
                want_name,
                want.shape()
            )));
        }
        if entry.dtype != "f32" {
            return Err(CheckpointError::Directory(format!(
                "entry '{}' has unsupported dtype {:?}",
                entry.name, entry.dtype
            )));
        }
        if entry.offset != offset {
            return Err(CheckpointError::Directory(format!(
                "entry '{}' at offset {}, expected {}",
                entry.name, entry.offset, offset
            )));
        }
        let len: usize = entry.shape.iter().product();
        let start = offset as usize;
        let end = start + 4 * len;
        if end > payload.len() {
            return Err(CheckpointError::Truncated { section: "payload" });
        }
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        store.register(&entry.name, Tensor::param(entry.shape.clone(), data));
        offset = end as u64;
    }
    if offset as usize != payload.len() {
        return Err(CheckpointError::Directory(format!(
            "directory covers {} payload bytes, file carries {}",
            offset,
            payload.len()
        )));
    }
    Ok(Model::from_parts(manifest.config, vocabs, store))
}

// ── Tests ────────────────────────────────────────────────────────────────
