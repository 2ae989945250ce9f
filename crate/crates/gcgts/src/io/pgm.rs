//! Binary PGM (P5) rendering of a square probability grid.
//!
//! Each cell maps to one pixel: `round(255 * (1 - p))` with ties rounded away
//! from zero, so probability 0 is white and probability 1 is black — the
//! darker the cell, the more probable the pair. Row index is the aspect axis,
//! column index the opinion axis.

use std::fs::File;
use std::io::Write;
use std::path::Path;

/// The P5 bytes for an `n x n` grid of probabilities in row-major order.
pub fn pgm_bytes(n: usize, probs: &[f64]) -> Vec<u8> {
    assert_eq!(probs.len(), n * n, "pgm: {} probabilities for an {n}x{n} grid", probs.len());
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(probs.iter().map(|&p| {
        assert!((0.0..=1.0).contains(&p), "pgm: probability {p} outside [0, 1]");
        (255.0 * (1.0 - p)).round() as u8
    }));
    out
}

pub fn write_pgm(path: &Path, n: usize, probs: &[f64]) -> std::io::Result<()> {
    File::create(path)?.write_all(&pgm_bytes(n, probs))
}

// ── Tests ────────────────────────────────────────────────────────────────
