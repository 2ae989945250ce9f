//! Per-sentence index plumbing for grid computations. Grids live on the tape
//! as `[n*n, d]` matrices in row-major cell order; everything that addresses
//! cells — pair construction, convolution windows, max-pooling mirrors, loss
//! cell selection — is precomputed here as gather indices.

use std::rc::Rc;

use crate::corpus::{supervision_mask, LabelGrid, Sentence, TagMode};

#[derive(Clone, Debug)]
pub struct GridIndex {
    pub n: usize,
    /// Supervision mask over cells (upper triangle, mode-dependent).
    pub mask: Vec<u8>,
    /// idx_i[i*n+j] = i — gathers a per-character row for the cell's row role.
    pub idx_i: Rc<Vec<isize>>,
    /// idx_j[i*n+j] = j — column role.
    pub idx_j: Rc<Vec<isize>>,
    /// row_pool[i*n+k] = flat index of the conceptual cell (i,k): the stored
    /// upper-triangle cell (min,max). Blocks of n rows then max-reduce to the
    /// per-row pooled vector.
    pub row_pool: Rc<Vec<isize>>,
    /// col_pool[j*n+k] = conceptual cell (k,j), same convention.
    pub col_pool: Rc<Vec<isize>>,
    /// Pool entry liveness: the supervision mask read at the mirrored cell.
    /// All-ones in all-char mode; drops unsupervised cells in first-char mode.
    pub pool_mask_row: Vec<u8>,
    pub pool_mask_col: Vec<u8>,
    /// Flat indices of supervised cells, ascending — the loss support.
    pub masked_cells: Rc<Vec<isize>>,
}

impl GridIndex {
    pub fn new(sentence: &Sentence, mode: TagMode) -> GridIndex {
        let n = sentence.n_chars();
        let mask = supervision_mask(sentence, mode);
        let mirror = |a: usize, b: usize| (a.min(b) * n + a.max(b)) as isize;

        let mut idx_i = Vec::with_capacity(n * n);
        let mut idx_j = Vec::with_capacity(n * n);
        let mut row_pool = Vec::with_capacity(n * n);
        let mut col_pool = Vec::with_capacity(n * n);
        let mut pool_mask_row = Vec::with_capacity(n * n);
        let mut pool_mask_col = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                idx_i.push(a as isize);
                idx_j.push(b as isize);
                row_pool.push(mirror(a, b));
                col_pool.push(mirror(b, a));
                pool_mask_row.push(mask[mirror(a, b) as usize]);
                pool_mask_col.push(mask[mirror(b, a) as usize]);
            }
        }
        let masked_cells =
            (0..n * n).filter(|&c| mask[c] != 0).map(|c| c as isize).collect::<Vec<_>>();

        GridIndex {
            n,
            mask,
            idx_i: Rc::new(idx_i),
            idx_j: Rc::new(idx_j),
            row_pool: Rc::new(row_pool),
            col_pool: Rc::new(col_pool),
            pool_mask_row,
            pool_mask_col,
            masked_cells: Rc::new(masked_cells),
        }
    }

    /// Gather index shifting each cell `offset` columns right (toward larger
    /// j); cells past the boundary read the zero row (-1).
    pub fn row_shift(&self, offset: usize) -> Rc<Vec<isize>> {
        let n = self.n;
        Rc::new(
            (0..n * n)
                .map(|c| {
                    let (i, j) = (c / n, c % n);
                    if j + offset < n { (i * n + j + offset) as isize } else { -1 }
                })
                .collect(),
        )
    }

    /// Same, shifting `offset` rows down (toward larger i).
    pub fn col_shift(&self, offset: usize) -> Rc<Vec<isize>> {
        let n = self.n;
        Rc::new(
            (0..n * n)
                .map(|c| {
                    let (i, j) = (c / n, c % n);
                    if i + offset < n { ((i + offset) * n + j) as isize } else { -1 }
                })
                .collect(),
        )
    }

    /// Gold label ids at the supervised cells, aligned with `masked_cells`.
    pub fn targets(&self, grid: &LabelGrid) -> Rc<Vec<usize>> {
        assert_eq!(grid.mask(), &self.mask[..], "targets: label grid mask differs from index mask");
        Rc::new(self.masked_cells.iter().map(|&c| grid.labels()[c as usize].id()).collect())
    }
}
