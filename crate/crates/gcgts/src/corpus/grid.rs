//! Gold grid encoding. Each upper-triangle cell (i, j), i <= j, is labeled
//! A when both characters sit in one aspect term, O likewise for opinion
//! terms, P when the two characters join a gold aspect-opinion pair, N
//! otherwise — with precedence P > A > O > N. The supervision mask selects
//! which cells train and decode: all upper-triangle cells, or only those
//! whose characters are both word-initial.

use super::{Label, Sentence, TagMode};

/// Character positions that carry supervision under the given mode,
/// ascending.
pub fn supervised_positions(sentence: &Sentence, mode: TagMode) -> Vec<usize> {
    match mode {
        TagMode::FirstChar => sentence.word_starts(),
        TagMode::AllChar => (0..sentence.n_chars()).collect(),
    }
}

/// Row-major `n*n` 0/1 supervision mask: 1 exactly at upper-triangle cells
/// whose two positions are both supervised.
pub fn supervision_mask(sentence: &Sentence, mode: TagMode) -> Vec<u8> {
    let n = sentence.n_chars();
    let mut sup = vec![false; n];
    for p in supervised_positions(sentence, mode) {
        sup[p] = true;
    }
    let mut mask = vec![0u8; n * n];
    for i in 0..n {
        for j in i..n {
            if sup[i] && sup[j] {
                mask[i * n + j] = 1;
            }
        }
    }
    mask
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelGrid {
    n: usize,
    labels: Vec<Label>,
    mask: Vec<u8>,
}

impl LabelGrid {
    /// Encodes the gold annotations of a validated sentence.
    pub fn encode(sentence: &Sentence, mode: TagMode) -> LabelGrid {
        let n = sentence.n_chars();
        for s in sentence.aspects.iter().chain(&sentence.opinions) {
            assert!(
                !s.is_empty() && s.end <= n,
                "span [{}, {}) out of range for {n} characters",
                s.start,
                s.end
            );
        }
        let mut labels = vec![Label::N; n * n];
        // A and O first; O never displaces A, and P displaces both below.
        for span in &sentence.aspects {
            for i in span.start..span.end {
                for j in i..span.end {
                    labels[i * n + j] = Label::A;
                }
            }
        }
        for span in &sentence.opinions {
            for i in span.start..span.end {
                for j in i..span.end {
                    if labels[i * n + j] == Label::N {
                        labels[i * n + j] = Label::O;
                    }
                }
            }
        }
        for &(a, o) in &sentence.pairs {
            let sa = sentence.aspects[a];
            let so = sentence.opinions[o];
            for i in sa.start..sa.end {
                for j in so.start..so.end {
                    labels[i.min(j) * n + i.max(j)] = Label::P;
                }
            }
        }
        LabelGrid { n, labels, mask: supervision_mask(sentence, mode) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self, i: usize, j: usize) -> Label {
        self.labels[i * self.n + j]
    }

    pub fn masked(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j] != 0
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Supervised cells in row-major order with their labels.
    pub fn masked_cells(&self) -> Vec<(usize, usize, Label)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i..self.n {
                if self.masked(i, j) {
                    out.push((i, j, self.label(i, j)));
                }
            }
        }
        out
    }
}
