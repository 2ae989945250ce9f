//! Character relation graph: an n x n matrix of relation-type ids plus a 0/1
//! adjacency indicator. Characters of one word relate through `self`;
//! characters of two dependency-linked words inherit that arc's relation
//! (direction dropped, so the matrix is symmetric); everything else is the
//! no-relation entry, which is exactly where the adjacency indicator is 0.

use super::vocab::{REL_NONE, REL_SELF};
use super::{Sentence, Vocabs};

#[derive(Clone, Debug, PartialEq)]
pub struct CharGraph {
    n: usize,
    rel_ids: Vec<u32>,
    adj: Vec<u8>,
}

impl CharGraph {
    pub fn build(sentence: &Sentence, vocabs: &Vocabs) -> CharGraph {
        let n = sentence.n_chars();
        let n_words = sentence.words.len();

        // Word of each character, then the symmetrized word-level arc table.
        let mut word_of = vec![0usize; n];
        for (wi, w) in sentence.words.iter().enumerate() {
            for c in w.start..w.end {
                word_of[c] = wi;
            }
        }
        let mut word_rel = vec![REL_NONE; n_words * n_words];
        for (wi, dep) in sentence.deps.iter().enumerate() {
            if dep.head >= 0 {
                let h = dep.head as usize;
                let id = vocabs.rel_id(&dep.rel);
                word_rel[wi * n_words + h] = id;
                word_rel[h * n_words + wi] = id;
            }
        }

        let mut rel_ids = vec![REL_NONE; n * n];
        let mut adj = vec![0u8; n * n];
        for i in 0..n {
            for j in 0..n {
                let (wi, wj) = (word_of[i], word_of[j]);
                let id = if wi == wj { REL_SELF } else { word_rel[wi * n_words + wj] };
                rel_ids[i * n + j] = id;
                adj[i * n + j] = u8::from(id != REL_NONE);
            }
        }
        CharGraph { n, rel_ids, adj }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rel_id(&self, i: usize, j: usize) -> u32 {
        self.rel_ids[i * self.n + j]
    }

    /// Row-major `n*n` relation ids.
    pub fn rel_ids(&self) -> &[u32] {
        &self.rel_ids
    }

    /// Row-major `n*n` 0/1 adjacency: 1 wherever some relation exists.
    pub fn adjacency(&self) -> &[u8] {
        &self.adj
    }
}
