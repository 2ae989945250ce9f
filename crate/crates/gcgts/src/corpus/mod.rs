//! Corpus data model: sentences with word segmentation, POS tags, dependency
//! arcs, and gold aspect/opinion annotations; plus vocabularies, the
//! character relation graph, gold grid encoding, and a synthetic generator.

mod graph;
mod grid;
mod jsonl;
mod synth;
mod vocab;

pub use graph::CharGraph;
pub use grid::{supervised_positions, supervision_mask, LabelGrid};
pub use jsonl::{parse_corpus, read_corpus, write_corpus};
pub use synth::{generate, SynthParams};
pub use vocab::{Vocabs, CHAR_PAD, CHAR_UNK, POS_UNK, REL_NONE, REL_SELF, REL_UNK};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: invalid JSON: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: {rule}")]
    Invalid { line: usize, rule: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Half-open character span `[start, end)`, serialized as `[start, end]`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

/// One dependency arc per word; `head` is a word index, or -1 for ROOT.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dep {
    pub head: i64,
    pub rel: String,
}

/// The four cell labels of the tagging grid.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
#[repr(u8)]
pub enum Label {
    N = 0,
    A = 1,
    O = 2,
    P = 3,
}

impl Label {
    pub const COUNT: usize = 4;

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Label {
        match id {
            0 => Label::N,
            1 => Label::A,
            2 => Label::O,
            3 => Label::P,
            _ => panic!("label id {id} out of range"),
        }
    }
}

/// Which grid cells are supervised and decoded.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagMode {
    /// Only word-initial character positions carry labels.
    FirstChar,
    /// Every character position carries labels.
    AllChar,
}

/// One annotated sentence. `pairs` holds (aspect index, opinion index) into
/// the two span lists. The annotation fields default to empty so that
/// unannotated parser output (chars/words/pos/deps only) parses for
/// prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sentence {
    pub chars: Vec<String>,
    pub words: Vec<Span>,
    pub pos: Vec<String>,
    pub deps: Vec<Dep>,
    #[serde(default)]
    pub aspects: Vec<Span>,
    #[serde(default)]
    pub opinions: Vec<Span>,
    #[serde(default)]
    pub pairs: Vec<(usize, usize)>,
    /// Ordinal position in the corpus file; assigned at read time, not stored.
    #[serde(skip)]
    pub id: usize,
}

impl Sentence {
    pub fn n_chars(&self) -> usize {
        self.chars.len()
    }

    /// Index of the word containing character `i`.
    pub fn word_of(&self, i: usize) -> usize {
        debug_assert!(i < self.n_chars());
        self.words
            .iter()
            .position(|w| w.contains(i))
            .unwrap_or_else(|| panic!("character {i} not covered by any word"))
    }

    pub fn is_word_start(&self, i: usize) -> bool {
        self.words.iter().any(|w| w.start == i)
    }

    pub fn word_starts(&self) -> Vec<usize> {
        self.words.iter().map(|w| w.start).collect()
    }

    /// Concatenated surface form of a character span.
    pub fn text(&self, span: Span) -> String {
        self.chars[span.start..span.end].concat()
    }

    /// Checks every structural invariant, returning the violated rule.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.chars.len();
        if n == 0 {
            return Err("empty sentence".into());
        }
        if self.chars.iter().any(|c| c.is_empty()) {
            return Err("empty character string".into());
        }
        if self.words.is_empty() {
            return Err("no word spans".into());
        }
        if self.pos.len() != self.words.len() {
            return Err(format!(
                "{} POS tags for {} words",
                self.pos.len(),
                self.words.len()
            ));
        }
        if self.deps.len() != self.words.len() {
            return Err(format!(
                "{} dependency entries for {} words",
                self.deps.len(),
                self.words.len()
            ));
        }
        let mut cursor = 0usize;
        for w in &self.words {
            if w.is_empty() {
                return Err(format!("empty word span [{}, {})", w.start, w.end));
            }
            if w.start < cursor {
                return Err("overlapping word spans".into());
            }
            if w.start > cursor {
                return Err(format!("gap before word span [{}, {})", w.start, w.end));
            }
            cursor = w.end;
        }
        if cursor != n {
            return Err(format!("word spans cover [0, {cursor}) but the sentence has {n} characters"));
        }
        let mut roots = 0usize;
        for (wi, dep) in self.deps.iter().enumerate() {
            if dep.head == -1 {
                roots += 1;
            } else {
                if dep.head < 0 || dep.head as usize >= self.words.len() {
                    return Err(format!("word {wi} has head {} out of range", dep.head));
                }
                if dep.head as usize == wi {
                    return Err(format!("word {wi} heads itself"));
                }
            }
        }
        if roots == 0 {
            return Err("no ROOT word".into());
        }
        if roots > 1 {
            return Err(format!("{roots} ROOT words (exactly one required)"));
        }
        for (kind, spans) in [("aspect", &self.aspects), ("opinion", &self.opinions)] {
            for s in spans.iter() {
                if s.is_empty() {
                    return Err(format!("empty {kind} span [{}, {})", s.start, s.end));
                }
                if s.end > n {
                    return Err(format!("{kind} span [{}, {}) out of range", s.start, s.end));
                }
                let starts_word = self.words.iter().any(|w| w.start == s.start);
                let ends_word = self.words.iter().any(|w| w.end == s.end);
                if !starts_word || !ends_word {
                    return Err(format!("{kind} span [{}, {}) not word-aligned", s.start, s.end));
                }
            }
        }
        for &(a, o) in &self.pairs {
            if a >= self.aspects.len() || o >= self.opinions.len() {
                return Err(format!("pair ({a}, {o}) references a missing aspect or opinion"));
            }
        }
        Ok(())
    }
}

/// The running example used across docs and tests: a four-word sentence
/// "原材料 价格 上涨 。" whose aspect "原材料价格" (raw-material price) pairs
/// with the opinion "上涨" (rise).
pub fn example_sentence() -> Sentence {
    let s = Sentence {
        chars: ["原", "材", "料", "价", "格", "上", "涨", "。"]
            .iter()
            .map(|c| c.to_string())
            .collect(),
        words: vec![Span::new(0, 3), Span::new(3, 5), Span::new(5, 7), Span::new(7, 8)],
        pos: vec!["NN".into(), "NN".into(), "VV".into(), "PU".into()],
        deps: vec![
            Dep { head: 1, rel: "nmod".into() },
            Dep { head: 2, rel: "nsubj".into() },
            Dep { head: -1, rel: "root".into() },
            Dep { head: 2, rel: "punct".into() },
        ],
        aspects: vec![Span::new(0, 5)],
        opinions: vec![Span::new(5, 7)],
        pairs: vec![(0, 0)],
        id: 0,
    };
    debug_assert!(s.validate().is_ok());
    s
}
