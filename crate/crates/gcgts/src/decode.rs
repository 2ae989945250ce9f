//! Turning a predicted label grid back into aspect terms, opinion terms, and
//! aspect-opinion pairs.
//!
//! Span detection is keyed on the diagonal: a candidate aspect is a maximal
//! run of consecutive supervised positions whose diagonal cells are all `A`
//! (opinions likewise with `O`), extended to whole-word boundaries. A pair is
//! emitted when at least one grid cell between the two spans' supervised
//! positions — read at the upper-triangle orientation `(min, max)` — is
//! labeled `P`. Off-diagonal `A`/`O` cells are corroborating only; they are
//! never required, which makes decoding a gold grid reproduce the gold
//! annotations exactly.
//!
//! [`decode_grid_oracle`] re-derives the same result by exhaustive span
//! enumeration instead of a linear scan; it exists so the fast path can be
//! checked against an independent implementation.

use crate::corpus::{supervised_positions, Label, LabelGrid, Sentence, Span, TagMode};

/// Spans and pairs extracted from one sentence. Span lists are sorted and
/// deduplicated, so two results compare equal iff they extract the same sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractionResult {
    pub aspects: Vec<Span>,
    pub opinions: Vec<Span>,
    /// (aspect span, opinion span); both members appear in the lists above.
    pub pairs: Vec<(Span, Span)>,
}

impl ExtractionResult {
    pub fn new(
        mut aspects: Vec<Span>,
        mut opinions: Vec<Span>,
        mut pairs: Vec<(Span, Span)>,
    ) -> Self {
        aspects.sort_unstable();
        aspects.dedup();
        opinions.sort_unstable();
        opinions.dedup();
        pairs.sort_unstable();
        pairs.dedup();
        ExtractionResult { aspects, opinions, pairs }
    }

    pub fn empty() -> Self {
        ExtractionResult { aspects: Vec::new(), opinions: Vec::new(), pairs: Vec::new() }
    }

    /// The gold annotations of a sentence, in extraction form.
    pub fn from_gold(sentence: &Sentence) -> Self {
        ExtractionResult::new(
            sentence.aspects.clone(),
            sentence.opinions.clone(),
            sentence
                .pairs
                .iter()
                .map(|&(a, o)| (sentence.aspects[a], sentence.opinions[o]))
                .collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.aspects.is_empty() && self.opinions.is_empty() && self.pairs.is_empty()
    }
}

/// Extends the run `[first, last]` (character positions) to cover the whole
/// words containing its endpoints.
fn extend_to_words(sentence: &Sentence, first: usize, last: usize) -> Span {
    let w_first = sentence.word_of(first);
    let w_last = sentence.word_of(last);
    Span::new(sentence.words[w_first].start, sentence.words[w_last].end)
}

/// Supervised positions covered by a (word-aligned) span.
fn positions_in(span: Span, positions: &[usize]) -> Vec<usize> {
    positions.iter().copied().filter(|&p| span.contains(p)).collect()
}

fn diag(labels: &[Label], n: usize, p: usize) -> Label {
    labels[p * n + p]
}

/// Decodes a full `n × n` label grid (row-major; only cells inside the
/// supervision mask are read). `labels` is typically the argmax of the final
/// predicted distribution, but any assignment decodes to a (possibly empty)
/// result.
pub fn decode_grid(labels: &[Label], sentence: &Sentence, mode: TagMode) -> ExtractionResult {
    let n = sentence.n_chars();
    assert_eq!(labels.len(), n * n, "decode_grid: {} labels for n={n}", labels.len());
    let positions = supervised_positions(sentence, mode);

    let runs_of = |target: Label| -> Vec<Span> {
        let mut spans = Vec::new();
        let mut run: Option<(usize, usize)> = None;
        for &p in &positions {
            if diag(labels, n, p) == target {
                run = Some(match run {
                    Some((first, _)) => (first, p),
                    None => (p, p),
                });
            } else if let Some((first, last)) = run.take() {
                spans.push(extend_to_words(sentence, first, last));
            }
        }
        if let Some((first, last)) = run {
            spans.push(extend_to_words(sentence, first, last));
        }
        spans
    };

    let aspects = runs_of(Label::A);
    let opinions = runs_of(Label::O);

    let mut pairs = Vec::new();
    for &a in &aspects {
        let pa = positions_in(a, &positions);
        for &o in &opinions {
            let po = positions_in(o, &positions);
            let witnessed = pa.iter().any(|&i| {
                po.iter().any(|&j| labels[i.min(j) * n + i.max(j)] == Label::P)
            });
            if witnessed {
                pairs.push((a, o));
            }
        }
    }

    ExtractionResult::new(aspects, opinions, pairs)
}

/// Decodes the gold grid of a sentence — the model-free upper bound.
pub fn decode_gold(sentence: &Sentence, mode: TagMode) -> ExtractionResult {
    decode_grid(LabelGrid::encode(sentence, mode).labels(), sentence, mode)
}

/// Reference decoder: enumerates every candidate span `[first, last]` over
/// supervised positions, keeps those that are uniformly labeled and maximal,
/// and finds pair witnesses by scanning the whole upper triangle. Quadratic
/// and deliberately unlike [`decode_grid`]'s linear scan; used to cross-check
/// it.
pub fn decode_grid_oracle(
    labels: &[Label],
    sentence: &Sentence,
    mode: TagMode,
) -> ExtractionResult {
    let n = sentence.n_chars();
    assert_eq!(labels.len(), n * n, "decode_grid_oracle: {} labels for n={n}", labels.len());
    let positions = supervised_positions(sentence, mode);
    let m = positions.len();

    let spans_of = |target: Label| -> Vec<Span> {
        let mut spans = Vec::new();
        for first in 0..m {
            for last in first..m {
                let uniform = (first..=last).all(|k| diag(labels, n, positions[k]) == target);
                let maximal_left = first == 0 || diag(labels, n, positions[first - 1]) != target;
                let maximal_right = last + 1 == m || diag(labels, n, positions[last + 1]) != target;
                if uniform && maximal_left && maximal_right {
                    spans.push(extend_to_words(sentence, positions[first], positions[last]));
                }
            }
        }
        spans
    };

    let aspects = spans_of(Label::A);
    let opinions = spans_of(Label::O);

    let supervised = |p: usize| positions.binary_search(&p).is_ok();
    let mut pairs = Vec::new();
    for &a in &aspects {
        for &o in &opinions {
            'witness: for u in 0..n {
                for v in u..n {
                    if labels[u * n + v] == Label::P
                        && supervised(u)
                        && supervised(v)
                        && ((a.contains(u) && o.contains(v)) || (o.contains(u) && a.contains(v)))
                    {
                        pairs.push((a, o));
                        break 'witness;
                    }
                }
            }
        }
    }

    ExtractionResult::new(aspects, opinions, pairs)
}
