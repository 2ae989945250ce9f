//! Deterministic synthetic corpus generator. Sentences follow the template
//! [aspect words] [optional filler] [opinion words] [punctuation], optionally
//! twice (two clauses), with every word 1-3 characters drawn from disjoint
//! pools per role. Dependency trees are random but always projective and
//! single-rooted, with the (first) opinion word as the sentence head — the
//! shape a downstream parser would produce for evaluative clauses.

use super::{Dep, Sentence, Span};
use crate::numkit::SplitMix64;

const ASPECT_CHARS: &[&str] = &["价", "格", "成", "本", "收", "入", "利", "润", "销", "量", "库", "存"];
const OPINION_CHARS: &[&str] = &["涨", "跌", "升", "降", "增", "减", "高", "低"];
const FILLER_CHARS: &[&str] = &["的", "了", "很", "也", "更", "还"];
const PUNCT_CHARS: &[&str] = &["。", "！", "？"];

#[derive(Clone, Debug)]
pub struct SynthParams {
    /// Probability of a second clause after the first.
    pub second_clause_prob: f64,
    /// Probability of a filler word between aspect and opinion.
    pub filler_prob: f64,
    /// Probability that a clause carries an aspect term with no opinion.
    pub aspect_only_prob: f64,
    /// Probability that a clause carries an opinion term with no aspect.
    pub opinion_only_prob: f64,
    /// Probability that an aspect term spans two words instead of one.
    pub two_word_aspect_prob: f64,
    /// Probability that an opinion term spans two words instead of one.
    pub two_word_opinion_prob: f64,
}

impl SynthParams {
    /// Varied corpus: clause combinations, unpaired terms, multi-word terms.
    pub fn mixed() -> Self {
        SynthParams {
            second_clause_prob: 0.25,
            filler_prob: 0.35,
            aspect_only_prob: 0.06,
            opinion_only_prob: 0.06,
            two_word_aspect_prob: 0.35,
            two_word_opinion_prob: 0.15,
        }
    }

    /// Single-clause, fully paired sentences — the easiest shape to fit.
    pub fn simple() -> Self {
        SynthParams {
            second_clause_prob: 0.0,
            filler_prob: 0.35,
            aspect_only_prob: 0.0,
            opinion_only_prob: 0.0,
            two_word_aspect_prob: 0.3,
            two_word_opinion_prob: 0.0,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum ClauseKind {
    Paired,
    AspectOnly,
    OpinionOnly,
}

struct WordDraft {
    chars: Vec<String>,
    pos: &'static str,
    head: i64,
    rel: &'static str,
}

fn word_len(rng: &mut SplitMix64) -> usize {
    let x = rng.next_f64();
    if x < 0.3 {
        1
    } else if x < 0.8 {
        2
    } else {
        3
    }
}

fn draw_word(rng: &mut SplitMix64, pool: &[&str], pos: &'static str) -> WordDraft {
    let chars = (0..word_len(rng)).map(|_| rng.pick(pool).to_string()).collect();
    WordDraft { chars, pos, head: 0, rel: "" }
}

/// Appends one clause and records its gold annotations (word-index ranges).
/// Returns the clause's head word. Attachment is sampled — a non-head word
/// hangs off either the clause head or its right neighbour inside the term —
/// which keeps every tree projective while varying its shape.
#[allow(clippy::too_many_arguments)]
fn push_clause(
    kind: ClauseKind,
    rng: &mut SplitMix64,
    params: &SynthParams,
    words: &mut Vec<WordDraft>,
    aspects_w: &mut Vec<(usize, usize)>,
    opinions_w: &mut Vec<(usize, usize)>,
    pairs: &mut Vec<(usize, usize)>,
    attach_to: Option<usize>,
) {
    let base = words.len();
    let n_aspect = match kind {
        ClauseKind::OpinionOnly => 0,
        _ => 1 + usize::from(rng.chance(params.two_word_aspect_prob)),
    };
    let has_filler = kind != ClauseKind::AspectOnly && rng.chance(params.filler_prob);
    let n_opinion = match kind {
        ClauseKind::AspectOnly => 0,
        _ => 1 + usize::from(rng.chance(params.two_word_opinion_prob)),
    };

    for _ in 0..n_aspect {
        words.push(draw_word(rng, ASPECT_CHARS, "NN"));
    }
    if has_filler {
        words.push(draw_word(rng, FILLER_CHARS, "AD"));
    }
    let opinion_base = words.len();
    for _ in 0..n_opinion {
        words.push(draw_word(rng, OPINION_CHARS, "VV"));
    }
    words.push(draw_word(rng, PUNCT_CHARS, "PU"));

    let root = if n_opinion > 0 { opinion_base } else { base + n_aspect - 1 };
    for w in base..words.len() {
        let (head, rel) = if w == root {
            match attach_to {
                Some(h) => (h as i64, "conj"),
                None => (-1, "root"),
            }
        } else if w < base + n_aspect {
            // Aspect word: hop to the next aspect word or straight to the head.
            if w + 1 < base + n_aspect && rng.chance(0.5) {
                (w as i64 + 1, "nmod")
            } else if root == base + n_aspect - 1 {
                (root as i64, "nmod")
            } else {
                (root as i64, "nsubj")
            }
        } else if words[w].pos == "AD" {
            (root as i64, "advmod")
        } else if words[w].pos == "VV" {
            (root as i64, "conj")
        } else {
            (root as i64, "punct")
        };
        words[w].head = head;
        words[w].rel = rel;
    }

    if n_aspect > 0 {
        aspects_w.push((base, base + n_aspect));
    }
    if n_opinion > 0 {
        opinions_w.push((opinion_base, opinion_base + n_opinion));
    }
    if kind == ClauseKind::Paired {
        pairs.push((aspects_w.len() - 1, opinions_w.len() - 1));
    }
}

fn clause_kind(rng: &mut SplitMix64, params: &SynthParams) -> ClauseKind {
    let x = rng.next_f64();
    if x < params.aspect_only_prob {
        ClauseKind::AspectOnly
    } else if x < params.aspect_only_prob + params.opinion_only_prob {
        ClauseKind::OpinionOnly
    } else {
        ClauseKind::Paired
    }
}

fn generate_sentence(rng: &mut SplitMix64, params: &SynthParams) -> Sentence {
    let mut words = Vec::new();
    let mut aspects_w = Vec::new();
    let mut opinions_w = Vec::new();
    let mut pairs = Vec::new();

    push_clause(
        clause_kind(rng, params),
        rng,
        params,
        &mut words,
        &mut aspects_w,
        &mut opinions_w,
        &mut pairs,
        None,
    );
    let first_root = words.iter().position(|w| w.head == -1).expect("first clause sets the root");
    if rng.chance(params.second_clause_prob) {
        push_clause(
            clause_kind(rng, params),
            rng,
            params,
            &mut words,
            &mut aspects_w,
            &mut opinions_w,
            &mut pairs,
            Some(first_root),
        );
    }

    // Lay words out over characters and translate word ranges to char spans.
    let mut chars = Vec::new();
    let mut word_spans = Vec::new();
    for w in &words {
        let start = chars.len();
        chars.extend(w.chars.iter().cloned());
        word_spans.push(Span::new(start, chars.len()));
    }
    let to_char_span =
        |(ws, we): (usize, usize)| Span::new(word_spans[ws].start, word_spans[we - 1].end);

    let sentence = Sentence {
        chars,
        words: word_spans.clone(),
        pos: words.iter().map(|w| w.pos.to_string()).collect(),
        deps: words
            .iter()
            .map(|w| Dep { head: w.head, rel: w.rel.to_string() })
            .collect(),
        aspects: aspects_w.into_iter().map(to_char_span).collect(),
        opinions: opinions_w.into_iter().map(to_char_span).collect(),
        pairs,
        id: 0,
    };
    debug_assert_eq!(sentence.validate(), Ok(()));
    sentence
}

/// Generates `count` sentences, deterministically for a given seed.
pub fn generate(seed: u64, count: usize, params: &SynthParams) -> Vec<Sentence> {
    let mut rng = SplitMix64::new(seed);
    (0..count)
        .map(|id| {
            let mut s = generate_sentence(&mut rng, params);
            s.id = id;
            s
        })
        .collect()
}
