//! Exact-match scoring of extraction results: micro-averaged precision,
//! recall, and F1 for pairs, aspect terms, and opinion terms.

use serde::{Deserialize, Serialize};

use crate::decode::ExtractionResult;

/// One precision/recall/F1 triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

impl Prf {
    /// Micro-averaged scores from raw counts. Undefined ratios (empty
    /// denominator) are 0 by convention, as is F1 when P + R = 0.
    pub fn from_counts(tp: usize, n_pred: usize, n_gold: usize) -> Prf {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let p = ratio(tp, n_pred);
        let r = ratio(tp, n_gold);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Prf { p, r, f1 }
    }
}

/// The three-way evaluation report. Serializes to the JSON shape
/// `{"pair":{"p":…,"r":…,"f1":…},"aspect":{…},"opinion":{…},"n_sentences":…}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pair: Prf,
    pub aspect: Prf,
    pub opinion: Prf,
    pub n_sentences: usize,
}

#[derive(Default)]
struct Counts {
    tp: usize,
    n_pred: usize,
    n_gold: usize,
}

impl Counts {
    fn add<T: PartialEq>(&mut self, pred: &[T], gold: &[T]) {
        // Both sides are deduplicated by construction, so containment counting
        // cannot double-credit a prediction.
        self.tp += pred.iter().filter(|x| gold.contains(x)).count();
        self.n_pred += pred.len();
        self.n_gold += gold.len();
    }

    fn prf(&self) -> Prf {
        Prf::from_counts(self.tp, self.n_pred, self.n_gold)
    }
}

/// Scores predictions against gold, micro-averaged over the corpus. The two
/// slices are aligned sentence by sentence.
pub fn score(pred: &[ExtractionResult], gold: &[ExtractionResult]) -> Metrics {
    assert_eq!(
        pred.len(),
        gold.len(),
        "score: {} predictions vs {} gold results",
        pred.len(),
        gold.len()
    );
    let mut pair = Counts::default();
    let mut aspect = Counts::default();
    let mut opinion = Counts::default();
    for (p, g) in pred.iter().zip(gold) {
        pair.add(&p.pairs, &g.pairs);
        aspect.add(&p.aspects, &g.aspects);
        opinion.add(&p.opinions, &g.opinions);
    }
    Metrics {
        pair: pair.prf(),
        aspect: aspect.prf(),
        opinion: opinion.prf(),
        n_sentences: pred.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Span;

    fn res(aspects: &[(usize, usize)], opinions: &[(usize, usize)], pairs: &[((usize, usize), (usize, usize))]) -> ExtractionResult {
        let span = |(s, e): (usize, usize)| Span::new(s, e);
        ExtractionResult::new(
            aspects.iter().copied().map(span).collect(),
            opinions.iter().copied().map(span).collect(),
            pairs.iter().map(|&(a, o)| (span(a), span(o))).collect(),
        )
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let g = vec![res(&[(0, 2)], &[(2, 4)], &[((0, 2), (2, 4))])];
        let m = score(&g, &g);
        assert_eq!(m.pair, Prf { p: 1.0, r: 1.0, f1: 1.0 });
        assert_eq!(m.aspect.f1, 1.0);
        assert_eq!(m.opinion.f1, 1.0);
        assert_eq!(m.n_sentences, 1);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let g = vec![res(&[(0, 2)], &[(2, 4)], &[((0, 2), (2, 4))])];
        let p = vec![ExtractionResult::empty()];
        let m = score(&p, &g);
        assert_eq!(m.pair, Prf { p: 0.0, r: 0.0, f1: 0.0 });
        assert_eq!(m.aspect, Prf { p: 0.0, r: 0.0, f1: 0.0 });
    }

    #[test]
    fn half_right_pairs_score_half() {
        // 2 predicted pairs, 1 correct, 2 gold → P = R = F1 = 0.5.
        let g = vec![res(
            &[(0, 1), (2, 3)],
            &[(4, 5), (6, 7)],
            &[((0, 1), (4, 5)), ((2, 3), (6, 7))],
        )];
        let p = vec![res(
            &[(0, 1), (2, 3)],
            &[(4, 5), (6, 7)],
            &[((0, 1), (4, 5)), ((2, 3), (4, 5))],
        )];
        let m = score(&p, &g);
        assert_eq!(m.pair, Prf { p: 0.5, r: 0.5, f1: 0.5 });
    }

    #[test]
    fn adding_a_correct_pair_never_hurts() {
        let gold = vec![res(
            &[(0, 1), (2, 3)],
            &[(4, 5)],
            &[((0, 1), (4, 5)), ((2, 3), (4, 5))],
        )];
        let before = vec![res(&[(0, 1)], &[(4, 5)], &[((0, 1), (4, 5))])];
        let after = vec![res(
            &[(0, 1), (2, 3)],
            &[(4, 5)],
            &[((0, 1), (4, 5)), ((2, 3), (4, 5))],
        )];
        let mb = score(&before, &gold);
        let ma = score(&after, &gold);
        assert!(ma.pair.p >= mb.pair.p && ma.pair.r >= mb.pair.r && ma.pair.f1 >= mb.pair.f1);
    }

    #[test]
    fn bounds_hold_on_random_results() {
        use crate::numkit::SplitMix64;
        let mut rng = SplitMix64::new(5);
        let mut randres = |n: usize| -> Vec<ExtractionResult> {
            (0..n)
                .map(|_| {
                    let spans = |rng: &mut SplitMix64| -> Vec<Span> {
                        (0..rng.below(3)).map(|_| {
                            let s = rng.below(8) as usize;
                            Span::new(s, s + 1 + rng.below(3) as usize)
                        }).collect()
                    };
                    let a = spans(&mut rng);
                    let o = spans(&mut rng);
                    let mut pairs = Vec::new();
                    for &x in &a {
                        for &y in &o {
                            if rng.chance(0.5) {
                                pairs.push((x, y));
                            }
                        }
                    }
                    ExtractionResult::new(a, o, pairs)
                })
                .collect()
        };
        let p = randres(50);
        let g = randres(50);
        let m = score(&p, &g);
        for prf in [m.pair, m.aspect, m.opinion] {
            assert!((0.0..=1.0).contains(&prf.p));
            assert!((0.0..=1.0).contains(&prf.r));
            assert!((0.0..=1.0).contains(&prf.f1));
        }
    }

    #[test]
    fn metrics_json_shape() {
        let m = Metrics {
            pair: Prf { p: 1.0, r: 0.5, f1: 2.0 / 3.0 },
            aspect: Prf { p: 1.0, r: 1.0, f1: 1.0 },
            opinion: Prf { p: 0.0, r: 0.0, f1: 0.0 },
            n_sentences: 7,
        };
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["pair"]["p"], 1.0);
        assert_eq!(json["pair"]["r"], 0.5);
        assert_eq!(json["aspect"]["f1"], 1.0);
        assert_eq!(json["n_sentences"], 7);
        let back: Metrics = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
    }
}
