//! Entity-span extraction and exact-match entity-level scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embeddings::{BioTag, EmbedError};

/// A labeled span, end exclusive, offsets in characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// Turns a BIO tag sequence into maximal spans.
///
/// An `I-X` with no legal predecessor starts a new span (lenient
/// repair), so unconstrained baseline output can still be scored.
pub fn extract_entities<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Entity>, EmbedError> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (pos, tag) in tags.iter().enumerate() {
        let parsed = BioTag::parse(tag.as_ref())?;
        match parsed {
            BioTag::Outside => {
                if let Some((start, label)) = open.take() {
                    spans.push(Entity {
                        start,
                        end: pos,
                        label,
                    });
                }
            }
            BioTag::Begin(label) => {
                if let Some((start, prev)) = open.take() {
                    spans.push(Entity {
                        start,
                        end: pos,
                        label: prev,
                    });
                }
                open = Some((pos, label));
            }
            BioTag::Inside(label) => match &open {
                Some((_, prev)) if *prev == label => {}
                _ => {
                    // Repair: close whatever was open, start a new span.
                    if let Some((start, prev)) = open.take() {
                        spans.push(Entity {
                            start,
                            end: pos,
                            label: prev,
                        });
                    }
                    open = Some((pos, label));
                }
            },
        }
    }
    if let Some((start, label)) = open {
        spans.push(Entity {
            start,
            end: tags.len(),
            label,
        });
    }
    Ok(spans)
}

/// Exact-match counts for one entity type or the micro total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Counts {
    fn zero() -> Self {
        Counts {
            gold: 0,
            predicted: 0,
            correct: 0,
        }
    }

    /// Precision with the convention P = 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.correct as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.correct as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Micro-averaged precision/recall/F1 plus a per-type breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    pub per_type: Vec<(String, Counts)>,
}

impl EvalReport {
    pub fn from_counts(micro: Counts, per_type: Vec<(String, Counts)>) -> Self {
        EvalReport {
            precision: micro.precision(),
            recall: micro.recall(),
            f1: micro.f1(),
            counts: micro,
            per_type,
        }
    }
}

/// Scores predicted tag sequences against gold ones. A predicted span
/// is correct only when start, end, and type all match a gold span.
pub fn score_predictions<S: AsRef<str>>(
    gold: &[Vec<S>],
    predicted: &[Vec<S>],
) -> Result<EvalReport, EmbedError> {
    assert_eq!(gold.len(), predicted.len(), "corpus size mismatch");
    let mut micro = Counts::zero();
    let mut per_type: BTreeMap<String, Counts> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        assert_eq!(g.len(), p.len(), "sentence length mismatch");
        let gold_spans = extract_entities(g)?;
        let pred_spans = extract_entities(p)?;
        for span in &gold_spans {
            micro.gold += 1;
            per_type.entry(span.label.clone()).or_insert(Counts::zero()).gold += 1;
        }
        for span in &pred_spans {
            micro.predicted += 1;
            let t = per_type.entry(span.label.clone()).or_insert(Counts::zero());
            t.predicted += 1;
            if gold_spans.contains(span) {
                micro.correct += 1;
                t.correct += 1;
            }
        }
    }
    Ok(EvalReport::from_counts(
        micro,
        per_type.into_iter().collect(),
    ))
}

/// Token accuracy, used by the overfit sanity checks.
pub fn token_accuracy<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], predicted: &[Vec<T>]) -> f64 {
    let mut total = 0usize;
    let mut hit = 0usize;
    for (g, p) in gold.iter().zip(predicted) {
        for (a, b) in g.iter().zip(p) {
            total += 1;
            if a.as_ref() == b.as_ref() {
                hit += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn all_outside_has_no_spans() {
        assert!(extract_entities(&tags(&["O", "O", "O"])).unwrap().is_empty());
    }

    #[test]
    fn spans_follow_bio_semantics() {
        let spans = extract_entities(&tags(&["B-PER", "I-PER", "O", "B-LOC"])).unwrap();
        assert_eq!(
            spans,
            vec![
                Entity {
                    start: 0,
                    end: 2,
                    label: "PER".into()
                },
                Entity {
                    start: 3,
                    end: 4,
                    label: "LOC".into()
                },
            ]
        );
    }

    #[test]
    fn dangling_inside_is_repaired_into_a_span() {
        let spans = extract_entities(&tags(&["I-PER", "I-PER"])).unwrap();
        assert_eq!(
            spans,
            vec![Entity {
                start: 0,
                end: 2,
                label: "PER".into()
            }]
        );
    }

    #[test]
    fn inside_of_different_type_starts_a_new_span() {
        let spans = extract_entities(&tags(&["B-PER", "I-LOC"])).unwrap();
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].end, 1);
        assert_eq!(spans[1].label, "LOC");
    }

    #[test]
    fn malformed_tag_is_an_error() {
        assert!(extract_entities(&tags(&["B-PER", "X-LOC"])).is_err());
    }

    #[test]
    fn identical_predictions_score_perfectly() {
        let gold = vec![tags(&["B-PER", "I-PER", "O"])];
        let report = score_predictions(&gold, &gold).unwrap();
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.f1, 1.0);
    }

    #[test]
    fn one_hit_one_spurious_gives_half() {
        let gold = vec![tags(&["B-PER", "O", "B-LOC", "O"])];
        let pred = vec![tags(&["B-PER", "O", "O", "B-ORG"])];
        let report = score_predictions(&gold, &pred).unwrap();
        assert_eq!(report.counts.gold, 2);
        assert_eq!(report.counts.predicted, 2);
        assert_eq!(report.counts.correct, 1);
        assert_eq!(report.precision, 0.5);
        assert_eq!(report.recall, 0.5);
        assert_eq!(report.f1, 0.5);
    }

    #[test]
    fn empty_prediction_scores_zero_by_convention() {
        let gold = vec![tags(&["B-PER", "O"])];
        let pred = vec![tags(&["O", "O"])];
        let report = score_predictions(&gold, &pred).unwrap();
        assert_eq!(report.precision, 0.0);
        assert_eq!(report.recall, 0.0);
        assert_eq!(report.f1, 0.0);
    }

    #[test]
    fn correct_never_exceeds_gold_or_predicted() {
        let gold = vec![tags(&["B-PER", "I-PER", "O", "B-PER"])];
        let pred = vec![tags(&["B-PER", "O", "B-PER", "I-PER"])];
        let r = score_predictions(&gold, &pred).unwrap();
        assert!(r.counts.correct <= r.counts.gold);
        assert!(r.counts.correct <= r.counts.predicted);
        for (_, c) in &r.per_type {
            assert!(c.correct <= c.gold && c.correct <= c.predicted);
        }
    }

    #[test]
    fn scoring_is_invariant_under_sentence_reordering() {
        let gold = vec![
            tags(&["B-PER", "O"]),
            tags(&["B-LOC", "I-LOC"]),
            tags(&["O", "O"]),
        ];
        let pred = vec![
            tags(&["B-PER", "O"]),
            tags(&["B-LOC", "O"]),
            tags(&["O", "B-PER"]),
        ];
        let a = score_predictions(&gold, &pred).unwrap();
        let gold_r: Vec<_> = gold.iter().rev().cloned().collect();
        let pred_r: Vec<_> = pred.iter().rev().cloned().collect();
        let b = score_predictions(&gold_r, &pred_r).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn token_accuracy_counts_matches() {
        let gold = vec![tags(&["O", "B-PER", "O"])];
        let pred = vec![tags(&["O", "B-PER", "B-LOC"])];
        let acc = token_accuracy(&gold, &pred);
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
    }
}
