//! Span, severity and error-type F1 over token positions.
//!
//! Each error marks the positions its span covers on its side (source and
//! target positions are distinct). Span F1 compares the sets of marked
//! positions; severity and type F1 compare `(position, label)` pairs. A
//! position carries one label: when several errors overlap it, the most
//! severe one wins and the earliest listed breaks ties. Neutral errors mark
//! nothing. Corpus scores pool TP/FP/FN over segments (micro average).

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::types::{Annotation, ErrorCategory, Severity, Side};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn prf<T: Scalar>(self) -> Prf<T> {
        let c = |v: u64| T::from_u64(v).expect("count fits scalar");
        if self.tp + self.fp + self.fn_ == 0 {
            // nothing predicted and nothing to find
            return Prf {
                precision: T::one(),
                recall: T::one(),
                f1: T::one(),
            };
        }
        let ratio = |num: u64, den: u64| if den == 0 { T::zero() } else { c(num) / c(den) };
        Prf {
            precision: ratio(self.tp, self.tp + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
            f1: ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
        }
    }
}

impl Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanCounts {
    pub span: Counts,
    pub severity: Counts,
    pub category: Counts,
}

impl Add for SpanCounts {
    type Output = SpanCounts;
    fn add(self, o: SpanCounts) -> SpanCounts {
        SpanCounts {
            span: self.span + o.span,
            severity: self.severity + o.severity,
            category: self.category + o.category,
        }
    }
}

impl AddAssign for SpanCounts {
    fn add_assign(&mut self, o: SpanCounts) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanScores<T> {
    pub span: Prf<T>,
    pub severity: Prf<T>,
    #[serde(rename = "type")]
    pub category: Prf<T>,
}

impl<T: Scalar> SpanScores<T> {
    pub fn from_counts(c: SpanCounts) -> Self {
        SpanScores {
            span: c.span.prf(),
            severity: c.severity.prf(),
            category: c.category.prf(),
        }
    }

    pub fn span_f1(&self) -> T {
        self.span.f1
    }

    pub fn severity_f1(&self) -> T {
        self.severity.f1
    }

    pub fn type_f1(&self) -> T {
        self.category.f1
    }
}

type Position = (Side, usize);

fn position_labels(a: &Annotation, n_target: usize, n_source: usize) -> BTreeMap<Position, (Severity, ErrorCategory)> {
    let mut labels: BTreeMap<Position, (Severity, ErrorCategory)> = BTreeMap::new();
    for e in &a.errors {
        if e.severity == Severity::Neutral {
            continue;
        }
        let limit = match e.side {
            Side::Target => n_target,
            Side::Source => n_source,
        };
        for pos in e.span.positions().take_while(|&p| p < limit) {
            labels
                .entry((e.side, pos))
                .and_modify(|cur| {
                    if e.severity > cur.0 {
                        *cur = (e.severity, e.category);
                    }
                })
                .or_insert((e.severity, e.category));
        }
    }
    labels
}

/// TP/FP/FN for one segment.
pub fn span_counts(pred: &Annotation, gold: &Annotation, n_target: usize, n_source: usize) -> Result<SpanCounts> {
    if pred.segment_id != gold.segment_id {
        return Err(Error::Contract(format!(
            "prediction for {} compared against gold for {}",
            pred.segment_id, gold.segment_id
        )));
    }
    let p = position_labels(pred, n_target, n_source);
    let g = position_labels(gold, n_target, n_source);

    let mut out = SpanCounts::default();
    for (pos, (psev, pcat)) in &p {
        match g.get(pos) {
            Some((gsev, gcat)) => {
                out.span.tp += 1;
                if psev == gsev {
                    out.severity.tp += 1;
                } else {
                    out.severity.fp += 1;
                    out.severity.fn_ += 1;
                }
                if pcat == gcat {
                    out.category.tp += 1;
                } else {
                    out.category.fp += 1;
                    out.category.fn_ += 1;
                }
            }
            None => {
                out.span.fp += 1;
                out.severity.fp += 1;
                out.category.fp += 1;
            }
        }
    }
    let missed = g.keys().filter(|k| !p.contains_key(k)).count() as u64;
    out.span.fn_ += missed;
    out.severity.fn_ += missed;
    out.category.fn_ += missed;
    Ok(out)
}

pub fn span_scores<T: Scalar>(
    pred: &Annotation,
    gold: &Annotation,
    n_target: usize,
    n_source: usize,
) -> Result<SpanScores<T>> {
    Ok(SpanScores::from_counts(span_counts(pred, gold, n_target, n_source)?))
}

/// Micro-averaged scores over `(pred, gold, n_target, n_source)` items.
pub fn corpus_span_scores<'a, T: Scalar>(
    items: impl IntoIterator<Item = (&'a Annotation, &'a Annotation, usize, usize)>,
) -> Result<SpanScores<T>> {
    let mut total = SpanCounts::default();
    for (p, g, nt, ns) in items {
        total += span_counts(p, g, nt, ns)?;
    }
    Ok(SpanScores::from_counts(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::QualityScale;
    use crate::types::{ErrorSpan, SeverityScheme, TokenSpan};

    fn ann(errors: Vec<ErrorSpan>) -> Annotation {
        Annotation::scored("s", "x", SeverityScheme::BinaryLabels, errors, &QualityScale::default())
    }

    fn e(start: usize, end: usize, severity: Severity, category: ErrorCategory) -> ErrorSpan {
        ErrorSpan {
            category,
            severity,
            raw_scale: None,
            marked_text: String::new(),
            span: TokenSpan::new(start, end),
            side: Side::for_category(category),
            explanation: None,
        }
    }

    #[test]
    fn identical_annotations_score_one() {
        let a = ann(vec![
            e(1, 2, Severity::Major, ErrorCategory::Accuracy),
            e(0, 0, Severity::Minor, ErrorCategory::Omission),
        ]);
        let s: SpanScores<f64> = span_scores(&a, &a, 5, 5).unwrap();
        assert_eq!((s.span_f1(), s.severity_f1(), s.type_f1()), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let gold = ann(vec![e(1, 2, Severity::Major, ErrorCategory::Accuracy)]);
        let s: SpanScores<f64> = span_scores(&ann(vec![]), &gold, 5, 5).unwrap();
        assert_eq!((s.span_f1(), s.severity_f1(), s.type_f1()), (0.0, 0.0, 0.0));
        assert_eq!(s.span.precision, 0.0);
    }

    #[test]
    fn half_overlap() {
        let p = ann(vec![e(1, 2, Severity::Minor, ErrorCategory::Fluency)]);
        let g = ann(vec![e(2, 3, Severity::Minor, ErrorCategory::Fluency)]);
        let s: SpanScores<f64> = span_scores(&p, &g, 6, 6).unwrap();
        for prf in [s.span, s.severity, s.category] {
            assert_eq!((prf.precision, prf.recall, prf.f1), (0.5, 0.5, 0.5));
        }
    }

    #[test]
    fn source_and_target_positions_are_distinct() {
        let p = ann(vec![e(0, 0, Severity::Major, ErrorCategory::Accuracy)]);
        let g = ann(vec![e(0, 0, Severity::Major, ErrorCategory::Omission)]);
        let c = span_counts(&p, &g, 3, 3).unwrap();
        assert_eq!(c.span, Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn overlapping_errors_resolve_to_most_severe() {
        let p = ann(vec![
            e(0, 1, Severity::Minor, ErrorCategory::Style),
            e(1, 1, Severity::Major, ErrorCategory::Accuracy),
        ]);
        let g = ann(vec![e(1, 1, Severity::Major, ErrorCategory::Accuracy)]);
        let c = span_counts(&p, &g, 4, 4).unwrap();
        assert_eq!(c.span, Counts { tp: 1, fp: 1, fn_: 0 });
        assert_eq!(c.severity, Counts { tp: 1, fp: 1, fn_: 0 });
        assert_eq!(c.category, Counts { tp: 1, fp: 1, fn_: 0 });
    }

    #[test]
    fn label_mismatch_costs_precision_and_recall() {
        let p = ann(vec![e(0, 0, Severity::Minor, ErrorCategory::Style)]);
        let g = ann(vec![e(0, 0, Severity::Major, ErrorCategory::Style)]);
        let c = span_counts(&p, &g, 2, 2).unwrap();
        assert_eq!(c.severity, Counts { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(c.category, Counts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn neutral_and_out_of_range_positions_ignored() {
        let p = ann(vec![e(2, 9, Severity::Minor, ErrorCategory::Style)]);
        let g = ann(vec![
            e(2, 3, Severity::Minor, ErrorCategory::Style),
            e(0, 0, Severity::Neutral, ErrorCategory::Other),
        ]);
        let c = span_counts(&p, &g, 4, 4).unwrap();
        assert_eq!(c.span, Counts { tp: 2, fp: 0, fn_: 0 });
    }

    #[test]
    fn both_empty_is_perfect_agreement() {
        let s: SpanScores<f64> = span_scores(&ann(vec![]), &ann(vec![]), 3, 3).unwrap();
        assert_eq!(s.span_f1(), 1.0);
    }

    #[test]
    fn mismatched_segments_rejected() {
        let mut g = ann(vec![]);
        g.segment_id = "other".into();
        assert!(matches!(span_counts(&ann(vec![]), &g, 1, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn micro_average_pools_counts() {
        let p1 = ann(vec![e(0, 0, Severity::Minor, ErrorCategory::Style)]);
        let g1 = ann(vec![e(0, 0, Severity::Minor, ErrorCategory::Style)]);
        let p2 = ann(vec![e(0, 2, Severity::Minor, ErrorCategory::Style)]);
        let g2 = ann(vec![]);
        let s: SpanScores<f64> = corpus_span_scores([(&p1, &g1, 3, 3), (&p2, &g2, 3, 3)]).unwrap();
        // tp 1, fp 3, fn 0
        assert_eq!(s.span.precision, 0.25);
        assert_eq!(s.span.recall, 1.0);
        assert_eq!(s.span_f1(), 2.0 / 5.0);
    }
}
