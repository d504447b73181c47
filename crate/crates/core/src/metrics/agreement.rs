//! Pairwise rater agreement on shared segments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::correlation::{CorrelationCell, CorrelationKind};
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterScore<T> {
    pub segment_id: String,
    pub rater: String,
    pub quality: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow<T> {
    pub rater_a: String,
    pub rater_b: String,
    pub shared: usize,
    pub pearson: CorrelationCell<T>,
    pub spearman: CorrelationCell<T>,
}

/// Correlations between every pair of raters over the segments both scored.
///
/// Pairs sharing fewer than two segments are omitted. A rater scoring the
/// same segment more than once contributes the mean. Rows are sorted by
/// shared count (descending), then rater names.
pub fn annotator_agreement<T: Scalar>(scores: &[RaterScore<T>]) -> Vec<AgreementRow<T>> {
    let mut by_rater: BTreeMap<&str, BTreeMap<&str, (T, usize)>> = BTreeMap::new();
    for s in scores {
        let slot = by_rater
            .entry(s.rater.as_str())
            .or_default()
            .entry(s.segment_id.as_str())
            .or_insert((T::zero(), 0));
        slot.0 = slot.0 + s.quality;
        slot.1 += 1;
    }
    let means: Vec<(&str, BTreeMap<&str, T>)> = by_rater
        .into_iter()
        .map(|(r, segs)| {
            let m = segs
                .into_iter()
                .map(|(seg, (sum, n))| (seg, sum / T::from_count(n)))
                .collect();
            (r, m)
        })
        .collect();

    let mut rows = Vec::new();
    for (i, (ra, a)) in means.iter().enumerate() {
        for (rb, b) in &means[i + 1..] {
            let (xs, ys): (Vec<T>, Vec<T>) = a.iter().filter_map(|(seg, &qa)| b.get(seg).map(|&qb| (qa, qb))).unzip();
            if xs.len() < 2 {
                continue;
            }
            rows.push(AgreementRow {
                rater_a: ra.to_string(),
                rater_b: rb.to_string(),
                shared: xs.len(),
                pearson: CorrelationCell::compute(CorrelationKind::Pearson, &xs, &ys),
                spearman: CorrelationCell::compute(CorrelationKind::Spearman, &xs, &ys),
            });
        }
    }
    rows.sort_by(|x, y| {
        y.shared
            .cmp(&x.shared)
            .then_with(|| x.rater_a.cmp(&y.rater_a))
            .then_with(|| x.rater_b.cmp(&y.rater_b))
    });
    rows
}
