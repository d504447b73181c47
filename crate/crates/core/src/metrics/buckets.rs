//! Correlation within gold-quality ranges.

use serde::{Deserialize, Serialize};

use super::correlation::{CorrelationCell, CorrelationKind};
use crate::error::{Error, Result};
use crate::num::Scalar;

pub const DEFAULT_BOUNDARIES: [f64; 2] = [0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow<T> {
    pub lower: T,
    pub upper: T,
    /// Whether `upper` belongs to the bucket (true only for the top bucket).
    pub upper_inclusive: bool,
    pub count: usize,
    pub pearson: CorrelationCell<T>,
    pub spearman: CorrelationCell<T>,
    pub kendall: CorrelationCell<T>,
}

impl<T: Scalar> BucketRow<T> {
    fn compute(lower: T, upper: T, upper_inclusive: bool, pairs: &[(T, T)]) -> Self {
        let gold: Vec<T> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<T> = pairs.iter().map(|p| p.1).collect();
        let cell = |k| CorrelationCell::compute(k, &gold, &pred);
        BucketRow {
            lower,
            upper,
            upper_inclusive,
            count: pairs.len(),
            pearson: cell(CorrelationKind::Pearson),
            spearman: cell(CorrelationKind::Spearman),
            kendall: cell(CorrelationKind::Kendall),
        }
    }

    pub fn cell(&self, kind: CorrelationKind) -> &CorrelationCell<T> {
        match kind {
            CorrelationKind::Pearson => &self.pearson,
            CorrelationKind::Spearman => &self.spearman,
            CorrelationKind::Kendall => &self.kendall,
        }
    }

    pub fn contains(&self, q: T) -> bool {
        q >= self.lower && (q < self.upper || (self.upper_inclusive && q <= self.upper))
    }

    /// `0.9-1.0`, `< 0.8` style label.
    pub fn label(&self) -> String {
        if self.lower == T::zero() && !self.upper_inclusive {
            format!("< {}", fmt_bound(self.upper))
        } else {
            format!("{}-{}", fmt_bound(self.lower), fmt_bound(self.upper))
        }
    }
}

fn fmt_bound<T: Scalar>(v: T) -> String {
    let s = format!("{v}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport<T> {
    pub overall: BucketRow<T>,
    /// Highest range first.
    pub buckets: Vec<BucketRow<T>>,
}

/// Bucket `(gold, pred)` pairs by gold quality and correlate within each
/// bucket and overall. `boundaries` must be strictly increasing inside
/// (0, 1); with boundaries `[b1, .., bk]` the ranges are `[bk, 1]`,
/// `[b(k-1), bk)`, .., `[0, b1)`. Input order is kept inside each bucket.
pub fn bucket_analysis<T: Scalar>(pairs: &[(T, T)], boundaries: &[T]) -> Result<BucketReport<T>> {
    let unit = |v: T| v >= T::zero() && v <= T::one();
    if let Some(p) = pairs.iter().find(|p| !unit(p.0) || !unit(p.1)) {
        return Err(Error::Contract(format!(
            "quality scores must lie in [0, 1], got ({}, {})",
            p.0, p.1
        )));
    }
    if boundaries.iter().any(|&b| !(b > T::zero() && b < T::one()))
        || boundaries
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::Config(
            "bucket boundaries must be strictly increasing inside (0, 1)".into(),
        ));
    }

    let mut edges = Vec::with_capacity(boundaries.len() + 2);
    edges.push(T::zero());
    edges.extend_from_slice(boundaries);
    edges.push(T::one());

    let buckets = (0..edges.len() - 1)
        .rev()
        .map(|i| {
            let (lo, hi) = (edges[i], edges[i + 1]);
            let top = i == edges.len() - 2;
            let members: Vec<(T, T)> = pairs
                .iter()
                .copied()
                .filter(|&(g, _)| g >= lo && (g < hi || (top && g <= hi)))
                .collect();
            BucketRow::compute(lo, hi, top, &members)
        })
        .collect();

    Ok(BucketReport {
        overall: BucketRow::compute(T::zero(), T::one(), true, pairs),
        buckets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ranges_and_labels() {
        let b: Vec<f64> = DEFAULT_BOUNDARIES.to_vec();
        let r = bucket_analysis(&[(1.0, 0.5), (0.85, 0.4), (0.2, 0.1), (0.9, 0.9), (0.8, 0.8)], &b).unwrap();
        let labels: Vec<String> = r.buckets.iter().map(|b| b.label()).collect();
        assert_eq!(labels, ["0.9-1.0", "0.8-0.9", "< 0.8"]);
        let counts: Vec<usize> = r.buckets.iter().map(|b| b.count).collect();
        assert_eq!(counts, [2, 2, 1]);
        assert_eq!(r.overall.label(), "0.0-1.0");
    }

    #[test]
    fn single_bucket_and_empty_buckets() {
        let pairs = [(0.95, 0.1), (0.97, 0.5), (1.0, 0.7), (0.91, 0.2)];
        let r = bucket_analysis(&pairs, &[0.8, 0.9]).unwrap();
        assert_eq!(r.buckets[0].count, 4);
        assert_eq!(r.buckets[1].count, 0);
        assert!(r.buckets[1].pearson.defined().is_none());
        assert!(r.buckets[2].kendall.defined().is_none());

        let whole = bucket_analysis(&pairs, &[]).unwrap();
        assert_eq!(whole.buckets.len(), 1);
        assert_eq!(whole.buckets[0], whole.overall);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(bucket_analysis(&[(1.2, 0.5)], &[0.8]).is_err());
        assert!(bucket_analysis(&[(0.2, 0.5)], &[0.9, 0.8]).is_err());
        assert!(bucket_analysis(&[(0.2, 0.5)], &[1.0]).is_err());
    }
}
