//! Evaluation math: span F1, correlations, bucket analysis, rater agreement.

pub mod agreement;
pub mod buckets;
pub mod correlation;
pub mod spans;
pub mod special;

pub use agreement::{annotator_agreement, AgreementRow, RaterScore};
pub use buckets::{bucket_analysis, BucketReport, BucketRow, DEFAULT_BOUNDARIES};
pub use correlation::{
    correlate, kendall, pearson, significance_marker, spearman, CorrelationCell, CorrelationKind, CorrelationResult,
};
pub use spans::{corpus_span_scores, span_counts, span_scores, Counts, Prf, SpanCounts, SpanScores};
