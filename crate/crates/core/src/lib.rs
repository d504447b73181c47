//! MQM-style error annotation of machine translation with LLMs: prompt
//! rendering, a bounded async model gateway, tolerant reply parsing, MQM
//! scoring and the evaluation metrics used to compare against human raters.
//!
//! Numeric code is generic over [`num::Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations. Annotation records on disk always
//! carry `f64` scores.

pub mod cli;
pub mod data_io;
pub mod error;
pub mod gateway;
pub mod metrics;
pub mod num;
pub mod parser;
pub mod prompting;
pub mod scoring;
pub mod tokenizer;
pub mod types;

pub use error::{Error, Result};
pub use num::Scalar;
pub use types::{Annotation, ErrorCategory, ErrorSpan, LangPair, Segment, Severity, SeverityScheme, TokenSpan};

pub type CorrelationResult64 = metrics::CorrelationResult<f64>;
pub type CorrelationResult32 = metrics::CorrelationResult<f32>;
pub type CorrelationCell64 = metrics::CorrelationCell<f64>;
pub type CorrelationCell32 = metrics::CorrelationCell<f32>;
pub type SpanScores64 = metrics::SpanScores<f64>;
pub type SpanScores32 = metrics::SpanScores<f32>;
pub type BucketReport64 = metrics::BucketReport<f64>;
pub type BucketReport32 = metrics::BucketReport<f32>;
pub type AgreementRow64 = metrics::AgreementRow<f64>;
pub type AgreementRow32 = metrics::AgreementRow<f32>;
pub type QualityScale64 = scoring::QualityScale<f64>;
pub type QualityScale32 = scoring::QualityScale<f32>;
pub type ErrorStats64 = scoring::ErrorStats<f64>;
pub type ErrorStats32 = scoring::ErrorStats<f32>;
