//! Domain types shared by every stage: segments, error spans, annotations.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scoring;
use crate::tokenizer::{self, Token};

/// Maximum number of errors kept per model annotation.
pub const MAX_ERRORS: usize = 5;

/// Ordered source → target pair of ISO-639-1 codes, written `zh-en`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LangPair {
    pub source: String,
    pub target: String,
}

impl LangPair {
    pub fn new(source: &str, target: &str) -> Result<Self> {
        let norm = |c: &str| -> Result<String> {
            let c = c.trim().to_ascii_lowercase();
            if c.len() == 2 && c.bytes().all(|b| b.is_ascii_lowercase()) {
                Ok(c)
            } else {
                Err(Error::Config(format!("`{c}` is not an ISO-639-1 code")))
            }
        };
        let (source, target) = (norm(source)?, norm(target)?);
        if source == target {
            return Err(Error::Config(format!(
                "language pair needs distinct languages, got {source}-{target}"
            )));
        }
        Ok(LangPair { source, target })
    }
}

impl FromStr for LangPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(['-', '_'])
            .ok_or_else(|| Error::Config(format!("language pair `{s}` is not of the form xx-yy")))?;
        LangPair::new(a, b)
    }
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

impl Serialize for LangPair {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LangPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One source sentence and its translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub lang_pair: LangPair,
    pub source: String,
    pub target: String,
    #[serde(default)]
    pub system: Option<String>,
    #[serde(default)]
    pub doc: Option<String>,
}

impl Segment {
    pub fn check(&self) -> Result<()> {
        if self.source.trim().is_empty() || self.target.trim().is_empty() {
            return Err(Error::Contract(format!(
                "segment {} has an empty source or target",
                self.id
            )));
        }
        Ok(())
    }

    pub fn source_tokens(&self) -> Vec<Token> {
        tokenizer::tokenize(&self.source, &self.lang_pair.source)
    }

    pub fn target_tokens(&self) -> Vec<Token> {
        tokenizer::tokenize(&self.target, &self.lang_pair.target)
    }

    pub fn tokens(&self, side: Side) -> Vec<Token> {
        match side {
            Side::Source => self.source_tokens(),
            Side::Target => self.target_tokens(),
        }
    }

    pub fn text(&self, side: Side) -> &str {
        match side {
            Side::Source => &self.source,
            Side::Target => &self.target,
        }
    }
}

/// Check per-segment invariants plus id uniqueness across a corpus.
pub fn check_corpus(segments: &[Segment]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in segments {
        s.check()?;
        if !seen.insert(s.id.as_str()) {
            return Err(Error::Contract(format!("duplicate segment id {}", s.id)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Accuracy,
    Omission,
    Fluency,
    Style,
    Terminology,
    LocaleConvention,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 7] = [
        ErrorCategory::Accuracy,
        ErrorCategory::Omission,
        ErrorCategory::Fluency,
        ErrorCategory::Style,
        ErrorCategory::Terminology,
        ErrorCategory::LocaleConvention,
        ErrorCategory::Other,
    ];

    /// Map a free-form label onto the typology.
    ///
    /// Case, whitespace, underscores and hyphens are ignored. Hierarchical
    /// labels (`accuracy/mistranslation`) collapse to their top level, except
    /// that any `accuracy/omission` becomes [`ErrorCategory::Omission`]. The
    /// boolean is `false` when the label was not recognised and fell back to
    /// [`ErrorCategory::Other`].
    pub fn parse_lenient(label: &str) -> (ErrorCategory, bool) {
        let squash = |s: &str| -> String {
            s.chars()
                .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
                .flat_map(char::to_lowercase)
                .collect()
        };
        let parts: Vec<String> = label.split('/').map(squash).collect();
        if parts.len() > 1 && parts[0] == "accuracy" && parts[1] == "omission" {
            return (ErrorCategory::Omission, true);
        }
        match parts[0].as_str() {
            "accuracy" => (ErrorCategory::Accuracy, true),
            "omission" => (ErrorCategory::Omission, true),
            "fluency" => (ErrorCategory::Fluency, true),
            "style" => (ErrorCategory::Style, true),
            "terminology" => (ErrorCategory::Terminology, true),
            "localeconvention" | "localeconventions" | "locale" => (ErrorCategory::LocaleConvention, true),
            "other" => (ErrorCategory::Other, true),
            _ => (ErrorCategory::Other, false),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::Accuracy => "accuracy",
            ErrorCategory::Omission => "omission",
            ErrorCategory::Fluency => "fluency",
            ErrorCategory::Style => "style",
            ErrorCategory::Terminology => "terminology",
            ErrorCategory::LocaleConvention => "locale convention",
            ErrorCategory::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Neutral,
    Minor,
    Major,
}

impl Severity {
    pub fn parse(label: &str) -> Option<Severity> {
        match label.trim().to_lowercase().as_str() {
            "major" => Some(Severity::Major),
            "minor" => Some(Severity::Minor),
            "neutral" => Some(Severity::Neutral),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Severity::Major => "major",
            Severity::Minor => "minor",
            Severity::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Target,
    Source,
}

impl Side {
    /// The side an error of `category` must mark.
    pub fn for_category(category: ErrorCategory) -> Side {
        if category == ErrorCategory::Omission {
            Side::Source
        } else {
            Side::Target
        }
    }
}

/// Inclusive token range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        TokenSpan { start, end }
    }

    pub fn positions(self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    /// L1 distance between endpoint pairs.
    pub fn distance(self, other: TokenSpan) -> usize {
        self.start.abs_diff(other.start) + self.end.abs_diff(other.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSpan {
    pub category: ErrorCategory,
    pub severity: Severity,
    pub raw_scale: Option<u8>,
    pub marked_text: String,
    pub span: TokenSpan,
    pub side: Side,
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeverityScheme {
    /// major/minor labels straight from the model.
    #[serde(rename = "binary")]
    BinaryLabels,
    /// 1-5 scale, 1-3 minor, 4-5 major.
    #[serde(rename = "m13")]
    ScaleM13,
    /// 1-5 scale, 1-2 discarded, 3 minor, 4-5 major.
    #[serde(rename = "m3")]
    ScaleM3,
}

impl SeverityScheme {
    pub fn is_scale(self) -> bool {
        !matches!(self, SeverityScheme::BinaryLabels)
    }

    pub fn name(self) -> &'static str {
        match self {
            SeverityScheme::BinaryLabels => "binary",
            SeverityScheme::ScaleM13 => "m13",
            SeverityScheme::ScaleM3 => "m3",
        }
    }
}

impl FromStr for SeverityScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(SeverityScheme::BinaryLabels),
            "m13" | "m1-3" => Ok(SeverityScheme::ScaleM13),
            "m3" => Ok(SeverityScheme::ScaleM3),
            other => Err(Error::Config(format!("unknown severity scheme `{other}`"))),
        }
    }
}

/// All errors one annotator marked in one segment, with derived scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub segment_id: String,
    pub annotator: String,
    pub scheme: SeverityScheme,
    pub errors: Vec<ErrorSpan>,
    pub penalty: f64,
    pub quality: f64,
}

impl Annotation {
    /// Build an annotation, deriving penalty and quality with `scale`.
    pub fn scored(
        segment_id: impl Into<String>,
        annotator: impl Into<String>,
        scheme: SeverityScheme,
        errors: Vec<ErrorSpan>,
        scale: &scoring::QualityScale<f64>,
    ) -> Self {
        let penalty = scoring::penalty::<f64>(&errors);
        let quality = scale.quality(penalty).expect("penalty is non-negative");
        Annotation {
            segment_id: segment_id.into(),
            annotator: annotator.into(),
            scheme,
            errors,
            penalty,
            quality,
        }
    }

    pub fn rescore(&mut self, scale: &scoring::QualityScale<f64>) {
        self.penalty = scoring::penalty::<f64>(&self.errors);
        self.quality = scale.quality(self.penalty).expect("penalty is non-negative");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    SegmentMismatch {
        annotation: String,
        segment: String,
    },
    TooManyErrors {
        count: usize,
    },
    InvertedSpan {
        error: usize,
        start: usize,
        end: usize,
    },
    SpanOutOfBounds {
        error: usize,
        side: Side,
        end: usize,
        tokens: usize,
    },
    MarkedTextMismatch {
        error: usize,
        marked: String,
        span_text: String,
    },
    SideCategoryMismatch {
        error: usize,
        category: ErrorCategory,
        side: Side,
    },
    RawScaleOutOfRange {
        error: usize,
        raw_scale: u8,
    },
    PenaltyMismatch {
        expected: f64,
        found: f64,
    },
    QualityOutOfRange {
        quality: f64,
    },
}

/// Every invariant violation of `a` against `seg`; empty means valid.
///
/// Marked text must be contained in the text covered by its span under
/// [`tokenizer::match_key`]; containment rather than equality because a
/// reconciled span may cover whole tokens around a partial-word mark.
pub fn validate_annotation(a: &Annotation, seg: &Segment) -> Vec<Violation> {
    let mut out = Vec::new();
    if a.segment_id != seg.id {
        out.push(Violation::SegmentMismatch {
            annotation: a.segment_id.clone(),
            segment: seg.id.clone(),
        });
    }
    if a.errors.len() > MAX_ERRORS {
        out.push(Violation::TooManyErrors { count: a.errors.len() });
    }
    let src = seg.source_tokens();
    let tgt = seg.target_tokens();

    for (i, e) in a.errors.iter().enumerate() {
        if Side::for_category(e.category) != e.side {
            out.push(Violation::SideCategoryMismatch {
                error: i,
                category: e.category,
                side: e.side,
            });
        }
        if let Some(r) = e.raw_scale {
            if !(1..=5).contains(&r) {
                out.push(Violation::RawScaleOutOfRange { error: i, raw_scale: r });
            }
        }
        let tokens = if e.side == Side::Source { &src } else { &tgt };
        if e.span.start > e.span.end {
            out.push(Violation::InvertedSpan {
                error: i,
                start: e.span.start,
                end: e.span.end,
            });
            continue;
        }
        if e.span.end >= tokens.len() {
            out.push(Violation::SpanOutOfBounds {
                error: i,
                side: e.side,
                end: e.span.end,
                tokens: tokens.len(),
            });
            continue;
        }
        let (cs, ce) = (tokens[e.span.start].char_start, tokens[e.span.end].char_end);
        let span_text = tokenizer::slice_chars(seg.text(e.side), cs, ce);
        if !tokenizer::match_key(&span_text).contains(&tokenizer::match_key(&e.marked_text)) {
            out.push(Violation::MarkedTextMismatch {
                error: i,
                marked: e.marked_text.clone(),
                span_text,
            });
        }
    }

    let expected = scoring::penalty::<f64>(&a.errors);
    if expected != a.penalty {
        out.push(Violation::PenaltyMismatch {
            expected,
            found: a.penalty,
        });
    }
    if !(0.0..=1.0).contains(&a.quality) {
        out.push(Violation::QualityOutOfRange { quality: a.quality });
    }
    out
}
