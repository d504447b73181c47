//! Severity mapping and MQM penalty / quality derivation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::types::{Annotation, ErrorCategory, ErrorSpan, Severity, SeverityScheme, MAX_ERRORS};

pub const MAJOR_WEIGHT: f64 = 5.0;
pub const MINOR_WEIGHT: f64 = 1.0;
pub const NEUTRAL_WEIGHT: f64 = 0.0;

/// Default quality divisor: five errors at the major weight.
pub const DEFAULT_DIVISOR: f64 = MAX_ERRORS as f64 * MAJOR_WEIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingResult {
    Major,
    Minor,
    Discard,
}

impl MappingResult {
    pub fn severity(self) -> Option<Severity> {
        match self {
            MappingResult::Major => Some(Severity::Major),
            MappingResult::Minor => Some(Severity::Minor),
            MappingResult::Discard => None,
        }
    }
}

pub fn map_severity(raw_scale: u8, scheme: SeverityScheme) -> Result<MappingResult> {
    if !(1..=5).contains(&raw_scale) {
        return Err(Error::Contract(format!("severity scale value {raw_scale} outside 1-5")));
    }
    match scheme {
        SeverityScheme::BinaryLabels => Err(Error::Config("binary severity labels have no scale to map".into())),
        SeverityScheme::ScaleM13 => Ok(if raw_scale >= 4 {
            MappingResult::Major
        } else {
            MappingResult::Minor
        }),
        SeverityScheme::ScaleM3 => Ok(match raw_scale {
            1 | 2 => MappingResult::Discard,
            3 => MappingResult::Minor,
            _ => MappingResult::Major,
        }),
    }
}

pub fn severity_weight<T: Scalar>(severity: Severity) -> T {
    T::lit(match severity {
        Severity::Major => MAJOR_WEIGHT,
        Severity::Minor => MINOR_WEIGHT,
        Severity::Neutral => NEUTRAL_WEIGHT,
    })
}

/// Sum of severity weights. Weights are small integers, so the sum is exact
/// and order-independent.
pub fn penalty<T: Scalar>(errors: &[ErrorSpan]) -> T {
    errors
        .iter()
        .fold(T::zero(), |acc, e| acc + severity_weight::<T>(e.severity))
}

/// Linear penalty → quality map `1 - min(penalty, divisor) / divisor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScale<T> {
    divisor: T,
}

impl<T: Scalar> QualityScale<T> {
    pub fn new(divisor: T) -> Result<Self> {
        if !(divisor.is_finite() && divisor > T::zero()) {
            return Err(Error::Config(format!(
                "quality divisor must be positive, got {divisor}"
            )));
        }
        Ok(QualityScale { divisor })
    }

    pub fn divisor(&self) -> T {
        self.divisor
    }

    pub fn quality(&self, penalty: T) -> Result<T> {
        if penalty < T::zero() || penalty.is_nan() {
            return Err(Error::Contract(format!("penalty must be non-negative, got {penalty}")));
        }
        Ok(T::one() - penalty.min(self.divisor) / self.divisor)
    }
}

impl<T: Scalar> Default for QualityScale<T> {
    fn default() -> Self {
        QualityScale {
            divisor: T::lit(DEFAULT_DIVISOR),
        }
    }
}

/// Quality under the default divisor.
pub fn quality<T: Scalar>(penalty: T) -> Result<T> {
    QualityScale::default().quality(penalty)
}

/// major:minor ratio, with an explicit marker when there are no minor errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio<T> {
    Value(T),
    Undefined,
}

impl<T: Scalar> Ratio<T> {
    pub fn of(num: usize, den: usize) -> Self {
        if den == 0 {
            Ratio::Undefined
        } else {
            Ratio::Value(T::from_count(num) / T::from_count(den))
        }
    }
}

impl<T: Scalar> std::fmt::Display for Ratio<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ratio::Value(v) => write!(f, "{v:.3}"),
            Ratio::Undefined => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats<T> {
    pub annotator: String,
    pub segments: usize,
    pub errors: usize,
    pub avg_errors: T,
    pub major: usize,
    pub minor: usize,
    pub neutral: usize,
    pub major_minor_ratio: Ratio<T>,
    pub per_category: BTreeMap<ErrorCategory, usize>,
}

/// Per-annotator averages over all segments, zero-error segments included.
/// Output is ordered by annotator name.
pub fn error_stats<T: Scalar>(annotations: &[Annotation]) -> Vec<ErrorStats<T>> {
    let mut groups: BTreeMap<&str, Vec<&Annotation>> = BTreeMap::new();
    for a in annotations {
        groups.entry(a.annotator.as_str()).or_default().push(a);
    }
    groups
        .into_iter()
        .map(|(annotator, anns)| {
            let mut per_category: BTreeMap<ErrorCategory, usize> = ErrorCategory::ALL.iter().map(|&c| (c, 0)).collect();
            let (mut major, mut minor, mut neutral) = (0, 0, 0);
            for e in anns.iter().flat_map(|a| &a.errors) {
                *per_category.entry(e.category).or_default() += 1;
                match e.severity {
                    Severity::Major => major += 1,
                    Severity::Minor => minor += 1,
                    Severity::Neutral => neutral += 1,
                }
            }
            let errors = major + minor + neutral;
            ErrorStats {
                annotator: annotator.to_string(),
                segments: anns.len(),
                errors,
                avg_errors: T::from_count(errors) / T::from_count(anns.len()),
                major,
                minor,
                neutral,
                major_minor_ratio: Ratio::of(major, minor),
                per_category,
            }
        })
        .collect()
}
