//! Turning raw model replies into validated annotations.
//!
//! Three steps: find the first JSON value in the reply and normalize it into
//! a list of error records ([`extract_json`]); resolve each record's reported
//! token span against the marked text ([`reconcile_span`]); assemble the
//! surviving records into a scored [`Annotation`] ([`assemble`]). Every
//! deviation from the literal reply is logged as a [`Repair`].

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::gateway::{RawResponse, ResponseStatus};
use crate::scoring::{map_severity, MappingResult, QualityScale};
use crate::tokenizer::{self, is_punct, match_key, Token};
use crate::types::{
    Annotation, ErrorCategory, ErrorSpan, Segment, Severity, SeverityScheme, Side, TokenSpan, MAX_ERRORS,
};

/// Span indices above this are treated as garbage rather than positions.
const MAX_INDEX: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairKind {
    /// Reply JSON needed syntactic repair (trailing commas, curly quotes).
    JsonSyntax,
    CategoryUnknown,
    CategoryMissing,
    SeverityNormalized,
    /// Record had no usable severity for the scheme and was dropped.
    SeverityInvalid,
    /// Record had neither marked text nor a span and was dropped.
    RecordIncomplete,
    SpanSwapped,
    SpanMissing,
    SpanMoved,
    /// Marked text matched only inside tokens; span widened to whole tokens.
    SpanSubstring,
    /// Marked text not found; reported span kept, marked text replaced.
    SpanNoMatch,
    /// Marked text not found and reported span unusable; record dropped.
    SpanUnresolvable,
    MarkedTextFromSpan,
    SourceSide,
    Truncated,
    ResponseFailed,
    NoJson,
    NoRecords,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repair {
    pub kind: RepairKind,
    /// Index of the error record in the reply, when the repair concerns one.
    pub error: Option<usize>,
    pub original: String,
    pub resolved: String,
}

impl Repair {
    fn new(kind: RepairKind, error: Option<usize>, original: impl Into<String>, resolved: impl Into<String>) -> Self {
        Repair {
            kind,
            error,
            original: original.into(),
            resolved: resolved.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Parsed,
    Unparsable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub segment_id: String,
    pub status: ParseStatus,
    pub annotation: Option<Annotation>,
    pub repairs: Vec<Repair>,
}

impl ParseOutcome {
    pub fn is_parsed(&self) -> bool {
        self.status == ParseStatus::Parsed
    }

    fn unparsable(segment_id: &str, repairs: Vec<Repair>) -> Self {
        ParseOutcome {
            segment_id: segment_id.to_string(),
            status: ParseStatus::Unparsable,
            annotation: None,
            repairs,
        }
    }
}

/// Error records pulled out of a reply.
#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub records: Vec<Map<String, Value>>,
    /// The reply held an explicit empty list ("no errors").
    pub explicit_empty: bool,
    pub repairs: Vec<Repair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractFailure {
    NoJson,
    NoRecords,
}

/// Locate the first JSON value holding error records.
///
/// Candidates start at each `{` or `[`; prose and code fences around them
/// are ignored. A candidate that fails to parse is retried once after
/// syntax repair. A value that parses but holds no error records is skipped
/// and the search continues after it.
pub fn extract_json(raw_text: &str) -> Result<Extracted, ExtractFailure> {
    let mut saw_json = false;
    let mut pos = 0;
    while let Some(off) = raw_text[pos..].find(['{', '[']) {
        let start = pos + off;
        let rest = &raw_text[start..];
        let mut repairs = Vec::new();
        let parsed = match parse_prefix(rest) {
            Some(p) => Some(p),
            None => {
                let fixed = repair_syntax(rest);
                parse_prefix(&fixed).map(|(v, _)| {
                    repairs.push(Repair::new(RepairKind::JsonSyntax, None, "", ""));
                    // the repaired text no longer aligns with the original;
                    // a failed candidate here ends the search
                    (v, rest.len())
                })
            }
        };
        match parsed {
            Some((value, consumed)) => {
                saw_json = true;
                if let Some((records, explicit_empty)) = records_of(&value) {
                    return Ok(Extracted {
                        records,
                        explicit_empty,
                        repairs,
                    });
                }
                pos = start + consumed.max(1);
            }
            None => pos = start + 1,
        }
        if pos >= raw_text.len() {
            break;
        }
    }
    Err(if saw_json {
        ExtractFailure::NoRecords
    } else {
        ExtractFailure::NoJson
    })
}

fn parse_prefix(text: &str) -> Option<(Value, usize)> {
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<Value>();
    match stream.next() {
        Some(Ok(v)) if v.is_object() || v.is_array() => Some((v, stream.byte_offset())),
        _ => None,
    }
}

/// Drop trailing commas before `]`/`}` and turn curly double quotes used as
/// string delimiters into straight ones.
fn repair_syntax(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut close: Option<char> = None;
    let mut escaped = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match close {
            Some(end) => {
                if escaped {
                    escaped = false;
                    out.push(c);
                } else if c == '\\' {
                    escaped = true;
                    out.push(c);
                } else if c == end {
                    close = None;
                    out.push('"');
                } else if c == '"' {
                    // straight quote inside a curly-quoted string
                    out.push_str("\\\"");
                } else {
                    out.push(c);
                }
            }
            None => match c {
                '"' => {
                    close = Some('"');
                    out.push('"');
                }
                '\u{201C}' | '\u{201D}' => {
                    close = Some('\u{201D}');
                    out.push('"');
                }
                ',' => {
                    let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                    if !matches!(next, Some(']') | Some('}')) {
                        out.push(c);
                    }
                }
                _ => out.push(c),
            },
        }
        i += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Category,
    Marked,
    Span,
    Start,
    End,
    Severity,
    Explanation,
}

fn field_of(key: &str) -> Option<Field> {
    let k: String = key
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    Some(match k.as_str() {
        "errortype" | "type" | "category" | "errorcategory" | "errorclass" => Field::Category,
        "markedtext" | "text" | "errortext" | "markedspan" | "errorword" | "errorwords" => Field::Marked,
        "errorspanindex" | "errorspanindices" | "spanindex" | "spanindices" | "span" | "errorspan" | "index"
        | "indices" | "errorindex" | "position" | "tokenspan" => Field::Span,
        "start" | "startindex" | "spanstart" | "from" => Field::Start,
        "end" | "endindex" | "spanend" | "to" => Field::End,
        "severity" | "severitylevel" | "severityscale" | "severityscore" => Field::Severity,
        "explanation" | "reason" | "rationale" | "comment" => Field::Explanation,
        _ => return None,
    })
}

fn looks_like_error(map: &Map<String, Value>) -> bool {
    map.keys()
        .filter_map(|k| field_of(k))
        .any(|f| matches!(f, Field::Category | Field::Marked | Field::Span | Field::Severity))
}

/// Normalize a parsed value into error records. `None` when the value holds
/// no recognizable records; `Some((vec![], true))` for an explicit empty list.
fn records_of(v: &Value) -> Option<(Vec<Map<String, Value>>, bool)> {
    match v {
        Value::Array(items) if items.is_empty() => Some((vec![], true)),
        Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                if let Some((mut rs, _)) = records_of(item) {
                    out.append(&mut rs);
                }
            }
            (!out.is_empty()).then_some((out, false))
        }
        Value::Object(map) if looks_like_error(map) => Some((vec![map.clone()], false)),
        Value::Object(map) => {
            // {"errors": [...]} and similar wrappers
            for inner in map.values() {
                if inner.is_array() {
                    if let Some(found) = records_of(inner) {
                        return Some(found);
                    }
                }
            }
            // {"Error 1": {...}, "Error 2": {...}}
            let out: Vec<_> = map
                .values()
                .filter_map(|inner| match inner {
                    Value::Object(m) if looks_like_error(m) => Some(m.clone()),
                    _ => None,
                })
                .collect();
            (!out.is_empty()).then_some((out, false))
        }
        _ => None,
    }
}

fn index_of(v: &Value) -> Option<usize> {
    match v {
        Value::Number(n) => {
            let f = n.as_f64()?;
            (f >= 0.0 && f.fract() == 0.0 && f <= MAX_INDEX as f64).then_some(f as usize)
        }
        Value::String(s) => {
            let n: u64 = s.trim().parse().ok()?;
            (n <= MAX_INDEX).then_some(n as usize)
        }
        _ => None,
    }
}

fn digit_runs(s: &str) -> Vec<u64> {
    s.split(|c: char| !c.is_ascii_digit())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().unwrap_or(u64::MAX))
        .collect()
}

/// Reported span in any of the shapes models produce: `{start, end}`,
/// `[s, e]`, `[s]`, `n`, `"s-e"`, `"start: s, end: e"`. Returned unordered.
fn span_of(v: &Value) -> Option<(usize, usize)> {
    match v {
        Value::Number(_) => index_of(v).map(|n| (n, n)),
        Value::Array(items) => match items.as_slice() {
            [a] => index_of(a).map(|n| (n, n)),
            [a, b] => Some((index_of(a)?, index_of(b)?)),
            _ => None,
        },
        Value::Object(map) => {
            let mut start = None;
            let mut end = None;
            for (k, v) in map {
                match field_of(k) {
                    Some(Field::Start) => start = index_of(v),
                    Some(Field::End) => end = index_of(v),
                    _ => {}
                }
            }
            match (start, end) {
                (Some(s), Some(e)) => Some((s, e)),
                (Some(s), None) => Some((s, s)),
                _ => None,
            }
        }
        Value::String(s) => {
            if s.contains('-') && s.trim_start().starts_with('-') {
                return None;
            }
            let runs = digit_runs(s);
            let ok = |n: u64| (n <= MAX_INDEX).then_some(n as usize);
            match runs.as_slice() {
                [a] => ok(*a).map(|n| (n, n)),
                [a, b] => Some((ok(*a)?, ok(*b)?)),
                _ => None,
            }
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SeverityValue {
    Label(Severity),
    Scale(u64),
    Unknown(String),
}

fn severity_of(v: &Value) -> Option<SeverityValue> {
    match v {
        Value::Number(n) => {
            let f = n.as_f64()?;
            Some(if f >= 0.0 && f.fract() == 0.0 {
                SeverityValue::Scale(f as u64)
            } else {
                SeverityValue::Unknown(n.to_string())
            })
        }
        Value::String(s) => {
            if let Some(sev) = Severity::parse(s) {
                return Some(SeverityValue::Label(sev));
            }
            let t = s.trim();
            if let Ok(n) = t.parse::<u64>() {
                return Some(SeverityValue::Scale(n));
            }
            // "4 (major)", "4/5"
            match digit_runs(t).first() {
                Some(&n) if t.starts_with(|c: char| c.is_ascii_digit()) => Some(SeverityValue::Scale(n)),
                _ => Some(SeverityValue::Unknown(s.clone())),
            }
        }
        Value::Null => None,
        other => Some(SeverityValue::Unknown(other.to_string())),
    }
}

fn text_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Result of resolving a reported span against marked text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "how", rename_all = "snake_case")]
pub enum Reconciled {
    /// A token-subsequence occurrence (possibly the reported span itself).
    Occurrence {
        span: TokenSpan,
    },
    /// No token-subsequence occurrence; a character-level match widened to
    /// the tokens covering it.
    Substring {
        span: TokenSpan,
    },
    NoMatch,
}

impl Reconciled {
    pub fn span(self) -> Option<TokenSpan> {
        match self {
            Reconciled::Occurrence { span } | Reconciled::Substring { span } => Some(span),
            Reconciled::NoMatch => None,
        }
    }
}

/// Every token range whose text equals `marked_text` under [`match_key`].
/// Range edges must be content tokens unless the marked text is all
/// punctuation, so a span never picks up stray punctuation tokens.
pub fn occurrences(marked_text: &str, tokens: &[Token]) -> Vec<TokenSpan> {
    let key = match_key(marked_text);
    if key.is_empty() {
        return vec![];
    }
    let key_len = key.chars().count();
    let all_punct_key = key.chars().all(is_punct);
    let punct_tok: Vec<bool> = tokens.iter().map(|t| t.text.chars().all(is_punct)).collect();
    let mut out = Vec::new();
    for i in 0..tokens.len() {
        if !all_punct_key && punct_tok[i] {
            continue;
        }
        let mut concat = String::new();
        for j in i..tokens.len() {
            concat.push_str(&tokens[j].text);
            let k = match_key(&concat);
            let edge_ok = all_punct_key || !punct_tok[j];
            if edge_ok && k == key {
                out.push(TokenSpan::new(i, j));
            }
            // the stripped core only grows once the last token carries content
            if !punct_tok[j] && k.chars().count() > key_len {
                break;
            }
        }
    }
    out
}

/// Character-level fallback: every match of the marked text inside the
/// whitespace-free, case-folded token stream, mapped to covering tokens.
fn substring_occurrences(marked_text: &str, tokens: &[Token]) -> Vec<TokenSpan> {
    let key: Vec<char> = match_key(marked_text).chars().collect();
    if key.is_empty() {
        return vec![];
    }
    let mut stream = Vec::new();
    let mut owner = Vec::new();
    for (ti, t) in tokens.iter().enumerate() {
        for c in t.text.chars().flat_map(tokenizer::fold_char) {
            stream.push(c);
            owner.push(ti);
        }
    }
    let mut out: Vec<TokenSpan> = Vec::new();
    if key.len() > stream.len() {
        return out;
    }
    for s in 0..=stream.len() - key.len() {
        if stream[s..s + key.len()] == key[..] {
            let span = TokenSpan::new(owner[s], owner[s + key.len() - 1]);
            if !out.contains(&span) {
                out.push(span);
            }
        }
    }
    out
}

/// Closest candidate by L1 distance on endpoints; ties go to the earliest.
fn closest(candidates: &[TokenSpan], reported: TokenSpan) -> Option<TokenSpan> {
    candidates
        .iter()
        .copied()
        .min_by_key(|c| (c.distance(reported), c.start, c.end))
}

/// Resolve a reported span against the marked text.
///
/// If the reported span is an occurrence it is returned unchanged; otherwise
/// the nearest occurrence wins, earliest on ties. Without any token-level
/// occurrence the character-level fallback applies under the same rule.
pub fn reconcile_span(marked_text: &str, reported: TokenSpan, tokens: &[Token]) -> Reconciled {
    if let Some(span) = closest(&occurrences(marked_text, tokens), reported) {
        return Reconciled::Occurrence { span };
    }
    match closest(&substring_occurrences(marked_text, tokens), reported) {
        Some(span) => Reconciled::Substring { span },
        None => Reconciled::NoMatch,
    }
}

/// Earliest occurrence, for records that gave marked text but no span.
fn locate(marked_text: &str, tokens: &[Token]) -> Reconciled {
    reconcile_span(marked_text, TokenSpan::new(0, 0), tokens)
}

struct Record {
    index: usize,
    category: ErrorCategory,
    severity: SeverityValue,
    marked: Option<String>,
    span: Option<(usize, usize)>,
    explanation: Option<String>,
}

fn normalize_record(index: usize, map: &Map<String, Value>, repairs: &mut Vec<Repair>) -> Option<Record> {
    let mut category = None;
    let mut severity = None;
    let mut marked = None;
    let mut span = None;
    let mut loose_start = None;
    let mut loose_end = None;
    let mut explanation = None;
    for (k, v) in map {
        match field_of(k) {
            Some(Field::Category) => category = Some(v),
            Some(Field::Severity) => severity = severity_of(v),
            Some(Field::Marked) => marked = text_of(v).or(marked),
            Some(Field::Span) => match (span_of(v), v) {
                (Some(s), _) => span = Some(s),
                // a span key holding words rather than indices
                (None, Value::String(s)) if marked.is_none() && digit_runs(s).is_empty() => marked = text_of(v),
                _ => {}
            },
            Some(Field::Start) => loose_start = index_of(v),
            Some(Field::End) => loose_end = index_of(v),
            Some(Field::Explanation) => explanation = v.as_str().filter(|s| !s.trim().is_empty()).map(str::to_string),
            None => {}
        }
    }
    if span.is_none() {
        span = match (loose_start, loose_end) {
            (Some(s), Some(e)) => Some((s, e)),
            (Some(s), None) => Some((s, s)),
            _ => None,
        };
    }

    let category = match category {
        None => {
            repairs.push(Repair::new(RepairKind::CategoryMissing, Some(index), "", "other"));
            ErrorCategory::Other
        }
        Some(v) => {
            let label = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let (cat, known) = ErrorCategory::parse_lenient(&label);
            if !known {
                repairs.push(Repair::new(RepairKind::CategoryUnknown, Some(index), label, "other"));
            }
            cat
        }
    };
    let Some(severity) = severity else {
        repairs.push(Repair::new(RepairKind::SeverityInvalid, Some(index), "", "dropped"));
        return None;
    };
    if marked.is_none() && span.is_none() {
        repairs.push(Repair::new(RepairKind::RecordIncomplete, Some(index), "", "dropped"));
        return None;
    }
    Some(Record {
        index,
        category,
        severity,
        marked,
        span,
        explanation,
    })
}

/// Resolve the record's severity under `scheme`. `Err` drops the record,
/// `Ok(None)` is a scheme discard.
fn resolve_severity(
    rec: &Record,
    scheme: SeverityScheme,
    repairs: &mut Vec<Repair>,
) -> Result<Option<(Severity, Option<u8>)>, ()> {
    let invalid = |repairs: &mut Vec<Repair>, original: String| {
        repairs.push(Repair::new(
            RepairKind::SeverityInvalid,
            Some(rec.index),
            original,
            "dropped",
        ));
        Err(())
    };
    match (&rec.severity, scheme.is_scale()) {
        (SeverityValue::Label(s), false) => Ok(Some((*s, None))),
        (SeverityValue::Unknown(s), false) if s.trim().eq_ignore_ascii_case("critical") => {
            repairs.push(Repair::new(
                RepairKind::SeverityNormalized,
                Some(rec.index),
                s.clone(),
                "major",
            ));
            Ok(Some((Severity::Major, None)))
        }
        (SeverityValue::Scale(n), true) if (1..=5).contains(n) => {
            let raw = *n as u8;
            match map_severity(raw, scheme).expect("scale scheme with in-range value") {
                MappingResult::Discard => Ok(None),
                m => Ok(Some((m.severity().expect("not a discard"), Some(raw)))),
            }
        }
        (SeverityValue::Label(s), true) => invalid(repairs, s.label().to_string()),
        (SeverityValue::Scale(n), _) => invalid(repairs, n.to_string()),
        (SeverityValue::Unknown(s), _) => invalid(repairs, s.clone()),
    }
}

fn span_text(seg: &Segment, side: Side, tokens: &[Token], span: TokenSpan) -> String {
    let (cs, ce) = (tokens[span.start].char_start, tokens[span.end].char_end);
    tokenizer::slice_chars(seg.text(side), cs, ce)
}

/// Span and marked text for a record, or `None` to drop it.
fn resolve_span(
    rec: &Record,
    seg: &Segment,
    side: Side,
    tokens: &[Token],
    repairs: &mut Vec<Repair>,
) -> Option<(TokenSpan, String)> {
    let idx = Some(rec.index);
    let reported = rec.span.map(|(s, e)| {
        if s > e {
            repairs.push(Repair::new(
                RepairKind::SpanSwapped,
                idx,
                format!("{s}-{e}"),
                format!("{e}-{s}"),
            ));
            TokenSpan::new(e, s)
        } else {
            TokenSpan::new(s, e)
        }
    });
    let in_bounds = |s: TokenSpan| s.end < tokens.len();
    let show = |s: TokenSpan| format!("{}-{}", s.start, s.end);

    match (&rec.marked, reported) {
        (Some(marked), Some(rep)) => match reconcile_span(marked, rep, tokens) {
            Reconciled::Occurrence { span } => {
                if span != rep {
                    repairs.push(Repair::new(RepairKind::SpanMoved, idx, show(rep), show(span)));
                }
                Some((span, marked.clone()))
            }
            Reconciled::Substring { span } => {
                repairs.push(Repair::new(RepairKind::SpanSubstring, idx, show(rep), show(span)));
                Some((span, marked.clone()))
            }
            Reconciled::NoMatch if in_bounds(rep) => {
                let text = span_text(seg, side, tokens, rep);
                repairs.push(Repair::new(RepairKind::SpanNoMatch, idx, marked.clone(), text.clone()));
                Some((rep, text))
            }
            Reconciled::NoMatch => {
                repairs.push(Repair::new(
                    RepairKind::SpanUnresolvable,
                    idx,
                    marked.clone(),
                    "dropped",
                ));
                None
            }
        },
        (Some(marked), None) => match locate(marked, tokens).span() {
            Some(span) => {
                repairs.push(Repair::new(RepairKind::SpanMissing, idx, "", show(span)));
                Some((span, marked.clone()))
            }
            None => {
                repairs.push(Repair::new(
                    RepairKind::SpanUnresolvable,
                    idx,
                    marked.clone(),
                    "dropped",
                ));
                None
            }
        },
        (None, Some(rep)) if in_bounds(rep) => {
            let text = span_text(seg, side, tokens, rep);
            repairs.push(Repair::new(RepairKind::MarkedTextFromSpan, idx, "", text.clone()));
            Some((rep, text))
        }
        (None, Some(rep)) => {
            repairs.push(Repair::new(RepairKind::SpanUnresolvable, idx, show(rep), "dropped"));
            None
        }
        (None, None) => unreachable!("incomplete records are dropped during normalization"),
    }
}

/// Build a scored annotation from extracted records.
///
/// Malformed records are dropped first; the remaining list is capped at the
/// first [`MAX_ERRORS`]; then severities are mapped (scale values the scheme
/// discards vanish here) and spans reconciled on the side each category
/// marks. `None` means nothing usable survived from a non-empty reply.
pub fn assemble(
    extracted: &Extracted,
    seg: &Segment,
    scheme: SeverityScheme,
    annotator: &str,
    scale: &QualityScale<f64>,
    repairs: &mut Vec<Repair>,
) -> Option<Annotation> {
    let mut records: Vec<Record> = extracted
        .records
        .iter()
        .enumerate()
        .filter_map(|(i, m)| normalize_record(i, m, repairs))
        .collect();
    if records.len() > MAX_ERRORS {
        repairs.push(Repair::new(
            RepairKind::Truncated,
            None,
            records.len().to_string(),
            MAX_ERRORS.to_string(),
        ));
        records.truncate(MAX_ERRORS);
    }

    let src_tokens = seg.source_tokens();
    let tgt_tokens = seg.target_tokens();
    let mut errors = Vec::new();
    let mut dropped_all = !extracted.records.is_empty();
    for rec in &records {
        let Ok(sev) = resolve_severity(rec, scheme, repairs) else {
            continue;
        };
        dropped_all = false;
        let Some((severity, raw_scale)) = sev else {
            continue;
        };
        let side = Side::for_category(rec.category);
        if side == Side::Source {
            repairs.push(Repair::new(RepairKind::SourceSide, Some(rec.index), "target", "source"));
        }
        let tokens = match side {
            Side::Source => &src_tokens,
            Side::Target => &tgt_tokens,
        };
        let Some((span, marked_text)) = resolve_span(rec, seg, side, tokens, repairs) else {
            continue;
        };
        errors.push(ErrorSpan {
            category: rec.category,
            severity,
            raw_scale,
            marked_text,
            span,
            side,
            explanation: rec.explanation.clone(),
        });
    }
    if dropped_all {
        return None;
    }
    Some(Annotation::scored(seg.id.clone(), annotator, scheme, errors, scale))
}

/// Annotator id for a model reply: `model@fingerprint`, or the bare model
/// name when the endpoint reported no fingerprint.
pub fn annotator_id(model: &str, fingerprint: Option<&str>) -> String {
    match fingerprint {
        Some(fp) => format!("{model}@{fp}"),
        None => model.to_string(),
    }
}

/// Parse one reply text for `seg`.
pub fn parse_text(
    raw_text: &str,
    seg: &Segment,
    scheme: SeverityScheme,
    annotator: &str,
    scale: &QualityScale<f64>,
) -> ParseOutcome {
    let extracted = match extract_json(raw_text) {
        Ok(e) => e,
        Err(f) => {
            let kind = match f {
                ExtractFailure::NoJson => RepairKind::NoJson,
                ExtractFailure::NoRecords => RepairKind::NoRecords,
            };
            return ParseOutcome::unparsable(&seg.id, vec![Repair::new(kind, None, "", "")]);
        }
    };
    let mut repairs = extracted.repairs.clone();
    match assemble(&extracted, seg, scheme, annotator, scale, &mut repairs) {
        Some(annotation) => ParseOutcome {
            segment_id: seg.id.clone(),
            status: ParseStatus::Parsed,
            annotation: Some(annotation),
            repairs,
        },
        None => ParseOutcome::unparsable(&seg.id, repairs),
    }
}

/// Parse a ledger entry. Failed requests are unparsable by definition.
pub fn parse_response(
    resp: &RawResponse,
    seg: &Segment,
    scheme: SeverityScheme,
    scale: &QualityScale<f64>,
) -> ParseOutcome {
    if resp.status != ResponseStatus::Ok {
        let status = format!("{:?}", resp.status).to_lowercase();
        return ParseOutcome::unparsable(&seg.id, vec![Repair::new(RepairKind::ResponseFailed, None, status, "")]);
    }
    let annotator = annotator_id(&resp.model, resp.system_fingerprint.as_deref());
    parse_text(&resp.raw_text, seg, scheme, &annotator, scale)
}
