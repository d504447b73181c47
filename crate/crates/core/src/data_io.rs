//! File formats: JSONL records, WMT MQM gold TSV, QE training CSV and
//! prediction/gold score TSV.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::QualityScale;
use crate::tokenizer::{self, Token};
use crate::types::{
    check_corpus, Annotation, ErrorCategory, ErrorSpan, LangPair, Segment, Severity, SeverityScheme, Side, TokenSpan,
};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::data(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Write one JSON object per line, replacing the file.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_annotations_jsonl(path: &Path) -> Result<Vec<Annotation>> {
    read_jsonl(path)
}

pub fn write_annotations_jsonl(path: &Path, annotations: &[Annotation]) -> Result<()> {
    write_jsonl(path, annotations)
}

/// Segments file; every segment is checked and ids must be unique.
pub fn read_segments_jsonl(path: &Path) -> Result<Vec<Segment>> {
    let segs: Vec<Segment> = read_jsonl(path)?;
    for (i, s) in segs.iter().enumerate() {
        s.check().map_err(|e| Error::data(path, i + 1, e.to_string()))?;
    }
    check_corpus(&segs).map_err(|e| Error::data(path, 0, e.to_string()))?;
    Ok(segs)
}

/// A problem with one input row. Rows either contribute to a record or
/// produce a diagnostic; some do both (e.g. a span fallback).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

/// One row of a WMT MQM TSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub system: String,
    pub doc: String,
    pub doc_id: String,
    pub seg_id: String,
    pub rater: String,
    pub source: String,
    pub target: String,
    pub category: String,
    pub severity: String,
}

const GOLD_COLUMNS: [&str; 9] = [
    "system", "doc", "doc_id", "seg_id", "rater", "source", "target", "category", "severity",
];

#[derive(Debug, Clone, PartialEq)]
pub struct GoldLoad {
    /// One entry per (segment, rater), in order of first appearance.
    pub records: Vec<(Segment, Annotation)>,
    pub diagnostics: Vec<Diagnostic>,
}

impl GoldLoad {
    /// Distinct segments, in order of first appearance.
    pub fn segments(&self) -> Vec<Segment> {
        let mut seen = std::collections::HashSet::new();
        self.records
            .iter()
            .filter(|(s, _)| seen.insert(s.id.clone()))
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn annotations(&self) -> Vec<Annotation> {
        self.records.iter().map(|(_, a)| a.clone()).collect()
    }
}

/// Strip `<v>…</v>` markup, returning the clean text and the code-point
/// ranges `[start, end)` the tags enclosed. `None` on unbalanced or nested
/// tags.
pub fn strip_markup(text: &str) -> Option<(String, Vec<(usize, usize)>)> {
    let mut clean = String::with_capacity(text.len());
    let mut n = 0;
    let mut open: Option<usize> = None;
    let mut spans = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix("<v>") {
            if open.is_some() {
                return None;
            }
            open = Some(n);
            rest = r;
        } else if let Some(r) = rest.strip_prefix("</v>") {
            spans.push((open.take()?, n));
            rest = r;
        } else {
            let c = rest.chars().next().expect("non-empty");
            clean.push(c);
            n += 1;
            rest = &rest[c.len_utf8()..];
        }
    }
    if open.is_some() {
        return None;
    }
    Some((clean, spans))
}

/// Tokens overlapping `[start, end)`, as an inclusive token range.
fn covering_tokens(tokens: &[Token], start: usize, end: usize) -> Option<TokenSpan> {
    let first = tokens.iter().position(|t| t.char_end > start && t.char_start < end)?;
    let last = tokens.iter().rposition(|t| t.char_end > start && t.char_start < end)?;
    Some(TokenSpan::new(first, last))
}

fn is_no_error(s: &str) -> bool {
    let k: String = s
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    k == "noerror"
}

/// Read a WMT MQM TSV file (header row, tab-separated, columns
/// system doc doc_id seg_id rater source target category severity).
///
/// Rows of one (segment, rater) pair merge into one annotation; each `<v>`
/// span in the marked side becomes its own error. Segment ids are
/// `{system}:{seg_id}`.
pub fn load_gold_tsv(path: &Path, lang_pair: &LangPair) -> Result<GoldLoad> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::data(path, 1, "empty file, expected a header row"))?
        .1;
    let cols: Vec<String> = header.split('\t').map(|c| c.trim().to_lowercase()).collect();
    let idx: Vec<usize> = GOLD_COLUMNS
        .iter()
        .map(|name| {
            cols.iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::data(path, 1, format!("missing column {name}")))
        })
        .collect::<Result<_>>()?;

    let scale = QualityScale::default();
    let mut diagnostics = Vec::new();
    let mut segments: Vec<Segment> = Vec::new();
    let mut seg_index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(usize, String, Vec<ErrorSpan>)> = Vec::new();
    let mut group_index: HashMap<(String, String), usize> = HashMap::new();

    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut diag = |message: String| diagnostics.push(Diagnostic { line: lineno, message });
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            diag(format!(
                "expected {} fields, found {}; row skipped",
                cols.len(),
                fields.len()
            ));
            continue;
        }
        let get = |k: usize| fields[idx[k]].to_string();
        let rec = GoldRecord {
            system: get(0),
            doc: get(1),
            doc_id: get(2),
            seg_id: get(3),
            rater: get(4),
            source: get(5),
            target: get(6),
            category: get(7),
            severity: get(8),
        };

        let (Some((source, src_marks)), Some((target, tgt_marks))) =
            (strip_markup(&rec.source), strip_markup(&rec.target))
        else {
            diag("unbalanced <v> markup; row skipped".into());
            continue;
        };

        let no_error = is_no_error(&rec.category) || is_no_error(&rec.severity);
        let severity = Severity::parse(&rec.severity);
        if !no_error && severity.is_none() {
            diag(format!("unknown severity {:?}; row skipped", rec.severity));
            continue;
        }

        let id = format!("{}:{}", rec.system, rec.seg_id);
        let seg = Segment {
            id: id.clone(),
            lang_pair: lang_pair.clone(),
            source,
            target,
            system: Some(rec.system.clone()),
            doc: Some(rec.doc.clone()),
        };
        if let Err(e) = seg.check() {
            diag(format!("invalid segment {id}: {e}; row skipped"));
            continue;
        }
        let seg_pos = match seg_index.get(&id) {
            Some(&p) => {
                if segments[p].source != seg.source || segments[p].target != seg.target {
                    diag(format!("segment {id} text differs from its first row; first row kept"));
                }
                p
            }
            None => {
                segments.push(seg);
                seg_index.insert(id.clone(), segments.len() - 1);
                segments.len() - 1
            }
        };
        let g = *group_index.entry((id.clone(), rec.rater.clone())).or_insert_with(|| {
            groups.push((seg_pos, rec.rater.clone(), Vec::new()));
            groups.len() - 1
        });
        if no_error {
            continue;
        }

        let (category, known) = ErrorCategory::parse_lenient(&rec.category);
        if !known {
            diag(format!("unknown category {:?} mapped to other", rec.category));
        }
        let severity = severity.expect("checked above");
        let side = Side::for_category(category);
        let seg = &segments[seg_pos];
        let tokens = seg.tokens(side);
        let marks = match side {
            Side::Source => &src_marks,
            Side::Target => &tgt_marks,
        };
        let mut spans: Vec<TokenSpan> = marks
            .iter()
            .filter_map(|&(s, e)| covering_tokens(&tokens, s, e))
            .collect();
        if spans.is_empty() {
            if tokens.is_empty() {
                diag(format!(
                    "no tokens on the {side:?} side for a marked error; row skipped"
                ));
                continue;
            }
            diag(format!(
                "no usable <v> span on the {side:?} side; whole sentence marked"
            ));
            spans.push(TokenSpan::new(0, tokens.len() - 1));
        }
        for span in spans {
            let marked_text =
                tokenizer::slice_chars(seg.text(side), tokens[span.start].char_start, tokens[span.end].char_end);
            groups[g].2.push(ErrorSpan {
                category,
                severity,
                raw_scale: None,
                marked_text,
                span,
                side,
                explanation: None,
            });
        }
    }

    let records = groups
        .into_iter()
        .map(|(seg_pos, rater, errors)| {
            let seg = segments[seg_pos].clone();
            let a = Annotation::scored(seg.id.clone(), rater, SeverityScheme::BinaryLabels, errors, &scale);
            (seg, a)
        })
        .collect();
    Ok(GoldLoad { records, diagnostics })
}

/// How to turn several annotations of one segment into one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaterMerge {
    #[default]
    Mean,
    /// The first annotation listed for the segment.
    First,
}

/// Quality per segment id.
pub fn segment_quality(annotations: &[Annotation], merge: RaterMerge) -> BTreeMap<String, f64> {
    let mut by_seg: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for a in annotations {
        by_seg.entry(a.segment_id.clone()).or_default().push(a.quality);
    }
    by_seg
        .into_iter()
        .map(|(id, qs)| {
            let q = match merge {
                RaterMerge::First => qs[0],
                RaterMerge::Mean => qs.iter().sum::<f64>() / qs.len() as f64,
            };
            (id, q)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QeTrainingRow {
    pub src: String,
    pub mt: String,
    pub score: f64,
}

fn one_line(s: &str) -> String {
    s.split(['\r', '\n'])
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// QE training rows, one per annotated segment, ordered by segment id.
/// Newlines inside segment text become single spaces.
pub fn qe_rows(annotations: &[Annotation], segments: &[Segment], merge: RaterMerge) -> Result<Vec<QeTrainingRow>> {
    let by_id: HashMap<&str, &Segment> = segments.iter().map(|s| (s.id.as_str(), s)).collect();
    segment_quality(annotations, merge)
        .into_iter()
        .map(|(id, score)| {
            let seg = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::Contract(format!("annotation for unknown segment {id}")))?;
            Ok(QeTrainingRow {
                src: one_line(&seg.source),
                mt: one_line(&seg.target),
                score,
            })
        })
        .collect()
}

/// Write `src,mt,score` CSV (RFC 4180 quoting). Returns the row count.
pub fn export_qe_csv(
    annotations: &[Annotation],
    segments: &[Segment],
    path: &Path,
    merge: RaterMerge,
) -> Result<usize> {
    let rows = qe_rows(annotations, segments, merge)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["src", "mt", "score"]).map_err(|e| csv_error(path, e))?;
    for r in &rows {
        w.write_record([r.src.as_str(), r.mt.as_str(), &format!("{:?}", r.score)])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(rows.len())
}

pub fn read_qe_csv(path: &Path) -> Result<Vec<QeTrainingRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        out.push(row.map_err(|e: csv::Error| Error::data(path, i + 2, e.to_string()))?);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(path, 0, format!("{other:?}")),
    }
}

/// `(pred, gold)` pairs from a TSV with a header naming `pred` and `gold`
/// columns (other columns ignored).
pub fn read_score_pairs_tsv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::data(path, 1, "empty file, expected a header row"))?;
    let cols: Vec<String> = header.split('\t').map(|c| c.trim().to_lowercase()).collect();
    let col = |name: &str| {
        cols.iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::data(path, 1, format!("missing column {name}")))
    };
    let (p, g) = (col("pred")?, col("gold")?);
    lines
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            let num = |k: usize, name: &str| -> Result<f64> {
                let raw = fields
                    .get(k)
                    .ok_or_else(|| Error::data(path, i + 1, format!("missing {name} field")))?;
                match raw.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::data(path, i + 1, format!("bad {name} value {raw:?}"))),
                }
            };
            Ok((num(p, "pred")?, num(g, "gold")?))
        })
        .collect()
}

/// Pair predicted with gold segment quality over shared segment ids, in id
/// order. Ids present on one side only are returned separately.
pub fn pair_qualities(
    pred: &BTreeMap<String, f64>,
    gold: &BTreeMap<String, f64>,
) -> (Vec<(String, f64, f64)>, Vec<String>) {
    let mut pairs = Vec::new();
    let mut unmatched = Vec::new();
    for (id, &p) in pred {
        match gold.get(id) {
            Some(&g) => pairs.push((id.clone(), p, g)),
            None => unmatched.push(id.clone()),
        }
    }
    unmatched.extend(gold.keys().filter(|id| !pred.contains_key(*id)).cloned());
    (pairs, unmatched)
}
