//! Command-line front end. Every stage reads and writes files so the
//! expensive model calls can be re-run or audited independently.
//!
//! Settings come from, in decreasing precedence: command-line flags, the
//! TOML file named by `--config`, built-in defaults. Relative paths in the
//! config file are resolved against the file's directory.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::data_io::{self, RaterMerge};
use crate::error::{Error, Result};
use crate::gateway::{self, Ledger, PromptRequest, ProviderConfig, ProviderKind, RawResponse, ResponseStatus};
use crate::metrics::{
    annotator_agreement, bucket_analysis, corpus_span_scores, BucketRow, CorrelationCell, CorrelationKind, Prf,
    RaterScore, DEFAULT_BOUNDARIES,
};
use crate::parser::{self, ParseOutcome};
use crate::prompting::{self, PromptMode, PromptTemplate, ZeroShotVariant};
use crate::scoring::{error_stats, QualityScale, Ratio, DEFAULT_DIVISOR};
use crate::types::{Annotation, ErrorCategory, LangPair, Segment, SeverityScheme};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_PROVIDER: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Provider(_) => EXIT_PROVIDER,
        Error::Contract(_)
        | Error::Index { .. }
        | Error::EmptyInput
        | Error::DegenerateInput(_)
        | Error::Io { .. }
        | Error::Data { .. } => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mqmqe",
    version,
    about = "MQM error annotation with LLMs, scoring and evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Language pair, e.g. zh-en.
    #[arg(long, global = true)]
    pub lang_pair: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Severity scheme: binary, m13 or m3.
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderArg>,
    /// Maximum requests in flight.
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// Penalty at which quality reaches 0.
    #[arg(long, global = true)]
    pub divisor: Option<f64>,
    /// Output file (standard output when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value = "tsv")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Zero,
    Few,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Remote,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MergeArg {
    Mean,
    First,
}

impl From<MergeArg> for RaterMerge {
    fn from(m: MergeArg) -> Self {
        match m {
            MergeArg::Mean => RaterMerge::Mean,
            MergeArg::First => RaterMerge::First,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render (and optionally send) the five knowledge questions.
    Quiz {
        /// Send the questions to the provider and write its replies.
        #[arg(long)]
        ask: bool,
        #[arg(long)]
        mock_replies: Option<PathBuf>,
    },
    /// Prompt the model for every segment and append replies to a ledger.
    Annotate {
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        examples: Option<PathBuf>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        mock_replies: Option<PathBuf>,
    },
    /// Parse ledger replies into annotations.
    Parse {
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Also write the parsed annotations as annotation JSONL.
        #[arg(long)]
        annotations_out: Option<PathBuf>,
    },
    /// Recompute penalty and quality for parse outcomes or annotations.
    Score {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Span, severity and type F1 of predicted against gold annotations.
    EvalSpans {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        segments: Option<PathBuf>,
    },
    /// Pearson, Spearman and Kendall correlation of predicted with gold scores.
    EvalCorr {
        #[command(flatten)]
        scores: ScoreInput,
    },
    /// Correlations within gold-quality buckets.
    Buckets {
        #[command(flatten)]
        scores: ScoreInput,
        /// Comma-separated bucket boundaries inside (0, 1).
        #[arg(long, value_delimiter = ',')]
        boundaries: Option<Vec<f64>>,
    },
    /// Pairwise agreement between annotators.
    Agreement {
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Error counts and severity ratios per annotator.
    Stats {
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Convert WMT MQM TSV gold data to segments and annotation JSONL.
    Ingest {
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        segments_out: PathBuf,
    },
    /// Write a src,mt,score CSV for QE model training.
    ExportQe {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long, value_enum)]
        merge: Option<MergeArg>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Revised,
    Basic,
}

/// Scores to correlate: a TSV with `pred` and `gold` columns, or predicted
/// and gold annotation files.
#[derive(Debug, Args)]
pub struct ScoreInput {
    #[arg(long, conflicts_with_all = ["pred", "gold"])]
    pub pairs: Option<PathBuf>,
    #[arg(long, requires = "gold")]
    pub pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    pub gold: Option<PathBuf>,
    /// How several annotations of one segment combine.
    #[arg(long, value_enum)]
    pub merge: Option<MergeArg>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    lang_pair: Option<String>,
    mode: Option<ModeArg>,
    scheme: Option<String>,
    variant: Option<ZeroShotVariant>,
    divisor: Option<f64>,
    rater_merge: Option<RaterMerge>,
    boundaries: Option<Vec<f64>>,
    paths: PathsConfig,
    provider: Option<ProviderConfig>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub templates: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub segments: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub ledger: Option<PathBuf>,
}

/// Settings after merging flags, config file and defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub lang_pair: Option<LangPair>,
    pub mode: PromptMode,
    pub scheme: SeverityScheme,
    pub variant: ZeroShotVariant,
    pub divisor: f64,
    pub rater_merge: RaterMerge,
    pub boundaries: Vec<f64>,
    pub provider: ProviderConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn resolve(g: &GlobalArgs) -> Result<Self> {
        let file = match &g.config {
            None => FileConfig::default(),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let mut fc: FileConfig =
                    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let base = path.parent().unwrap_or(Path::new(""));
                let rebase = |p: &mut Option<PathBuf>| {
                    if let Some(v) = p.as_mut() {
                        if v.is_relative() {
                            *v = base.join(&*v);
                        }
                    }
                };
                rebase(&mut fc.paths.templates);
                rebase(&mut fc.paths.examples);
                rebase(&mut fc.paths.segments);
                rebase(&mut fc.paths.gold);
                rebase(&mut fc.paths.ledger);
                if let Some(p) = fc.provider.as_mut() {
                    rebase(&mut p.mock_replies);
                }
                fc
            }
        };

        let lang_pair = g
            .lang_pair
            .as_deref()
            .or(file.lang_pair.as_deref())
            .map(str::parse::<LangPair>)
            .transpose()
            .map_err(|e| Error::Config(e.to_string()))?;
        let scheme: Option<SeverityScheme> = g
            .scheme
            .as_deref()
            .or(file.scheme.as_deref())
            .map(str::parse)
            .transpose()?;
        let mode = g.mode.or(file.mode);
        // each of mode and scheme defaults to the partner of the other
        let (mode, scheme) = match (mode, scheme) {
            (Some(m), Some(s)) => (m, s),
            (Some(ModeArg::Zero), None) | (None, None) => (ModeArg::Zero, SeverityScheme::BinaryLabels),
            (Some(ModeArg::Few), None) => (ModeArg::Few, SeverityScheme::ScaleM3),
            (None, Some(s)) if s.is_scale() => (ModeArg::Few, s),
            (None, Some(s)) => (ModeArg::Zero, s),
        };
        let mode = match mode {
            ModeArg::Zero => PromptMode::ZeroShot,
            ModeArg::Few => PromptMode::FewShot,
        };

        let mut provider = match (file.provider, g.provider) {
            (Some(p), _) => p,
            // bare --provider mock: mock model name and no backoff
            (None, Some(ProviderArg::Mock)) => ProviderConfig {
                mock_replies: None,
                ..ProviderConfig::mock("")
            },
            (None, _) => ProviderConfig::default(),
        };
        match g.provider {
            Some(ProviderArg::Mock) => provider.kind = ProviderKind::Mock,
            Some(ProviderArg::Remote) => provider.kind = ProviderKind::Remote,
            None => {}
        }
        if let Some(n) = g.concurrency {
            provider.max_in_flight = n;
        }
        let divisor = g.divisor.or(file.divisor).unwrap_or(DEFAULT_DIVISOR);
        QualityScale::new(divisor)?;

        Ok(RunConfig {
            lang_pair,
            mode,
            scheme,
            variant: file.variant.unwrap_or_default(),
            divisor,
            rater_merge: file.rater_merge.unwrap_or_default(),
            boundaries: file.boundaries.unwrap_or_else(|| DEFAULT_BOUNDARIES.to_vec()),
            provider,
            paths: file.paths,
        })
    }

    pub fn scale(&self) -> QualityScale<f64> {
        QualityScale::new(self.divisor).expect("checked in resolve")
    }
}

fn need(path: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    path.cloned()
        .ok_or_else(|| Error::Config(format!("no {what} given (flag or config file)")))
}

/// The single language pair of `segs`, checked against the configured one.
fn corpus_pair(cfg: &RunConfig, segs: &[Segment]) -> Result<LangPair> {
    let first = segs.first().ok_or(Error::EmptyInput)?.lang_pair.clone();
    let lp = cfg.lang_pair.clone().unwrap_or(first);
    if let Some(s) = segs.iter().find(|s| s.lang_pair != lp) {
        return Err(Error::Config(format!(
            "segment {} is {}, expected {lp}",
            s.id, s.lang_pair
        )));
    }
    Ok(lp)
}

struct Output {
    path: Option<PathBuf>,
    buf: String,
}

impl Output {
    fn new(path: Option<PathBuf>) -> Self {
        Output {
            path,
            buf: String::new(),
        }
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.buf.push_str(s.as_ref());
        self.buf.push('\n');
    }

    fn json(&mut self, v: &impl serde::Serialize) {
        self.line(serde_json::to_string_pretty(v).expect("report serializes"));
    }

    fn finish(self) -> Result<()> {
        match self.path {
            Some(p) => fs::write(&p, self.buf).map_err(|e| Error::io(p, e)),
            None => std::io::stdout()
                .write_all(self.buf.as_bytes())
                .map_err(|e| Error::io("<stdout>", e)),
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Provider(format!("async runtime: {e}")))
}

fn provider_for(cfg: &RunConfig, mock_replies: Option<&PathBuf>) -> ProviderConfig {
    let mut p = cfg.provider.clone();
    if let Some(m) = mock_replies {
        p.mock_replies = Some(m.clone());
    }
    p
}

/// Write responses to the ledger, then fail if any request never succeeded.
fn record_responses(ledger: &Path, responses: &[RawResponse]) -> Result<()> {
    Ledger::open(ledger)?.append(responses)?;
    let failed = responses
        .iter()
        .filter(|r| r.status == ResponseStatus::TransportError)
        .count();
    if failed > 0 {
        return Err(Error::Provider(format!(
            "{failed} of {} requests failed after retries (recorded in {})",
            responses.len(),
            ledger.display()
        )));
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::resolve(&cli.global)?;
    let out = cli.global.out.clone();
    let format = cli.global.format;
    match cli.command {
        Command::Quiz { ask, mock_replies } => quiz(&cfg, out, ask, mock_replies.as_ref()),
        Command::Annotate {
            segments,
            templates,
            examples,
            variant,
            mock_replies,
        } => {
            let segments = need(segments.as_ref().or(cfg.paths.segments.as_ref()), "segments file")?;
            let ledger = need(out.as_ref().or(cfg.paths.ledger.as_ref()), "ledger path (--out)")?;
            let variant = match variant {
                Some(VariantArg::Basic) => ZeroShotVariant::Basic,
                Some(VariantArg::Revised) => ZeroShotVariant::Revised,
                None => cfg.variant,
            };
            let templates = templates.or(cfg.paths.templates.clone());
            let examples = examples.or(cfg.paths.examples.clone());
            annotate(
                &cfg,
                &segments,
                &ledger,
                templates.as_deref(),
                examples.as_deref(),
                variant,
                mock_replies.as_ref(),
            )
        }
        Command::Parse {
            segments,
            ledger,
            annotations_out,
        } => {
            let segments = need(segments.as_ref().or(cfg.paths.segments.as_ref()), "segments file")?;
            let ledger = need(ledger.as_ref().or(cfg.paths.ledger.as_ref()), "ledger")?;
            parse(&cfg, &segments, &ledger, out, annotations_out.as_deref())
        }
        Command::Score { input } => score(&cfg, &input, out),
        Command::EvalSpans { pred, gold, segments } => {
            let segments = need(segments.as_ref().or(cfg.paths.segments.as_ref()), "segments file")?;
            eval_spans(&pred, &gold, &segments, out, format)
        }
        Command::EvalCorr { scores } => eval_corr(&cfg, &scores, out, format),
        Command::Buckets { scores, boundaries } => {
            let b = boundaries.unwrap_or_else(|| cfg.boundaries.clone());
            buckets(&cfg, &scores, &b, out, format)
        }
        Command::Agreement { annotations } => agreement(&annotations, out, format),
        Command::Stats { annotations } => stats(&annotations, out, format),
        Command::Ingest { gold, segments_out } => {
            let gold = need(gold.as_ref().or(cfg.paths.gold.as_ref()), "gold TSV")?;
            let lp = cfg
                .lang_pair
                .clone()
                .ok_or_else(|| Error::Config("ingest needs --lang-pair".into()))?;
            let out = need(out.as_ref(), "annotation output (--out)")?;
            ingest(&gold, &lp, &segments_out, &out)
        }
        Command::ExportQe {
            annotations,
            segments,
            merge,
        } => {
            let segments = need(segments.as_ref().or(cfg.paths.segments.as_ref()), "segments file")?;
            let out = need(out.as_ref(), "CSV output (--out)")?;
            let merge = merge.map(RaterMerge::from).unwrap_or(cfg.rater_merge);
            let anns = data_io::read_annotations_jsonl(&annotations)?;
            let segs = data_io::read_segments_jsonl(&segments)?;
            let n = data_io::export_qe_csv(&anns, &segs, &out, merge)?;
            eprintln!("wrote {n} rows to {}", out.display());
            Ok(())
        }
    }
}

fn quiz(cfg: &RunConfig, out: Option<PathBuf>, ask: bool, mock_replies: Option<&PathBuf>) -> Result<()> {
    let lp = cfg
        .lang_pair
        .clone()
        .ok_or_else(|| Error::Config("quiz needs --lang-pair".into()))?;
    let prompts = prompting::quiz_prompts(&lp)?;
    if !ask {
        let mut o = Output::new(out);
        for (i, p) in prompts.iter().enumerate() {
            o.line(serde_json::to_string(&json!({"question": i + 1, "user": p.user})).expect("serializes"));
        }
        return o.finish();
    }
    let ledger = need(out.as_ref(), "reply ledger (--out)")?;
    let reqs: Vec<PromptRequest> = prompts
        .into_iter()
        .enumerate()
        .map(|(i, prompt)| PromptRequest {
            segment_id: format!("quiz-{}", i + 1),
            prompt,
        })
        .collect();
    let provider = provider_for(cfg, mock_replies);
    let responses = runtime()?.block_on(gateway::annotate_batch(&provider, &reqs))?;
    record_responses(&ledger, &responses)
}

fn annotate(
    cfg: &RunConfig,
    segments: &Path,
    ledger: &Path,
    templates: Option<&Path>,
    examples: Option<&Path>,
    variant: ZeroShotVariant,
    mock_replies: Option<&PathBuf>,
) -> Result<()> {
    let segs = data_io::read_segments_jsonl(segments)?;
    let lp = corpus_pair(cfg, &segs)?;
    let shots = match (cfg.mode, examples) {
        (PromptMode::FewShot, Some(p)) => prompting::load_examples(p)?,
        (PromptMode::FewShot, None) => prompting::default_examples(&lp)?,
        _ => vec![],
    };
    let template = PromptTemplate::load(templates, cfg.mode, variant, cfg.scheme, shots)?;
    let reqs = segs
        .iter()
        .map(|s| {
            Ok(PromptRequest {
                segment_id: s.id.clone(),
                prompt: template.render(&lp, s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let provider = provider_for(cfg, mock_replies);
    provider.validate()?;
    let responses = runtime()?.block_on(gateway::annotate_batch(&provider, &reqs))?;
    record_responses(ledger, &responses)
}

fn parse(
    cfg: &RunConfig,
    segments: &Path,
    ledger: &Path,
    out: Option<PathBuf>,
    annotations_out: Option<&Path>,
) -> Result<()> {
    let segs = data_io::read_segments_jsonl(segments)?;
    let by_id: HashMap<&str, &Segment> = segs.iter().map(|s| (s.id.as_str(), s)).collect();
    let entries: Vec<RawResponse> = data_io::read_jsonl(ledger)?;
    if let Some(r) = entries.iter().find(|r| !by_id.contains_key(r.segment_id.as_str())) {
        return Err(Error::Contract(format!(
            "ledger entry for unknown segment {}",
            r.segment_id
        )));
    }
    let latest = gateway::latest_responses(entries);
    let scale = cfg.scale();
    let mut responses = Vec::new();
    let mut outcomes = Vec::new();
    for s in &segs {
        if let Some(r) = latest.get(&s.id) {
            outcomes.push(parser::parse_response(r, s, cfg.scheme, &scale));
            responses.push(r.clone());
        }
    }
    let rate = gateway::parse_rate(&responses, &outcomes)?;
    let parsed = outcomes.iter().filter(|o| o.is_parsed()).count();
    eprintln!("parse rate {parsed}/{} = {rate}", outcomes.len());

    let mut o = Output::new(out);
    for oc in &outcomes {
        o.line(serde_json::to_string(oc).expect("outcome serializes"));
    }
    o.finish()?;
    if let Some(p) = annotations_out {
        let anns: Vec<Annotation> = outcomes.into_iter().filter_map(|o| o.annotation).collect();
        data_io::write_annotations_jsonl(p, &anns)?;
    }
    Ok(())
}

/// Annotations from a file of parse outcomes or of plain annotations.
/// Unparsable outcomes are skipped.
fn read_scored_input(path: &Path) -> Result<Vec<Annotation>> {
    let values: Vec<Value> = data_io::read_jsonl(path)?;
    let mut out = Vec::new();
    for (i, v) in values.into_iter().enumerate() {
        let bad = |e: serde_json::Error| Error::data(path, i + 1, e.to_string());
        if v.get("status").is_some() {
            let oc: ParseOutcome = serde_json::from_value(v).map_err(bad)?;
            out.extend(oc.annotation);
        } else {
            out.push(serde_json::from_value(v).map_err(bad)?);
        }
    }
    Ok(out)
}

fn score(cfg: &RunConfig, input: &Path, out: Option<PathBuf>) -> Result<()> {
    let scale = cfg.scale();
    let mut o = Output::new(out);
    for mut a in read_scored_input(input)? {
        a.rescore(&scale);
        o.line(serde_json::to_string(&a).expect("annotation serializes"));
    }
    o.finish()
}

fn prf_json(p: &Prf<f64>) -> Value {
    json!({"precision": p.precision, "recall": p.recall, "f1": p.f1})
}

fn eval_spans(pred: &Path, gold: &Path, segments: &Path, out: Option<PathBuf>, format: Format) -> Result<()> {
    let preds = read_scored_input(pred)?;
    let golds = read_scored_input(gold)?;
    let segs = data_io::read_segments_jsonl(segments)?;
    let by_id: HashMap<&str, &Segment> = segs.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut gold_by_seg: HashMap<&str, Vec<&Annotation>> = HashMap::new();
    for g in &golds {
        gold_by_seg.entry(g.segment_id.as_str()).or_default().push(g);
    }

    let mut items = Vec::new();
    let mut unmatched = 0;
    for p in &preds {
        let seg = by_id
            .get(p.segment_id.as_str())
            .ok_or_else(|| Error::Contract(format!("prediction for unknown segment {}", p.segment_id)))?;
        let (nt, ns) = (seg.target_tokens().len(), seg.source_tokens().len());
        match gold_by_seg.get(p.segment_id.as_str()) {
            Some(gs) => items.extend(gs.iter().map(|g| (p, *g, nt, ns))),
            None => unmatched += 1,
        }
    }
    if unmatched > 0 {
        eprintln!("{unmatched} predicted annotations have no gold counterpart and were skipped");
    }
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scores = corpus_span_scores::<f64>(items.iter().copied())?;
    let mut o = Output::new(out);
    let rows = [
        ("span", &scores.span),
        ("severity", &scores.severity),
        ("type", &scores.category),
    ];
    match format {
        Format::Tsv => {
            o.line("metric\tprecision\trecall\tf1");
            for (name, p) in rows {
                o.line(format!("{name}\t{:?}\t{:?}\t{:?}", p.precision, p.recall, p.f1));
            }
        }
        Format::Json => {
            let mut m = serde_json::Map::new();
            m.insert("pairs".into(), json!(items.len()));
            for (name, p) in rows {
                m.insert(name.into(), prf_json(p));
            }
            o.json(&Value::Object(m));
        }
    }
    o.finish()
}

/// `(id, pred, gold)` triples from either input form.
fn load_scores(cfg: &RunConfig, s: &ScoreInput) -> Result<Vec<(String, f64, f64)>> {
    if let Some(p) = &s.pairs {
        return Ok(data_io::read_score_pairs_tsv(p)?
            .into_iter()
            .enumerate()
            .map(|(i, (pred, gold))| ((i + 1).to_string(), pred, gold))
            .collect());
    }
    let (Some(pred), Some(gold)) = (&s.pred, &s.gold) else {
        return Err(Error::Config("give --pairs, or --pred and --gold".into()));
    };
    let merge = s.merge.map(RaterMerge::from).unwrap_or(cfg.rater_merge);
    let pq = data_io::segment_quality(&read_scored_input(pred)?, merge);
    let gq = data_io::segment_quality(&read_scored_input(gold)?, merge);
    let (pairs, unmatched) = data_io::pair_qualities(&pq, &gq);
    if !unmatched.is_empty() {
        eprintln!("{} segments scored on one side only were skipped", unmatched.len());
    }
    Ok(pairs)
}

fn cell_json(c: &CorrelationCell<f64>) -> Value {
    match c {
        CorrelationCell::Defined(r) => json!({
            "coefficient": r.coefficient, "p_value": r.p_value, "n": r.n, "marker": r.marker()
        }),
        CorrelationCell::Undefined { reason } => json!({"undefined": reason}),
    }
}

fn eval_corr(cfg: &RunConfig, s: &ScoreInput, out: Option<PathBuf>, format: Format) -> Result<()> {
    let triples = load_scores(cfg, s)?;
    let pred: Vec<f64> = triples.iter().map(|t| t.1).collect();
    let gold: Vec<f64> = triples.iter().map(|t| t.2).collect();
    let cells: Vec<(CorrelationKind, CorrelationCell<f64>)> = CorrelationKind::ALL
        .iter()
        .map(|&k| (k, CorrelationCell::compute(k, &pred, &gold)))
        .collect();
    for (k, c) in &cells {
        if let CorrelationCell::Undefined { reason } = c {
            eprintln!("{k} undefined: {reason}");
        }
    }
    let mut o = Output::new(out);
    match format {
        Format::Tsv => {
            o.line("metric\tcoefficient\tp_value\tn\tcell");
            for (k, c) in &cells {
                match c {
                    CorrelationCell::Defined(r) => o.line(format!(
                        "{k}\t{:?}\t{:?}\t{}\t{}",
                        r.coefficient,
                        r.p_value,
                        r.n,
                        c.render()
                    )),
                    CorrelationCell::Undefined { .. } => o.line(format!("{k}\t-\t-\t{}\t-", pred.len())),
                }
            }
        }
        Format::Json => {
            let m: serde_json::Map<String, Value> = cells.iter().map(|(k, c)| (k.to_string(), cell_json(c))).collect();
            o.json(&json!({"n": pred.len(), "correlations": m}));
        }
    }
    o.finish()
}

fn bucket_json(b: &BucketRow<f64>) -> Value {
    json!({
        "bucket": b.label(),
        "lower": b.lower,
        "upper": b.upper,
        "upper_inclusive": b.upper_inclusive,
        "count": b.count,
        "pearson": cell_json(&b.pearson),
        "spearman": cell_json(&b.spearman),
        "kendall": cell_json(&b.kendall),
    })
}

fn buckets(cfg: &RunConfig, s: &ScoreInput, boundaries: &[f64], out: Option<PathBuf>, format: Format) -> Result<()> {
    let pairs: Vec<(f64, f64)> = load_scores(cfg, s)?.into_iter().map(|(_, p, g)| (g, p)).collect();
    let report = bucket_analysis(&pairs, boundaries)?;
    let mut o = Output::new(out);
    match format {
        Format::Tsv => {
            o.line("bucket\tn\tpearson\tspearman\tkendall");
            for b in std::iter::once(&report.overall).chain(&report.buckets) {
                o.line(format!(
                    "{}\t{}\t{}\t{}\t{}",
                    b.label(),
                    b.count,
                    b.pearson.render(),
                    b.spearman.render(),
                    b.kendall.render()
                ));
            }
        }
        Format::Json => o.json(&json!({
            "overall": bucket_json(&report.overall),
            "buckets": report.buckets.iter().map(bucket_json).collect::<Vec<_>>(),
        })),
    }
    o.finish()
}

fn agreement(path: &Path, out: Option<PathBuf>, format: Format) -> Result<()> {
    let scores: Vec<RaterScore<f64>> = read_scored_input(path)?
        .into_iter()
        .map(|a| RaterScore {
            segment_id: a.segment_id,
            rater: a.annotator,
            quality: a.quality,
        })
        .collect();
    let rows = annotator_agreement(&scores);
    let mut o = Output::new(out);
    match format {
        Format::Tsv => {
            o.line("rater_a\trater_b\tshared\tpearson\tspearman");
            for r in &rows {
                o.line(format!(
                    "{}\t{}\t{}\t{}\t{}",
                    r.rater_a,
                    r.rater_b,
                    r.shared,
                    r.pearson.render(),
                    r.spearman.render()
                ));
            }
        }
        Format::Json => {
            let v: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "rater_a": r.rater_a, "rater_b": r.rater_b, "shared": r.shared,
                        "pearson": cell_json(&r.pearson), "spearman": cell_json(&r.spearman),
                    })
                })
                .collect();
            o.json(&v);
        }
    }
    o.finish()
}

fn stats(path: &Path, out: Option<PathBuf>, format: Format) -> Result<()> {
    let anns = read_scored_input(path)?;
    if anns.is_empty() {
        return Err(Error::EmptyInput);
    }
    let rows = error_stats::<f64>(&anns);
    let mut o = Output::new(out);
    match format {
        Format::Tsv => {
            let cats: Vec<&str> = ErrorCategory::ALL.iter().map(|c| c.label()).collect();
            o.line(format!(
                "annotator\tsegments\terrors\tavg_errors\tmajor\tminor\tneutral\tmajor_minor_ratio\t{}",
                cats.join("\t")
            ));
            for s in &rows {
                let per: Vec<String> = s.per_category.values().map(usize::to_string).collect();
                o.line(format!(
                    "{}\t{}\t{}\t{:?}\t{}\t{}\t{}\t{}\t{}",
                    s.annotator,
                    s.segments,
                    s.errors,
                    s.avg_errors,
                    s.major,
                    s.minor,
                    s.neutral,
                    s.major_minor_ratio,
                    per.join("\t")
                ));
            }
        }
        Format::Json => {
            let v: Vec<Value> = rows
                .iter()
                .map(|s| {
                    let per: BTreeMap<&str, usize> = s.per_category.iter().map(|(c, n)| (c.label(), *n)).collect();
                    json!({
                        "annotator": s.annotator,
                        "segments": s.segments,
                        "errors": s.errors,
                        "avg_errors": s.avg_errors,
                        "major": s.major,
                        "minor": s.minor,
                        "neutral": s.neutral,
                        "major_minor_ratio": match s.major_minor_ratio {
                            Ratio::Value(v) => json!(v),
                            Ratio::Undefined => Value::Null,
                        },
                        "per_category": per,
                    })
                })
                .collect();
            o.json(&v);
        }
    }
    o.finish()
}

fn ingest(gold: &Path, lp: &LangPair, segments_out: &Path, out: &Path) -> Result<()> {
    let load = data_io::load_gold_tsv(gold, lp)?;
    for d in &load.diagnostics {
        eprintln!("{}:{}: {}", gold.display(), d.line, d.message);
    }
    data_io::write_jsonl(segments_out, &load.segments())?;
    data_io::write_annotations_jsonl(out, &load.annotations())?;
    eprintln!(
        "{} annotations, {} diagnostics",
        load.records.len(),
        load.diagnostics.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("mqmqe").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::data("f", 1, "x")), 3);
        assert_eq!(exit_code(&Error::EmptyInput), 3);
        assert_eq!(exit_code(&Error::Provider("x".into())), 4);
    }

    #[test]
    fn mode_and_scheme_defaults() {
        let c = RunConfig::resolve(&cli(&["stats", "--annotations", "a"]).global).unwrap();
        assert_eq!((c.mode, c.scheme), (PromptMode::ZeroShot, SeverityScheme::BinaryLabels));
        let c = RunConfig::resolve(&cli(&["--scheme", "m13", "stats", "--annotations", "a"]).global).unwrap();
        assert_eq!((c.mode, c.scheme), (PromptMode::FewShot, SeverityScheme::ScaleM13));
        let c = RunConfig::resolve(&cli(&["stats", "--annotations", "a", "--mode", "few"]).global).unwrap();
        assert_eq!(c.scheme, SeverityScheme::ScaleM3);
        let bad = RunConfig::resolve(&cli(&["--scheme", "m5", "stats", "--annotations", "a"]).global);
        assert!(matches!(bad, Err(Error::Config(_))));
        let bad = RunConfig::resolve(&cli(&["--divisor", "0", "stats", "--annotations", "a"]).global);
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "lang_pair = \"en-de\"\nscheme = \"m13\"\ndivisor = 10.0\n\n[paths]\nsegments = \"segs.jsonl\"\n\n[provider]\nkind = \"mock\"\nmax_in_flight = 2\nmock_replies = \"replies.jsonl\"\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let c = RunConfig::resolve(&cli(&["--config", p, "stats", "--annotations", "a"]).global).unwrap();
        assert_eq!(c.lang_pair.unwrap().to_string(), "en-de");
        assert_eq!(c.divisor, 10.0);
        assert_eq!(c.provider.kind, ProviderKind::Mock);
        assert_eq!(c.provider.max_in_flight, 2);
        assert_eq!(c.paths.segments.unwrap(), dir.path().join("segs.jsonl"));
        assert_eq!(c.provider.mock_replies.unwrap(), dir.path().join("replies.jsonl"));

        let c = RunConfig::resolve(
            &cli(&[
                "--config",
                p,
                "--lang-pair",
                "zh-en",
                "--divisor",
                "25",
                "--concurrency",
                "8",
                "--provider",
                "remote",
                "stats",
                "--annotations",
                "a",
            ])
            .global,
        )
        .unwrap();
        assert_eq!(c.lang_pair.unwrap().to_string(), "zh-en");
        assert_eq!(c.divisor, 25.0);
        assert_eq!(c.provider.max_in_flight, 8);
        assert_eq!(c.provider.kind, ProviderKind::Remote);
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "langpair = \"en-de\"\n").unwrap();
        let r = RunConfig::resolve(&cli(&["--config", path.to_str().unwrap(), "stats", "--annotations", "a"]).global);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
