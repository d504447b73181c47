// The mqmqe binary driven end to end on the fixtures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn mqmqe(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_mqmqe"))
        .current_dir(dir)
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> Run {
    let r = mqmqe(dir, args);
    assert_eq!(r.code, 0, "{args:?} failed: {}", r.stderr);
    r
}

/// annotate -> parse -> score -> eval; returns every artifact by name.
fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let segs = fixture("segments_zh-en.jsonl");
    let gold = fixture("gold_zh-en.jsonl");
    let replies = fixture("mock_replies.jsonl");
    let (segs, gold, replies) = (
        segs.to_str().unwrap(),
        gold.to_str().unwrap(),
        replies.to_str().unwrap(),
    );
    ok(
        dir,
        &[
            "--provider",
            "mock",
            "--out",
            "ledger.jsonl",
            "annotate",
            "--segments",
            segs,
            "--mock-replies",
            replies,
        ],
    );
    let p = ok(
        dir,
        &[
            "--out",
            "outcomes.jsonl",
            "parse",
            "--segments",
            segs,
            "--ledger",
            "ledger.jsonl",
            "--annotations-out",
            "pred.jsonl",
        ],
    );
    assert!(p.stderr.contains("parse rate 17/20 = 0.85"), "{}", p.stderr);
    ok(dir, &["--out", "scored.jsonl", "score", "--in", "outcomes.jsonl"]);
    ok(
        dir,
        &[
            "--out",
            "spans.tsv",
            "eval-spans",
            "--pred",
            "scored.jsonl",
            "--gold",
            gold,
            "--segments",
            segs,
        ],
    );
    ok(
        dir,
        &[
            "--format",
            "json",
            "--out",
            "spans.json",
            "eval-spans",
            "--pred",
            "scored.jsonl",
            "--gold",
            gold,
            "--segments",
            segs,
        ],
    );
    ok(
        dir,
        &[
            "--out",
            "corr.tsv",
            "eval-corr",
            "--pred",
            "scored.jsonl",
            "--gold",
            gold,
        ],
    );
    ok(
        dir,
        &[
            "--format",
            "json",
            "--out",
            "corr.json",
            "eval-corr",
            "--pred",
            "scored.jsonl",
            "--gold",
            gold,
        ],
    );
    ok(dir, &["--out", "stats.tsv", "stats", "--annotations", "scored.jsonl"]);
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let bytes = fs::read(dir.join(&n)).unwrap();
            (n, bytes)
        })
        .collect()
}

#[test]
fn offline_pipeline_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    assert_eq!(first.len(), 9);
    for ((na, ba), (nb, bb)) in first.iter().zip(&second) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs between runs");
    }
    let outcomes = String::from_utf8(first.iter().find(|(n, _)| n == "outcomes.jsonl").unwrap().1.clone()).unwrap();
    assert_eq!(outcomes.lines().count(), 20);
    assert_eq!(
        outcomes
            .lines()
            .filter(|l| l.contains("\"status\":\"unparsable\""))
            .count(),
        3
    );
    let pred = String::from_utf8(first.iter().find(|(n, _)| n == "pred.jsonl").unwrap().1.clone()).unwrap();
    assert_eq!(pred.lines().count(), 17);
    let spans = String::from_utf8(first.iter().find(|(n, _)| n == "spans.tsv").unwrap().1.clone()).unwrap();
    assert!(spans.starts_with("metric\tprecision\trecall\tf1\nspan\t"));
}

#[test]
fn reannotating_appends_and_parse_uses_latest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let segs = fixture("segments_zh-en.jsonl");
    let segs = segs.to_str().unwrap();
    let replies = fixture("mock_replies.jsonl");
    let args = [
        "--provider",
        "mock",
        "--out",
        "ledger.jsonl",
        "annotate",
        "--segments",
        segs,
        "--mock-replies",
        replies.to_str().unwrap(),
    ];
    ok(d, &args);
    ok(d, &args);
    assert_eq!(fs::read_to_string(d.join("ledger.jsonl")).unwrap().lines().count(), 40);
    let r = ok(d, &["parse", "--segments", segs, "--ledger", "ledger.jsonl"]);
    assert_eq!(r.stdout.lines().count(), 20);
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let segs = fixture("segments_zh-en.jsonl");
    let segs = segs.to_str().unwrap();

    // configuration problems
    assert_eq!(mqmqe(d, &["--scheme", "m7", "stats", "--annotations", "x"]).code, 2);
    assert_eq!(
        mqmqe(
            d,
            &[
                "--mode",
                "zero",
                "--scheme",
                "m3",
                "--provider",
                "mock",
                "--out",
                "l",
                "annotate",
                "--segments",
                segs,
                "--mock-replies",
                "r"
            ]
        )
        .code,
        2
    );
    let r = mqmqe(d, &["--out", "l", "annotate", "--segments", segs]);
    assert_eq!(r.code, 2, "missing credential must fail before any request");
    assert!(r.stderr.contains("OPENAI_API_KEY"));
    assert!(!d.join("l").exists());
    assert_eq!(
        mqmqe(
            d,
            &[
                "--lang-pair",
                "en-de",
                "--provider",
                "mock",
                "--out",
                "l",
                "annotate",
                "--segments",
                segs,
                "--mock-replies",
                "r"
            ]
        )
        .code,
        2
    );

    // data problems
    assert_eq!(mqmqe(d, &["stats", "--annotations", "missing.jsonl"]).code, 3);
    fs::write(d.join("broken.jsonl"), "{\"segment_id\": 1}\n").unwrap();
    assert_eq!(mqmqe(d, &["stats", "--annotations", "broken.jsonl"]).code, 3);

    // provider failures still leave a ledger behind
    fs::write(d.join("dead.jsonl"), "{\"key\": \"sysA:1\", \"always_fail\": true}\n").unwrap();
    let r = mqmqe(
        d,
        &[
            "--provider",
            "mock",
            "--out",
            "ledger.jsonl",
            "annotate",
            "--segments",
            segs,
            "--mock-replies",
            "dead.jsonl",
        ],
    );
    assert_eq!(r.code, 4, "{}", r.stderr);
    assert_eq!(fs::read_to_string(d.join("ledger.jsonl")).unwrap().lines().count(), 20);
}

#[test]
fn degenerate_correlation_renders_dash() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("flat.tsv"), "pred\tgold\n1.0\t0.5\n1.0\t0.7\n1.0\t0.9\n").unwrap();
    let r = ok(d, &["eval-corr", "--pairs", "flat.tsv"]);
    assert_eq!(
        r.stdout,
        "metric\tcoefficient\tp_value\tn\tcell\npearson\t-\t-\t3\t-\nspearman\t-\t-\t3\t-\nkendall\t-\t-\t3\t-\n"
    );
    assert!(r.stderr.contains("pearson undefined"));
}

#[test]
fn buckets_report_on_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = fixture("pairs_60.tsv");
    let r = ok(dir.path(), &["buckets", "--pairs", pairs.to_str().unwrap()]);
    let rows: Vec<Vec<&str>> = r.stdout.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows[0], ["bucket", "n", "pearson", "spearman", "kendall"]);
    assert_eq!(rows[1][0], "0.0-1.0");
    assert_eq!(rows[1][1], "60");
    let sum: usize = rows[2..].iter().map(|r| r[1].parse::<usize>().unwrap()).sum();
    assert_eq!(sum, 60);
    assert_eq!(rows.len(), 5);
}

#[test]
fn ingest_reports_every_skipped_or_collapsed_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let tsv = fixture("ingest_10.tsv");
    let r = ok(
        d,
        &[
            "--lang-pair",
            "zh-en",
            "--out",
            "gold.jsonl",
            "ingest",
            "--gold",
            tsv.to_str().unwrap(),
            "--segments-out",
            "segs.jsonl",
        ],
    );
    let diag: Vec<&str> = r.stderr.lines().filter(|l| l.contains("ingest_10.tsv:")).collect();
    assert_eq!(diag.len(), 3, "{}", r.stderr);
    assert!(diag.iter().any(|l| l.contains(":9:") && l.contains("mapped to other")));
    assert!(diag.iter().any(|l| l.contains(":9:") && l.contains("whole sentence")));
    assert!(diag.iter().any(|l| l.contains(":11:") && l.contains("unbalanced")));
    assert_eq!(fs::read_to_string(d.join("gold.jsonl")).unwrap().lines().count(), 9);
    assert_eq!(fs::read_to_string(d.join("segs.jsonl")).unwrap().lines().count(), 9);
}

#[test]
fn quiz_renders_five_questions() {
    let dir = tempfile::tempdir().unwrap();
    let r = ok(dir.path(), &["--lang-pair", "zh-en", "quiz"]);
    assert_eq!(r.stdout.lines().count(), 5);
    assert!(!r.stdout.contains("{{"));
    assert_eq!(mqmqe(dir.path(), &["quiz"]).code, 2);
}

#[test]
fn config_file_supplies_paths_and_provider() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::copy(fixture("segments_zh-en.jsonl"), d.join("segs.jsonl")).unwrap();
    fs::copy(fixture("mock_replies.jsonl"), d.join("replies.jsonl")).unwrap();
    fs::create_dir(d.join("run")).unwrap();
    fs::write(
        d.join("run.toml"),
        "lang_pair = \"zh-en\"\nmode = \"zero\"\nscheme = \"binary\"\n\n[paths]\nsegments = \"segs.jsonl\"\nledger = \"run/ledger.jsonl\"\n\n[provider]\nkind = \"mock\"\nmodel = \"mock\"\nbackoff_ms = 0\nmock_replies = \"replies.jsonl\"\n",
    )
    .unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    let cfg = d.join("run.toml");
    let cfg = cfg.to_str().unwrap();
    ok(elsewhere.path(), &["--config", cfg, "annotate"]);
    assert_eq!(
        fs::read_to_string(d.join("run/ledger.jsonl")).unwrap().lines().count(),
        20
    );
    let r = ok(elsewhere.path(), &["--config", cfg, "parse"]);
    assert_eq!(r.stdout.lines().count(), 20);
}

#[test]
fn export_qe_writes_one_row_per_segment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gold = fixture("gold_zh-en.jsonl");
    let segs = fixture("segments_zh-en.jsonl");
    ok(
        d,
        &[
            "--out",
            "qe.csv",
            "export-qe",
            "--annotations",
            gold.to_str().unwrap(),
            "--segments",
            segs.to_str().unwrap(),
        ],
    );
    let text = fs::read_to_string(d.join("qe.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("src,mt,score"));
    assert_eq!(lines.count(), 20);
}
