use std::path::{Path, PathBuf};

use logicscan::checker::reports_from_json;
use logicscan_testkit::{FixtureResponder, MockServer};
use tempfile::TempDir;

const RECORDED_ENDPOINT: &str = "http://127.0.0.1:8765";

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn fixture(rel: &str) -> String {
    fixtures().join(rel).to_string_lossy().into_owned()
}

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = logicscan_cli::run(std::iter::once("logicscan").chain(args.iter().copied()), &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

/// A temp dir holding `test.toml` with `edit` applied to the fixture config.
fn workspace(edit: impl FnOnce(String) -> String) -> (TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("test.toml");
    std::fs::write(&config, edit(std::fs::read_to_string(fixtures().join("test.toml")).unwrap())).unwrap();
    let config = config.to_string_lossy().into_owned();
    (dir, config)
}

fn path_in(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_two() {
    let r = run(&["frobnicate"]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("Usage"), "{}", r.err);

    let r = run(&["--replay", "a.json", "--record", "b.json", "db", "stats"]);
    assert_eq!(r.code, 2);

    let r = run(&["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("mine"));
}

#[test]
fn missing_corpus_dir_changes_nothing() {
    let (dir, config) = workspace(|c| c);
    let missing = path_in(&dir, "nope");
    let r = run(&["--config", &config, "--replay", &fixture("transcripts/euler.json"), "mine", &missing]);
    assert_eq!(r.code, 2, "{}", r.err);
    assert!(r.err.contains("no such corpus directory"), "{}", r.err);
    assert!(!dir.path().join("store").exists());
}

#[test]
fn invalid_configuration_exits_two() {
    let (_dir, config) = workspace(|c| c.replace("k = 5", "k = 0"));
    let r = run(&["--config", &config, "db", "stats"]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains('k'), "{}", r.err);

    let (_dir, config) = workspace(|c| format!("{c}api_key = \"sk-123\"\n"));
    let r = run(&["--config", &config, "db", "stats"]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("LOGICSCAN_API_KEY"), "{}", r.err);

    let (_dir, config) = workspace(|c| c.replace("k = 5", "k = 5\nunknown_key = 1"));
    assert_eq!(run(&["--config", &config, "db", "stats"]).code, 2);
}

#[test]
fn replay_requires_deterministic_embedder() {
    let (dir, config) = workspace(|c| {
        c.replace("embedder = \"deterministic\"", "embedder = \"remote\"\nembedding_endpoint = \"http://127.0.0.1:9/embed\"")
    });
    let r = run(&["--config", &config, "--replay", &fixture("transcripts/euler.json"), "mine", &fixture("corpus/consensus")]);
    assert_eq!(r.code, 2, "{}", r.err);
    assert!(!dir.path().join("store").exists());
}

#[test]
fn mining_without_endpoint_or_replay_exits_two() {
    let (dir, config) = workspace(|c| {
        c.lines().filter(|l| !l.starts_with("miner_")).collect::<Vec<_>>().join("\n")
    });
    let r = run(&["--config", &config, "mine", &fixture("corpus/consensus")]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("--replay"), "{}", r.err);
    assert!(!dir.path().join("store").exists());
}

fn mined_workspace() -> (TempDir, String) {
    let (dir, config) = workspace(|c| c);
    let r = run(&["--config", &config, "--replay", &fixture("transcripts/euler.json"), "mine", &fixture("corpus/consensus")]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("stored 5 records; store holds 5"), "{}", r.out);
    (dir, config)
}

#[test]
fn unknown_function_exits_two() {
    let (dir, config) = mined_workspace();
    let out = path_in(&dir, "r.json");
    let r = run(&[
        "--config",
        &config,
        "--replay",
        &fixture("transcripts/euler.json"),
        "check",
        &fixture("euler.sol"),
        "--fn",
        "doesNotExist",
        "--out",
        &out,
    ]);
    assert_eq!(r.code, 2, "{}", r.err);
    assert!(!Path::new(&out).exists());
}

#[test]
fn check_then_eval() {
    let (dir, config) = mined_workspace();
    let report = path_in(&dir, "euler.report.json");
    let r = run(&["--config", &config, "--replay", &fixture("transcripts/euler.json"), "check", &fixture("euler.sol"), "--out", &report]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("FINDING"), "{}", r.out);
    assert!(r.out.contains(&format!("report: {report}")));

    let r = run(&["eval", &report, &fixture("labels.jsonl"), "--dataset", "euler"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let lines: Vec<&str> = r.out.lines().collect();
    assert_eq!(lines.len(), 2, "{}", r.out);
    assert!(lines[0].starts_with("dataset,tool"), "{}", lines[0]);
    assert!(lines[1].starts_with("euler,logicscan,1,0,0,"), "{}", lines[1]);

    let r = run(&["--json", "eval", &report, &fixture("labels.jsonl")]);
    let v: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["rendered"]["precision"], "100.0");
    assert_eq!(v["rendered"]["fpr"], "0.0");
}

#[test]
fn db_stats_and_dictionary_ranking() {
    let (_dir, config) = mined_workspace();
    let r = run(&["--config", &config, "--json", "db", "stats"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let v: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["records"], 5);
    assert_eq!(v["by_category"]["Lending"], 5);

    let r = run(&["--config", &config, "db", "stats"]);
    assert!(r.out.contains("records: 5"), "{}", r.out);

    let r = run(&["--config", &config, "dict", "rank", "--top", "2"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let rows: Vec<&str> = r.out.lines().collect();
    assert_eq!(rows.len(), 3, "{}", r.out);
}

#[test]
fn corpus_filter_and_categorize() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("meta.csv");
    let mut text = String::from("address,name,deployed_days,tx_count,source_path\n");
    for i in 0..10 {
        text.push_str(&format!("0x{i:040x},Token{i}Vault,{},{},c{i}.sol\n", 100 * (i + 1), 50 * (i + 1)));
    }
    std::fs::write(&csv, text).unwrap();
    let csv = csv.to_string_lossy().into_owned();

    let r = run(&["corpus", "filter", &csv, "--percentile", "0.2"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let kept: Vec<serde_json::Value> = r.out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(kept.len(), 2);
    assert!(kept.iter().all(|k| ["Token8Vault", "Token9Vault"].contains(&k["name"].as_str().unwrap())));

    let out = path_in(&dir, "filtered.jsonl");
    let r = run(&["--json", "corpus", "filter", &csv, "--percentile", "0.5", "--out", &out]);
    let v: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!((v["input"].as_u64(), v["kept"].as_u64()), (Some(10), Some(5)));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 5);

    let r = run(&["corpus", "filter", &csv, "--percentile", "1.5"]);
    assert_eq!(r.code, 2);

    let r = run(&["corpus", "categorize", &csv]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.lines().all(|l| l.contains("\"category\"")), "{}", r.out);
}

#[test]
fn partial_failure_exits_one() {
    let (dir, config) = workspace(|c| c);
    let empty = path_in(&dir, "empty.json");
    std::fs::write(&empty, "[]").unwrap();
    let r = run(&["--config", &config, "--replay", &empty, "mine", &fixture("corpus/consensus")]);
    assert_eq!(r.code, 1, "{}", r.err);
    assert!(r.err.contains("skipped"), "{}", r.err);
    assert!(r.out.contains("stored 0 records"), "{}", r.out);
}

#[test]
fn recording_then_replay_reproduces_the_report() {
    let responder = FixtureResponder::from_json(&std::fs::read_to_string(fixtures().join("responder.json")).unwrap()).unwrap();
    let server = MockServer::gateway(responder, 64).unwrap();
    let (live, live_config) = workspace(|c| c.replace(RECORDED_ENDPOINT, &server.url()));
    let transcript = path_in(&live, "transcript.json");
    let report = path_in(&live, "report.json");
    let r = run(&["--config", &live_config, "--record", &transcript, "mine", &fixture("corpus/consensus")]);
    assert_eq!(r.code, 0, "{}", r.err);
    let r = run(&["--config", &live_config, "--record", &transcript, "check", &fixture("euler.sol"), "--out", &report]);
    assert_eq!(r.code, 0, "{}", r.err);
    let calls = server.requests();
    assert!(calls > 0);

    let (replayed, replay_config) = workspace(|c| c);
    let replay_report = path_in(&replayed, "report.json");
    let r = run(&["--config", &replay_config, "--replay", &transcript, "mine", &fixture("corpus/consensus")]);
    assert_eq!(r.code, 0, "{}", r.err);
    let r = run(&["--config", &replay_config, "--replay", &transcript, "check", &fixture("euler.sol"), "--out", &replay_report]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(server.requests(), calls);

    let a = std::fs::read_to_string(&report).unwrap();
    let b = std::fs::read_to_string(&replay_report).unwrap();
    assert_eq!(reports_from_json(&a).unwrap(), reports_from_json(&b).unwrap());
    assert_eq!(a, b);
}
