use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use logicscan::checker::{check_source, reports_from_json, reports_to_json, render_text, AuditOptions, CheckEnv, ReportStatus};
use logicscan::corpus::{categorize, filter_contracts, load_metadata, to_jsonl, tokenize_contract_name, CategoryMap, ContractMeta};
use logicscan::evalkit::{
    csv_row, findings_from_reports, map_report_to_functions, parse_labels, render_pct, score, RawFinding, CSV_HEADER,
};
use logicscan::fsutil::write_atomic;
use logicscan::knowledge::{rank_conditions, SynonymDictionary};
use logicscan::llm::{Backend, Backends, RecordingBackend, RemoteBackend, RemoteConfig, ScriptedBackend, Templates};
use logicscan::miner::{mine_contract, MineOutcome};
use logicscan::store::{DeterministicEmbedder, Embedder, QueryParams, RemoteEmbedder, Store, StoreError};
use serde_json::json;

use crate::config::{Config, EmbedderConfig};
use crate::{Cli, CliError, Command, CorpusCommand, DbCommand, DictCommand, EXIT_OK, EXIT_PARTIAL};

type Result<T> = std::result::Result<T, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(failed)
}

fn emit_json(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    emit(out, &(serde_json::to_string_pretty(value).expect("json value serializes") + "\n"))
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    write_atomic(path, contents.as_bytes()).map_err(|e| failed(format!("{}: {e}", path.display())))
}

pub(crate) fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let g = &cli.global;
    let config = Config::load(g.config.as_deref())?;
    match &cli.command {
        Command::Corpus(CorpusCommand::Filter { metadata, percentile, out: dest }) => {
            corpus_filter(&config, g.json, metadata, *percentile, dest.as_deref(), out)
        }
        Command::Corpus(CorpusCommand::Categorize { metadata, out: dest }) => {
            corpus_categorize(&config, g.json, metadata, dest.as_deref(), out)
        }
        Command::Mine { corpus_dir } => mine(&config, cli, corpus_dir, out, err),
        Command::Dict(DictCommand::Rank { top, out: dest }) => dict_rank(&config, cli, *top, dest.as_deref(), out),
        Command::Check { target, function, out: dest, no_writers, no_aggregate } => {
            let options = AuditOptions {
                include_writers: config.include_writers && !no_writers,
                aggregate: config.aggregate && !no_aggregate,
            };
            check(&config, cli, target, function.as_deref(), dest.as_deref(), options, out)
        }
        Command::Eval { report, labels, dataset, tool } => eval(g.json, report, labels, dataset, tool, out),
        Command::Db(DbCommand::Stats) => db_stats(&config, cli, out),
    }
}

fn category_map(config: &Config) -> Result<CategoryMap> {
    match &config.category_map {
        Some(p) => CategoryMap::load(p).map_err(|e| config_err(format!("{}: {e}", p.display()))),
        None => Ok(CategoryMap::seed()),
    }
}

fn dictionary(config: &Config) -> Result<SynonymDictionary> {
    match &config.dictionary {
        Some(p) => SynonymDictionary::load(p).map_err(|e| config_err(format!("{}: {e}", p.display()))),
        None => Ok(SynonymDictionary::seed()),
    }
}

fn embedder(config: &Config, cli: &Cli) -> Result<Arc<dyn Embedder>> {
    match &config.embedder {
        EmbedderConfig::Deterministic { dim } => Ok(Arc::new(DeterministicEmbedder::new(*dim))),
        EmbedderConfig::Remote { .. } if cli.global.replay.is_some() => {
            Err(config_err("--replay needs embedder = \"deterministic\"; a remote embedder would reach the network"))
        }
        EmbedderConfig::Remote { endpoint, dim } => Ok(Arc::new(RemoteEmbedder::new(endpoint.clone(), *dim, config.timeout_ms))),
    }
}

fn open_store(config: &Config, cli: &Cli) -> Result<Store> {
    Store::open(&config.store, embedder(config, cli)?).map_err(|e| match e {
        StoreError::EmbedderMismatch { .. } => config_err(format!("{}: {e}", config.store.display())),
        other => failed(format!("{}: {other}", config.store.display())),
    })
}

/// Model backends for one run plus the recorders to flush at its end.
struct Gateway {
    backends: Backends,
    recorders: Vec<Arc<RecordingBackend>>,
    record_path: Option<PathBuf>,
}

impl Gateway {
    fn new(config: &Config, cli: &Cli, slot: &str) -> Result<Self> {
        let parallelism = config.parallelism;
        if let Some(path) = &cli.global.replay {
            let script = ScriptedBackend::load(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let script: Arc<dyn Backend> = Arc::new(script);
            let backends = Backends { miner: script.clone(), checker: script, parallelism };
            return Ok(Self { backends, recorders: Vec::new(), record_path: None });
        }
        let wanted = if slot == "miner" { &config.miner } else { &config.checker };
        if wanted.is_none() {
            return Err(config_err(format!("{slot}_endpoint is not configured (or pass --replay TRANSCRIPT)")));
        }
        let mut recorders = Vec::new();
        let mut build = |c: &Option<RemoteConfig>| -> Option<Arc<dyn Backend>> {
            let remote: Arc<dyn Backend> = Arc::new(RemoteBackend::new(c.clone()?));
            if cli.global.record.is_none() {
                return Some(remote);
            }
            let recorder = Arc::new(RecordingBackend::new(remote));
            recorders.push(recorder.clone());
            Some(recorder)
        };
        let miner = build(&config.miner);
        let checker = if config.checker == config.miner { miner.clone() } else { build(&config.checker) };
        let fallback = || miner.clone().or(checker.clone()).expect("one slot is configured");
        let backends = Backends {
            miner: miner.clone().unwrap_or_else(fallback),
            checker: checker.clone().unwrap_or_else(fallback),
            parallelism,
        };
        Ok(Self { backends, recorders, record_path: cli.global.record.clone() })
    }

    fn finish(&self) -> Result<()> {
        if let Some(path) = &self.record_path {
            for r in &self.recorders {
                r.save(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
            }
        }
        Ok(())
    }
}

fn load_rows(metadata: &Path) -> Result<Vec<ContractMeta>> {
    load_metadata(metadata).map_err(|e| config_err(format!("{}: {e}", metadata.display())))
}

fn corpus_filter(
    config: &Config,
    json: bool,
    metadata: &Path,
    percentile: Option<f64>,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let rows = load_rows(metadata)?;
    let kept = filter_contracts(&rows, percentile.unwrap_or(config.percentile)).map_err(config_err)?;
    let Some(dest) = dest else {
        emit(out, &to_jsonl(&kept))?;
        return Ok(EXIT_OK);
    };
    write_output(dest, &to_jsonl(&kept))?;
    if json {
        emit_json(out, &json!({"input": rows.len(), "kept": kept.len(), "out": dest}))?;
    } else {
        emit(out, &format!("kept {} of {} contracts; wrote {}\n", kept.len(), rows.len(), dest.display()))?;
    }
    Ok(EXIT_OK)
}

/// Fills in missing categories from contract names.
fn categorize_rows(rows: &mut [ContractMeta], map: &CategoryMap) {
    for row in rows.iter_mut().filter(|r| r.category.is_none()) {
        row.category = categorize(&tokenize_contract_name(&row.name, map), map);
    }
}

fn corpus_categorize(config: &Config, json: bool, metadata: &Path, dest: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let mut rows = load_rows(metadata)?;
    categorize_rows(&mut rows, &category_map(config)?);
    let Some(dest) = dest else {
        emit(out, &to_jsonl(&rows))?;
        return Ok(EXIT_OK);
    };
    write_output(dest, &to_jsonl(&rows))?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        *counts.entry(r.category.as_deref().unwrap_or("(none)")).or_default() += 1;
    }
    if json {
        emit_json(out, &json!({"contracts": rows.len(), "by_category": counts, "out": dest}))?;
    } else {
        for (category, n) in &counts {
            emit(out, &format!("{category}\t{n}\n"))?;
        }
    }
    Ok(EXIT_OK)
}

const METADATA_NAMES: [&str; 3] = ["metadata.jsonl", "metadata.csv", "metadata.json"];

fn mine(config: &Config, cli: &Cli, corpus_dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    if !corpus_dir.is_dir() {
        return Err(config_err(format!("{}: no such corpus directory", corpus_dir.display())));
    }
    let metadata = METADATA_NAMES
        .iter()
        .map(|n| corpus_dir.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| config_err(format!("{}: no {} found", corpus_dir.display(), METADATA_NAMES.join(" or "))))?;
    let mut rows = load_rows(&metadata)?;
    categorize_rows(&mut rows, &category_map(config)?);
    let store = open_store(config, cli)?;
    let gateway = Gateway::new(config, cli, "miner")?;
    let templates = Templates::default();

    let mut partial = false;
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for contract in &rows {
        let mined = mine_contract(contract, &gateway.backends, &templates);
        if let Some(line) = mined.skipped {
            partial = true;
            let _ = writeln!(err, "{line}");
            summary.push(json!({"contract": contract.name, "status": "Skipped", "reason": line}));
        }
        for (function, outcome, _session) in mined.outcomes {
            let line = outcome.log_line(&contract.name, &function);
            let mut entry = json!({"contract": contract.name, "function": function, "attempts": outcome.attempts()});
            match outcome {
                MineOutcome::Success { record, .. } => {
                    entry["status"] = "Success".into();
                    entry["id"] = record.id.clone().into();
                    records.push(record);
                }
                MineOutcome::Skipped { reason, .. } => {
                    partial = true;
                    entry["status"] = "Skipped".into();
                    entry["reason"] = reason.to_string().into();
                    let _ = writeln!(err, "{} {} skipped: {reason}", contract.name, function);
                }
            }
            if !cli.global.json {
                emit(out, &format!("{line}\n"))?;
            }
            summary.push(entry);
        }
    }
    let added = records.len();
    store.insert_many(records).map_err(failed)?;
    store.save().map_err(failed)?;
    gateway.finish()?;
    if cli.global.json {
        emit_json(out, &json!({"functions": summary, "added": added, "store_records": store.len()}))?;
    } else {
        emit(out, &format!("stored {added} records; store holds {}\n", store.len()))?;
    }
    Ok(if partial { EXIT_PARTIAL } else { EXIT_OK })
}

fn dict_rank(config: &Config, cli: &Cli, top: Option<usize>, dest: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let store = open_store(config, cli)?;
    let records = store.records();
    let report = rank_conditions(records.iter().map(|r| &r.bsl), top.unwrap_or(config.top_n));
    if let Some(dest) = dest {
        write_output(dest, &report.to_csv())?;
    }
    if cli.global.json {
        let entries: Vec<_> = report.entries.iter().map(|(n, c)| json!({"condition": n, "count": c})).collect();
        emit_json(out, &json!(entries))?;
    } else if dest.is_none() {
        emit(out, &report.to_csv())?;
    }
    Ok(EXIT_OK)
}

fn check(
    config: &Config,
    cli: &Cli,
    target: &Path,
    function: Option<&str>,
    dest: Option<&Path>,
    options: AuditOptions,
    out: &mut dyn Write,
) -> Result<i32> {
    let src = std::fs::read_to_string(target).map_err(|e| config_err(format!("{}: {e}", target.display())))?;
    let categories = category_map(config)?;
    let dictionary = dictionary(config)?;
    let store = open_store(config, cli)?;
    let gateway = Gateway::new(config, cli, "checker")?;
    let templates = Templates::default();
    let env = CheckEnv {
        store: &store,
        backends: &gateway.backends,
        templates: &templates,
        dictionary: &dictionary,
        categories: &categories,
        query: QueryParams { k: config.k, min_sim: config.min_sim },
        options,
    };
    let file = target.to_string_lossy();
    let reports = check_source(&env, &src, &file, function).map_err(|e| config_err(format!("{file}: {e}")))?;
    gateway.finish()?;

    let dest = dest.map(Path::to_path_buf).unwrap_or_else(|| {
        let stem = target.file_stem().map_or_else(|| "target".into(), |s| s.to_string_lossy().into_owned());
        PathBuf::from(format!("{stem}.report.json"))
    });
    let text = reports_to_json(&reports);
    write_output(&dest, &text)?;
    if cli.global.json {
        emit(out, &text)?;
    } else {
        emit(out, &render_text(&reports))?;
        emit(out, &format!("report: {}\n", dest.display()))?;
    }
    let failed = reports.iter().any(|r| r.status == ReportStatus::AuditFailed);
    Ok(if failed { EXIT_PARTIAL } else { EXIT_OK })
}

#[derive(serde::Deserialize)]
struct FindingList {
    findings: Vec<RawFinding>,
}

/// Findings of a report in this tool's format, or of an external tool's
/// list of `{file, offset|line}` entries (bare or under `findings`).
fn report_findings(text: &str) -> std::result::Result<Vec<RawFinding>, String> {
    if let Ok(reports) = reports_from_json(text) {
        return Ok(findings_from_reports(&reports));
    }
    if let Ok(list) = serde_json::from_str::<Vec<RawFinding>>(text) {
        return Ok(list);
    }
    serde_json::from_str::<FindingList>(text)
        .map(|l| l.findings)
        .map_err(|_| "not a report: expected a logicscan report or a list of {file, offset|line} findings".to_owned())
}

fn eval(json: bool, report: &Path, labels: &Path, dataset: &str, tool: &str, out: &mut dyn Write) -> Result<i32> {
    let text = std::fs::read_to_string(report).map_err(|e| config_err(format!("{}: {e}", report.display())))?;
    let findings = report_findings(&text).map_err(|e| config_err(format!("{}: {e}", report.display())))?;
    let label_file = std::fs::File::open(labels).map_err(|e| config_err(format!("{}: {e}", labels.display())))?;
    let labels_set =
        parse_labels(std::io::BufReader::new(label_file)).map_err(|e| config_err(format!("{}: {e}", labels.display())))?;

    let report_dir = report.parent().unwrap_or(Path::new("."));
    let mut sources = BTreeMap::new();
    for f in &findings {
        if sources.contains_key(&f.file) {
            continue;
        }
        let direct = PathBuf::from(&f.file);
        let path = if direct.is_file() { direct } else { report_dir.join(&f.file) };
        let src = std::fs::read_to_string(&path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        sources.insert(f.file.clone(), src);
    }
    let predictions = map_report_to_functions(&findings, &sources).map_err(config_err)?;
    let metrics = score(&predictions, &labels_set).map_err(config_err)?;
    if json {
        emit_json(
            out,
            &json!({
                "dataset": dataset,
                "tool": tool,
                "metrics": metrics,
                "rendered": {
                    "precision": render_pct(metrics.precision),
                    "recall": render_pct(metrics.recall),
                    "f1": render_pct(metrics.f1),
                    "fpr": render_pct(metrics.fpr),
                },
            }),
        )?;
    } else {
        emit(out, &format!("{CSV_HEADER}\n{}", csv_row(dataset, tool, &metrics)))?;
    }
    Ok(EXIT_OK)
}

fn db_stats(config: &Config, cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let store = open_store(config, cli)?;
    let stats = store.stats();
    if cli.global.json {
        emit_json(out, &serde_json::to_value(&stats).expect("stats serialize"))?;
        return Ok(EXIT_OK);
    }
    let mut text = format!(
        "store: {}\nrecords: {}\nembedder: {}/{}\n",
        config.store.display(),
        stats.records,
        stats.embedder,
        stats.dimension
    );
    for (category, n) in &stats.by_category {
        text.push_str(&format!("category {category}: {n}\n"));
    }
    for (major, n) in &stats.by_major {
        text.push_str(&format!("solidity {major}: {n}\n"));
    }
    emit(out, &text)?;
    Ok(EXIT_OK)
}
