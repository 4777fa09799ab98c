//! Function-level scoring of audit reports against labeled datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::checker::{Classification, FunctionReport};
use crate::solidity::{ParsedSource, SolidityError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unknown source file {0}")]
    UnknownFile(String),
    #[error("{file}: {source}")]
    Parse { file: String, source: SolidityError },
    #[error("line {line}: {message}")]
    Labels { line: usize, message: String },
    #[error("label universe {universe} is smaller than the {counted} functions counted")]
    Universe { universe: u64, counted: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub contract: String,
    pub function: String,
    pub vulnerable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub entries: Vec<Label>,
    /// Number of audited functions; true negatives are derived from it.
    pub universe: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelLine {
    Universe { universe: u64 },
    Label(Label),
}

/// Parses JSON lines of `{contract, function, vulnerable}`. An optional
/// `{"universe": N}` line sets the audited-function count, which otherwise
/// defaults to the number of labels.
pub fn parse_labels(reader: impl BufRead) -> Result<LabelSet, EvalError> {
    let mut entries = Vec::new();
    let mut universe = None;
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Labels { line: i + 1, message };
        match serde_json::from_str::<LabelLine>(&line).map_err(|e| err(e.to_string()))? {
            LabelLine::Universe { universe: u } => {
                if universe.replace(u).is_some() {
                    return Err(err("universe given twice".into()));
                }
            }
            LabelLine::Label(l) => {
                if !seen.insert((l.contract.clone(), l.function.clone())) {
                    return Err(err(format!("duplicate label for {}.{}", l.contract, l.function)));
                }
                entries.push(l);
            }
        }
    }
    let universe = universe.unwrap_or(entries.len() as u64);
    Ok(LabelSet { entries, universe })
}

/// A reported issue located in a source file, by byte offset or 1-based line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawFinding {
    pub file: String,
    #[serde(default)]
    pub offset: Option<usize>,
    #[serde(default)]
    pub line: Option<usize>,
}

/// A function-level prediction. `function` is `None` for findings outside
/// every function (the contract-level bucket).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Prediction {
    pub contract: String,
    pub function: Option<String>,
}

/// Review-worthy findings of `reports`, located at their function spans.
pub fn findings_from_reports(reports: &[FunctionReport]) -> Vec<RawFinding> {
    reports
        .iter()
        .flat_map(|r| {
            r.findings
                .iter()
                .filter(|f| f.classification == Classification::ReviewWorthy)
                .map(|f| RawFinding { file: r.file.clone(), offset: Some(f.source_span.start), line: None })
        })
        .collect()
}

/// Offset of the first non-blank character on 1-based `line`.
fn line_offset(src: &str, line: usize) -> usize {
    let start = if line <= 1 { 0 } else { src.match_indices('\n').nth(line - 2).map_or(src.len(), |(i, _)| i + 1) };
    let rest = &src[start..];
    let line_text = rest.split('\n').next().unwrap_or_default();
    start + (line_text.len() - line_text.trim_start().len())
}

/// Maps each finding to the function whose span contains it, one prediction
/// per function.
pub fn map_report_to_functions(
    findings: &[RawFinding],
    sources: &BTreeMap<String, String>,
) -> Result<Vec<Prediction>, EvalError> {
    let mut by_file: BTreeMap<&str, Vec<crate::solidity::FunctionEntry>> = BTreeMap::new();
    let mut out = BTreeSet::new();
    for f in findings {
        let src = sources.get(&f.file).ok_or_else(|| EvalError::UnknownFile(f.file.clone()))?;
        if !by_file.contains_key(f.file.as_str()) {
            let parsed = ParsedSource::parse(src).map_err(|source| EvalError::Parse { file: f.file.clone(), source })?;
            by_file.insert(&f.file, parsed.all_functions());
        }
        let offset = f.offset.or(f.line.map(|l| line_offset(src, l))).unwrap_or(0);
        let functions = &by_file[f.file.as_str()];
        let prediction = match functions.iter().find(|e| e.source_span.contains(offset)) {
            Some(e) => Prediction { contract: e.contract.clone(), function: Some(e.name.clone()) },
            None => {
                let parsed = ParsedSource::parse(src).map_err(|source| EvalError::Parse { file: f.file.clone(), source })?;
                let contract = parsed
                    .contracts()
                    .into_iter()
                    .find(|(_, span)| span.contains(offset))
                    .map_or_else(|| f.file.clone(), |(name, _)| name);
                Prediction { contract, function: None }
            }
        };
        out.insert(prediction);
    }
    Ok(out.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub fpr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Metrics {
    /// Precision, recall and F1 are undefined when their denominator is
    /// zero, and also when the labels hold no positives at all: precision
    /// over a dataset with nothing to find is not reported.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let has_positives = tp + fn_ > 0;
        let precision = ratio(tp, tp + fp).filter(|_| has_positives);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        Self { tp, fp, fn_, tn, precision, recall, f1, fpr: fpr(fp, tn) }
    }

    pub fn add(&self, other: &Metrics) -> Metrics {
        Metrics::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_, self.tn + other.tn)
    }
}

pub fn fpr(fp: u64, tn: u64) -> Option<f64> {
    ratio(fp, fp + tn)
}

/// A fraction as a percentage with one decimal, or `--` when undefined.
pub fn render_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_owned(), |x| format!("{:.1}", x * 100.0))
}

/// Confusion counts of `predictions` against `labels`. Contract-level
/// predictions count as false positives.
pub fn score(predictions: &[Prediction], labels: &LabelSet) -> Result<Metrics, EvalError> {
    let vulnerable: BTreeSet<(&str, &str)> = labels
        .entries
        .iter()
        .filter(|l| l.vulnerable)
        .map(|l| (l.contract.as_str(), l.function.as_str()))
        .collect();
    let predicted: BTreeSet<&Prediction> = predictions.iter().collect();
    let mut tp = 0;
    let mut fp = 0;
    let mut hit = BTreeSet::new();
    for p in predicted {
        match &p.function {
            Some(f) if vulnerable.contains(&(p.contract.as_str(), f.as_str())) => {
                tp += 1;
                hit.insert((p.contract.as_str(), f.as_str()));
            }
            _ => fp += 1,
        }
    }
    let fn_ = (vulnerable.len() - hit.len()) as u64;
    let counted = tp + fp + fn_;
    if counted > labels.universe {
        return Err(EvalError::Universe { universe: labels.universe, counted });
    }
    Ok(Metrics::from_counts(tp, fp, fn_, labels.universe - counted))
}

pub const CSV_HEADER: &str = "dataset,tool,tp,fp,fn,tn,precision,recall,f1,fpr";

pub fn csv_row(dataset: &str, tool: &str, m: &Metrics) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record([
        dataset,
        tool,
        &m.tp.to_string(),
        &m.fp.to_string(),
        &m.fn_.to_string(),
        &m.tn.to_string(),
        &render_pct(m.precision),
        &render_pct(m.recall),
        &render_pct(m.f1),
        &render_pct(m.fpr),
    ])
    .expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
