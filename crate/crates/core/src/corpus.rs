//! Corpus filtering and name-based business categorization.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Default survival fraction for [`filter_contracts`].
pub const DEFAULT_PERCENTILE: f64 = 0.20;

/// Seed category map shipped with the crate.
pub const SEED_CATEGORY_MAP: &str = include_str!("../data/category_map.json");

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("percentile must lie in (0, 1], got {0}")]
    InvalidPercentile(f64),
    #[error("invalid address {0:?}: expected 0x followed by 40 hex digits")]
    InvalidAddress(String),
    #[error("duplicate address {0}")]
    DuplicateAddress(String),
    #[error("category map: {0}")]
    InvalidCategoryMap(String),
    #[error("{path}:{line}: {message}")]
    Metadata { path: String, line: usize, message: String },
    #[error("unsupported metadata format {0:?} (expected .csv, .jsonl or .json)")]
    UnknownFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One corpus entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractMeta {
    pub address: String,
    pub name: String,
    pub deployed_days: u64,
    pub tx_count: u64,
    pub source_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solidity_major: Option<u32>,
}

pub fn validate_address(address: &str) -> Result<(), CorpusError> {
    let ok = address
        .strip_prefix("0x")
        .is_some_and(|hex| hex.len() == 40 && hex.bytes().all(|b| b.is_ascii_hexdigit()));
    if ok {
        Ok(())
    } else {
        Err(CorpusError::InvalidAddress(address.to_owned()))
    }
}

/// Stop words and category tokens. Keys are disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub stopwords: BTreeSet<String>,
    #[serde(rename = "categories")]
    pub category_tokens: BTreeMap<String, String>,
}

impl CategoryMap {
    pub fn new(stopwords: BTreeSet<String>, category_tokens: BTreeMap<String, String>) -> Result<Self, CorpusError> {
        let map = Self { stopwords, category_tokens };
        map.validate()?;
        Ok(map)
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let map: Self = serde_json::from_str(text).map_err(|e| CorpusError::InvalidCategoryMap(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn seed() -> Self {
        Self::from_json(SEED_CATEGORY_MAP).expect("seed category map is valid")
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if let Some(both) = self.stopwords.iter().find(|w| self.category_tokens.contains_key(*w)) {
            return Err(CorpusError::InvalidCategoryMap(format!("{both:?} is both a stop word and a category token")));
        }
        let lowercase = |s: &String| !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit());
        if let Some(bad) = self.stopwords.iter().chain(self.category_tokens.keys()).find(|s| !lowercase(s)) {
            return Err(CorpusError::InvalidCategoryMap(format!("token {bad:?} is not lowercase alphanumeric")));
        }
        Ok(())
    }
}

/// Contracts ranked within the top `percentile` of BOTH deployment age and
/// transaction volume. Ties are broken by ascending address. The result keeps
/// corpus order.
pub fn filter_contracts(corpus: &[ContractMeta], percentile: f64) -> Result<Vec<ContractMeta>, CorpusError> {
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(CorpusError::InvalidPercentile(percentile));
    }
    if corpus.is_empty() {
        return Ok(Vec::new());
    }
    let keep = top_count(corpus.len(), percentile);
    let top_by = |key: fn(&ContractMeta) -> u64| -> HashSet<usize> {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.sort_by(|&a, &b| key(&corpus[b]).cmp(&key(&corpus[a])).then_with(|| corpus[a].address.cmp(&corpus[b].address)));
        order.truncate(keep);
        order.into_iter().collect()
    };
    let by_age = top_by(|c| c.deployed_days);
    let by_volume = top_by(|c| c.tx_count);
    Ok(corpus
        .iter()
        .enumerate()
        .filter(|(i, _)| by_age.contains(i) && by_volume.contains(i))
        .map(|(_, c)| c.clone())
        .collect())
}

/// Size of the top-`percentile` set of an `n`-element ordering (ceiling).
pub fn top_count(n: usize, percentile: f64) -> usize {
    // guard against 0.2 * 10 landing a hair above 2.0
    let raw = percentile * n as f64;
    let rounded = raw.round();
    let count = if (raw - rounded).abs() < 1e-9 { rounded } else { raw.ceil() };
    (count as usize).clamp(1, n)
}

/// Splits a contract name on underscores and camel-case boundaries,
/// lowercases, drops numeric and `v<digits>` version tokens and stop words,
/// and deduplicates preserving order.
pub fn tokenize_contract_name(name: &str, map: &CategoryMap) -> Vec<String> {
    let mut raw: Vec<String> = Vec::new();
    for chunk in name.split(|c: char| !c.is_ascii_alphanumeric()) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if i > 0 && !current.is_empty() {
                let prev = chars[i - 1];
                let next = chars.get(i + 1).copied();
                let boundary = (prev.is_ascii_lowercase() && c.is_ascii_uppercase())
                    || (prev.is_ascii_digit() && c.is_ascii_uppercase())
                    // end of an acronym: `NFTMarket` -> `NFT` | `Market`
                    || (prev.is_ascii_uppercase() && c.is_ascii_uppercase() && next.is_some_and(|n| n.is_ascii_lowercase()));
                if boundary {
                    raw.push(std::mem::take(&mut current));
                }
            }
            current.push(c);
        }
        if !current.is_empty() {
            raw.push(current);
        }
    }
    let mut seen = HashSet::new();
    raw.into_iter()
        .map(|t| t.to_ascii_lowercase())
        .filter(|t| !t.bytes().all(|b| b.is_ascii_digit()))
        .filter(|t| !(t.len() > 1 && t.starts_with('v') && t[1..].bytes().all(|b| b.is_ascii_digit())))
        .filter(|t| !map.stopwords.contains(t))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Category of the first token present in the map, `None` when uncategorized.
pub fn categorize(tokens: &[String], map: &CategoryMap) -> Option<String> {
    tokens.iter().find_map(|t| map.category_tokens.get(t).cloned())
}

/// Loads corpus metadata from CSV (header row required) or JSON lines.
/// Relative `source_path`s are resolved against the metadata file's directory.
pub fn load_metadata(path: &Path) -> Result<Vec<ContractMeta>, CorpusError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    let text = std::fs::read_to_string(path)?;
    let shown = path.display().to_string();
    let mut rows = match ext {
        "csv" => parse_metadata_csv(&text, &shown)?,
        "jsonl" | "json" | "ndjson" => parse_metadata_jsonl(text.as_bytes(), &shown)?,
        other => return Err(CorpusError::UnknownFormat(other.to_owned())),
    };
    let base = path.parent().unwrap_or(Path::new("."));
    for row in &mut rows {
        if row.source_path.is_relative() {
            row.source_path = base.join(&row.source_path);
        }
    }
    Ok(rows)
}

pub fn parse_metadata_csv(text: &str, origin: &str) -> Result<Vec<ContractMeta>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<ContractMeta>().enumerate() {
        let row = record.map_err(|e| CorpusError::Metadata { path: origin.to_owned(), line: i + 2, message: e.to_string() })?;
        rows.push(row);
    }
    check_rows(&rows, origin)?;
    Ok(rows)
}

pub fn parse_metadata_jsonl(reader: impl BufRead, origin: &str) -> Result<Vec<ContractMeta>, CorpusError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ContractMeta = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Metadata { path: origin.to_owned(), line: i + 1, message: e.to_string() })?;
        rows.push(row);
    }
    check_rows(&rows, origin)?;
    Ok(rows)
}

fn check_rows(rows: &[ContractMeta], _origin: &str) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for row in rows {
        validate_address(&row.address)?;
        if !seen.insert(row.address.to_ascii_lowercase()) {
            return Err(CorpusError::DuplicateAddress(row.address.clone()));
        }
    }
    Ok(())
}

/// JSON-lines rendering, one contract per line.
pub fn to_jsonl(rows: &[ContractMeta]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("metadata serializes") + "\n")
        .collect()
}
