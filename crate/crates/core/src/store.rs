//! Record store with an exact cosine index over functional descriptions.
//!
//! On disk a store is a directory holding `manifest.json`, one
//! `records/<id>.json` per record and `vectors.bin` (little-endian `f32`
//! rows in manifest id order). The manifest is written last and carries
//! digests of the files it describes; if a save was interrupted, the
//! embeddings are recomputed from the record files on open.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::fsutil::write_atomic;
use crate::llm::remote::{self, post_json};
use crate::miner::FunctionRecord;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MIN_SIM: f64 = 0.80;
pub const DETERMINISTIC_DIM: usize = 256;
pub const REMOTE_DIM: usize = 4096;

const FORMAT: &str = "logicscan-store";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding backend unavailable: {0}")]
    Unavailable(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
}

pub trait Embedder: Send + Sync {
    /// Short name recorded in the store manifest.
    fn kind(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Unit-norm embedding of `text`.
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f32>, EmbedError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbedError::EmptyText);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v.into_iter().map(|x| x as f32).collect())
}

/// Hashed bag of lowercase word tokens, L2-normalized.
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dim: usize,
}

impl DeterministicEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    /// Bucket a lowercase token hashes to.
    pub fn bucket(&self, token: &str) -> usize {
        let h = Sha256::digest(token.as_bytes());
        (u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) % self.dim as u64) as usize
    }
}

impl Default for DeterministicEmbedder {
    fn default() -> Self {
        Self::new(DETERMINISTIC_DIM)
    }
}

pub fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

impl Embedder for DeterministicEmbedder {
    fn kind(&self) -> &str {
        "deterministic"
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut v = vec![0.0f64; self.dim];
        for token in word_tokens(text) {
            v[self.bucket(&token)] += 1.0;
        }
        normalize(v)
    }
}

/// HTTP embedder: POST `{"input": text}`, expects `{"embedding": [...]}`.
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    agent: ureq::Agent,
    api_key: Option<String>,
    max_attempts: u32,
    backoff_base_ms: u64,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dim: usize, timeout_ms: u64) -> Self {
        Self {
            endpoint: endpoint.into(),
            dim,
            agent: remote::agent(timeout_ms),
            api_key: std::env::var(crate::llm::API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            max_attempts: 3,
            backoff_base_ms: 500,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn kind(&self) -> &str {
        "remote"
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let body = json!({ "input": text });
        let values = remote::with_retries(self.max_attempts, self.backoff_base_ms, || {
            let v = post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &body)?;
            v.get("embedding")
                .and_then(|e| e.as_array())
                .and_then(|a| a.iter().map(|x| x.as_f64()).collect::<Option<Vec<f64>>>())
                .ok_or_else(|| remote::PostError::Fatal("response has no numeric `embedding` array".into()))
        })
        .map_err(EmbedError::Unavailable)?;
        if values.len() != self.dim {
            return Err(EmbedError::Dimension { got: values.len(), expected: self.dim });
        }
        normalize(values)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("record failed validation: {0}")]
    ValidationFailure(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("store was built with a {found} embedder, but a {expected} embedder is configured")]
    EmbedderMismatch { found: String, expected: String },
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("store has no directory to save to")]
    InMemory,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub record: FunctionRecord,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryParams {
    pub k: usize,
    pub min_sim: f64,
}

impl Default for QueryParams {
    fn default() -> Self {
        Self { k: DEFAULT_K, min_sim: DEFAULT_MIN_SIM }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Manifest {
    format: String,
    version: u32,
    embedder: String,
    dimension: usize,
    ids: Vec<String>,
    /// SHA-256 of each record file, parallel to `ids`.
    record_digests: Vec<String>,
    vectors_digest: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StoreStats {
    pub records: usize,
    pub dimension: usize,
    pub embedder: String,
    pub by_category: BTreeMap<String, usize>,
    pub by_major: BTreeMap<String, usize>,
}

type Snapshot = Arc<BTreeMap<String, FunctionRecord>>;

/// Many readers, one writer. Readers work on an immutable snapshot that a
/// write replaces wholesale.
pub struct Store {
    snapshot: RwLock<Snapshot>,
    writer: Mutex<()>,
    embedder: Arc<dyn Embedder>,
    dir: Option<PathBuf>,
}

impl Store {
    pub fn in_memory(embedder: Arc<dyn Embedder>) -> Self {
        Self { snapshot: RwLock::new(Arc::default()), writer: Mutex::new(()), embedder, dir: None }
    }

    /// Opens the store in `dir`, or an empty one bound to `dir` if it has
    /// no manifest yet.
    pub fn open(dir: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, StoreError> {
        let mut store = Self::in_memory(embedder);
        store.dir = Some(dir.to_path_buf());
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.exists() {
            return Ok(store);
        }
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)
            .map_err(|e| StoreError::Corrupt(format!("manifest: {e}")))?;
        if manifest.format != FORMAT || manifest.version != FORMAT_VERSION {
            return Err(StoreError::Corrupt(format!("unsupported format {} v{}", manifest.format, manifest.version)));
        }
        let expected = format!("{}/{}", store.embedder.kind(), store.embedder.dimension());
        let found = format!("{}/{}", manifest.embedder, manifest.dimension);
        if expected != found {
            return Err(StoreError::EmbedderMismatch { found, expected });
        }
        if manifest.record_digests.len() != manifest.ids.len() {
            return Err(StoreError::Corrupt("manifest digests do not match its ids".into()));
        }
        let vectors = std::fs::read(dir.join("vectors.bin")).unwrap_or_default();
        let dim = manifest.dimension;
        let mut consistent =
            sha256_hex(&vectors) == manifest.vectors_digest && vectors.len() == manifest.ids.len() * dim * 4;
        let mut records = BTreeMap::new();
        for (i, id) in manifest.ids.iter().enumerate() {
            let path = dir.join("records").join(format!("{id}.json"));
            let bytes = std::fs::read(&path)?;
            consistent &= sha256_hex(&bytes) == manifest.record_digests[i];
            let mut record: FunctionRecord = serde_json::from_slice(&bytes)
                .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
            if &record.id != id {
                return Err(StoreError::Corrupt(format!("{} holds record {}", path.display(), record.id)));
            }
            if consistent {
                record.embedding = vectors[i * dim * 4..(i + 1) * dim * 4]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect();
            }
            records.insert(id.clone(), record);
        }
        if !consistent {
            log::warn!("{}: files changed after the last complete save; re-embedding records", dir.display());
            for record in records.values_mut() {
                record.embedding = store.embedder.embed(&record.functional_desc)?;
            }
        }
        store.snapshot = RwLock::new(Arc::new(records));
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    fn snapshot(&self) -> Snapshot {
        self.snapshot.read().expect("store lock").clone()
    }

    pub fn len(&self) -> usize {
        self.snapshot().len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshot().is_empty()
    }

    pub fn get(&self, id: &str) -> Option<FunctionRecord> {
        self.snapshot().get(id).cloned()
    }

    pub fn records(&self) -> Vec<FunctionRecord> {
        self.snapshot().values().cloned().collect()
    }

    fn prepare(&self, mut record: FunctionRecord) -> Result<FunctionRecord, StoreError> {
        record.validate().map_err(StoreError::ValidationFailure)?;
        if record.embedding.is_empty() {
            record.embedding = self.embedder.embed(&record.functional_desc)?;
        }
        if record.embedding.len() != self.embedder.dimension() {
            return Err(StoreError::ValidationFailure(format!(
                "record {}: embedding dimension {} does not match the store's {}",
                record.id,
                record.embedding.len(),
                self.embedder.dimension()
            )));
        }
        record.validate().map_err(StoreError::ValidationFailure)?;
        Ok(record)
    }

    /// Validates, embeds if needed and stores `record`, replacing any record
    /// with the same id.
    pub fn insert(&self, record: FunctionRecord) -> Result<String, StoreError> {
        self.insert_many(vec![record]).map(|mut ids| ids.remove(0))
    }

    /// All-or-nothing batch insert.
    pub fn insert_many(&self, records: Vec<FunctionRecord>) -> Result<Vec<String>, StoreError> {
        let prepared = records.into_iter().map(|r| self.prepare(r)).collect::<Result<Vec<_>, _>>()?;
        let _w = self.writer.lock().expect("writer lock");
        let mut next = (*self.snapshot()).clone();
        let ids = prepared.iter().map(|r| r.id.clone()).collect();
        for r in prepared {
            next.insert(r.id.clone(), r);
        }
        *self.snapshot.write().expect("store lock") = Arc::new(next);
        Ok(ids)
    }

    /// Writes the current snapshot to the store directory.
    pub fn save(&self) -> Result<(), StoreError> {
        let dir = self.dir.as_ref().ok_or(StoreError::InMemory)?;
        let _w = self.writer.lock().expect("writer lock");
        let snapshot = self.snapshot();
        let records_dir = dir.join("records");
        std::fs::create_dir_all(&records_dir)?;
        let mut vectors = Vec::with_capacity(snapshot.len() * self.embedder.dimension() * 4);
        let mut record_digests = Vec::with_capacity(snapshot.len());
        for (id, record) in snapshot.iter() {
            let text = serde_json::to_string_pretty(record).expect("record serializes") + "\n";
            let path = records_dir.join(format!("{id}.json"));
            if std::fs::read(&path).ok().as_deref() != Some(text.as_bytes()) {
                write_atomic(&path, text.as_bytes())?;
            }
            record_digests.push(sha256_hex(text.as_bytes()));
            vectors.extend(record.embedding.iter().flat_map(|x| x.to_le_bytes()));
        }
        write_atomic(&dir.join("vectors.bin"), &vectors)?;
        let manifest = Manifest {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            embedder: self.embedder.kind().into(),
            dimension: self.embedder.dimension(),
            ids: snapshot.keys().cloned().collect(),
            record_digests,
            vectors_digest: sha256_hex(&vectors),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
        for entry in std::fs::read_dir(&records_dir)? {
            let path = entry?.path();
            let stale = path
                .file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|id| path.extension().is_some_and(|e| e == "json") && !snapshot.contains_key(id));
            if stale {
                std::fs::remove_file(&path)?;
            }
        }
        Ok(())
    }

    /// Embeds `desc` and runs [`Store::query_vector`].
    pub fn query(
        &self,
        desc: &str,
        major: u32,
        category: Option<&str>,
        params: QueryParams,
    ) -> Result<Vec<Candidate>, StoreError> {
        let v = self.embedder.embed(desc)?;
        Ok(self.query_vector(&v, major, category, params))
    }

    /// Records with Solidity major `major` and (when given) category
    /// `category`, with cosine similarity at least `min_sim`, best first,
    /// ties by id, at most `k`.
    pub fn query_vector(&self, v: &[f32], major: u32, category: Option<&str>, params: QueryParams) -> Vec<Candidate> {
        let snapshot = self.snapshot();
        let mut hits: Vec<(f64, &FunctionRecord)> = snapshot
            .values()
            .filter(|r| r.solidity_major == Some(major))
            .filter(|r| category.is_none_or(|c| r.category == c))
            .map(|r| (similarity(v, &r.embedding), r))
            .filter(|(s, _)| *s >= params.min_sim)
            .collect();
        hits.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
        hits.into_iter().take(params.k).map(|(similarity, r)| Candidate { record: r.clone(), similarity }).collect()
    }

    pub fn stats(&self) -> StoreStats {
        let snapshot = self.snapshot();
        let mut stats = StoreStats {
            records: snapshot.len(),
            dimension: self.embedder.dimension(),
            embedder: self.embedder.kind().into(),
            ..StoreStats::default()
        };
        for r in snapshot.values() {
            *stats.by_category.entry(r.category.clone()).or_default() += 1;
            let major = r.solidity_major.map_or_else(|| "unknown".to_owned(), |m| format!("0.{m}"));
            *stats.by_major.entry(major).or_default() += 1;
        }
        stats
    }
}

/// Cosine of two unit vectors, rounded to six decimals so that ties in
/// exact arithmetic stay ties after `f32` rounding and fall back to id order.
pub fn similarity(a: &[f32], b: &[f32]) -> f64 {
    (dot(a, b) * 1e6).round() / 1e6
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsl::BslSpec;
    use crate::miner::{record_id, ContractRef};
    use crate::solidity::ParsedSource;

    fn record(n: usize, desc: &str, major: u32, category: &str) -> FunctionRecord {
        let src = "contract C { function f() external { x = 1; } }";
        let parsed = ParsedSource::parse(src).unwrap();
        let expanded = parsed.expand(&parsed.public_functions()[0]).unwrap();
        let address = format!("0x{n:040x}");
        FunctionRecord {
            id: record_id(&address, "f"),
            contract: ContractRef { address, name: format!("C{n}") },
            expanded,
            functional_desc: desc.into(),
            logical_desc: "none".into(),
            bsl: "order(check[], set)".parse::<BslSpec>().unwrap(),
            category: category.into(),
            solidity_major: Some(major),
            embedding: Vec::new(),
        }
    }

    fn store() -> Store {
        Store::in_memory(Arc::new(DeterministicEmbedder::default()))
    }

    #[test]
    fn deterministic_embedding() {
        let e = DeterministicEmbedder::default();
        let a = e.embed("burn user tokens").unwrap();
        assert_eq!(a, e.embed("Burn USER tokens!").unwrap());
        assert!((dot(&a, &a) - 1.0).abs() < 1e-6);
        assert_eq!(e.embed("  ...  "), Err(EmbedError::EmptyText));
    }

    #[test]
    fn disjoint_vocabularies_are_orthogonal() {
        let e = DeterministicEmbedder::default();
        let (a, b) = (["alpha", "beta"], ["gamma", "delta"]);
        let buckets = |w: &[&str]| w.iter().map(|t| e.bucket(t)).collect::<std::collections::BTreeSet<_>>();
        assert!(buckets(&a).is_disjoint(&buckets(&b)), "fixture vocabulary collides");
        let s = dot(&e.embed(&a.join(" ")).unwrap(), &e.embed(&b.join(" ")).unwrap());
        assert_eq!(s, 0.0);
    }

    #[test]
    fn insert_is_idempotent_and_validated() {
        let s = store();
        let r = record(1, "burn user tokens", 8, "Token");
        let id = s.insert(r.clone()).unwrap();
        s.insert(r.clone()).unwrap();
        assert_eq!(s.len(), 1);
        let stored = s.get(&id).unwrap();
        assert_eq!(stored.functional_desc, r.functional_desc);
        assert_eq!(stored.embedding.len(), DETERMINISTIC_DIM);

        let mut bad = record(2, "x", 8, "Token");
        bad.bsl = "order(check[a], set)".parse().unwrap();
        assert!(matches!(s.insert(bad), Err(StoreError::ValidationFailure(_))));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn query_filters_and_ties() {
        let s = store();
        for n in 0..10 {
            s.insert(record(n, "swap exact tokens", 8, "Exchange")).unwrap();
        }
        s.insert(record(20, "swap exact tokens", 6, "Exchange")).unwrap();
        s.insert(record(21, "swap exact tokens", 8, "Lending")).unwrap();
        let hits = s.query("swap exact tokens", 8, Some("Exchange"), QueryParams::default()).unwrap();
        assert_eq!(hits.len(), 5);
        let ids: Vec<_> = hits.iter().map(|c| c.record.id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert!(hits.iter().all(|c| (c.similarity - 1.0).abs() < 1e-6 && c.record.solidity_major == Some(8)));
        assert_eq!(s.query("swap exact tokens", 6, Some("Exchange"), QueryParams::default()).unwrap().len(), 1);
        assert_eq!(s.query("swap exact tokens", 8, None, QueryParams { k: 100, min_sim: 0.8 }).unwrap().len(), 11);
        assert!(s.query("mint governance votes", 8, None, QueryParams::default()).unwrap().is_empty());
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let embedder: Arc<dyn Embedder> = Arc::new(DeterministicEmbedder::default());
        let s = Store::open(dir.path(), embedder.clone()).unwrap();
        for n in 0..6 {
            s.insert(record(n, &format!("deposit collateral variant {n}"), 8, "Lending")).unwrap();
        }
        s.save().unwrap();
        let manifest = std::fs::read(dir.path().join("manifest.json")).unwrap();
        let reopened = Store::open(dir.path(), embedder.clone()).unwrap();
        assert_eq!(reopened.records(), s.records());
        let q = |st: &Store| st.query("deposit collateral", 8, Some("Lending"), QueryParams { k: 5, min_sim: 0.0 }).unwrap();
        assert_eq!(q(&reopened), q(&s));
        reopened.save().unwrap();
        assert_eq!(std::fs::read(dir.path().join("manifest.json")).unwrap(), manifest);

        // a save interrupted after vectors.bin was replaced
        std::fs::write(dir.path().join("vectors.bin"), vec![0u8; 6 * DETERMINISTIC_DIM * 4]).unwrap();
        let recovered = Store::open(dir.path(), embedder.clone()).unwrap();
        assert_eq!(q(&recovered), q(&s));

        let wrong: Arc<dyn Embedder> = Arc::new(DeterministicEmbedder::new(64));
        assert!(matches!(Store::open(dir.path(), wrong), Err(StoreError::EmbedderMismatch { .. })));
    }
}
