use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, Backend, BackendError, Completion, Request, TemplateId};

/// One canned reply, keyed by template id and conversation digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub template_id: TemplateId,
    pub digest: String,
    pub reply: String,
    #[serde(default)]
    pub tokens_in: u64,
    #[serde(default)]
    pub tokens_out: u64,
    #[serde(default)]
    pub ms: u64,
    /// The user turn that produced the reply, kept for readers of the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptRecord>, serde_json::Error> {
    serde_json::from_str(text)
}

type Key = (TemplateId, String);

/// Deterministic replay of recorded replies.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    script: BTreeMap<Key, ScriptRecord>,
}

impl ScriptedBackend {
    pub fn new(records: impl IntoIterator<Item = ScriptRecord>) -> Self {
        let mut script = BTreeMap::new();
        for r in records {
            let key = (r.template_id, r.digest.clone());
            if let Some(existing) = script.get(&key) {
                let existing: &ScriptRecord = existing;
                if existing.reply != r.reply {
                    log::warn!("script: conflicting replies for {} {}; keeping the first", r.template_id, r.digest);
                }
                continue;
            }
            script.insert(key, r);
        }
        Self { script }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(parse_script(text)?))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &Request<'_>) -> Result<Completion, BackendError> {
        let digest = request.digest();
        let key = (request.template_id, digest);
        match self.script.get(&key) {
            Some(r) => Ok(Completion {
                text: r.reply.clone(),
                tokens_in: r.tokens_in,
                tokens_out: r.tokens_out,
                elapsed_ms: r.ms,
            }),
            None => Err(BackendError::ScriptMiss { template_id: key.0, digest: key.1 }),
        }
    }
}

/// Forwards to another backend and captures every successful exchange in
/// script form.
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    captured: Mutex<BTreeMap<Key, ScriptRecord>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        Self { inner, captured: Mutex::new(BTreeMap::new()) }
    }

    /// Captured records ordered by template id, then digest.
    pub fn records(&self) -> Vec<ScriptRecord> {
        self.captured.lock().expect("recorder lock").values().cloned().collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records()).expect("records serialize") + "\n"
    }

    /// Writes the captured records, merged over any already in `path`.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut merged: BTreeMap<Key, ScriptRecord> = BTreeMap::new();
        if let Ok(text) = std::fs::read_to_string(path) {
            if let Ok(old) = parse_script(&text) {
                merged.extend(old.into_iter().map(|r| ((r.template_id, r.digest.clone()), r)));
            }
        }
        merged.extend(self.records().into_iter().map(|r| ((r.template_id, r.digest.clone()), r)));
        let records: Vec<_> = merged.into_values().collect();
        let text = serde_json::to_string_pretty(&records).expect("records serialize") + "\n";
        crate::fsutil::write_atomic(path, text.as_bytes())
    }
}

impl Backend for RecordingBackend {
    fn complete(&self, request: &Request<'_>) -> Result<Completion, BackendError> {
        let completion = self.inner.complete(request)?;
        let record = ScriptRecord {
            template_id: request.template_id,
            digest: request.digest(),
            reply: completion.text.clone(),
            tokens_in: completion.tokens_in,
            tokens_out: completion.tokens_out,
            ms: completion.elapsed_ms,
            prompt: Some(request.prompt().to_owned()),
        };
        self.captured.lock().expect("recorder lock").entry((record.template_id, record.digest.clone())).or_insert(record);
        Ok(completion)
    }
}

type ReplyFn = dyn Fn(&Request<'_>) -> Result<String, BackendError> + Send + Sync;

/// Backend computed by a closure. Token counts are estimated from text
/// length and elapsed time is reported as zero.
pub struct FnBackend {
    reply: Box<ReplyFn>,
}

impl FnBackend {
    pub fn new(reply: impl Fn(&Request<'_>) -> Result<String, BackendError> + Send + Sync + 'static) -> Self {
        Self { reply: Box::new(reply) }
    }
}

impl Backend for FnBackend {
    fn complete(&self, request: &Request<'_>) -> Result<Completion, BackendError> {
        let text = (self.reply)(request)?;
        Ok(Completion {
            tokens_in: request.messages.iter().map(|m| estimate_tokens(&m.content)).sum(),
            tokens_out: estimate_tokens(&text),
            elapsed_ms: 0,
            text,
        })
    }
}

/// Refuses every request and counts the attempts.
#[derive(Debug, Default)]
pub struct SentinelBackend {
    contacts: AtomicUsize,
}

impl SentinelBackend {
    pub fn contacts(&self) -> usize {
        self.contacts.load(Ordering::SeqCst)
    }
}

impl Backend for SentinelBackend {
    fn complete(&self, _request: &Request<'_>) -> Result<Completion, BackendError> {
        self.contacts.fetch_add(1, Ordering::SeqCst);
        Err(BackendError::Unavailable { reason: "network access is disabled".into(), elapsed_ms: 0 })
    }
}
