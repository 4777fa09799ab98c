//! Chat-completion gateway: templated prompts, sessions with token and time
//! accounting, and interchangeable backends (HTTP, scripted replay,
//! recording, closures).

mod backend;
pub(crate) mod remote;
mod template;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{FnBackend, RecordingBackend, ScriptRecord, ScriptedBackend, SentinelBackend};
pub use remote::{RemoteBackend, RemoteConfig, API_KEY_ENV};
pub use template::{grammar_binding, PromptTemplate, TemplateError, TemplateId, Templates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    /// Template a user turn was rendered from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateId>,
}

/// One conversation. Owned by a single task at a time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub transcript: Vec<Message>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub wall_time_ms: u64,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_system(text: impl Into<String>) -> Self {
        Self { transcript: vec![Message { role: Role::System, content: text.into(), template: None }], ..Self::default() }
    }

    pub fn tokens(&self) -> u64 {
        self.tokens_in + self.tokens_out
    }

    /// Number of user turns rendered from template `id`.
    pub fn turns_of(&self, id: TemplateId) -> usize {
        self.transcript.iter().filter(|m| m.template == Some(id)).count()
    }
}

/// What a backend sees for one completion.
#[derive(Debug, Clone, Copy)]
pub struct Request<'a> {
    pub template_id: TemplateId,
    /// The whole conversation, ending with the new user turn.
    pub messages: &'a [Message],
}

impl Request<'_> {
    pub fn digest(&self) -> String {
        conversation_digest(self.messages)
    }

    pub fn prompt(&self) -> &str {
        self.messages.last().map_or("", |m| m.content.as_str())
    }
}

/// Hex SHA-256 over the canonical JSON of the conversation.
pub fn conversation_digest(messages: &[Message]) -> String {
    let canonical = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&canonical))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {reason}")]
    Unavailable { reason: String, elapsed_ms: u64 },
    #[error("no scripted reply for {template_id} with digest {digest}")]
    ScriptMiss { template_id: TemplateId, digest: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &Request<'_>) -> Result<Completion, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &Request<'_>) -> Result<Completion, BackendError> {
        (**self).complete(request)
    }
}

/// Rough token count for backends that do not report usage.
pub fn estimate_tokens(text: &str) -> u64 {
    text.len().div_ceil(4) as u64
}

/// Renders `template`, sends it as a user turn and appends the reply.
///
/// A failed call leaves the transcript as it was (only elapsed time is
/// charged), so the user/assistant alternation survives errors.
pub fn complete(
    backend: &dyn Backend,
    session: &mut Session,
    template: &PromptTemplate,
    bindings: &[(&str, &str)],
) -> Result<String, LlmError> {
    let prompt = template.render(bindings)?;
    session.transcript.push(Message { role: Role::User, content: prompt, template: Some(template.id) });
    let result = backend.complete(&Request { template_id: template.id, messages: &session.transcript });
    match result {
        Ok(c) => {
            session.tokens_in += c.tokens_in;
            session.tokens_out += c.tokens_out;
            session.wall_time_ms += c.elapsed_ms;
            session.transcript.push(Message { role: Role::Assistant, content: c.text.clone(), template: None });
            Ok(c.text)
        }
        Err(e) => {
            session.transcript.pop();
            if let BackendError::Unavailable { elapsed_ms, .. } = &e {
                session.wall_time_ms += elapsed_ms;
            }
            Err(e.into())
        }
    }
}

/// The two backend slots plus the concurrency bound shared by both.
#[derive(Clone)]
pub struct Backends {
    pub miner: Arc<dyn Backend>,
    pub checker: Arc<dyn Backend>,
    pub parallelism: usize,
}

impl Backends {
    pub fn uniform(backend: Arc<dyn Backend>) -> Self {
        Self { miner: backend.clone(), checker: backend, parallelism: 1 }
    }

    /// Applies `f` to every item with at most `parallelism` workers. Output
    /// order follows input order.
    pub fn map_parallel<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        use rayon::prelude::*;
        if self.parallelism <= 1 || items.len() <= 1 {
            return items.iter().map(f).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.parallelism).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(e) => {
                log::warn!("falling back to sequential execution: {e}");
                items.iter().map(f).collect()
            }
        }
    }
}
