//! Generate-validate-repair mining of one public function into a
//! [`FunctionRecord`].

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bsl::{parse_bsl, BslSpec, SyntaxError};
use crate::corpus::ContractMeta;
use crate::llm::{complete, grammar_binding, Backend, LlmError, Session, TemplateId, Templates};
use crate::solidity::{count_explicit_checks, skip_line, ExpandedFunction, FunctionEntry, ParsedSource};

/// Repair turns allowed after the initial generation.
pub const MAX_REPAIRS: u32 = 4;

/// Identifies the contract a record was mined from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractRef {
    pub address: String,
    pub name: String,
}

impl From<&ContractMeta> for ContractRef {
    fn from(m: &ContractMeta) -> Self {
        Self { address: m.address.clone(), name: m.name.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub id: String,
    pub contract: ContractRef,
    pub expanded: ExpandedFunction,
    pub functional_desc: String,
    pub logical_desc: String,
    pub bsl: BslSpec,
    pub category: String,
    pub solidity_major: Option<u32>,
    /// Unit vector of `functional_desc`; empty until the store embeds it.
    #[serde(default, skip)]
    pub embedding: Vec<f32>,
}

impl FunctionRecord {
    /// Checks the record invariants: the spec's check count matches the
    /// source, the spec survives printing and reparsing, and any embedding
    /// has unit norm.
    pub fn validate(&self) -> Result<(), String> {
        let actual = count_explicit_checks(&self.expanded).len();
        if self.bsl.check_count() != actual {
            return Err(format!(
                "record {}: spec has {} checks but the source has {actual}",
                self.id,
                self.bsl.check_count()
            ));
        }
        if parse_bsl(&self.bsl.to_string()).as_ref() != Ok(&self.bsl) {
            return Err(format!("record {}: spec does not round-trip", self.id));
        }
        if !self.embedding.is_empty() {
            let norm = self.embedding.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(format!("record {}: embedding norm {norm} is not 1", self.id));
            }
        }
        Ok(())
    }
}

/// Stable id derived from the contract address and function name.
pub fn record_id(address: &str, function: &str) -> String {
    let digest = Sha256::digest(format!("{}:{function}", address.to_ascii_lowercase()));
    hex::encode(&digest[..12])
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("syntax error: {0}")]
    Syntax(SyntaxError),
    #[error("count mismatch: source {actual_count} vs BSL {bsl_count}")]
    CountMismatch { actual_count: usize, bsl_count: usize },
}

impl ValidationError {
    /// Bindings for the repair prompt. Fields that do not apply to this
    /// failure are filled with placeholders the model can recognise.
    fn repair_bindings(&self, actual_count: usize) -> [(&'static str, String); 3] {
        match self {
            Self::Syntax(e) => [
                ("error_message", e.to_string()),
                ("actual_count", actual_count.to_string()),
                ("bsl_count", "n/a".into()),
            ],
            Self::CountMismatch { actual_count, bsl_count } => [
                ("error_message", "none".into()),
                ("actual_count", actual_count.to_string()),
                ("bsl_count", bsl_count.to_string()),
            ],
        }
    }
}

/// Parses `bsl_text`, then compares its check count with the explicit
/// checks in `expanded`.
pub fn validate_bsl(bsl_text: &str, expanded: &ExpandedFunction) -> Result<BslSpec, ValidationError> {
    let spec = parse_bsl(bsl_text).map_err(ValidationError::Syntax)?;
    let actual_count = count_explicit_checks(expanded).len();
    if spec.check_count() != actual_count {
        return Err(ValidationError::CountMismatch { actual_count, bsl_count: spec.check_count() });
    }
    Ok(spec)
}

/// Strips the markdown fences or backticks models like to wrap code in.
pub fn extract_bsl(reply: &str) -> &str {
    let mut s = reply.trim();
    if let Some(rest) = s.strip_prefix("```") {
        s = rest.split_once('\n').map_or("", |(_, body)| body);
        s = s.trim_end().strip_suffix("```").unwrap_or(s);
    }
    s.trim().trim_matches('`').trim()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    Uncategorized,
    Backend(String),
    Validation(ValidationError),
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uncategorized => f.write_str("contract has no category"),
            Self::Backend(e) => write!(f, "backend: {e}"),
            Self::Validation(e) => write!(f, "still invalid after {MAX_REPAIRS} repairs: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum MineOutcome {
    Success { record: FunctionRecord, attempts: u32 },
    Skipped { reason: SkipReason, attempts: u32 },
}

impl MineOutcome {
    pub fn attempts(&self) -> u32 {
        match self {
            Self::Success { attempts, .. } | Self::Skipped { attempts, .. } => *attempts,
        }
    }

    /// `MINE <contract> <fn> <Success|Skipped> attempts=<n>`
    pub fn log_line(&self, contract: &str, function: &str) -> String {
        let kind = match self {
            Self::Success { .. } => "Success",
            Self::Skipped { .. } => "Skipped",
        };
        format!("MINE {contract} {function} {kind} attempts={}", self.attempts())
    }
}

/// Runs the description, summary and spec prompts in one session, then up
/// to [`MAX_REPAIRS`] repair turns until the spec validates.
pub fn mine_function(
    contract: &ContractMeta,
    expanded: &ExpandedFunction,
    backend: &dyn Backend,
    templates: &Templates,
) -> (MineOutcome, Session) {
    let mut session = Session::new();
    let outcome = mine_in(contract, expanded, backend, templates, &mut session);
    log::info!("{}", outcome.log_line(&contract.name, &expanded.entry.name));
    (outcome, session)
}

fn mine_in(
    contract: &ContractMeta,
    expanded: &ExpandedFunction,
    backend: &dyn Backend,
    templates: &Templates,
    session: &mut Session,
) -> MineOutcome {
    let Some(category) = contract.category.as_deref() else {
        return MineOutcome::Skipped { reason: SkipReason::Uncategorized, attempts: 0 };
    };
    let mut attempts = 0;
    let backend_skip = |e: LlmError, attempts| MineOutcome::Skipped { reason: SkipReason::Backend(e.to_string()), attempts };

    let name = expanded.entry.name.as_str();
    let r1 = [("name", name), ("code", expanded.expanded_source.as_str()), ("category", category)];
    let functional_desc = match complete(backend, session, templates.get(TemplateId::R1FuncDesc), &r1) {
        Ok(t) => t.trim().to_owned(),
        Err(e) => return backend_skip(e, attempts),
    };
    let logical_desc = match complete(backend, session, templates.get(TemplateId::R2LogicSummary), &[]) {
        Ok(t) => t.trim().to_owned(),
        Err(e) => return backend_skip(e, attempts),
    };
    let mut reply = match complete(backend, session, templates.get(TemplateId::R3BslGen), &[("grammar", grammar_binding())]) {
        Ok(t) => t,
        Err(e) => return backend_skip(e, attempts),
    };
    let actual_count = count_explicit_checks(expanded).len();
    loop {
        match validate_bsl(extract_bsl(&reply), expanded) {
            Ok(bsl) => {
                let record = FunctionRecord {
                    id: record_id(&contract.address, name),
                    contract: contract.into(),
                    expanded: expanded.clone(),
                    functional_desc,
                    logical_desc,
                    bsl,
                    category: category.to_owned(),
                    solidity_major: contract.solidity_major,
                    embedding: Vec::new(),
                };
                return MineOutcome::Success { record, attempts };
            }
            Err(e) if attempts >= MAX_REPAIRS => {
                return MineOutcome::Skipped { reason: SkipReason::Validation(e), attempts };
            }
            Err(e) => {
                attempts += 1;
                let owned = e.repair_bindings(actual_count);
                let bindings: Vec<(&str, &str)> = owned.iter().map(|(k, v)| (*k, v.as_str())).collect();
                reply = match complete(backend, session, templates.get(TemplateId::R4Repair), &bindings) {
                    Ok(t) => t,
                    Err(e) => return backend_skip(e, attempts),
                };
            }
        }
    }
}

/// Result of mining every public function of one contract.
#[derive(Debug, Default)]
pub struct ContractMining {
    pub outcomes: Vec<(String, MineOutcome, Session)>,
    /// Set when the source could not be read or parsed.
    pub skipped: Option<String>,
}

/// Parses the contract's source and mines each public function, at most
/// `parallelism` at a time. The contract's Solidity major is filled from the
/// pragma when the metadata lacks it.
pub fn mine_contract(
    contract: &ContractMeta,
    backends: &crate::llm::Backends,
    templates: &Templates,
) -> ContractMining {
    let shown = contract.source_path.display().to_string();
    let src = match std::fs::read_to_string(&contract.source_path) {
        Ok(s) => s,
        Err(e) => {
            let line = format!("SKIP {shown} 0 {e}");
            log::warn!("{line}");
            return ContractMining { outcomes: Vec::new(), skipped: Some(line) };
        }
    };
    mine_source(contract, &src, &shown, backends, templates)
}

pub fn mine_source(
    contract: &ContractMeta,
    src: &str,
    shown_path: &str,
    backends: &crate::llm::Backends,
    templates: &Templates,
) -> ContractMining {
    let parsed = match ParsedSource::parse(src) {
        Ok(p) => p,
        Err(e) => {
            let line = skip_line(shown_path, &e);
            log::warn!("{line}");
            return ContractMining { outcomes: Vec::new(), skipped: Some(line) };
        }
    };
    let mut contract = contract.clone();
    if contract.solidity_major.is_none() {
        contract.solidity_major = crate::solidity::extract_pragma_major(src).ok();
    }
    let entries: Vec<FunctionEntry> = parsed.public_functions();
    let mut expanded = Vec::new();
    for entry in &entries {
        match parsed.expand(entry) {
            Ok(x) => expanded.push(x),
            Err(e) => log::warn!("{}", skip_line(shown_path, &e)),
        }
    }
    let backend = backends.miner.as_ref();
    let outcomes = backends.map_parallel(&expanded, |x| {
        let (outcome, session) = mine_function(&contract, x, backend, templates);
        (x.entry.name.clone(), outcome, session)
    });
    ContractMining { outcomes, skipped: None }
}

/// Convenience for callers holding a path rather than metadata.
pub fn contract_from_path(path: &Path, category: Option<String>) -> ContractMeta {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("contract").to_owned();
    ContractMeta {
        address: format!("0x{}", &hex::encode(Sha256::digest(path.to_string_lossy().as_bytes()))[..40]),
        name,
        deployed_days: 0,
        tx_count: 0,
        source_path: path.to_path_buf(),
        category,
        solidity_major: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{BackendError, FnBackend, Request};
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    const SRC: &str = "pragma solidity ^0.8.13;\ncontract Pool {\n  uint256 reserves;\n  \
        function burn(uint256 amount) external {\n    require(reserves >= amount);\n    reserves -= amount;\n  }\n}\n";

    fn fixture() -> (ContractMeta, ExpandedFunction) {
        let parsed = ParsedSource::parse(SRC).unwrap();
        let entry = parsed.public_functions().remove(0);
        let mut meta = contract_from_path(Path::new("pool.sol"), Some("Lending".into()));
        meta.solidity_major = Some(8);
        (meta, parsed.expand(&entry).unwrap())
    }

    /// Replies with `bad` until `good_after` R4 turns have been issued.
    fn scripted(good_after: Option<u32>) -> FnBackend {
        let repairs = Arc::new(AtomicU32::new(0));
        FnBackend::new(move |r: &Request<'_>| {
            Ok(match r.template_id {
                TemplateId::R1FuncDesc => "This function is used to burn reserves.".into(),
                TemplateId::R2LogicSummary => "Reserves must cover the amount.".into(),
                TemplateId::R3BslGen => "order(check[reserve_ge_amount] burn)".into(),
                TemplateId::R4Repair => {
                    let n = repairs.fetch_add(1, Ordering::SeqCst) + 1;
                    if good_after.is_some_and(|g| n >= g) {
                        "```\norder(check[reserve_ge_amount], burn)\n```".into()
                    } else {
                        "order(check[], burn)".into()
                    }
                }
                other => panic!("unexpected template {other}"),
            })
        })
    }

    #[test]
    fn validation_examples() {
        let (_, x) = fixture();
        assert!(validate_bsl("order(check[balance_ge_amount], burn)", &x).is_ok());
        assert_eq!(
            validate_bsl("order(check[balance_ge_amount, hf_ge_threshold], burn)", &x),
            Err(ValidationError::CountMismatch { actual_count: 1, bsl_count: 2 })
        );
        assert!(matches!(validate_bsl("order(check[x] burn)", &x), Err(ValidationError::Syntax(_))));
    }

    #[test]
    fn repair_bound() {
        let (meta, x) = fixture();
        let templates = Templates::default();
        for (good_after, success, attempts) in [(Some(1), true, 1), (Some(4), true, 4), (None, false, 4)] {
            let (outcome, session) = mine_function(&meta, &x, &scripted(good_after), &templates);
            assert_eq!(matches!(outcome, MineOutcome::Success { .. }), success);
            assert_eq!(outcome.attempts(), attempts);
            assert_eq!(session.turns_of(TemplateId::R4Repair), attempts as usize);
        }
    }

    #[test]
    fn repair_prompt_carries_validator_fields() {
        let (meta, x) = fixture();
        let (_, session) = mine_function(&meta, &x, &scripted(Some(2)), &Templates::default());
        let prompts: Vec<_> = session.transcript.iter().filter(|m| m.template == Some(TemplateId::R4Repair)).collect();
        assert!(prompts[0].content.contains("syntax error at offset 31: expected \",\", found \"burn\""));
        assert!(prompts[0].content.contains("source 1 vs BSL n/a"));
        assert!(prompts[1].content.contains("syntax error at none; count mismatch: source 1 vs BSL 0"));
    }

    #[test]
    fn backend_failure_skips() {
        let (meta, x) = fixture();
        let down = FnBackend::new(|_: &Request<'_>| Err(BackendError::Unavailable { reason: "x".into(), elapsed_ms: 0 }));
        let (outcome, _) = mine_function(&meta, &x, &down, &Templates::default());
        assert!(matches!(outcome, MineOutcome::Skipped { reason: SkipReason::Backend(_), attempts: 0 }));
        assert_eq!(outcome.log_line("Pool", "burn"), "MINE Pool burn Skipped attempts=0");
    }

    #[test]
    fn records_validate_and_ids_are_stable() {
        let (meta, x) = fixture();
        let (MineOutcome::Success { record, .. }, _) = mine_function(&meta, &x, &scripted(Some(1)), &Templates::default())
        else {
            panic!("expected success");
        };
        record.validate().unwrap();
        assert_eq!(record.id, record_id(&meta.address.to_uppercase().replace("0X", "0x"), "burn"));
        assert_eq!(record.id.len(), 24);
        let json = serde_json::to_string(&record).unwrap();
        assert_eq!(serde_json::from_str::<FunctionRecord>(&json).unwrap(), record);
    }

    #[test]
    fn fences_are_stripped() {
        assert_eq!(extract_bsl("  `order(check[], x)` "), "order(check[], x)");
        assert_eq!(extract_bsl("```bsl\norder(check[], x)\n```"), "order(check[], x)");
        assert_eq!(extract_bsl("order(check[], x)"), "order(check[], x)");
    }
}
