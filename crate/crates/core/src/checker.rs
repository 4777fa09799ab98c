//! Contrastive audit of target functions against retrieved reference
//! templates.
//!
//! Each audit runs in one session with three phases: the model first
//! summarizes what the references enforce, then labels every consensus
//! invariant against the target (with the code of functions writing the
//! target's state), and finally classifies each missing or partial
//! invariant as review-worthy or a benign deviation. The consensus
//! checklist is computed, not generated: the model only judges it.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_invariants, union_template, CommonTemplate};
use crate::bsl::ConditionName;
use crate::corpus::{categorize, tokenize_contract_name, CategoryMap, ContractMeta};
use crate::knowledge::{canonicalize, SynonymDictionary};
use crate::llm::{complete, Backends, LlmError, PromptTemplate, Session, TemplateId, Templates};
use crate::miner::record_id;
use crate::solidity::{extract_pragma_major, ExpandedFunction, FunctionEntry, ParsedSource, Span};
use crate::store::{Candidate, QueryParams, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Enforced,
    SemanticallyPreserved,
    Missing,
    Partial,
}

impl VerdictStatus {
    pub fn is_gap(self) -> bool {
        matches!(self, Self::Missing | Self::Partial)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantVerdict {
    pub invariant: ConditionName,
    pub status: VerdictStatus,
    pub evidence: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    ReviewWorthy,
    BenignDeviation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deviation {
    pub invariant: ConditionName,
    pub classification: Classification,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub function_id: String,
    pub invariant: ConditionName,
    pub classification: Classification,
    pub rationale: String,
    pub supporting_template_ids: Vec<String>,
    /// Byte offsets of the audited function in its file.
    pub source_span: Span,
}

/// Switches for the context and aggregation stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditOptions {
    /// Show the model the functions that write the target's state.
    pub include_writers: bool,
    /// Majority voting over the templates; otherwise every template
    /// condition becomes a checklist item.
    pub aggregate: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { include_writers: true, aggregate: true }
    }
}

#[derive(Debug, Clone)]
pub struct AuditContext {
    pub function_id: String,
    pub file: String,
    pub target: ExpandedFunction,
    pub writers: Vec<FunctionEntry>,
    pub templates: Vec<Candidate>,
    pub common: CommonTemplate,
    pub target_desc: String,
    pub contract_meta: ContractMeta,
    pub solidity_major: u32,
    /// The description session.
    pub session: Session,
}

#[derive(Debug, Clone)]
pub enum ContextOutcome {
    Ready(Box<AuditContext>),
    NoReference { reason: String, session: Session },
}

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error(transparent)]
    Solidity(#[from] crate::solidity::SolidityError),
}

/// Everything a check run shares across functions.
pub struct CheckEnv<'a> {
    pub store: &'a Store,
    pub backends: &'a Backends,
    pub templates: &'a Templates,
    pub dictionary: &'a SynonymDictionary,
    pub categories: &'a CategoryMap,
    pub query: QueryParams,
    pub options: AuditOptions,
}

/// Describes the target, retrieves same-version same-category references
/// and aggregates their specifications. No references means no audit.
pub fn build_audit_context(
    env: &CheckEnv<'_>,
    parsed: &ParsedSource<'_>,
    contract: &ContractMeta,
    file: &str,
    entry: &FunctionEntry,
) -> Result<ContextOutcome, CheckError> {
    let target = parsed.expand(entry)?;
    let mut session = Session::new();
    let category = contract.category.as_deref();
    let r1 = [
        ("name", entry.name.as_str()),
        ("code", target.expanded_source.as_str()),
        ("category", category.unwrap_or("general")),
    ];
    let target_desc = complete(env.backends.checker.as_ref(), &mut session, env.templates.get(TemplateId::R1FuncDesc), &r1)?
        .trim()
        .to_owned();

    let major = match contract.solidity_major.map_or_else(|| extract_pragma_major(parsed.source()), Ok) {
        Ok(m) => m,
        Err(e) => return Ok(ContextOutcome::NoReference { reason: format!("no Solidity version: {e}"), session }),
    };
    let templates = env.store.query(&target_desc, major, category, env.query)?;
    if templates.is_empty() {
        let reason = format!(
            "no stored function of Solidity 0.{major}{} reaches similarity {:.2}",
            category.map(|c| format!(" in category {c}")).unwrap_or_default(),
            env.query.min_sim
        );
        return Ok(ContextOutcome::NoReference { reason, session });
    }
    let specs: Vec<_> = templates.iter().map(|c| c.record.bsl.clone()).collect();
    let common = if env.options.aggregate {
        aggregate_invariants(&specs, env.dictionary)
    } else {
        union_template(&specs, env.dictionary)
    }
    .expect("at least one template");
    let writers = parsed.find_state_variable_writers(&target);
    Ok(ContextOutcome::Ready(Box::new(AuditContext {
        function_id: record_id(&contract.address, &entry.name),
        file: file.to_owned(),
        target,
        writers,
        templates,
        common,
        target_desc,
        contract_meta: contract.clone(),
        solidity_major: major,
        session,
    })))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Ok,
    NoReference,
    AuditFailed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub tokens: u64,
    pub ms: u64,
}

impl Accounting {
    fn add(&mut self, s: &Session) {
        self.tokens_in += s.tokens_in;
        self.tokens_out += s.tokens_out;
        self.tokens = self.tokens_in + self.tokens_out;
        self.ms += s.wall_time_ms;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRef {
    pub id: String,
    pub contract: String,
    pub function: String,
    pub similarity: f64,
}

/// One entry of a report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionReport {
    pub function_id: String,
    pub contract: String,
    pub function: String,
    pub file: String,
    pub source_span: Span,
    pub status: ReportStatus,
    pub verdicts: Vec<InvariantVerdict>,
    pub findings: Vec<Finding>,
    pub accounting: Accounting,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub templates: Vec<TemplateRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub common_template: Option<CommonTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
}

fn fenced(code: &str) -> String {
    format!("```solidity\n{}\n```", code.trim_end())
}

fn render_templates(ctx: &AuditContext) -> String {
    let mut out = String::new();
    for (i, c) in ctx.templates.iter().enumerate() {
        let r = &c.record;
        let _ = writeln!(
            out,
            "### Reference {} ({}.{}, similarity {:.3})\nSpecification: {}\n{}\n",
            i + 1,
            r.contract.name,
            r.expanded.entry.name,
            c.similarity,
            r.bsl,
            fenced(&r.expanded.expanded_source)
        );
    }
    out.trim_end().to_owned()
}

fn render_checklist(common: &CommonTemplate) -> String {
    common
        .invariants
        .iter()
        .map(|i| format!("- {} (enforced by {} of {} references)", i.name, i.support, common.k))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_writers(ctx: &AuditContext, include: bool) -> String {
    if !include || ctx.writers.is_empty() {
        return String::new();
    }
    let code: Vec<&str> = ctx.writers.iter().map(|w| w.body_text.as_str()).collect();
    format!(
        "Other functions in the contract that write state this function reads:\n{}\n\n",
        fenced(&code.join("\n\n"))
    )
}

/// Isolates the JSON object in a reply that may carry fences or prose.
pub fn extract_json(reply: &str) -> &str {
    let t = reply.trim();
    match (t.find('{'), t.rfind('}')) {
        (Some(a), Some(b)) if a < b => &t[a..=b],
        _ => t,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictReply {
    verdicts: Vec<InvariantVerdict>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviationReply {
    deviations: Vec<Deviation>,
}

fn check_coverage<'a>(
    got: impl Iterator<Item = &'a ConditionName>,
    expected: &[ConditionName],
) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for name in got {
        if !expected.contains(name) {
            return Err(format!("{name} is not in the checklist"));
        }
        if !seen.insert(name) {
            return Err(format!("{name} is answered twice"));
        }
    }
    if let Some(missing) = expected.iter().find(|n| !seen.contains(n)) {
        return Err(format!("no answer for {missing}"));
    }
    Ok(())
}

/// Parses a verification reply; every checklist invariant must be answered
/// exactly once with non-empty evidence. Output follows checklist order.
pub fn parse_verdicts(reply: &str, checklist: &[ConditionName]) -> Result<Vec<InvariantVerdict>, String> {
    let parsed: VerdictReply = serde_json::from_str(extract_json(reply)).map_err(|e| format!("invalid JSON: {e}"))?;
    check_coverage(parsed.verdicts.iter().map(|v| &v.invariant), checklist)?;
    if let Some(v) = parsed.verdicts.iter().find(|v| v.evidence.trim().is_empty()) {
        return Err(format!("empty evidence for {}", v.invariant));
    }
    let mut verdicts = parsed.verdicts;
    verdicts.sort_by_key(|v| checklist.iter().position(|n| *n == v.invariant));
    Ok(verdicts)
}

/// Parses a deviation reply; every gap must be classified exactly once.
pub fn parse_deviations(reply: &str, gaps: &[ConditionName]) -> Result<Vec<Deviation>, String> {
    let parsed: DeviationReply = serde_json::from_str(extract_json(reply)).map_err(|e| format!("invalid JSON: {e}"))?;
    check_coverage(parsed.deviations.iter().map(|d| &d.invariant), gaps)?;
    if let Some(d) = parsed.deviations.iter().find(|d| d.rationale.trim().is_empty()) {
        return Err(format!("empty rationale for {}", d.invariant));
    }
    let mut deviations = parsed.deviations;
    deviations.sort_by_key(|d| gaps.iter().position(|n| *n == d.invariant));
    Ok(deviations)
}

/// Asks, and re-asks once if the reply fails `parse`.
fn ask_structured<T>(
    backend: &dyn crate::llm::Backend,
    session: &mut Session,
    template: &PromptTemplate,
    bindings: &[(&str, &str)],
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Result<T, (String, String)>, LlmError> {
    let reply = complete(backend, session, template, bindings)?;
    let error = match parse(&reply) {
        Ok(v) => return Ok(Ok(v)),
        Err(e) => e,
    };
    log::warn!("{} reply rejected: {error}; asking again", template.id);
    let reply = complete(backend, session, &PromptTemplate::reask(template.id), &[("error", error.as_str())])?;
    Ok(parse(&reply).map_err(|e| (e, reply)))
}

pub struct AuditOutcome {
    pub status: ReportStatus,
    pub verdicts: Vec<InvariantVerdict>,
    pub findings: Vec<Finding>,
    pub session: Session,
    pub error: Option<String>,
    pub raw_reply: Option<String>,
}

/// Runs the three phases for `ctx`. Schema violations that survive the
/// re-ask and backend failures produce an `AuditFailed` outcome.
pub fn audit(ctx: &AuditContext, env: &CheckEnv<'_>) -> AuditOutcome {
    let mut session = Session::new();
    let outcome = |status, verdicts, findings, error: Option<String>, raw_reply, session| AuditOutcome {
        status,
        verdicts,
        findings,
        session,
        error,
        raw_reply,
    };
    let checklist: Vec<ConditionName> = ctx.common.names().cloned().collect();
    if checklist.is_empty() {
        return outcome(ReportStatus::Ok, Vec::new(), Vec::new(), None, None, session);
    }
    let backend = env.backends.checker.as_ref();
    let name = ctx.target.entry.name.as_str();
    let category = ctx.contract_meta.category.as_deref().unwrap_or("general");
    let major = ctx.solidity_major.to_string();
    let k = ctx.templates.len().to_string();

    let rendered = render_templates(ctx);
    let c1 = [("name", name), ("category", category), ("major", major.as_str()), ("k", k.as_str()), ("templates", rendered.as_str())];
    if let Err(e) = complete(backend, &mut session, env.templates.get(TemplateId::C1Induction), &c1) {
        return outcome(ReportStatus::AuditFailed, Vec::new(), Vec::new(), Some(e.to_string()), None, session);
    }

    let checklist_text = render_checklist(&ctx.common);
    let writers = render_writers(ctx, env.options.include_writers);
    let code = ctx.target.expanded_source.trim_end();
    let c2 = [("common_template", checklist_text.as_str()), ("name", name), ("code", code), ("writers", writers.as_str())];
    let verdicts = match ask_structured(backend, &mut session, env.templates.get(TemplateId::C2Verification), &c2, |r| {
        parse_verdicts(r, &checklist)
    }) {
        Ok(Ok(v)) => v,
        Ok(Err((e, raw))) => {
            let error = format!("verification reply violates the schema: {e}");
            return outcome(ReportStatus::AuditFailed, Vec::new(), Vec::new(), Some(error), Some(raw), session);
        }
        Err(e) => return outcome(ReportStatus::AuditFailed, Vec::new(), Vec::new(), Some(e.to_string()), None, session),
    };

    let gaps: Vec<&InvariantVerdict> = verdicts.iter().filter(|v| v.status.is_gap()).collect();
    if gaps.is_empty() {
        return outcome(ReportStatus::Ok, verdicts, Vec::new(), None, None, session);
    }
    let gap_names: Vec<ConditionName> = gaps.iter().map(|v| v.invariant.clone()).collect();
    let gap_text = gaps
        .iter()
        .map(|v| {
            let status = serde_json::to_value(v.status).expect("status serializes");
            format!("- {} ({}): {}", v.invariant, status.as_str().unwrap_or_default(), v.evidence)
        })
        .collect::<Vec<_>>()
        .join("\n");
    let deviations = match ask_structured(
        backend,
        &mut session,
        env.templates.get(TemplateId::C3Deviation),
        &[("invariants", gap_text.as_str())],
        |r| parse_deviations(r, &gap_names),
    ) {
        Ok(Ok(d)) => d,
        Ok(Err((e, raw))) => {
            let error = format!("deviation reply violates the schema: {e}");
            return outcome(ReportStatus::AuditFailed, verdicts, Vec::new(), Some(error), Some(raw), session);
        }
        Err(e) => return outcome(ReportStatus::AuditFailed, verdicts, Vec::new(), Some(e.to_string()), None, session),
    };

    let findings = deviations
        .into_iter()
        .map(|d| Finding {
            function_id: ctx.function_id.clone(),
            supporting_template_ids: ctx
                .templates
                .iter()
                .filter(|c| c.record.bsl.checks.iter().any(|x| canonicalize(x, env.dictionary) == d.invariant))
                .map(|c| c.record.id.clone())
                .collect(),
            invariant: d.invariant,
            classification: d.classification,
            rationale: d.rationale,
            source_span: ctx.target.entry.source_span,
        })
        .collect();
    outcome(ReportStatus::Ok, verdicts, findings, None, None, session)
}

/// Metadata for a target file: a content-derived address, the contract
/// name, a name-derived category and the pragma's Solidity major.
pub fn target_meta(src: &str, path: &std::path::Path, contract: &str, categories: &CategoryMap) -> ContractMeta {
    use sha2::{Digest, Sha256};
    let tokens = tokenize_contract_name(contract, categories);
    ContractMeta {
        address: format!("0x{}", &hex::encode(Sha256::digest(src.as_bytes()))[..40]),
        name: contract.to_owned(),
        deployed_days: 0,
        tx_count: 0,
        source_path: path.to_path_buf(),
        category: categorize(&tokens, categories),
        solidity_major: extract_pragma_major(src).ok(),
    }
}

/// Audits the public functions of one file (all of them, or those named
/// `only`). Reports follow declaration order.
pub fn check_source(
    env: &CheckEnv<'_>,
    src: &str,
    file: &str,
    only: Option<&str>,
) -> Result<Vec<FunctionReport>, CheckError> {
    let parsed = ParsedSource::parse(src)?;
    let entries: Vec<FunctionEntry> =
        parsed.public_functions().into_iter().filter(|e| only.is_none_or(|n| e.name == n)).collect();
    if let Some(name) = only {
        if entries.is_empty() {
            return Err(crate::solidity::SolidityError::UnknownFunction(name.to_owned()).into());
        }
    }
    let path = std::path::Path::new(file);
    Ok(env.backends.map_parallel(&entries, |entry| {
        let meta = target_meta(src, path, &entry.contract, env.categories);
        check_function(env, &parsed, &meta, file, entry)
    }))
}

fn check_function(
    env: &CheckEnv<'_>,
    parsed: &ParsedSource<'_>,
    meta: &ContractMeta,
    file: &str,
    entry: &FunctionEntry,
) -> FunctionReport {
    let mut report = FunctionReport {
        function_id: record_id(&meta.address, &entry.name),
        contract: entry.contract.clone(),
        function: entry.name.clone(),
        file: file.to_owned(),
        source_span: entry.source_span,
        status: ReportStatus::AuditFailed,
        verdicts: Vec::new(),
        findings: Vec::new(),
        accounting: Accounting::default(),
        templates: Vec::new(),
        common_template: None,
        error: None,
        raw_reply: None,
    };
    let ctx = match build_audit_context(env, parsed, meta, file, entry) {
        Ok(ContextOutcome::Ready(ctx)) => ctx,
        Ok(ContextOutcome::NoReference { reason, session }) => {
            report.status = ReportStatus::NoReference;
            report.error = Some(reason);
            report.accounting.add(&session);
            return report;
        }
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    report.accounting.add(&ctx.session);
    report.templates = ctx
        .templates
        .iter()
        .map(|c| TemplateRef {
            id: c.record.id.clone(),
            contract: c.record.contract.name.clone(),
            function: c.record.expanded.entry.name.clone(),
            similarity: c.similarity,
        })
        .collect();
    report.common_template = Some(ctx.common.clone());
    let out = audit(&ctx, env);
    report.accounting.add(&out.session);
    report.status = out.status;
    report.verdicts = out.verdicts;
    report.findings = out.findings;
    report.error = out.error;
    report.raw_reply = out.raw_reply;
    report
}

pub fn reports_to_json(reports: &[FunctionReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize") + "\n"
}

pub fn reports_from_json(text: &str) -> Result<Vec<FunctionReport>, serde_json::Error> {
    serde_json::from_str(text)
}

/// Plain-text rendering for people.
pub fn render_text(reports: &[FunctionReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let status = serde_json::to_value(r.status).expect("status serializes");
        let _ = writeln!(out, "{}.{} [{}] {}", r.contract, r.function, status.as_str().unwrap_or_default(), r.file);
        if let Some(e) = &r.error {
            let _ = writeln!(out, "  note: {e}");
        }
        for v in &r.verdicts {
            let s = serde_json::to_value(v.status).expect("status serializes");
            let _ = writeln!(out, "  {:<22} {}", s.as_str().unwrap_or_default(), v.invariant);
        }
        for f in &r.findings {
            let c = serde_json::to_value(f.classification).expect("classification serializes");
            let _ = writeln!(out, "  FINDING {} {}: {}", c.as_str().unwrap_or_default(), f.invariant, f.rationale);
        }
        let _ = writeln!(out, "  tokens={} ms={}", r.accounting.tokens, r.accounting.ms);
    }
    out
}
