//! Prompt templates with `{name}` placeholders (`{{` and `}}` for literal braces).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bsl::GRAMMAR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    #[serde(rename = "R1_func_desc")]
    R1FuncDesc,
    #[serde(rename = "R2_logic_summary")]
    R2LogicSummary,
    #[serde(rename = "R3_bsl_gen")]
    R3BslGen,
    #[serde(rename = "R4_repair")]
    R4Repair,
    #[serde(rename = "C1_induction")]
    C1Induction,
    #[serde(rename = "C2_verification")]
    C2Verification,
    #[serde(rename = "C3_deviation")]
    C3Deviation,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        Self::R1FuncDesc,
        Self::R2LogicSummary,
        Self::R3BslGen,
        Self::R4Repair,
        Self::C1Induction,
        Self::C2Verification,
        Self::C3Deviation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::R1FuncDesc => "R1_func_desc",
            Self::R2LogicSummary => "R2_logic_summary",
            Self::R3BslGen => "R3_bsl_gen",
            Self::R4Repair => "R4_repair",
            Self::C1Induction => "C1_induction",
            Self::C2Verification => "C2_verification",
            Self::C3Deviation => "C3_deviation",
        }
    }

    /// Built-in prompt text for this id.
    pub fn default_text(self) -> &'static str {
        match self {
            Self::R1FuncDesc => R1,
            Self::R2LogicSummary => R2,
            Self::R3BslGen => R3,
            Self::R4Repair => R4,
            Self::C1Induction => C1,
            Self::C2Verification => C2,
            Self::C3Deviation => C3,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown template id {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template}: placeholder {{{name}}} is not bound")]
    Unbound { template: TemplateId, name: String },
    #[error("template {template}: malformed placeholder at byte {offset}")]
    Malformed { template: TemplateId, offset: usize },
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(text: &str) -> Result<Vec<Piece<'_>>, usize> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut start) = (0, 0);
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Text(&text[start..=i]));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Text(&text[start..=i]));
                i += 2;
                start = i;
            }
            b'{' => {
                let close = text[i..].find('}').map(|c| i + c).ok_or(i)?;
                let name = &text[i + 1..close];
                let valid = name.bytes().next().is_some_and(|b| b.is_ascii_lowercase())
                    && name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
                if !valid {
                    return Err(i);
                }
                out.push(Piece::Text(&text[start..i]));
                out.push(Piece::Slot(name));
                i = close + 1;
                start = i;
            }
            b'}' => return Err(i),
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&text[start..]));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    text: String,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        pieces(&text).map_err(|offset| TemplateError::Malformed { template: id, offset })?;
        Ok(Self { id, text })
    }

    pub fn builtin(id: TemplateId) -> Self {
        Self::new(id, id.default_text()).expect("built-in templates are well formed")
    }

    /// Follow-up turn asking for a schema-conforming reply in phase `id`.
    pub fn reask(id: TemplateId) -> Self {
        Self::new(id, REASK).expect("re-ask template is well formed")
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        pieces(&self.text)
            .expect("validated at construction")
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name),
                Piece::Text(_) => None,
            })
            .collect()
    }

    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.text.len());
        for piece in pieces(&self.text).expect("validated at construction") {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = bindings.iter().find(|(k, _)| *k == name).map(|(_, v)| *v).ok_or_else(|| {
                        TemplateError::Unbound { template: self.id, name: name.to_owned() }
                    })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

/// The full template set used by the miner and the checker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    templates: Vec<PromptTemplate>,
}

impl Default for Templates {
    fn default() -> Self {
        Self { templates: TemplateId::ALL.into_iter().map(PromptTemplate::builtin).collect() }
    }
}

impl Templates {
    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        self.templates.iter().find(|t| t.id == id).expect("every id has a template")
    }

    pub fn set(&mut self, template: PromptTemplate) {
        if let Some(slot) = self.templates.iter_mut().find(|t| t.id == template.id) {
            *slot = template;
        }
    }
}

/// The grammar text bound into the BSL generation prompt.
pub fn grammar_binding() -> &'static str {
    GRAMMAR
}

const R1: &str = "Analyze function `{name}` and call chain\n```solidity\n{code}\n```\nin a DeFi {category} contract. \
Generate a 1-sentence description following: \"This function is used to <purpose>, accepts <inputs>, processes <logic>, \
and outputs <result>.\"";

const R2: &str = "Summarize mandatory pre-execution checks (focusing on `require`, `assert`, `revert`) into a single \
sentence. Output only the summary without explanation.";

const R3: &str = "Convert checks to BSL (syntax: {grammar}). Format: `order(check[cond1, ...], action)`. Rules: \
1) Map explicit validation to positive preconditions (invert `if...revert` logic). 2) Action reflects semantic purpose. \
Example: `order(check[balance_ge_reserve], swap)`. Output only the BSL.";

const R4: &str = "The generated BSL failed validation. Error: syntax error at {error_message}; count mismatch: source \
{actual_count} vs BSL {bsl_count}. Output only the corrected BSL.";

const C1: &str = "You are auditing a function `{name}` of a DeFi {category} contract (Solidity 0.{major}). Below are \
{k} reference implementations of the same functionality, each with its normalized specification.\n\n{templates}\n\n\
Summarize the business invariants (pre-execution checks) these reference implementations commonly enforce, one per line.";

const C2: &str = "Majority voting over the references' normalized specifications yields the following common template. \
Treat it as the authoritative checklist and correct your summary where it disagrees.\n{common_template}\n\n\
Target function `{name}` with its complete internal call chain:\n```solidity\n{code}\n```\n{writers}\
For EACH checklist invariant decide whether the target enforces it explicitly (enforced), enforces a logically \
equivalent check in a different coding style (semantically_preserved), does not enforce it (missing), or enforces it \
only in part (partial). Quote the target code as evidence, or explain the absence.\n\
Reply with JSON only: {{\"verdicts\": [{{\"invariant\": \"<name>\", \"status\": \
\"enforced|semantically_preserved|missing|partial\", \"evidence\": \"<text>\"}}]}}";

const C3: &str = "For each invariant below that the target does not fully enforce, decide whether the deviation is a \
benign design choice (benign_deviation) or an omission that may allow exploitable or inconsistent behaviour \
(review_worthy).\n{invariants}\n\
Reply with JSON only: {{\"deviations\": [{{\"invariant\": \"<name>\", \"classification\": \
\"review_worthy|benign_deviation\", \"rationale\": \"<text>\"}}]}}";

const REASK: &str = "Your previous reply was rejected: {error}. Reply again with JSON only, exactly following the \
requested schema.";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_well_formed() {
        let t = Templates::default();
        assert_eq!(t.get(TemplateId::R4Repair).placeholders(), ["actual_count", "bsl_count", "error_message"].into());
        assert_eq!(t.get(TemplateId::R2LogicSummary).placeholders().len(), 0);
        for id in TemplateId::ALL {
            assert_eq!(id.as_str().parse::<TemplateId>().unwrap(), id);
            assert_eq!(serde_json::to_string(&id).unwrap(), format!("\"{id}\""));
        }
    }

    #[test]
    fn render_and_escapes() {
        let t = PromptTemplate::new(TemplateId::C3Deviation, "{{\"a\": {x}}} {y}").unwrap();
        assert_eq!(t.render(&[("x", "1"), ("y", "z")]).unwrap(), "{\"a\": 1} z");
        let err = t.render(&[("x", "1")]).unwrap_err();
        assert_eq!(err.to_string(), "template C3_deviation: placeholder {y} is not bound");
    }

    #[test]
    fn unbound_category() {
        let err = Templates::default().get(TemplateId::R1FuncDesc).render(&[("name", "f"), ("code", "c")]).unwrap_err();
        assert_eq!(err, TemplateError::Unbound { template: TemplateId::R1FuncDesc, name: "category".into() });
    }

    #[test]
    fn malformed_templates() {
        for bad in ["{", "}", "{Bad}", "{ x}", "{}"] {
            assert!(PromptTemplate::new(TemplateId::R1FuncDesc, bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn c2_renders_literal_schema() {
        let out = Templates::default()
            .get(TemplateId::C2Verification)
            .render(&[("common_template", "t"), ("name", "f"), ("code", "c"), ("writers", "")])
            .unwrap();
        assert!(out.contains("{\"verdicts\": [{\"invariant\""));
    }
}
