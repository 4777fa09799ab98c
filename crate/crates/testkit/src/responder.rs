//! A rule-based stand-in for a chat model.
//!
//! The responder recognizes each built-in prompt by its opening words and
//! answers from fixed tables: descriptions and specifications per function
//! name, keyword rules for verification and a list of benign deviations.
//! It is deterministic, so transcripts recorded against it replay exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureResponder {
    /// Function name to one-sentence functional description.
    #[serde(default)]
    pub descriptions: BTreeMap<String, String>,
    /// Function name to successive specification replies: index 0 answers
    /// the generation prompt, index `i` the `i`-th repair prompt (the last
    /// entry repeats).
    #[serde(default)]
    pub bsl: BTreeMap<String, Vec<String>>,
    /// Invariant to source fragments that count as enforcing it.
    #[serde(default)]
    pub keywords: BTreeMap<String, Vec<String>>,
    /// Invariants whose absence is judged benign, with the rationale.
    #[serde(default)]
    pub benign: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Describe,
    Summarize,
    Generate,
    Repair,
    Induce,
    Verify,
    Classify,
    Reask,
}

fn phase_of(prompt: &str) -> Option<Phase> {
    const PREFIXES: &[(&str, Phase)] = &[
        ("Analyze function `", Phase::Describe),
        ("Summarize mandatory", Phase::Summarize),
        ("Convert checks to BSL", Phase::Generate),
        ("The generated BSL failed validation", Phase::Repair),
        ("You are auditing a function `", Phase::Induce),
        ("Majority voting over", Phase::Verify),
        ("For each invariant below", Phase::Classify),
        ("Your previous reply was rejected", Phase::Reask),
    ];
    PREFIXES.iter().find(|(p, _)| prompt.starts_with(p)).map(|(_, ph)| *ph)
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let len = text[start..].find(close)?;
    Some(&text[start..start + len])
}

fn snake(name: &str) -> String {
    let mut out = String::new();
    for (i, c) in name.chars().enumerate() {
        if c.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else if c.is_ascii_alphanumeric() || c == '_' {
            out.push(c);
        }
    }
    match out.chars().next() {
        Some(c) if c.is_ascii_lowercase() => out,
        _ => format!("f_{out}"),
    }
}

impl FixtureResponder {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Reply to a conversation of `(role, content)` pairs whose last entry is
    /// the user turn to answer.
    pub fn reply(&self, messages: &[(String, String)]) -> String {
        let users: Vec<&str> = messages.iter().filter(|(r, _)| r == "user").map(|(_, c)| c.as_str()).collect();
        let Some(&last) = users.last() else { return "No question was asked.".into() };
        let function = users.first().and_then(|first| between(first, "`", "`")).unwrap_or("unknown");
        let mut prompt = last;
        let mut phase = phase_of(last);
        if phase == Some(Phase::Reask) {
            let earlier = users.iter().rev().skip(1).find(|u| !matches!(phase_of(u), Some(Phase::Reask)));
            if let Some(earlier) = earlier {
                prompt = earlier;
                phase = phase_of(earlier);
            }
        }
        match phase {
            Some(Phase::Describe) => self
                .descriptions
                .get(function)
                .cloned()
                .unwrap_or_else(|| format!("This function is used to run {function}.")),
            Some(Phase::Summarize) => summarize(users.first().copied().unwrap_or_default()),
            Some(Phase::Generate) => self.spec(function, 0),
            Some(Phase::Repair) => {
                let repairs = users.iter().filter(|u| phase_of(u) == Some(Phase::Repair)).count();
                self.spec(function, repairs)
            }
            Some(Phase::Induce) => "The references commonly check the caller's balance and the account's solvency \
                before moving funds."
                .into(),
            Some(Phase::Verify) => self.verify(prompt),
            Some(Phase::Classify) => self.classify(prompt),
            Some(Phase::Reask) | None => "I cannot answer that.".into(),
        }
    }

    fn spec(&self, function: &str, attempt: usize) -> String {
        match self.bsl.get(function) {
            Some(replies) if !replies.is_empty() => replies[attempt.min(replies.len() - 1)].clone(),
            _ => format!("order(check[], {})", snake(function)),
        }
    }

    fn verify(&self, prompt: &str) -> String {
        let checklist: Vec<&str> = prompt
            .lines()
            .filter_map(|l| l.strip_prefix("- "))
            .filter_map(|l| l.split(" (enforced by ").next().filter(|_| l.contains(" (enforced by ")))
            .collect();
        let target = between(prompt, "internal call chain:\n```solidity\n", "\n```").unwrap_or_default();
        let writers = between(prompt, "write state this function reads:\n```solidity\n", "\n```").unwrap_or_default();
        let verdicts: Vec<_> = checklist
            .iter()
            .map(|inv| {
                let keys = self.keywords.get(*inv).map(Vec::as_slice).unwrap_or_default();
                let hit = |code: &str| {
                    code.lines().find(|line| keys.iter().any(|k| line.contains(k.as_str()))).map(|l| l.trim().to_owned())
                };
                let (status, evidence) = if let Some(line) = hit(target) {
                    ("enforced", line)
                } else if let Some(line) = hit(writers) {
                    ("semantically_preserved", format!("enforced on the writer path: {line}"))
                } else {
                    ("missing", format!("no check corresponding to {inv} in the target or its call chain"))
                };
                json!({"invariant": inv, "status": status, "evidence": evidence})
            })
            .collect();
        json!({ "verdicts": verdicts }).to_string()
    }

    fn classify(&self, prompt: &str) -> String {
        let deviations: Vec<_> = prompt
            .lines()
            .filter_map(|l| l.strip_prefix("- "))
            .filter_map(|l| l.split(" (").next())
            .map(|inv| match self.benign.get(inv) {
                Some(why) => json!({"invariant": inv, "classification": "benign_deviation", "rationale": why}),
                None => json!({
                    "invariant": inv,
                    "classification": "review_worthy",
                    "rationale": format!("most reference implementations require {inv} before this action"),
                }),
            })
            .collect();
        json!({ "deviations": deviations }).to_string()
    }
}

fn summarize(describe_prompt: &str) -> String {
    let code = between(describe_prompt, "```solidity\n", "\n```").unwrap_or_default();
    let checks: Vec<&str> = code
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with("require(") || l.starts_with("assert(") || l.starts_with("if ("))
        .collect();
    if checks.is_empty() {
        "The function performs no pre-execution checks.".into()
    } else {
        format!("The function checks {} before executing.", checks.join(" and "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(turns: &[&str]) -> Vec<(String, String)> {
        turns
            .iter()
            .enumerate()
            .map(|(i, t)| (if i % 2 == 0 { "user" } else { "assistant" }.to_string(), t.to_string()))
            .collect()
    }

    fn fixture() -> FixtureResponder {
        FixtureResponder::from_json(
            r#"{"descriptions": {"burn": "This function is used to burn."},
                "bsl": {"burn": ["bad", "order(check[a], burn)"]},
                "keywords": {"a": ["bal >= amount"], "b": ["!paused"]},
                "benign": {"c": "harmless"}}"#,
        )
        .unwrap()
    }

    #[test]
    fn mining_conversation() {
        let r = fixture();
        let d = "Analyze function `burn` and call chain\n```solidity\nfunction burn() {\n  require(x);\n}\n```\n";
        assert_eq!(r.reply(&conv(&[d])), "This function is used to burn.");
        assert_eq!(r.reply(&conv(&[d, "x", "Summarize mandatory checks"])), "The function checks require(x); before executing.");
        assert_eq!(r.reply(&conv(&[d, "x", "Summarize", "y", "Convert checks to BSL"])), "bad");
        let repair = conv(&[d, "x", "Summarize", "y", "Convert checks to BSL", "bad", "The generated BSL failed validation"]);
        assert_eq!(r.reply(&repair), "order(check[a], burn)");
    }

    #[test]
    fn verification_by_keywords() {
        let r = fixture();
        let c2 = "Majority voting over things\n- a (enforced by 3 of 5 references)\n- b (enforced by 3 of 5 references)\n\
                  - c (enforced by 1 of 5 references)\n\nTarget function `f` with its complete internal call chain:\n\
                  ```solidity\nrequire(bal >= amount);\n```\nOther functions in the contract that write state this \
                  function reads:\n```solidity\nrequire(!paused);\n```\n";
        let v: serde_json::Value = serde_json::from_str(&r.reply(&conv(&["You are auditing a function `f`", "ok", c2]))).unwrap();
        let statuses: Vec<&str> = v["verdicts"].as_array().unwrap().iter().map(|x| x["status"].as_str().unwrap()).collect();
        assert_eq!(statuses, ["enforced", "semantically_preserved", "missing"]);
        let c3 = "For each invariant below\n- c (missing): none\n- d (partial): some\nReply";
        let v: serde_json::Value = serde_json::from_str(&r.reply(&conv(&["x", "y", c3]))).unwrap();
        assert_eq!(v["deviations"][0]["classification"], "benign_deviation");
        assert_eq!(v["deviations"][1]["classification"], "review_worthy");
    }

    #[test]
    fn reask_repeats_the_previous_phase() {
        let r = fixture();
        let c3 = "For each invariant below\n- c (missing): none\nReply";
        let once = r.reply(&conv(&["x", "y", c3]));
        let again = r.reply(&conv(&["x", "y", c3, "garbage", "Your previous reply was rejected: bad"]));
        assert_eq!(once, again);
    }

    #[test]
    fn default_spec_uses_snake_case_action() {
        assert_eq!(FixtureResponder::default().spec("donateToReserves", 0), "order(check[], donate_to_reserves)");
    }
}
