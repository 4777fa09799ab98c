//! Explicit validation statements: `require(...)`, `assert(...)` and
//! revert-guarded `if` branches.

use serde::{Deserialize, Serialize};

use super::lexer::{tokenize, Token, TokenKind};
use super::{ExpandedFunction, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Require,
    Assert,
    IfRevert,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplicitCheck {
    pub kind: CheckKind,
    /// Offsets into the text the check was found in.
    pub source_span: Span,
    pub condition_text: String,
}

/// Checks in `expanded.expanded_source`, in textual order.
pub fn count_explicit_checks(expanded: &ExpandedFunction) -> Vec<ExplicitCheck> {
    explicit_checks_in(&expanded.expanded_source)
}

/// Checks in arbitrary Solidity text. Unlexable text yields no checks.
pub fn explicit_checks_in(src: &str) -> Vec<ExplicitCheck> {
    let toks = match tokenize(src) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("check scan skipped: {e}");
            return Vec::new();
        }
    };
    let s = Scan { src, toks: &toks };
    let mut out = Vec::new();
    for i in 0..toks.len() {
        if toks[i].kind != TokenKind::Ident || s.text(i + 1) != Some("(") {
            continue;
        }
        let prev = i.checked_sub(1).and_then(|p| s.text(p));
        if matches!(prev, Some("." | "function" | "modifier" | "event" | "error" | "emit")) {
            continue;
        }
        let Some(close) = s.matching(i + 1) else { continue };
        let kind = match s.text(i) {
            Some("require") => CheckKind::Require,
            Some("assert") => CheckKind::Assert,
            Some("if") => {
                if !s.then_branch_reverts(close + 1) {
                    continue;
                }
                CheckKind::IfRevert
            }
            _ => continue,
        };
        let cond_end = match kind {
            CheckKind::IfRevert => close,
            _ => s.first_arg_end(i + 1, close),
        };
        let condition_text = if cond_end > i + 2 {
            src[toks[i + 2].span.start..toks[cond_end - 1].span.end].to_owned()
        } else {
            String::new()
        };
        let end = match kind {
            CheckKind::IfRevert => s.statement_end(close + 1).map_or(toks[close].span.end, |e| toks[e - 1].span.end),
            _ => toks[close].span.end,
        };
        out.push(ExplicitCheck { kind, source_span: Span { start: toks[i].span.start, end }, condition_text });
    }
    out
}

struct Scan<'a> {
    src: &'a str,
    toks: &'a [Token],
}

impl<'a> Scan<'a> {
    fn text(&self, i: usize) -> Option<&'a str> {
        self.toks.get(i).map(|t| t.text(self.src))
    }

    fn matching(&self, open: usize) -> Option<usize> {
        let mut depth = 0usize;
        for i in open..self.toks.len() {
            if self.toks[i].kind != TokenKind::Punct {
                continue;
            }
            match self.text(i)? {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => {
                    depth = depth.checked_sub(1)?;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                _ => {}
            }
        }
        None
    }

    /// Index one past the last token of the first call argument.
    fn first_arg_end(&self, open: usize, close: usize) -> usize {
        let mut i = open + 1;
        while i < close {
            match self.text(i) {
                Some("(" | "[" | "{") => i = self.matching(i).map_or(close, |m| m + 1),
                Some(",") => return i,
                _ => i += 1,
            }
        }
        close
    }

    /// Index one past the statement starting at `i`.
    fn statement_end(&self, i: usize) -> Option<usize> {
        match self.text(i)? {
            "{" => self.matching(i).map(|m| m + 1),
            "if" | "while" | "for" => {
                let close = self.matching(i + 1)?;
                let mut end = self.statement_end(close + 1)?;
                if self.text(i) == Some("if") && self.text(end) == Some("else") {
                    end = self.statement_end(end + 1)?;
                }
                Some(end)
            }
            "unchecked" => self.statement_end(i + 1),
            _ => {
                let mut j = i;
                loop {
                    match self.text(j)? {
                        "(" | "[" | "{" => j = self.matching(j)? + 1,
                        ";" => return Some(j + 1),
                        _ => j += 1,
                    }
                }
            }
        }
    }

    /// Whether the statement at `i` is, or is a block directly containing,
    /// a `revert` or `throw` statement. Nested control flow does not count.
    fn then_branch_reverts(&self, i: usize) -> bool {
        match self.text(i) {
            Some("revert" | "throw") => true,
            Some("{") => {
                let Some(close) = self.matching(i) else { return false };
                let mut j = i + 1;
                while j < close {
                    if matches!(self.text(j), Some("revert" | "throw")) {
                        return true;
                    }
                    if self.text(j) == Some("{") {
                        // plain nested block
                        if self.then_branch_reverts(j) {
                            return true;
                        }
                    }
                    match self.statement_end(j) {
                        Some(end) if end > j => j = end,
                        _ => return false,
                    }
                }
                false
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(CheckKind, String)> {
        explicit_checks_in(src).into_iter().map(|c| (c.kind, c.condition_text)).collect()
    }

    #[test]
    fn require_and_assert() {
        assert_eq!(
            kinds("function f() external { require(bal >= amount, \"insufficient\"); assert(x); }"),
            [(CheckKind::Require, "bal >= amount".into()), (CheckKind::Assert, "x".into())]
        );
    }

    #[test]
    fn if_revert_forms() {
        assert_eq!(kinds("if (x == 0) revert Zero();"), [(CheckKind::IfRevert, "x == 0".into())]);
        assert_eq!(kinds("if (a) { emit E(); revert(\"no\"); }"), [(CheckKind::IfRevert, "a".into())]);
        assert_eq!(kinds("if (a) throw;"), [(CheckKind::IfRevert, "a".into())]);
        assert_eq!(kinds("if (a) { x = 1; } else { revert(); }"), []);
        assert_eq!(kinds("if (a) return; if (b) { { revert(); } }").len(), 1);
    }

    #[test]
    fn nested_if_counts_once() {
        let got = kinds("if (a) { if (b) revert(); }");
        assert_eq!(got, [(CheckKind::IfRevert, "b".into())]);
        let got = kinds("if (a) { for (uint i; i < n; i++) { revert(); } }");
        assert!(got.is_empty());
        let got = kinds("if (a) { x++; } else if (b) { revert(); }");
        assert_eq!(got, [(CheckKind::IfRevert, "b".into())]);
    }

    #[test]
    fn member_and_declarations_are_not_checks() {
        assert!(kinds("lib.require(x); function require(bool c) internal {}").is_empty());
    }

    #[test]
    fn spans_cover_statement() {
        let src = "  if (x == 0) revert Zero(); require(y);";
        let checks = explicit_checks_in(src);
        assert_eq!(&src[checks[0].source_span.start..checks[0].source_span.end], "if (x == 0) revert Zero();");
        assert_eq!(&src[checks[1].source_span.start..checks[1].source_span.end], "require(y)");
    }
}
