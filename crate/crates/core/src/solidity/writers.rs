//! Functions that write the state variables an expanded function touches.

use std::collections::{BTreeSet, HashSet};

use super::lexer::{tokenize, Token, TokenKind};
use super::parser::CallableKind;
use super::{is_elementary_type, ExpandedFunction, FunctionEntry, ParsedSource};

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "|=", "&=", "^=", "<<=", ">>=", ">>>="];

// Tokens that may precede an identifier without making it a declaration.
const STATEMENT_KEYWORDS: &[&str] = &["return", "else", "do", "delete", "emit", "revert", "new", "case", "unchecked"];

/// State variables referenced (not member-accessed) in `tokens`.
fn referenced<'a>(src: &'a str, tokens: &[Token], state: &BTreeSet<String>) -> BTreeSet<&'a str> {
    tokens
        .iter()
        .enumerate()
        .filter(|(i, t)| {
            t.kind == TokenKind::Ident
                && state.contains(t.text(src))
                && !(*i > 0 && tokens[i - 1].text(src) == ".")
        })
        .map(|(_, t)| t.text(src))
        .collect()
}

fn is_declaration_prefix(prev: &str, kind: TokenKind) -> bool {
    match kind {
        TokenKind::Ident => !STATEMENT_KEYWORDS.contains(&prev),
        TokenKind::Punct => prev == "]",
        _ => false,
    }
}

/// Names written in `toks`, excluding locally declared or parameter names.
pub(super) fn written_names<'a>(src: &'a str, toks: &[Token], params: &[String]) -> BTreeSet<&'a str> {
    let text = |i: usize| toks.get(i).map(|t| t.text(src));
    let mut locals: HashSet<&str> = params.iter().map(String::as_str).collect();
    let mut written = BTreeSet::new();

    let skip_accessors = |mut j: usize| -> usize {
        loop {
            match text(j) {
                Some("[") => {
                    let mut depth = 0;
                    while j < toks.len() {
                        match text(j) {
                            Some("[") => depth += 1,
                            Some("]") => {
                                depth -= 1;
                                if depth == 0 {
                                    break;
                                }
                            }
                            _ => {}
                        }
                        j += 1;
                    }
                    j += 1;
                }
                Some(".") if toks.get(j + 1).is_some_and(|t| t.kind == TokenKind::Ident) => j += 2,
                _ => return j,
            }
        }
    };

    for i in 0..toks.len() {
        let t = toks[i];
        if t.kind != TokenKind::Ident {
            continue;
        }
        let name = t.text(src);
        let prev = i.checked_sub(1).map(|p| (toks[p].text(src), toks[p].kind));
        if matches!(prev, Some((".", _))) {
            continue;
        }
        if let Some((p, kind)) = prev {
            if is_declaration_prefix(p, kind) && !is_elementary_type(name) {
                // `uint256 x`, `Foo memory x`, `uint[] x`
                let next = text(i + 1);
                if matches!(next, Some("=" | ";" | "," | ")")) {
                    locals.insert(name);
                    continue;
                }
            }
            if p == "delete" || p == "++" || p == "--" {
                written.insert(name);
                continue;
            }
        }
        let after = skip_accessors(i + 1);
        if let Some(op) = text(after) {
            if ASSIGN_OPS.contains(&op) || op == "++" || op == "--" {
                written.insert(name);
            }
        }
    }

    // tuple destructuring: `(a, b) = f()`
    for i in 0..toks.len() {
        if text(i) != Some("(") {
            continue;
        }
        let mut depth = 0;
        let mut close = None;
        for j in i..toks.len() {
            match text(j) {
                Some("(") => depth += 1,
                Some(")") => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(j);
                        break;
                    }
                }
                _ => {}
            }
        }
        let Some(close) = close else { continue };
        if text(close + 1) != Some("=") {
            continue;
        }
        let mut element: Vec<Token> = Vec::new();
        for (j, tok) in toks.iter().enumerate().take(close + 1).skip(i + 1) {
            let tt = text(j).unwrap_or_default();
            if (tt == "," || j == close) && !element.is_empty() {
                let first = element[0];
                let declares = element.get(1).is_some_and(|t| t.kind == TokenKind::Ident);
                if first.kind == TokenKind::Ident && !declares {
                    written.insert(first.text(src));
                }
                element.clear();
            } else if tt != "," {
                element.push(*tok);
            }
        }
    }

    written.retain(|n| !locals.contains(n));
    written
}

pub(super) fn find_writers(parsed: &ParsedSource<'_>, expanded: &ExpandedFunction) -> Vec<FunctionEntry> {
    let src = parsed.src;
    let state = parsed.state_variables();
    let Ok(expanded_tokens) = tokenize(&expanded.expanded_source) else { return Vec::new() };
    let shared = referenced(&expanded.expanded_source, &expanded_tokens, &state);
    if shared.is_empty() {
        return Vec::new();
    }
    let inlined: HashSet<_> = expanded.parts.iter().map(|p| p.span).collect();
    parsed
        .unit
        .callables
        .iter()
        .filter(|c| matches!(c.kind, CallableKind::Function | CallableKind::Receive | CallableKind::Fallback))
        .filter(|c| !inlined.contains(&c.span) && c.span != expanded.entry.source_span)
        .filter(|c| {
            let Some((lo, hi)) = c.body_tokens else { return false };
            let written = written_names(src, &parsed.unit.tokens[lo..hi], &c.params);
            written.iter().any(|w| shared.contains(w))
        })
        .map(|c| parsed.entry_of(c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn written(body: &str) -> Vec<String> {
        let toks = tokenize(body).unwrap();
        written_names(body, &toks, &[]).into_iter().map(str::to_owned).collect()
    }

    #[test]
    fn assignment_forms() {
        assert_eq!(written("{ reserves = x; }"), ["reserves"]);
        assert_eq!(written("{ balances[to] += v; }"), ["balances"]);
        assert_eq!(written("{ info[a].b.c = 1; }"), ["info"]);
        assert_eq!(written("{ delete owner; }"), ["owner"]);
        assert_eq!(written("{ count++; --total; }"), ["count", "total"]);
        assert_eq!(written("{ (a, , b) = f(); }"), ["a", "b"]);
        assert_eq!(written("{ x >>= 2; }"), ["x"]);
        // field of a state struct
        assert_eq!(written("{ token.total = 1; }"), ["token"]);
    }

    #[test]
    fn reads_and_declarations_are_not_writes() {
        assert!(written("{ uint256 reserves = 1; reserves = 2; }").is_empty());
        assert!(written("{ if (a == b) { return c; } }").is_empty());
        assert!(written("{ Info memory info = infos[id]; info.x = 1; }").is_empty());
        assert!(written("{ (uint a, uint b) = f(); }").is_empty());
        assert!(written("{ m[k] == v; x => y; }").is_empty());
    }

    #[test]
    fn params_shadow_state() {
        let body = "{ reserves = 1; }";
        let toks = tokenize(body).unwrap();
        assert!(written_names(body, &toks, &["reserves".into()]).is_empty());
    }
}
