//! Pragmatic Solidity source analysis.
//!
//! Works on flattened single-file sources. Declarations are parsed exactly,
//! statements are recognized by their leading tokens, and expressions are
//! treated as token streams.

mod checks;
mod lexer;
mod parser;
mod writers;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use checks::{count_explicit_checks, explicit_checks_in, CheckKind, ExplicitCheck};
pub use lexer::{tokenize, Token, TokenKind};
use parser::{parse_source, Callable, CallableKind, SourceUnit};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolidityError {
    #[error("parse failure at offset {offset}: {reason}")]
    ParseFailure { offset: usize, reason: String },
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("no `pragma solidity` directive")]
    MissingPragma,
}

impl SolidityError {
    pub(crate) fn parse(offset: usize, reason: impl Into<String>) -> Self {
        SolidityError::ParseFailure { offset, reason: reason.into() }
    }
}

/// Half-open byte range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn contains(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    External,
    Internal,
    Private,
}

impl fmt::Display for Visibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Visibility::Public => "public",
            Visibility::External => "external",
            Visibility::Internal => "internal",
            Visibility::Private => "private",
        })
    }
}

/// A function declaration located in a contract file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionEntry {
    /// Enclosing contract, empty for file-level functions.
    pub contract: String,
    pub name: String,
    pub visibility: Visibility,
    /// The whole declaration.
    pub source_span: Span,
    /// Declaration text, header included.
    pub body_text: String,
    pub modifiers: Vec<String>,
}

/// One inlined declaration of an expansion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InlinedPart {
    pub name: String,
    pub span: Span,
}

/// An entry function with its same-file call chain inlined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedFunction {
    pub entry: FunctionEntry,
    /// Entry declaration followed by each reached internal function and
    /// applied modifier exactly once, joined by newlines.
    pub expanded_source: String,
    /// Every called or applied identifier, resolved or not.
    pub reached_names: BTreeSet<String>,
    /// Inlined declarations in expansion order, entry first.
    pub parts: Vec<InlinedPart>,
}

/// A parsed contract file.
pub struct ParsedSource<'a> {
    src: &'a str,
    unit: SourceUnit,
}

// Never resolved as calls.
const NON_CALLS: &[&str] = &[
    "require", "assert", "revert", "if", "for", "while", "do", "return", "returns", "emit", "new",
    "delete", "catch", "try", "type", "keccak256", "sha256", "ripemd160", "ecrecover", "addmod",
    "mulmod", "blockhash", "selfdestruct", "gasleft", "address", "payable", "bool", "string",
    "bytes", "mapping", "unchecked", "assembly", "super", "this",
];

pub(crate) fn is_elementary_type(name: &str) -> bool {
    let numeric = |prefix: &str| {
        name.strip_prefix(prefix).is_some_and(|rest| rest.is_empty() || rest.bytes().all(|b| b.is_ascii_digit() || b == b'x'))
    };
    matches!(name, "address" | "bool" | "string" | "bytes" | "byte" | "var")
        || numeric("uint")
        || numeric("int")
        || numeric("bytes")
        || numeric("ufixed")
        || numeric("fixed")
}

impl<'a> ParsedSource<'a> {
    pub fn parse(src: &'a str) -> Result<Self, SolidityError> {
        Ok(Self { src, unit: parse_source(src)? })
    }

    pub fn source(&self) -> &'a str {
        self.src
    }

    fn entry_of(&self, c: &Callable) -> FunctionEntry {
        FunctionEntry {
            contract: c.contract.clone(),
            name: c.name.clone(),
            visibility: c.visibility,
            source_span: c.span,
            body_text: self.src[c.span.start..c.span.end].to_owned(),
            modifiers: c.modifiers.clone(),
        }
    }

    fn callable_for(&self, entry: &FunctionEntry) -> Option<&Callable> {
        self.unit.callables.iter().find(|c| c.span == entry.source_span && c.name == entry.name)
    }

    /// Public and external functions with bodies, in declaration order.
    /// Constructors, modifiers, `receive` and `fallback` are excluded.
    pub fn public_functions(&self) -> Vec<FunctionEntry> {
        self.unit
            .callables
            .iter()
            .filter(|c| {
                c.kind == CallableKind::Function
                    && c.body.is_some()
                    && matches!(c.visibility, Visibility::Public | Visibility::External)
            })
            .map(|c| self.entry_of(c))
            .collect()
    }

    /// Every function-like declaration with a body (modifiers excluded).
    pub fn all_functions(&self) -> Vec<FunctionEntry> {
        self.unit
            .callables
            .iter()
            .filter(|c| c.kind != CallableKind::Modifier && c.body.is_some())
            .map(|c| self.entry_of(c))
            .collect()
    }

    /// Names of contract-level state variables declared anywhere in the file.
    pub fn state_variables(&self) -> BTreeSet<String> {
        self.unit.state_vars.iter().map(|v| v.name.clone()).collect()
    }

    /// Name and kind of every contract, interface and library, with spans.
    pub fn contracts(&self) -> Vec<(String, Span)> {
        self.unit.containers.iter().map(|(n, _, s)| (n.clone(), *s)).collect()
    }

    fn tokens_in(&self, span: Span) -> &[Token] {
        let toks = &self.unit.tokens;
        let lo = toks.partition_point(|t| t.span.start < span.start);
        let hi = toks.partition_point(|t| t.span.start < span.end);
        &toks[lo..hi]
    }

    /// Identifiers called as functions inside `c`'s body, in textual order,
    /// flagged when the call is a member access (`x.f(...)`).
    fn calls_in(&self, c: &Callable) -> Vec<(&'a str, bool)> {
        let Some(body) = c.body else { return Vec::new() };
        let toks = self.tokens_in(body);
        let mut out = Vec::new();
        for (i, t) in toks.iter().enumerate() {
            if t.kind != TokenKind::Ident || toks.get(i + 1).map(|n| n.text(self.src)) != Some("(") {
                continue;
            }
            let name = t.text(self.src);
            let prev = i.checked_sub(1).map(|p| toks[p].text(self.src));
            if matches!(prev, Some("emit" | "revert" | "new" | "function")) {
                continue;
            }
            if NON_CALLS.contains(&name) || is_elementary_type(name) || self.unit.type_names.iter().any(|n| n == name) {
                continue;
            }
            out.push((name, prev == Some(".")));
        }
        out
    }

    /// Inlines the same-file call chain of `entry`.
    pub fn expand(&self, entry: &FunctionEntry) -> Result<ExpandedFunction, SolidityError> {
        let root = self.callable_for(entry).ok_or_else(|| SolidityError::UnknownFunction(entry.name.clone()))?;
        let resolvable = |name: &str, modifier: bool| -> Vec<&Callable> {
            self.unit
                .callables
                .iter()
                .filter(|c| {
                    c.name == name
                        && c.body.is_some()
                        && if modifier {
                            c.kind == CallableKind::Modifier
                        } else {
                            c.kind == CallableKind::Function
                                && matches!(c.visibility, Visibility::Internal | Visibility::Private)
                        }
                })
                .collect()
        };

        let mut visited: HashSet<Span> = HashSet::new();
        let mut parts = Vec::new();
        let mut reached = BTreeSet::new();
        let mut texts = Vec::new();
        // depth-first pre-order: modifiers first, then calls in textual order
        let mut stack = vec![root];
        while let Some(c) = stack.pop() {
            if !visited.insert(c.span) {
                continue;
            }
            texts.push(&self.src[c.span.start..c.span.end]);
            parts.push(InlinedPart { name: c.name.clone(), span: c.span });
            let mut next: Vec<&Callable> = Vec::new();
            for m in &c.modifiers {
                reached.insert(m.clone());
                next.extend(resolvable(m, true));
            }
            for (name, member) in self.calls_in(c) {
                reached.insert(name.to_owned());
                if member {
                    continue;
                }
                let targets = resolvable(name, false);
                if targets.len() > 1 {
                    log::warn!("overloaded internal function {name:?}: inlining all {} definitions", targets.len());
                }
                next.extend(targets);
            }
            stack.extend(next.into_iter().rev().filter(|n| !visited.contains(&n.span)));
        }
        Ok(ExpandedFunction {
            entry: self.entry_of(root),
            expanded_source: texts.join("\n"),
            reached_names: reached,
            parts,
        })
    }

    pub fn find_state_variable_writers(&self, expanded: &ExpandedFunction) -> Vec<FunctionEntry> {
        writers::find_writers(self, expanded)
    }
}

/// Minor series `X` of the first `pragma solidity` directive's lowest `0.X.Y` bound.
pub fn extract_pragma_major(source: &str) -> Result<u32, SolidityError> {
    let directive = match tokenize(source) {
        Ok(tokens) => {
            let pos = tokens.windows(2).position(|w| w[0].text(source) == "pragma" && w[1].text(source) == "solidity");
            let pos = pos.ok_or(SolidityError::MissingPragma)?;
            let start = tokens[pos + 1].span.end;
            let end = tokens[pos..].iter().find(|t| t.text(source) == ";").map_or(source.len(), |t| t.span.start);
            &source[start..end]
        }
        Err(_) => {
            let at = source.find("pragma solidity").ok_or(SolidityError::MissingPragma)?;
            let rest = &source[at + "pragma solidity".len()..];
            &rest[..rest.find(';').unwrap_or(rest.len())]
        }
    };
    directive
        .split(|c: char| !(c.is_ascii_digit() || c == '.'))
        .filter_map(|tok| {
            let mut parts = tok.split('.');
            let major: u32 = parts.next()?.parse().ok()?;
            let minor: u32 = parts.next()?.parse().ok()?;
            let patch: u32 = parts.next().and_then(|p| p.parse().ok()).unwrap_or(0);
            (major == 0).then_some((minor, patch))
        })
        .min()
        .map(|(minor, _)| minor)
        .ok_or(SolidityError::MissingPragma)
}

pub fn enumerate_public_functions(source: &str) -> Result<Vec<FunctionEntry>, SolidityError> {
    Ok(ParsedSource::parse(source)?.public_functions())
}

/// Expands the first public or external function called `name`.
pub fn expand_call_chain(source: &str, name: &str) -> Result<ExpandedFunction, SolidityError> {
    let parsed = ParsedSource::parse(source)?;
    let mut candidates = parsed.public_functions().into_iter().filter(|f| f.name == name);
    let entry = candidates.next().ok_or_else(|| SolidityError::UnknownFunction(name.to_owned()))?;
    if candidates.next().is_some() {
        log::warn!("overloaded public function {name:?}: expanding the first declaration");
    }
    parsed.expand(&entry)
}

pub fn find_state_variable_writers(source: &str, expanded: &ExpandedFunction) -> Result<Vec<FunctionEntry>, SolidityError> {
    Ok(ParsedSource::parse(source)?.find_state_variable_writers(expanded))
}

/// `SKIP <path> <offset> <reason>` log line for an unparseable file.
pub fn skip_line(path: &str, err: &SolidityError) -> String {
    match err {
        SolidityError::ParseFailure { offset, reason } => format!("SKIP {path} {offset} {reason}"),
        other => format!("SKIP {path} 0 {other}"),
    }
}
