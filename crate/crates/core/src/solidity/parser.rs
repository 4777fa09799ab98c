//! Declaration-level parser. Function, modifier and state-variable
//! boundaries are recovered exactly; expressions stay token streams.

use super::lexer::{tokenize, Token, TokenKind};
use super::{SolidityError, Span, Visibility};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallableKind {
    Function,
    Modifier,
    Constructor,
    Receive,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Contract,
    Interface,
    Library,
    File,
}

/// A function-like declaration.
#[derive(Debug, Clone)]
pub struct Callable {
    pub contract: String,
    pub kind: CallableKind,
    pub name: String,
    pub visibility: Visibility,
    pub modifiers: Vec<String>,
    /// Whole declaration, keyword through closing brace or `;`.
    pub span: Span,
    /// The `{ ... }` block, absent for bodiless declarations.
    pub body: Option<Span>,
    /// Token index range of `body` in the file token stream.
    pub body_tokens: Option<(usize, usize)>,
    /// Parameter names in declaration order.
    pub params: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct StateVar {
    pub name: String,
}

#[derive(Debug, Clone, Default)]
pub struct SourceUnit {
    pub tokens: Vec<Token>,
    pub callables: Vec<Callable>,
    pub state_vars: Vec<StateVar>,
    /// Contract, interface, library, struct, enum, event and error names.
    pub type_names: Vec<String>,
    /// Contract-like declarations: (name, kind, span).
    pub containers: Vec<(String, ContainerKind, Span)>,
}

pub fn parse_source(src: &str) -> Result<SourceUnit, SolidityError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { src, toks: &tokens, i: 0, unit: SourceUnit::default() };
    p.source_unit()?;
    let mut unit = p.unit;
    unit.tokens = tokens;
    Ok(unit)
}

struct Parser<'a> {
    src: &'a str,
    toks: &'a [Token],
    i: usize,
    unit: SourceUnit,
}

const MUTABILITY: &[&str] = &["pure", "view", "payable", "constant", "nonpayable", "virtual", "immutable", "transient"];

impl<'a> Parser<'a> {
    fn text(&self, idx: usize) -> &'a str {
        self.toks[idx].text(self.src)
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.i).map(|t| t.text(self.src))
    }

    fn peek_at(&self, off: usize) -> Option<&'a str> {
        self.toks.get(self.i + off).map(|t| t.text(self.src))
    }

    fn offset(&self) -> usize {
        self.toks.get(self.i).map_or(self.src.len(), |t| t.span.start)
    }

    fn err(&self, reason: impl Into<String>) -> SolidityError {
        SolidityError::parse(self.offset(), reason)
    }

    fn expect(&mut self, s: &str) -> Result<usize, SolidityError> {
        if self.peek() == Some(s) {
            self.i += 1;
            Ok(self.i - 1)
        } else {
            Err(self.err(format!("expected {s:?}")))
        }
    }

    fn ident(&mut self) -> Result<&'a str, SolidityError> {
        match self.toks.get(self.i) {
            Some(t) if t.kind == TokenKind::Ident => {
                self.i += 1;
                Ok(t.text(self.src))
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    /// Index of the token closing the bracket at `open`.
    fn matching(&self, open: usize) -> Result<usize, SolidityError> {
        let mut stack: Vec<&str> = Vec::new();
        for idx in open..self.toks.len() {
            let t = self.toks[idx];
            if t.kind != TokenKind::Punct {
                continue;
            }
            match t.text(self.src) {
                "(" => stack.push(")"),
                "[" => stack.push("]"),
                "{" => stack.push("}"),
                close @ (")" | "]" | "}") => {
                    if stack.pop() != Some(close) {
                        return Err(SolidityError::parse(t.span.start, format!("unbalanced {close:?}")));
                    }
                    if stack.is_empty() {
                        return Ok(idx);
                    }
                }
                _ => {}
            }
        }
        Err(SolidityError::parse(self.toks[open].span.start, "unclosed bracket"))
    }

    /// Advances past the next `;` at bracket depth zero.
    fn skip_statement(&mut self) -> Result<usize, SolidityError> {
        while let Some(t) = self.peek() {
            match t {
                "(" | "[" | "{" => self.i = self.matching(self.i)? + 1,
                ")" | "]" | "}" => return Err(self.err(format!("unexpected {t:?}"))),
                ";" => {
                    self.i += 1;
                    return Ok(self.i - 1);
                }
                _ => self.i += 1,
            }
        }
        Err(self.err("expected \";\""))
    }

    fn skip_braced(&mut self) -> Result<(), SolidityError> {
        while self.peek().is_some_and(|t| t != "{") {
            if self.peek() == Some(";") {
                return Err(self.err("expected \"{\""));
            }
            self.i += 1;
        }
        if self.peek().is_none() {
            return Err(self.err("expected \"{\""));
        }
        self.i = self.matching(self.i)? + 1;
        Ok(())
    }

    fn source_unit(&mut self) -> Result<(), SolidityError> {
        while let Some(t) = self.peek() {
            match t {
                "pragma" | "import" | "using" | "event" | "error" | "type" => {
                    if matches!(t, "event" | "error") {
                        if let Some(name) = self.peek_at(1) {
                            self.unit.type_names.push(name.to_owned());
                        }
                    }
                    self.skip_statement()?;
                }
                "abstract" | "contract" | "interface" | "library" => self.container()?,
                "function" => self.callable("", ContainerKind::File)?,
                "struct" | "enum" => {
                    if let Some(name) = self.peek_at(1) {
                        self.unit.type_names.push(name.to_owned());
                    }
                    self.skip_braced()?;
                }
                ";" => self.i += 1,
                "}" | ")" | "]" => return Err(self.err(format!("unexpected {t:?}"))),
                // file-level constants and user-defined value types
                _ => {
                    self.skip_statement()?;
                }
            }
        }
        Ok(())
    }

    fn container(&mut self) -> Result<(), SolidityError> {
        let start = self.offset();
        if self.peek() == Some("abstract") {
            self.i += 1;
        }
        let kind = match self.peek() {
            Some("contract") => ContainerKind::Contract,
            Some("interface") => ContainerKind::Interface,
            Some("library") => ContainerKind::Library,
            _ => return Err(self.err("expected contract, interface or library")),
        };
        self.i += 1;
        let name = self.ident()?.to_owned();
        self.unit.type_names.push(name.clone());
        // inheritance list, possibly with constructor arguments
        while let Some(t) = self.peek() {
            match t {
                "{" => break,
                "(" => self.i = self.matching(self.i)? + 1,
                ";" | "}" => return Err(self.err("expected \"{\"")),
                _ => self.i += 1,
            }
        }
        let open = self.expect("{")?;
        let close = self.matching(open)?;
        while self.i < close {
            self.member(&name, kind)?;
        }
        if self.i != close {
            return Err(self.err("declaration overruns contract body"));
        }
        self.i = close + 1;
        let end = self.toks[close].span.end;
        self.unit.containers.push((name, kind, Span { start, end }));
        Ok(())
    }

    fn member(&mut self, contract: &str, container: ContainerKind) -> Result<(), SolidityError> {
        let t = self.peek().ok_or_else(|| self.err("unexpected end of input"))?;
        match t {
            "function" if self.peek_at(1) != Some("(") => self.callable(contract, container),
            "modifier" | "constructor" => self.callable(contract, container),
            "receive" | "fallback" if self.peek_at(1) == Some("(") => self.callable(contract, container),
            "event" | "error" | "using" => {
                if matches!(t, "event" | "error") {
                    if let Some(name) = self.peek_at(1) {
                        self.unit.type_names.push(name.to_owned());
                    }
                }
                self.skip_statement().map(drop)
            }
            "struct" | "enum" => {
                if let Some(name) = self.peek_at(1) {
                    self.unit.type_names.push(name.to_owned());
                }
                self.skip_braced()
            }
            ";" => {
                self.i += 1;
                Ok(())
            }
            _ => self.state_var(),
        }
    }

    fn state_var(&mut self) -> Result<(), SolidityError> {
        let first = self.i;
        let start = self.offset();
        let semi = self.skip_statement()?;
        // name: last identifier before a top-level `=` or the `;`
        let mut depth = 0i32;
        let mut end = semi;
        for idx in first..semi {
            match self.text(idx) {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                "=" if depth == 0 => {
                    end = idx;
                    break;
                }
                _ => {}
            }
        }
        let name = (first..end)
            .rev()
            .find(|&idx| self.toks[idx].kind == TokenKind::Ident)
            .map(|idx| self.text(idx))
            .ok_or_else(|| SolidityError::parse(start, "state variable without a name"))?;
        if !matches!(name, "public" | "private" | "internal" | "constant" | "immutable" | "override") {
            self.unit.state_vars.push(StateVar { name: name.to_owned() });
        }
        Ok(())
    }

    fn callable(&mut self, contract: &str, container: ContainerKind) -> Result<(), SolidityError> {
        let start = self.offset();
        let keyword = self.text(self.i);
        self.i += 1;
        let (kind, name) = match keyword {
            "function" => (CallableKind::Function, self.ident()?.to_owned()),
            "modifier" => (CallableKind::Modifier, self.ident()?.to_owned()),
            "constructor" => (CallableKind::Constructor, "constructor".to_owned()),
            "receive" => (CallableKind::Receive, "receive".to_owned()),
            "fallback" => (CallableKind::Fallback, "fallback".to_owned()),
            _ => return Err(self.err("expected function-like declaration")),
        };
        let mut params = Vec::new();
        if self.peek() == Some("(") {
            let open = self.i;
            let close = self.matching(open)?;
            params = self.param_names(open, close);
            self.i = close + 1;
        } else if kind != CallableKind::Modifier {
            return Err(self.err("expected \"(\""));
        }
        let mut visibility = None;
        let mut modifiers = Vec::new();
        let mut body = None;
        let mut body_tokens = None;
        let end;
        loop {
            let Some(t) = self.peek() else {
                return Err(self.err("unexpected end of input in declaration"));
            };
            match t {
                ";" => {
                    end = self.toks[self.i].span.end;
                    self.i += 1;
                    break;
                }
                "{" => {
                    let close = self.matching(self.i)?;
                    let span = Span { start: self.toks[self.i].span.start, end: self.toks[close].span.end };
                    body = Some(span);
                    body_tokens = Some((self.i, close + 1));
                    end = span.end;
                    self.i = close + 1;
                    break;
                }
                "public" | "external" | "internal" | "private" => {
                    visibility = Some(match t {
                        "public" => Visibility::Public,
                        "external" => Visibility::External,
                        "internal" => Visibility::Internal,
                        _ => Visibility::Private,
                    });
                    self.i += 1;
                }
                "returns" | "override" => {
                    self.i += 1;
                    if self.peek() == Some("(") {
                        self.i = self.matching(self.i)? + 1;
                    }
                }
                _ if MUTABILITY.contains(&t) => self.i += 1,
                _ if self.toks[self.i].kind == TokenKind::Ident => {
                    // modifier invocation, possibly qualified and with arguments
                    let mut name = t;
                    self.i += 1;
                    while self.peek() == Some(".") {
                        self.i += 1;
                        name = self.ident()?;
                    }
                    if kind != CallableKind::Constructor || !self.unit.type_names.iter().any(|n| n == name) {
                        modifiers.push(name.to_owned());
                    }
                    if self.peek() == Some("(") {
                        self.i = self.matching(self.i)? + 1;
                    }
                }
                _ => return Err(self.err(format!("unexpected {t:?} in declaration header"))),
            }
        }
        let visibility = visibility.unwrap_or(match (container, kind) {
            (ContainerKind::Interface, _) => Visibility::External,
            (ContainerKind::File, _) | (_, CallableKind::Modifier) => Visibility::Internal,
            (_, CallableKind::Receive | CallableKind::Fallback) => Visibility::External,
            // pre-0.5 default
            _ => Visibility::Public,
        });
        self.unit.callables.push(Callable {
            contract: contract.to_owned(),
            kind,
            name,
            visibility,
            modifiers,
            span: Span { start, end },
            body,
            body_tokens,
            params,
        });
        Ok(())
    }

    fn param_names(&self, open: usize, close: usize) -> Vec<String> {
        let mut names = Vec::new();
        let mut depth = 0;
        let mut last_ident: Option<&str> = None;
        let mut count = 0;
        for idx in open + 1..close {
            let t = self.text(idx);
            match t {
                "(" | "[" => depth += 1,
                ")" | "]" => depth -= 1,
                "," if depth == 0 => {
                    if count >= 2 {
                        names.extend(last_ident.map(str::to_owned));
                    }
                    last_ident = None;
                    count = 0;
                    continue;
                }
                _ => {}
            }
            if depth == 0 && self.toks[idx].kind == TokenKind::Ident {
                last_ident = Some(t);
            }
            count += 1;
        }
        if count >= 2 {
            names.extend(last_ident.map(str::to_owned));
        }
        // strip data locations that are not names (`uint[] memory` without a name)
        names.retain(|n| !matches!(n.as_str(), "memory" | "storage" | "calldata" | "payable"));
        names
    }
}
