//! Business Specification Language.
//!
//! A BSL record distills the guard logic of one business function into an
//! ordered list of positive preconditions and a single semantic action:
//!
//! ```text
//! spec       = ws "order" ws "(" ws "check" ws "[" ws [ conditions ] ws "]" ws "," ws action ws ")" ws ;
//! conditions = ident { ws "," ws ident } ;
//! action     = ident ;
//! ident      = lower { lower | digit | "_" } ;
//! lower      = "a" .. "z" ;
//! digit      = "0" .. "9" ;
//! ws         = { " " | "\t" | "\n" | "\r" | "\x0c" } ;
//! ```
//!
//! The printer emits the canonical form `order(check[a, b], act)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The EBNF above, embedded in generation prompts.
pub const GRAMMAR: &str = "spec = \"order\" \"(\" \"check\" \"[\" [ ident { \",\" ident } ] \"]\" \",\" ident \")\" ; ident = [a-z][a-z0-9_]*";

fn is_ident(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b'a'..=b'z'))
        && bytes.all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_'))
}

/// Raised when a string is not a valid snake_case identifier.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid identifier {0:?}: expected [a-z][a-z0-9_]*")]
pub struct InvalidIdent(pub String);

macro_rules! ident_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            pub fn new(name: impl Into<String>) -> Result<Self, InvalidIdent> {
                let name = name.into();
                if is_ident(&name) {
                    Ok(Self(name))
                } else {
                    Err(InvalidIdent(name))
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl FromStr for $name {
            type Err = InvalidIdent;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                Self::new(raw).map_err(serde::de::Error::custom)
            }
        }
    };
}

ident_newtype!(
    /// A positive precondition, e.g. `balance_ge_amount`.
    ConditionName
);
ident_newtype!(
    /// The semantic action a spec guards, e.g. `burn`.
    ActionName
);

/// `order(check[checks...], action)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BslSpec {
    pub checks: Vec<ConditionName>,
    pub action: ActionName,
}

impl BslSpec {
    pub fn new(checks: Vec<ConditionName>, action: ActionName) -> Self {
        Self { checks, action }
    }

    /// Number of `checkCondition` entries.
    pub fn check_count(&self) -> usize {
        self.checks.len()
    }
}

impl fmt::Display for BslSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_bsl(self))
    }
}

impl FromStr for BslSpec {
    type Err = SyntaxError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bsl(s)
    }
}

impl Serialize for BslSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&print_bsl(self))
    }
}

impl<'de> Deserialize<'de> for BslSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        parse_bsl(&raw).map_err(serde::de::Error::custom)
    }
}

/// A rejected BSL string. The `Display` form is embedded verbatim in repair
/// prompts, so its wording is part of the public contract.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("offset {offset}: expected {expected}, found {found}")]
pub struct SyntaxError {
    /// Byte offset into the input.
    pub offset: usize,
    pub expected: &'static str,
    /// Short description of what was at `offset`.
    pub found: String,
}

/// Parses the concrete syntax. Leading and trailing ASCII whitespace is
/// tolerated; everything else must match the grammar exactly.
pub fn parse_bsl(text: &str) -> Result<BslSpec, SyntaxError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    p.ws();
    p.keyword("order", "\"order\"")?;
    p.ws();
    p.punct(b'(', "\"(\"")?;
    p.ws();
    p.keyword("check", "\"check\"")?;
    p.ws();
    p.punct(b'[', "\"[\"")?;
    p.ws();
    let mut checks = Vec::new();
    if p.peek() != Some(b']') {
        checks.push(ConditionName(p.ident("condition identifier or \"]\"")?));
        loop {
            p.ws();
            match p.peek() {
                Some(b',') => {
                    p.pos += 1;
                    p.ws();
                    checks.push(ConditionName(p.ident("condition identifier")?));
                }
                Some(b']') => break,
                _ => return Err(p.error("\",\" or \"]\"")),
            }
        }
    }
    p.punct(b']', "\"]\"")?;
    p.ws();
    p.punct(b',', "\",\"")?;
    p.ws();
    let action = ActionName(p.ident("action identifier")?);
    p.ws();
    p.punct(b')', "\")\"")?;
    p.ws();
    if p.pos != p.src.len() {
        return Err(p.error("end of input"));
    }
    Ok(BslSpec { checks, action })
}

/// Canonical serialization: `order(check[a, b], act)`.
pub fn print_bsl(spec: &BslSpec) -> String {
    let checks: Vec<&str> = spec.checks.iter().map(ConditionName::as_str).collect();
    format!("order(check[{}], {})", checks.join(", "), spec.action)
}

pub fn check_count(spec: &BslSpec) -> usize {
    spec.check_count()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r' | 0x0c)) {
            self.pos += 1;
        }
    }

    fn found(&self) -> String {
        match self.peek() {
            None => "end of input".to_owned(),
            Some(_) => {
                let word_end = self.word_end();
                if word_end > self.pos {
                    format!("{:?}", String::from_utf8_lossy(&self.src[self.pos..word_end]))
                } else {
                    // Single (possibly multi-byte) character.
                    let rest = String::from_utf8_lossy(&self.src[self.pos..]);
                    let ch = rest.chars().next().unwrap_or('\u{fffd}');
                    format!("{:?}", ch.to_string())
                }
            }
        }
    }

    fn word_end(&self) -> usize {
        let mut end = self.pos;
        while end < self.src.len() && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_') {
            end += 1;
        }
        end
    }

    fn error(&self, expected: &'static str) -> SyntaxError {
        SyntaxError { offset: self.pos, expected, found: self.found() }
    }

    fn keyword(&mut self, kw: &str, expected: &'static str) -> Result<(), SyntaxError> {
        let end = self.word_end();
        if &self.src[self.pos..end] == kw.as_bytes() {
            self.pos = end;
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn punct(&mut self, c: u8, expected: &'static str) -> Result<(), SyntaxError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn ident(&mut self, expected: &'static str) -> Result<String, SyntaxError> {
        let end = self.word_end();
        let word = &self.src[self.pos..end];
        // word is ASCII by construction of word_end
        let word = std::str::from_utf8(word).expect("ascii word");
        if is_ident(word) {
            self.pos = end;
            Ok(word.to_owned())
        } else {
            Err(self.error(expected))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cond(s: &str) -> ConditionName {
        ConditionName::new(s).unwrap()
    }

    fn act(s: &str) -> ActionName {
        ActionName::new(s).unwrap()
    }

    #[test]
    fn parses_prompt_example() {
        let spec = parse_bsl("order(check[balance_ge_reserve], swap)").unwrap();
        assert_eq!(spec.checks, vec![cond("balance_ge_reserve")]);
        assert_eq!(spec.action, act("swap"));
    }

    #[test]
    fn empty_check_list() {
        let spec = parse_bsl("order(check[], mint)").unwrap();
        assert!(spec.checks.is_empty());
        assert_eq!(spec.action, act("mint"));
        let spec = parse_bsl("order ( check [ ] , mint )").unwrap();
        assert!(spec.checks.is_empty());
    }

    #[test]
    fn missing_action_reports_offset() {
        let err = parse_bsl("order(check[a_b, c], )").unwrap_err();
        assert_eq!(err.offset, 21);
        assert_eq!(err.expected, "action identifier");
        assert_eq!(err.to_string(), "offset 21: expected action identifier, found \")\"");
    }

    #[test]
    fn missing_comma_between_checks_and_action() {
        let err = parse_bsl("order(check[x] burn)").unwrap_err();
        assert_eq!(err.to_string(), "offset 15: expected \",\", found \"burn\"");
    }

    #[test]
    fn stable_error_messages() {
        let cases = [
            ("", "offset 0: expected \"order\", found end of input"),
            ("orders(check[], a)", "offset 0: expected \"order\", found \"orders\""),
            ("order(check[A], b)", "offset 12: expected condition identifier or \"]\", found \"A\""),
            ("order(check[a b], c)", "offset 14: expected \",\" or \"]\", found \"b\""),
            ("order(check[a,], c)", "offset 14: expected condition identifier, found \"]\""),
            ("order(check[a], c) x", "offset 19: expected end of input, found \"x\""),
            ("order(check[a], c", "offset 17: expected \")\", found end of input"),
            ("order(check[a], 9c)", "offset 16: expected action identifier, found \"9c\""),
            ("order(chek[a], c)", "offset 6: expected \"check\", found \"chek\""),
            ("order(check(a), c)", "offset 11: expected \"[\", found \"(\""),
            ("order(check[é], c)", "offset 12: expected condition identifier or \"]\", found \"é\""),
        ];
        for (input, msg) in cases {
            assert_eq!(parse_bsl(input).unwrap_err().to_string(), msg, "input {input:?}");
        }
    }

    #[test]
    fn prints_canonical_form() {
        assert_eq!(
            print_bsl(&BslSpec::new(vec![cond("x_gt_zero")], act("burn"))),
            "order(check[x_gt_zero], burn)"
        );
        assert_eq!(print_bsl(&BslSpec::new(vec![], act("swap"))), "order(check[], swap)");
        assert_eq!(
            print_bsl(&BslSpec::new(vec![cond("a"), cond("b")], act("c"))),
            "order(check[a, b], c)"
        );
    }

    #[test]
    fn counts_checks() {
        assert_eq!(check_count(&parse_bsl("order(check[balance_ge_amount], burn)").unwrap()), 1);
        assert_eq!(
            check_count(&parse_bsl("order(check[balance_ge_amount, hf_ge_threshold], burn)").unwrap()),
            2
        );
        assert_eq!(check_count(&parse_bsl("order(check[], x)").unwrap()), 0);
    }

    #[test]
    fn whitespace_tolerance() {
        let spec = parse_bsl("\n  order (\tcheck[ a ,b ] ,c )\n").unwrap();
        assert_eq!(print_bsl(&spec), "order(check[a, b], c)");
    }

    #[test]
    fn keywords_are_valid_identifiers_in_identifier_positions() {
        let spec = parse_bsl("order(check[order, check], order)").unwrap();
        assert_eq!(print_bsl(&spec), "order(check[order, check], order)");
    }

    #[test]
    fn serde_uses_canonical_text() {
        let spec = parse_bsl("order(check[a,b],c)").unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, "\"order(check[a, b], c)\"");
        let back: BslSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<BslSpec>("\"order(check[a], )\"").is_err());
    }

    #[test]
    fn ident_validation() {
        assert!(ConditionName::new("a1_b").is_ok());
        assert!(ConditionName::new("").is_err());
        assert!(ConditionName::new("_a").is_err());
        assert!(ConditionName::new("1a").is_err());
        assert!(ActionName::new("Burn").is_err());
    }
}
