//! Solidity tokenizer. Comments and whitespace are dropped; every token keeps
//! its byte span so later stages can slice the original text.

use super::{SolidityError, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.span.start..self.span.end]
    }
}

// Longest first.
const PUNCTS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "==", "!=", "<=", ">=", "=>", "&&", "||", "++", "--", "+=", "-=",
    "*=", "/=", "%=", "|=", "&=", "^=", "<<", ">>", "**", "->", "(", ")", "[", "]", "{", "}", ";",
    ",", ".", "=", "<", ">", "+", "-", "*", "/", "%", "!", "~", "&", "|", "^", "?", ":",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, SolidityError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if bytes[i..].starts_with(b"//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if bytes[i..].starts_with(b"/*") {
            match src[i + 2..].find("*/") {
                Some(end) => i = i + 2 + end + 2,
                None => return Err(SolidityError::parse(i, "unterminated block comment")),
            }
            continue;
        }
        let start = i;
        let kind = if b.is_ascii_alphabetic() || b == b'_' || b == b'$' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'$') {
                i += 1;
            }
            TokenKind::Ident
        } else if b.is_ascii_digit() {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.') {
                // `1.5e3` style literals; a trailing `.` followed by a letter is member access
                if bytes[i] == b'.' && !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
                    break;
                }
                i += 1;
            }
            TokenKind::Number
        } else if b == b'"' || b == b'\'' {
            i += 1;
            loop {
                match bytes.get(i) {
                    None | Some(b'\n') => return Err(SolidityError::parse(start, "unterminated string literal")),
                    Some(b'\\') => i += 2,
                    Some(&c) if c == b => {
                        i += 1;
                        break;
                    }
                    Some(_) => i += 1,
                }
            }
            TokenKind::Str
        } else if let Some(p) = PUNCTS.iter().find(|p| bytes[i..].starts_with(p.as_bytes())) {
            i += p.len();
            TokenKind::Punct
        } else {
            let ch = src[i..].chars().next().unwrap_or('\u{fffd}');
            return Err(SolidityError::parse(i, format!("unexpected character {ch:?}")));
        };
        tokens.push(Token { kind, span: Span { start, end: i } });
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<&str> {
        tokenize(src).unwrap().iter().map(|t| t.text(src)).collect()
    }

    #[test]
    fn operators_and_comments() {
        assert_eq!(
            texts("a += b; // hi\n c >>= 1 /* x */ d == e => f"),
            ["a", "+=", "b", ";", "c", ">>=", "1", "d", "==", "e", "=>", "f"]
        );
    }

    #[test]
    fn strings_and_numbers() {
        assert_eq!(texts(r#"require(x, "a\"b"); 1e18 0xff 1.5 a.b"#), [
            "require", "(", "x", ",", r#""a\"b""#, ")", ";", "1e18", "0xff", "1.5", "a", ".", "b"
        ]);
    }

    #[test]
    fn non_ascii_inside_comments_and_strings_is_fine() {
        assert_eq!(texts("// ünïcode\nx = \"é\";"), ["x", "=", "\"é\"", ";"]);
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(tokenize("a /* open").unwrap_err(), SolidityError::parse(2, "unterminated block comment"));
        assert_eq!(tokenize("x = \"abc").unwrap_err(), SolidityError::parse(4, "unterminated string literal"));
        assert!(matches!(tokenize("a # b"), Err(SolidityError::ParseFailure { offset: 2, .. })));
    }
}
