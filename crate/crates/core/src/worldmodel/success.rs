//! Success predicates as comparison trees over named states.
//!
//! The text form is what reconciler prompts exchange:
//! `torso_height > 0.8 and not (up_vec < 0.5 or is_fallen == 1)`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StateDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Eq => lhs == rhs,
            Comparator::Ne => lhs != rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessSpec {
    Cmp {
        state: String,
        op: Comparator,
        value: f64,
    },
    All(Vec<SuccessSpec>),
    Any(Vec<SuccessSpec>),
    Not(Box<SuccessSpec>),
}

impl SuccessSpec {
    pub fn cmp(state: impl Into<String>, op: Comparator, value: f64) -> Self {
        SuccessSpec::Cmp {
            state: state.into(),
            op,
            value,
        }
    }

    /// Referenced state names, sorted.
    pub fn states(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_states(&mut out);
        out
    }

    fn collect_states(&self, out: &mut BTreeSet<String>) {
        match self {
            SuccessSpec::Cmp { state, .. } => {
                out.insert(state.clone());
            }
            SuccessSpec::All(items) | SuccessSpec::Any(items) => {
                items.iter().for_each(|s| s.collect_states(out))
            }
            SuccessSpec::Not(inner) => inner.collect_states(out),
        }
    }

    pub fn unknown_states(&self, catalog: &[StateDescriptor]) -> Vec<String> {
        self.states()
            .into_iter()
            .filter(|s| !catalog.iter().any(|d| &d.name == s))
            .collect()
    }

    /// Evaluate against scalar state readings; missing states read as 0.
    pub fn holds(&self, reading: &dyn Fn(&str) -> Option<f64>) -> bool {
        match self {
            SuccessSpec::Cmp { state, op, value } => op.holds(reading(state).unwrap_or(0.0), *value),
            SuccessSpec::All(items) => items.iter().all(|s| s.holds(reading)),
            SuccessSpec::Any(items) => items.iter().any(|s| s.holds(reading)),
            SuccessSpec::Not(inner) => !inner.holds(reading),
        }
    }

    /// Same tree with every state reference passed through `rename`.
    pub fn map_states(&self, rename: &mut dyn FnMut(&str) -> String) -> SuccessSpec {
        match self {
            SuccessSpec::Cmp { state, op, value } => SuccessSpec::Cmp {
                state: rename(state),
                op: *op,
                value: *value,
            },
            SuccessSpec::All(items) => SuccessSpec::All(items.iter().map(|s| s.map_states(rename)).collect()),
            SuccessSpec::Any(items) => SuccessSpec::Any(items.iter().map(|s| s.map_states(rename)).collect()),
            SuccessSpec::Not(inner) => SuccessSpec::Not(Box::new(inner.map_states(rename))),
        }
    }

    fn fmt_nested(&self, f: &mut fmt::Formatter<'_>, nested: bool) -> fmt::Result {
        match self {
            SuccessSpec::Cmp { state, op, value } => write!(f, "{state} {} {value:?}", op.symbol()),
            SuccessSpec::All(items) | SuccessSpec::Any(items) => {
                let joiner = if matches!(self, SuccessSpec::All(_)) { " and " } else { " or " };
                if items.is_empty() {
                    // empty conjunction is true, empty disjunction is false
                    return f.write_str(if matches!(self, SuccessSpec::All(_)) { "true" } else { "false" });
                }
                if items.len() == 1 {
                    return items[0].fmt_nested(f, nested);
                }
                if nested {
                    f.write_str("(")?;
                }
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(joiner)?;
                    }
                    item.fmt_nested(f, true)?;
                }
                if nested {
                    f.write_str(")")?;
                }
                Ok(())
            }
            SuccessSpec::Not(inner) => {
                f.write_str("not ")?;
                inner.fmt_nested(f, true)
            }
        }
    }
}

impl fmt::Display for SuccessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_nested(f, false)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("success expression error at column {column}: {message}")]
pub struct SuccessParseError {
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Cmp(Comparator),
    And,
    Or,
    Not,
    True,
    False,
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, SuccessParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == '(' || c == ')' {
            out.push((start, if c == '(' { Token::Open } else { Token::Close }));
            i += 1;
            continue;
        }
        if matches!(c, '<' | '>' | '=' | '!') {
            let two = text.get(i..i + 2).unwrap_or("");
            let (cmp, width) = match two {
                ">=" => (Comparator::Ge, 2),
                "<=" => (Comparator::Le, 2),
                "==" => (Comparator::Eq, 2),
                "!=" => (Comparator::Ne, 2),
                _ if c == '>' => (Comparator::Gt, 1),
                _ if c == '<' => (Comparator::Lt, 1),
                _ => {
                    return Err(SuccessParseError {
                        column: start + 1,
                        message: format!("unexpected `{c}`"),
                    })
                }
            };
            out.push((start, Token::Cmp(cmp)));
            i += width;
            continue;
        }
        if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' {
            i += 1;
            while i < bytes.len() {
                let d = bytes[i] as char;
                let exp_sign = (d == '-' || d == '+') && matches!(bytes[i - 1] as char, 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let lexeme = &text[start..i];
            let value: f64 = lexeme.parse().map_err(|_| SuccessParseError {
                column: start + 1,
                message: format!("bad number `{lexeme}`"),
            })?;
            out.push((start, Token::Number(value)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            let token = match word {
                "and" | "AND" => Token::And,
                "or" | "OR" => Token::Or,
                "not" | "NOT" => Token::Not,
                "true" => Token::True,
                "false" => Token::False,
                _ => Token::Ident(word.to_string()),
            };
            out.push((start, token));
            continue;
        }
        return Err(SuccessParseError {
            column: start + 1,
            message: format!("unexpected `{c}`"),
        });
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn column(&self) -> usize {
        self.tokens.get(self.pos).map(|(c, _)| c + 1).unwrap_or(self.len + 1)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, SuccessParseError> {
        Err(SuccessParseError {
            column: self.column(),
            message: message.into(),
        })
    }

    fn or_expr(&mut self) -> Result<SuccessSpec, SuccessParseError> {
        let mut items = vec![self.and_expr()?];
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            items.push(self.and_expr()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { SuccessSpec::Any(items) })
    }

    fn and_expr(&mut self) -> Result<SuccessSpec, SuccessParseError> {
        let mut items = vec![self.unary()?];
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { SuccessSpec::All(items) })
    }

    fn unary(&mut self) -> Result<SuccessSpec, SuccessParseError> {
        match self.peek().cloned() {
            Some(Token::Not) => {
                self.pos += 1;
                Ok(SuccessSpec::Not(Box::new(self.unary()?)))
            }
            Some(Token::Open) => {
                self.pos += 1;
                let inner = self.or_expr()?;
                if self.peek() != Some(&Token::Close) {
                    return self.error("expected `)`");
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(Token::True) => {
                self.pos += 1;
                Ok(SuccessSpec::All(Vec::new()))
            }
            Some(Token::False) => {
                self.pos += 1;
                Ok(SuccessSpec::Any(Vec::new()))
            }
            Some(Token::Ident(state)) => {
                self.pos += 1;
                let op = match self.peek() {
                    Some(Token::Cmp(op)) => *op,
                    _ => return self.error("expected comparison operator"),
                };
                self.pos += 1;
                let value = match self.peek() {
                    Some(Token::Number(v)) => *v,
                    _ => return self.error("expected numeric threshold"),
                };
                self.pos += 1;
                Ok(SuccessSpec::Cmp { state, op, value })
            }
            _ => self.error("expected comparison, `not` or `(`"),
        }
    }
}

impl FromStr for SuccessSpec {
    type Err = SuccessParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let tokens = tokenize(text)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            len: text.len(),
        };
        let spec = parser.or_expr()?;
        if parser.pos != parser.tokens.len() {
            return parser.error("trailing input");
        }
        Ok(spec)
    }
}
