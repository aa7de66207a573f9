//! Boolean condition expressions.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! or    := and ( "||" and )*
//! and   := not ( "&&" not )*
//! not   := "!" not | "(" or ")" | comparison
//! comparison := variable op literal
//! op    := "<" | "<=" | "==" | "!=" | ">=" | ">"
//! literal := number | "string" | true | false
//! ```
//!
//! Comparisons always put the variable on the left and a literal on the
//! right. Ordering operators require a numeric literal; that is checked at
//! parse time. Strings are double-quoted with no escape sequences.
//! `Display` emits a canonical spelling that re-parses to the identical
//! tree, which the architecture serializer relies on.

use crate::value::Value;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparator {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Comparator> {
        Some(match s {
            "<" => Comparator::Lt,
            "<=" => Comparator::Le,
            "==" => Comparator::Eq,
            "!=" => Comparator::Ne,
            ">=" => Comparator::Ge,
            ">" => Comparator::Gt,
            _ => return None,
        })
    }

    pub fn is_ordering(self) -> bool {
        matches!(
            self,
            Comparator::Lt | Comparator::Le | Comparator::Ge | Comparator::Gt
        )
    }

    pub fn compare_numbers(self, left: f64, right: f64) -> bool {
        match self {
            Comparator::Lt => left < right,
            Comparator::Le => left <= right,
            Comparator::Eq => left == right,
            Comparator::Ne => left != right,
            Comparator::Ge => left >= right,
            Comparator::Gt => left > right,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoolExpr {
    Cmp {
        var: String,
        op: Comparator,
        lit: Value,
    },
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("condition parse error at byte {position}: {message}")]
pub struct ExprParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum ExprEvalError {
    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),
    #[error("variable `{variable}` is {found} but the comparison needs {expected}")]
    TypeMismatch {
        variable: String,
        expected: &'static str,
        found: &'static str,
    },
}

impl BoolExpr {
    pub fn parse(text: &str) -> Result<BoolExpr, ExprParseError> {
        let tokens = lex(text)?;
        let mut p = Parser { tokens, at: 0 };
        let expr = p.or_expr()?;
        if p.at < p.tokens.len() {
            return Err(p.err("trailing input after expression"));
        }
        Ok(expr)
    }

    /// Evaluates against a variable lookup. Every variable referenced must
    /// resolve, and its type must match the literal it is compared with.
    pub fn eval(
        &self,
        lookup: &dyn Fn(&str) -> Option<Value>,
    ) -> Result<bool, ExprEvalError> {
        match self {
            BoolExpr::Cmp { var, op, lit } => {
                let val = lookup(var)
                    .ok_or_else(|| ExprEvalError::UnboundVariable(var.clone()))?;
                compare(var, &val, *op, lit)
            }
            BoolExpr::Not(inner) => Ok(!inner.eval(lookup)?),
            BoolExpr::And(a, b) => Ok(a.eval(lookup)? && b.eval(lookup)?),
            BoolExpr::Or(a, b) => Ok(a.eval(lookup)? || b.eval(lookup)?),
        }
    }

    /// Every variable the expression mentions.
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            BoolExpr::Cmp { var, .. } => {
                out.insert(var.as_str());
            }
            BoolExpr::Not(inner) => inner.collect_vars(out),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

fn compare(var: &str, val: &Value, op: Comparator, lit: &Value) -> Result<bool, ExprEvalError> {
    let mismatch = |expected: &'static str| ExprEvalError::TypeMismatch {
        variable: var.to_string(),
        expected,
        found: val.type_name(),
    };
    match lit {
        Value::Number(rhs) => {
            let lhs = val.as_number().ok_or_else(|| mismatch("number"))?;
            Ok(op.compare_numbers(lhs, *rhs))
        }
        Value::Str(rhs) => {
            let lhs = val.as_str().ok_or_else(|| mismatch("string"))?;
            Ok(match op {
                Comparator::Eq => lhs == rhs,
                Comparator::Ne => lhs != rhs,
                // Unreachable from `parse`, which rejects ordered string
                // comparisons, but hand-built trees get a defined answer.
                _ => {
                    return Err(ExprEvalError::TypeMismatch {
                        variable: var.to_string(),
                        expected: "number",
                        found: "string",
                    })
                }
            })
        }
        Value::Bool(rhs) => {
            let lhs = val.as_bool().ok_or_else(|| mismatch("boolean"))?;
            Ok(match op {
                Comparator::Eq => lhs == *rhs,
                Comparator::Ne => lhs != *rhs,
                _ => {
                    return Err(ExprEvalError::TypeMismatch {
                        variable: var.to_string(),
                        expected: "number",
                        found: "boolean",
                    })
                }
            })
        }
    }
}

// Canonical display. Operands are parenthesized exactly where the parser
// would otherwise rebuild a different tree: right-nested chains of the same
// operator, and `||` under `&&`.
impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn needs_parens(child: &BoolExpr, parent_is_and: bool, right_side: bool) -> bool {
            match child {
                BoolExpr::Or(..) => parent_is_and || right_side,
                BoolExpr::And(..) => right_side,
                _ => false,
            }
        }
        fn write_operand(
            f: &mut fmt::Formatter<'_>,
            child: &BoolExpr,
            parent_is_and: bool,
            right_side: bool,
        ) -> fmt::Result {
            if needs_parens(child, parent_is_and, right_side) {
                write!(f, "({child})")
            } else {
                write!(f, "{child}")
            }
        }
        match self {
            BoolExpr::Cmp { var, op, lit } => match lit {
                Value::Str(s) => write!(f, "{var} {} \"{s}\"", op.symbol()),
                other => write!(f, "{var} {} {other}", op.symbol()),
            },
            BoolExpr::Not(inner) => write!(f, "!({inner})"),
            BoolExpr::And(a, b) => {
                write_operand(f, a, true, false)?;
                write!(f, " && ")?;
                write_operand(f, b, true, true)
            }
            BoolExpr::Or(a, b) => {
                write_operand(f, a, false, false)?;
                write!(f, " || ")?;
                write_operand(f, b, false, true)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Ident(String),
    Num(f64),
    Str(String),
    True,
    False,
    AndAnd,
    OrOr,
    Bang,
    LParen,
    RParen,
    Op(Comparator),
}

struct Spanned {
    token: Token,
    position: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ExprParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '(' => {
                out.push(Spanned { token: Token::LParen, position: start });
                i += 1;
            }
            ')' => {
                out.push(Spanned { token: Token::RParen, position: start });
                i += 1;
            }
            '&' => {
                if bytes.get(i + 1) == Some(&b'&') {
                    out.push(Spanned { token: Token::AndAnd, position: start });
                    i += 2;
                } else {
                    return Err(ExprParseError {
                        position: start,
                        message: "expected `&&`".into(),
                    });
                }
            }
            '|' => {
                if bytes.get(i + 1) == Some(&b'|') {
                    out.push(Spanned { token: Token::OrOr, position: start });
                    i += 2;
                } else {
                    return Err(ExprParseError {
                        position: start,
                        message: "expected `||`".into(),
                    });
                }
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Spanned { token: Token::Op(Comparator::Ne), position: start });
                    i += 2;
                } else {
                    out.push(Spanned { token: Token::Bang, position: start });
                    i += 1;
                }
            }
            '=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Spanned { token: Token::Op(Comparator::Eq), position: start });
                    i += 2;
                } else {
                    return Err(ExprParseError {
                        position: start,
                        message: "expected `==`".into(),
                    });
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Spanned { token: Token::Op(Comparator::Le), position: start });
                    i += 2;
                } else {
                    out.push(Spanned { token: Token::Op(Comparator::Lt), position: start });
                    i += 1;
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Spanned { token: Token::Op(Comparator::Ge), position: start });
                    i += 2;
                } else {
                    out.push(Spanned { token: Token::Op(Comparator::Gt), position: start });
                    i += 1;
                }
            }
            '"' => {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j] != b'"' {
                    j += 1;
                }
                if j >= bytes.len() {
                    return Err(ExprParseError {
                        position: start,
                        message: "unterminated string literal".into(),
                    });
                }
                out.push(Spanned {
                    token: Token::Str(text[i + 1..j].to_string()),
                    position: start,
                });
                i = j + 1;
            }
            _ if c.is_ascii_digit() || c == '-' => {
                let mut j = i + 1;
                while j < bytes.len()
                    && (bytes[j].is_ascii_digit()
                        || bytes[j] == b'.'
                        || bytes[j] == b'e'
                        || bytes[j] == b'E'
                        || ((bytes[j] == b'+' || bytes[j] == b'-')
                            && matches!(bytes[j - 1], b'e' | b'E')))
                {
                    j += 1;
                }
                let n: f64 = text[i..j].parse().map_err(|_| ExprParseError {
                    position: start,
                    message: format!("bad number `{}`", &text[i..j]),
                })?;
                if !n.is_finite() {
                    return Err(ExprParseError {
                        position: start,
                        message: "number literal out of range".into(),
                    });
                }
                out.push(Spanned { token: Token::Num(n), position: start });
                i = j;
            }
            _ if c.is_ascii_alphabetic() => {
                let mut j = i + 1;
                while j < bytes.len()
                    && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                let word = &text[i..j];
                let token = match word {
                    "true" => Token::True,
                    "false" => Token::False,
                    _ => Token::Ident(word.to_string()),
                };
                out.push(Spanned { token, position: start });
                i = j;
            }
            _ => {
                return Err(ExprParseError {
                    position: start,
                    message: format!("unexpected character `{c}`"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Spanned>,
    at: usize,
}

impl Parser {
    fn err(&self, message: &str) -> ExprParseError {
        let position = self
            .tokens
            .get(self.at)
            .map(|s| s.position)
            .unwrap_or_else(|| self.tokens.last().map(|s| s.position + 1).unwrap_or(0));
        ExprParseError {
            position,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at).map(|s| &s.token)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.at).map(|s| s.token.clone());
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn or_expr(&mut self) -> Result<BoolExpr, ExprParseError> {
        let mut left = self.and_expr()?;
        while self.peek() == Some(&Token::OrOr) {
            self.at += 1;
            let right = self.and_expr()?;
            left = BoolExpr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<BoolExpr, ExprParseError> {
        let mut left = self.not_expr()?;
        while self.peek() == Some(&Token::AndAnd) {
            self.at += 1;
            let right = self.not_expr()?;
            left = BoolExpr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<BoolExpr, ExprParseError> {
        match self.peek() {
            Some(Token::Bang) => {
                self.at += 1;
                Ok(BoolExpr::Not(Box::new(self.not_expr()?)))
            }
            Some(Token::LParen) => {
                self.at += 1;
                let inner = self.or_expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(self.err("expected `)`")),
                }
            }
            _ => self.comparison(),
        }
    }

    fn comparison(&mut self) -> Result<BoolExpr, ExprParseError> {
        let var = match self.next() {
            Some(Token::Ident(name)) => name,
            _ => {
                self.at = self.at.saturating_sub(1);
                return Err(self.err("expected a variable name"));
            }
        };
        let op = match self.next() {
            Some(Token::Op(op)) => op,
            _ => {
                self.at = self.at.saturating_sub(1);
                return Err(self.err("expected a comparison operator"));
            }
        };
        let lit = match self.next() {
            Some(Token::Num(n)) => Value::Number(n),
            Some(Token::Str(s)) => Value::Str(s),
            Some(Token::True) => Value::Bool(true),
            Some(Token::False) => Value::Bool(false),
            _ => {
                self.at = self.at.saturating_sub(1);
                return Err(self.err("expected a literal"));
            }
        };
        if op.is_ordering() && !matches!(lit, Value::Number(_)) {
            self.at = self.at.saturating_sub(1);
            return Err(self.err("ordering comparisons need a numeric literal"));
        }
        Ok(BoolExpr::Cmp { var, op, lit })
    }
}
