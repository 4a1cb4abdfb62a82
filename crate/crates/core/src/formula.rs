//! Propositional formulas: the text grammar, canonical printing, truth-functional
//! evaluation and the brute-force entailment oracle.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! iff     := implies ( "<->" implies )*      left-associative
//! implies := or ( "->" implies )?            right-associative
//! or      := and ( "\/" and )*               left-associative
//! and     := unary ( "/\" unary )*           left-associative
//! unary   := "~" unary | atom | "_|_" | "(" iff ")"
//! atom    := [A-Za-z][A-Za-z0-9_]*
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Maximum number of distinct atoms the truth-table oracle will enumerate.
pub const MAX_ORACLE_ATOMS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Bottom,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty input")]
    Empty,
    #[error("unexpected character {found:?} at offset {offset}")]
    BadChar { offset: usize, found: char },
    #[error("expected {expected} at offset {offset}")]
    Expected { offset: usize, expected: &'static str },
    #[error("unbalanced parenthesis at offset {offset}")]
    Unbalanced { offset: usize },
    #[error("trailing input at offset {offset}")]
    Trailing { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match *self {
            ParseError::Empty => 0,
            ParseError::BadChar { offset, .. }
            | ParseError::Expected { offset, .. }
            | ParseError::Unbalanced { offset }
            | ParseError::Trailing { offset } => offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("assignment has no value for atom {0:?}")]
    MissingAtom(String),
    #[error("{found} distinct atoms exceeds the oracle cap of {cap}")]
    TooManyAtoms { found: usize, cap: usize },
}

/// Truth values for atoms.
pub type Assignment = BTreeMap<String, bool>;

impl Formula {
    pub fn atom(name: impl Into<String>) -> Self {
        Formula::Atom(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: Formula, r: Formula) -> Self {
        Formula::Implies(Box::new(l), Box::new(r))
    }

    pub fn iff(l: Formula, r: Formula) -> Self {
        Formula::Iff(Box::new(l), Box::new(r))
    }

    pub fn parse(text: &str) -> Result<Formula, ParseError> {
        Parser::new(text)?.parse_all()
    }

    /// Number of constructor nodes.
    pub fn size(&self) -> usize {
        match self {
            Formula::Atom(_) | Formula::Bottom => 1,
            Formula::Not(a) => 1 + a.size(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
                1 + a.size() + b.size()
            }
        }
    }

    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Atom(name) => {
                out.insert(name.clone());
            }
            Formula::Bottom => {}
            Formula::Not(a) => a.collect_atoms(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// Every subformula, including `self`, in pre-order.
    pub fn subformulas(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(f) = stack.pop() {
            out.push(f);
            match f {
                Formula::Atom(_) | Formula::Bottom => {}
                Formula::Not(a) => stack.push(a),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Iff(a, b) => {
                    stack.push(b);
                    stack.push(a);
                }
            }
        }
        out
    }

    pub fn evaluate(&self, assignment: &Assignment) -> Result<bool, EvalError> {
        Ok(match self {
            Formula::Atom(name) => *assignment.get(name).ok_or_else(|| EvalError::MissingAtom(name.clone()))?,
            Formula::Bottom => false,
            Formula::Not(a) => !a.evaluate(assignment)?,
            Formula::And(a, b) => a.evaluate(assignment)? && b.evaluate(assignment)?,
            Formula::Or(a, b) => a.evaluate(assignment)? || b.evaluate(assignment)?,
            Formula::Implies(a, b) => !a.evaluate(assignment)? || b.evaluate(assignment)?,
            Formula::Iff(a, b) => a.evaluate(assignment)? == b.evaluate(assignment)?,
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Iff(..) => 1,
            Formula::Implies(..) => 2,
            Formula::Or(..) => 3,
            Formula::And(..) => 4,
            Formula::Not(_) => 5,
            Formula::Atom(_) | Formula::Bottom => 6,
        }
    }
}

/// Evaluates over a dense valuation indexed by atom position; avoids map lookups
/// inside the truth-table loop.
fn eval_indexed(f: &Formula, index: &BTreeMap<&str, usize>, row: u32) -> bool {
    match f {
        Formula::Atom(name) => (row >> index[name.as_str()]) & 1 == 1,
        Formula::Bottom => false,
        Formula::Not(a) => !eval_indexed(a, index, row),
        Formula::And(a, b) => eval_indexed(a, index, row) && eval_indexed(b, index, row),
        Formula::Or(a, b) => eval_indexed(a, index, row) || eval_indexed(b, index, row),
        Formula::Implies(a, b) => !eval_indexed(a, index, row) || eval_indexed(b, index, row),
        Formula::Iff(a, b) => eval_indexed(a, index, row) == eval_indexed(b, index, row),
    }
}

/// `premises ⊨ goal`, by exhaustive truth table.
pub fn entails(premises: &[Formula], goal: &Formula) -> Result<bool, EvalError> {
    let mut atoms = BTreeSet::new();
    for f in premises.iter().chain(std::iter::once(goal)) {
        f.collect_atoms(&mut atoms);
    }
    if atoms.len() > MAX_ORACLE_ATOMS {
        return Err(EvalError::TooManyAtoms { found: atoms.len(), cap: MAX_ORACLE_ATOMS });
    }
    let index: BTreeMap<&str, usize> = atoms.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let rows = 1u32 << atoms.len();
    Ok((0..rows).all(|row| !premises.iter().all(|p| eval_indexed(p, &index, row)) || eval_indexed(goal, &index, row)))
}

/// Whether some assignment makes every formula true.
pub fn satisfiable(formulas: &[Formula]) -> Result<bool, EvalError> {
    entails(formulas, &Formula::Bottom).map(|unsat| !unsat)
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, sub: &Formula, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({sub})")
            } else {
                write!(f, "{sub}")
            }
        }
        let p = self.precedence();
        match self {
            Formula::Atom(name) => f.write_str(name),
            Formula::Bottom => f.write_str("_|_"),
            Formula::Not(a) => {
                f.write_str("~")?;
                child(f, a, a.precedence() < p)
            }
            Formula::Implies(a, b) => {
                child(f, a, a.precedence() <= p)?;
                f.write_str(" -> ")?;
                child(f, b, b.precedence() < p)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Iff(a, b) => {
                let op = match self {
                    Formula::And(..) => " /\\ ",
                    Formula::Or(..) => " \\/ ",
                    _ => " <-> ",
                };
                child(f, a, a.precedence() < p)?;
                f.write_str(op)?;
                child(f, b, b.precedence() <= p)
            }
        }
    }
}

impl FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Formula::parse(s)
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Formula::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Not,
    And,
    Or,
    Implies,
    Iff,
    LParen,
    RParen,
    Bottom,
    Ident(String),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self, ParseError> {
        let bytes = text.as_bytes();
        let mut toks = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let rest = &text[i..];
            let c = rest.chars().next().unwrap();
            if c.is_whitespace() {
                i += c.len_utf8();
                continue;
            }
            let (tok, len) = if rest.starts_with("<->") {
                (Tok::Iff, 3)
            } else if rest.starts_with("->") {
                (Tok::Implies, 2)
            } else if rest.starts_with("/\\") {
                (Tok::And, 2)
            } else if rest.starts_with("\\/") {
                (Tok::Or, 2)
            } else if rest.starts_with("_|_") {
                (Tok::Bottom, 3)
            } else if c == '~' {
                (Tok::Not, 1)
            } else if c == '(' {
                (Tok::LParen, 1)
            } else if c == ')' {
                (Tok::RParen, 1)
            } else if c.is_ascii_alphabetic() {
                let len = rest.bytes().take_while(|b| b.is_ascii_alphanumeric() || *b == b'_').count();
                (Tok::Ident(rest[..len].to_string()), len)
            } else {
                return Err(ParseError::BadChar { offset: i, found: c });
            };
            toks.push((tok, i));
            i += len;
        }
        if toks.is_empty() {
            return Err(ParseError::Empty);
        }
        Ok(Parser { toks, pos: 0, end: text.len() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_all(mut self) -> Result<Formula, ParseError> {
        let f = self.iff()?;
        match self.peek() {
            None => Ok(f),
            Some(Tok::RParen) => Err(ParseError::Unbalanced { offset: self.offset() }),
            Some(_) => Err(ParseError::Trailing { offset: self.offset() }),
        }
    }

    fn iff(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.implies()?;
        while self.eat(&Tok::Iff) {
            left = Formula::iff(left, self.implies()?);
        }
        Ok(left)
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let left = self.or()?;
        if self.eat(&Tok::Implies) {
            Ok(Formula::implies(left, self.implies()?))
        } else {
            Ok(left)
        }
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.and()?;
        while self.eat(&Tok::Or) {
            left = Formula::or(left, self.and()?);
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.unary()?;
        while self.eat(&Tok::And) {
            left = Formula::and(left, self.unary()?);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        let offset = self.offset();
        match self.toks.get(self.pos).map(|(t, _)| t.clone()) {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::Bottom) => {
                self.pos += 1;
                Ok(Formula::Bottom)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(Formula::Atom(name))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.iff()?;
                if self.eat(&Tok::RParen) {
                    Ok(inner)
                } else if self.peek().is_none() {
                    Err(ParseError::Unbalanced { offset })
                } else {
                    Err(ParseError::Expected { offset: self.offset(), expected: "')'" })
                }
            }
            _ => Err(ParseError::Expected { offset, expected: "a formula" }),
        }
    }
}
