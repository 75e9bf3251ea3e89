//! LTL formulas over robot/region predicates.
//!
//! Atoms have the form `p<j>@<region>` and are true when robot `j` occupies a
//! cell of `region`. The reserved region `obs` marks a robot standing on an
//! obstacle cell.
//!
//! Concrete grammar, loosest binding first:
//!
//! ```text
//! formula := or ('->' formula)?
//! or      := and ('|' and)*
//! and     := binary ('&' binary)*
//! binary  := unary (('U' | 'R') binary)?
//! unary   := ('!' | 'X' | 'F' | 'G') unary | primary
//! primary := 'true' | 'false' | atom | '(' formula ')'
//! atom    := 'p' [0-9]+ '@' [A-Za-z0-9_]+
//! ```
//!
//! `#` starts a comment that runs to the end of the line.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::buchi::LassoWord;

/// Region label of the obstacle predicate.
pub const OBSTACLE_REGION: &str = "obs";

/// `p<robot>@<region>`: robot `robot` is inside `region`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomicPredicate {
    pub robot: u32,
    pub region: String,
}

impl AtomicPredicate {
    pub fn new(robot: u32, region: impl Into<String>) -> Self {
        AtomicPredicate {
            robot,
            region: region.into(),
        }
    }

    pub fn is_obstacle(&self) -> bool {
        self.region == OBSTACLE_REGION
    }
}

impl fmt::Display for AtomicPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}@{}", self.robot, self.region)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Ap(AtomicPredicate),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Release(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
}

impl Formula {
    pub fn ap(robot: u32, region: impl Into<String>) -> Self {
        Formula::Ap(AtomicPredicate::new(robot, region))
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Self {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn release(a: Formula, b: Formula) -> Self {
        Formula::Release(Box::new(a), Box::new(b))
    }

    pub fn eventually(f: Formula) -> Self {
        Formula::Eventually(Box::new(f))
    }

    pub fn always(f: Formula) -> Self {
        Formula::Always(Box::new(f))
    }

    /// True if the formula contains no temporal operator.
    pub fn is_propositional(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Ap(_) => true,
            Formula::Not(f) => f.is_propositional(),
            Formula::And(a, b) | Formula::Or(a, b) => a.is_propositional() && b.is_propositional(),
            _ => false,
        }
    }

    /// Negation normal form: `Not` only directly above atoms, `F`/`G` rewritten
    /// as `true U _` and `false R _`.
    pub fn to_nnf(&self) -> Formula {
        to_nnf(self)
    }

    pub fn atomic_predicates(&self) -> BTreeSet<AtomicPredicate> {
        atomic_predicates(self)
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Ap(_) => 0,
            Formula::Not(f) | Formula::Next(f) | Formula::Eventually(f) | Formula::Always(f) => {
                1 + f.depth()
            }
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Until(a, b)
            | Formula::Release(a, b) => 1 + a.depth().max(b.depth()),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Ap(ap) => write!(f, "{ap}"),
            Formula::Not(x) => write!(f, "!{x}"),
            Formula::Next(x) => write!(f, "X {x}"),
            Formula::Eventually(x) => write!(f, "F {x}"),
            Formula::Always(x) => write!(f, "G {x}"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Until(a, b) => write!(f, "({a} U {b})"),
            Formula::Release(a, b) => write!(f, "({a} R {b})"),
        }
    }
}

pub fn to_nnf(f: &Formula) -> Formula {
    match f {
        Formula::True | Formula::False | Formula::Ap(_) => f.clone(),
        Formula::Not(x) => negate_nnf(x),
        Formula::And(a, b) => Formula::and(to_nnf(a), to_nnf(b)),
        Formula::Or(a, b) => Formula::or(to_nnf(a), to_nnf(b)),
        Formula::Next(x) => Formula::next(to_nnf(x)),
        Formula::Until(a, b) => Formula::until(to_nnf(a), to_nnf(b)),
        Formula::Release(a, b) => Formula::release(to_nnf(a), to_nnf(b)),
        Formula::Eventually(x) => Formula::until(Formula::True, to_nnf(x)),
        Formula::Always(x) => Formula::release(Formula::False, to_nnf(x)),
    }
}

/// NNF of `!f`.
fn negate_nnf(f: &Formula) -> Formula {
    match f {
        Formula::True => Formula::False,
        Formula::False => Formula::True,
        Formula::Ap(_) => Formula::not(f.clone()),
        Formula::Not(x) => to_nnf(x),
        Formula::And(a, b) => Formula::or(negate_nnf(a), negate_nnf(b)),
        Formula::Or(a, b) => Formula::and(negate_nnf(a), negate_nnf(b)),
        Formula::Next(x) => Formula::next(negate_nnf(x)),
        Formula::Until(a, b) => Formula::release(negate_nnf(a), negate_nnf(b)),
        Formula::Release(a, b) => Formula::until(negate_nnf(a), negate_nnf(b)),
        Formula::Eventually(x) => Formula::release(Formula::False, negate_nnf(x)),
        Formula::Always(x) => Formula::until(Formula::True, negate_nnf(x)),
    }
}

pub fn atomic_predicates(f: &Formula) -> BTreeSet<AtomicPredicate> {
    fn walk(f: &Formula, out: &mut BTreeSet<AtomicPredicate>) {
        match f {
            Formula::True | Formula::False => {}
            Formula::Ap(ap) => {
                out.insert(ap.clone());
            }
            Formula::Not(x) | Formula::Next(x) | Formula::Eventually(x) | Formula::Always(x) => {
                walk(x, out)
            }
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Until(a, b)
            | Formula::Release(a, b) => {
                walk(a, out);
                walk(b, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(f, &mut out);
    out
}

/// Exact truth of `f` at position 0 of the ultimately periodic word.
///
/// Each subformula gets one truth value per lasso position; `U`/`F` are least
/// fixpoints and `R`/`G` greatest fixpoints over the successor map, which is
/// exact because every position of a lasso has a single successor.
pub fn evaluate_lasso(f: &Formula, word: &LassoWord) -> bool {
    let n = word.len();
    let succ: Vec<usize> = (0..n).map(|i| word.successor(i)).collect();
    let values = eval_positions(f, word, &succ);
    values[0]
}

fn eval_positions(f: &Formula, word: &LassoWord, succ: &[usize]) -> Vec<bool> {
    let n = succ.len();
    match f {
        Formula::True => vec![true; n],
        Formula::False => vec![false; n],
        Formula::Ap(ap) => (0..n).map(|i| word.symbol_at(i).contains(ap)).collect(),
        Formula::Not(x) => eval_positions(x, word, succ)
            .into_iter()
            .map(|v| !v)
            .collect(),
        Formula::And(a, b) => {
            let (a, b) = (eval_positions(a, word, succ), eval_positions(b, word, succ));
            a.iter().zip(&b).map(|(x, y)| *x && *y).collect()
        }
        Formula::Or(a, b) => {
            let (a, b) = (eval_positions(a, word, succ), eval_positions(b, word, succ));
            a.iter().zip(&b).map(|(x, y)| *x || *y).collect()
        }
        Formula::Next(x) => {
            let x = eval_positions(x, word, succ);
            (0..n).map(|i| x[succ[i]]).collect()
        }
        Formula::Until(a, b) => {
            let (a, b) = (eval_positions(a, word, succ), eval_positions(b, word, succ));
            least_fixpoint(n, |cur, i| b[i] || (a[i] && cur[succ[i]]))
        }
        Formula::Eventually(x) => {
            let x = eval_positions(x, word, succ);
            least_fixpoint(n, |cur, i| x[i] || cur[succ[i]])
        }
        Formula::Release(a, b) => {
            let (a, b) = (eval_positions(a, word, succ), eval_positions(b, word, succ));
            greatest_fixpoint(n, |cur, i| b[i] && (a[i] || cur[succ[i]]))
        }
        Formula::Always(x) => {
            let x = eval_positions(x, word, succ);
            greatest_fixpoint(n, |cur, i| x[i] && cur[succ[i]])
        }
    }
}

fn least_fixpoint(n: usize, step: impl Fn(&[bool], usize) -> bool) -> Vec<bool> {
    iterate_fixpoint(vec![false; n], step)
}

fn greatest_fixpoint(n: usize, step: impl Fn(&[bool], usize) -> bool) -> Vec<bool> {
    iterate_fixpoint(vec![true; n], step)
}

fn iterate_fixpoint(mut cur: Vec<bool>, step: impl Fn(&[bool], usize) -> bool) -> Vec<bool> {
    loop {
        let next: Vec<bool> = (0..cur.len()).map(|i| step(&cur, i)).collect();
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LtlError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown region `{region}` at byte {offset}")]
    UnknownRegion { offset: usize, region: String },
    #[error("robot index 0 at byte {offset} (robots are numbered from 1)")]
    ZeroRobot { offset: usize },
}

/// Parses a formula without checking region labels.
pub fn parse_ltl(text: &str) -> Result<Formula, LtlError> {
    Parser::new(text, None)?.parse()
}

/// Parses a formula and rejects atoms whose region is neither declared nor `obs`.
pub fn parse_ltl_with_regions(text: &str, regions: &BTreeSet<String>) -> Result<Formula, LtlError> {
    Parser::new(text, Some(regions))?.parse()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    True,
    False,
    Atom(AtomicPredicate),
    Not,
    And,
    Or,
    Implies,
    Next,
    Until,
    Release,
    Eventually,
    Always,
    LParen,
    RParen,
    End,
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    regions: Option<&'a BTreeSet<String>>,
}

impl<'a> Parser<'a> {
    fn new(text: &str, regions: Option<&'a BTreeSet<String>>) -> Result<Self, LtlError> {
        Ok(Parser {
            toks: lex(text)?,
            pos: 0,
            regions,
        })
    }

    fn parse(mut self) -> Result<Formula, LtlError> {
        let f = self.implication()?;
        let (tok, offset) = self.peek();
        if *tok != Tok::End {
            return Err(syntax(offset, "unexpected trailing input"));
        }
        Ok(f)
    }

    fn peek(&self) -> (&Tok, usize) {
        let (t, o) = &self.toks[self.pos];
        (t, *o)
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn implication(&mut self) -> Result<Formula, LtlError> {
        let lhs = self.disjunction()?;
        if *self.peek().0 == Tok::Implies {
            self.bump();
            let rhs = self.implication()?;
            return Ok(Formula::or(Formula::not(lhs), rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, LtlError> {
        let mut lhs = self.conjunction()?;
        while *self.peek().0 == Tok::Or {
            self.bump();
            let rhs = self.conjunction()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, LtlError> {
        let mut lhs = self.binary()?;
        while *self.peek().0 == Tok::And {
            self.bump();
            let rhs = self.binary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn binary(&mut self) -> Result<Formula, LtlError> {
        let lhs = self.unary()?;
        match self.peek().0 {
            Tok::Until => {
                self.bump();
                Ok(Formula::until(lhs, self.binary()?))
            }
            Tok::Release => {
                self.bump();
                Ok(Formula::release(lhs, self.binary()?))
            }
            _ => Ok(lhs),
        }
    }

    fn unary(&mut self) -> Result<Formula, LtlError> {
        let wrap: fn(Formula) -> Formula = match self.peek().0 {
            Tok::Not => Formula::not,
            Tok::Next => Formula::next,
            Tok::Eventually => Formula::eventually,
            Tok::Always => Formula::always,
            _ => return self.primary(),
        };
        self.bump();
        Ok(wrap(self.unary()?))
    }

    fn primary(&mut self) -> Result<Formula, LtlError> {
        let (tok, offset) = self.bump();
        match tok {
            Tok::True => Ok(Formula::True),
            Tok::False => Ok(Formula::False),
            Tok::Atom(ap) => {
                if let Some(regions) = self.regions {
                    if !ap.is_obstacle() && !regions.contains(&ap.region) {
                        return Err(LtlError::UnknownRegion {
                            offset,
                            region: ap.region,
                        });
                    }
                }
                Ok(Formula::Ap(ap))
            }
            Tok::LParen => {
                let f = self.implication()?;
                let (close, at) = self.bump();
                if close != Tok::RParen {
                    return Err(syntax(at, "expected `)`"));
                }
                Ok(f)
            }
            Tok::End => Err(syntax(offset, "unexpected end of input")),
            other => Err(syntax(offset, &format!("unexpected token {other:?}"))),
        }
    }
}

fn syntax(offset: usize, message: &str) -> LtlError {
    LtlError::Syntax {
        offset,
        message: message.to_string(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, LtlError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            b'!' => {
                toks.push((Tok::Not, i));
                i += 1;
            }
            b'&' => {
                toks.push((Tok::And, i));
                i += 1;
            }
            b'|' => {
                toks.push((Tok::Or, i));
                i += 1;
            }
            b'-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    toks.push((Tok::Implies, i));
                    i += 2;
                } else {
                    return Err(syntax(i, "expected `->`"));
                }
            }
            c if c.is_ascii_alphanumeric() || c == b'_' || c == b'@' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'@')
                {
                    i += 1;
                }
                toks.push((word_token(&text[start..i], start)?, start));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(syntax(i, &format!("unexpected character `{ch}`")));
            }
        }
    }
    toks.push((Tok::End, text.len()));
    Ok(toks)
}

fn word_token(word: &str, offset: usize) -> Result<Tok, LtlError> {
    Ok(match word {
        "true" => Tok::True,
        "false" => Tok::False,
        "X" => Tok::Next,
        "U" => Tok::Until,
        "R" => Tok::Release,
        "F" => Tok::Eventually,
        "G" => Tok::Always,
        _ => Tok::Atom(parse_atom(word, offset)?),
    })
}

/// Parses `p<j>@<region>`.
pub(crate) fn parse_atom(word: &str, offset: usize) -> Result<AtomicPredicate, LtlError> {
    let bad = || {
        syntax(
            offset,
            &format!("`{word}` is not an atom of the form p<j>@<region>"),
        )
    };
    let rest = word.strip_prefix('p').ok_or_else(bad)?;
    let (digits, region) = rest.split_once('@').ok_or_else(bad)?;
    if digits.is_empty()
        || !digits.bytes().all(|b| b.is_ascii_digit())
        || region.is_empty()
        || !region
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_')
    {
        return Err(bad());
    }
    let robot: u32 = digits.parse().map_err(|_| bad())?;
    if robot == 0 {
        return Err(LtlError::ZeroRobot { offset });
    }
    Ok(AtomicPredicate::new(robot, region))
}
