//! Text format for recurrence systems.
//!
//! ```text
//! # comments run to end of line
//! system matmul          # optional name
//! const K = 3            # literal constant
//! index i = 0..4         # half-open bounds; undeclared symbols get 0..4
//! C[i,j,k] = C[i,j,k-1] + A[i,j,k]*B[i,j,k]
//! ```
//!
//! Index expressions allow `+ - *` with at least one literal factor, and
//! `/` (floor) and `%` by positive literals.

use std::collections::{BTreeMap, BTreeSet};

use super::expr::Expr;
use super::{IndexSymbol, RecurrenceSystem, Reference, Relation, RiaError, Term};

/// Bounds given to index symbols that have no `index` line.
pub const DEFAULT_BOUNDS: (i64, i64) = (0, 4);

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Punct(char),
    Range,
}

fn tokenize(line: usize, s: &str) -> Result<Vec<Tok>, RiaError> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if ch.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse().map_err(|_| RiaError::Parse {
                line,
                msg: format!("integer `{text}` is out of range"),
            })?;
            out.push(Tok::Int(v));
        } else if ch == '.' && chars.get(i + 1) == Some(&'.') {
            out.push(Tok::Range);
            i += 2;
        } else if "[],=+-*/%()".contains(ch) {
            out.push(Tok::Punct(ch));
            i += 1;
        } else {
            return Err(RiaError::Parse {
                line,
                msg: format!("unexpected character `{ch}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    line: usize,
    toks: Vec<Tok>,
    pos: usize,
    consts: &'a BTreeMap<String, i64>,
}

impl Parser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, RiaError> {
        Err(RiaError::Parse {
            line: self.line,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), RiaError> {
        if self.eat(c) {
            Ok(())
        } else {
            let found = self.peek().map_or("end of line".to_string(), |t| format!("{t:?}"));
            self.err(format!("expected `{c}`, found {found}"))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, RiaError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            _ => self.err(format!("expected {what}")),
        }
    }

    fn int(&mut self) -> Result<i64, RiaError> {
        let neg = self.eat('-');
        match self.next() {
            Some(Tok::Int(v)) => Ok(if neg { -v } else { v }),
            _ => self.err("expected an integer"),
        }
    }

    fn done(&self) -> Result<(), RiaError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => self.err(format!("unexpected trailing {t:?}")),
        }
    }

    fn expr(&mut self) -> Result<Expr, RiaError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn literal(&self, e: &Expr) -> Option<i64> {
        let l = e.linear();
        l.is_constant().then_some(l.constant)
    }

    fn product(&mut self) -> Result<Expr, RiaError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Punct(c @ ('*' | '/' | '%'))) => *c,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = match op {
                '*' => match (self.literal(&lhs), self.literal(&rhs)) {
                    (Some(k), _) => Expr::Scale(k, Box::new(rhs)),
                    (_, Some(k)) => Expr::Scale(k, Box::new(lhs)),
                    _ => return self.err(format!("product `{lhs}*{rhs}` of two index symbols is not allowed")),
                },
                _ => match self.literal(&rhs) {
                    Some(d) if d > 0 => {
                        if op == '/' {
                            Expr::Div(Box::new(lhs), d)
                        } else {
                            Expr::Mod(Box::new(lhs), d)
                        }
                    }
                    _ => return self.err(format!("`{op}` needs a positive literal divisor, got `{rhs}`")),
                },
            };
        }
    }

    fn factor(&mut self) -> Result<Expr, RiaError> {
        match self.next() {
            Some(Tok::Int(v)) => Ok(Expr::Const(v)),
            Some(Tok::Ident(s)) => Ok(match self.consts.get(&s) {
                Some(&v) => Expr::Const(v),
                None => Expr::Sym(s),
            }),
            Some(Tok::Punct('(')) => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Punct('-')) => Ok(Expr::Neg(Box::new(self.factor()?))),
            other => self.err(format!("expected an index expression, found {other:?}")),
        }
    }

    fn reference(&mut self) -> Result<Reference, RiaError> {
        let var = self.ident("a variable name")?;
        self.expect('[')?;
        let mut indices = vec![self.expr()?];
        while self.eat(',') {
            indices.push(self.expr()?);
        }
        self.expect(']')?;
        Ok(Reference { var, indices })
    }

    fn term(&mut self) -> Result<Term, RiaError> {
        let mut factors = vec![self.reference()?];
        while self.eat('*') {
            factors.push(self.reference()?);
        }
        Ok(Term { factors })
    }
}

/// Parses a recurrence system; errors carry 1-based line numbers.
pub fn parse_system(text: &str) -> Result<RecurrenceSystem, RiaError> {
    let mut name = String::from("system");
    let mut consts = BTreeMap::new();
    let mut bounds: Vec<IndexSymbol> = Vec::new();
    let mut relations = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks = tokenize(line, body)?;
        let mut p = Parser {
            line,
            toks,
            pos: 0,
            consts: &consts,
        };
        match p.peek() {
            Some(Tok::Ident(kw)) if kw == "system" && !matches!(p.toks.get(1), Some(Tok::Punct('['))) => {
                p.pos += 1;
                name = p.ident("a system name")?;
                p.done()?;
            }
            Some(Tok::Ident(kw)) if kw == "const" => {
                p.pos += 1;
                let c = p.ident("a constant name")?;
                p.expect('=')?;
                let v = p.int()?;
                p.done()?;
                consts.insert(c, v);
            }
            Some(Tok::Ident(kw)) if kw == "index" => {
                p.pos += 1;
                let s = p.ident("an index symbol")?;
                p.expect('=')?;
                let lo = p.int()?;
                if p.next() != Some(Tok::Range) {
                    return p.err("expected `..` in index bounds");
                }
                let hi = p.int()?;
                p.done()?;
                if hi <= lo {
                    return p.err(format!("index `{s}` has an empty range {lo}..{hi}"));
                }
                if bounds.iter().any(|b| b.name == s) {
                    return p.err(format!("index `{s}` declared twice"));
                }
                bounds.push(IndexSymbol { name: s, lo, hi });
            }
            _ => {
                let lhs = p.reference()?;
                p.expect('=')?;
                let mut rhs = vec![p.term()?];
                while p.eat('+') {
                    rhs.push(p.term()?);
                }
                p.done()?;
                relations.push((line, Relation { lhs, rhs }));
            }
        }
    }
    if relations.is_empty() {
        return Err(RiaError::Parse {
            line: text.lines().count().max(1),
            msg: "no recurrence relations".into(),
        });
    }
    // Undeclared symbols take default bounds, in order of first appearance.
    let mut seen: BTreeSet<String> = bounds.iter().map(|b| b.name.clone()).collect();
    for (_, r) in &relations {
        for reference in std::iter::once(&r.lhs).chain(r.rhs.iter().flat_map(|t| &t.factors)) {
            for e in &reference.indices {
                let mut syms = BTreeSet::new();
                e.symbols(&mut syms);
                for s in syms {
                    if seen.insert(s.clone()) {
                        bounds.push(IndexSymbol {
                            name: s,
                            lo: DEFAULT_BOUNDS.0,
                            hi: DEFAULT_BOUNDS.1,
                        });
                    }
                }
            }
        }
    }
    RecurrenceSystem::new(name, bounds, relations.into_iter().map(|(_, r)| r).collect())
}
