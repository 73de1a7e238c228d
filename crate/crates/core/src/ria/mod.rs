//! Regular iterative algorithm (RIA) analysis.
//!
//! A recurrence system is RIA when every variable is assigned once per index
//! point and every right-hand reference sits at a constant offset from the
//! point being defined. Such systems map directly onto a systolic array; a
//! linear schedule `lambda . index` then orders the computation.

mod builtins;
mod expr;
mod parse;

pub use builtins::{builtin, builtin_names, builtin_source};
pub use expr::{Atom, Expr, Linear};
pub use parse::{parse_system, DEFAULT_BOUNDS};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Index points enumerated per relation before giving up.
pub const MAX_DOMAIN_POINTS: u64 = 1 << 22;

#[derive(Debug, Error)]
pub enum RiaError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("variable `{var}` is used with {found} indices but was first used with {expected}")]
    Arity { var: String, expected: usize, found: usize },
    #[error("relation {relation} spans {points} index points, more than the limit of {limit}")]
    DomainTooLarge { relation: usize, points: u64, limit: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSymbol {
    pub name: String,
    /// Inclusive lower bound.
    pub lo: i64,
    /// Exclusive upper bound.
    pub hi: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reference {
    pub var: String,
    pub indices: Vec<Expr>,
}

impl Reference {
    fn rename(&self, map: &BTreeMap<String, String>) -> Reference {
        Reference {
            var: self.var.clone(),
            indices: self.indices.iter().map(|e| e.rename(map)).collect(),
        }
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.var)?;
        for (i, e) in self.indices.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("]")
    }
}

/// Product of references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub factors: Vec<Reference>,
}

/// `lhs = term + term + ...`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub lhs: Reference,
    pub rhs: Vec<Term>,
}

impl Relation {
    pub fn references(&self) -> impl Iterator<Item = &Reference> {
        self.rhs.iter().flat_map(|t| t.factors.iter())
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = ", self.lhs)?;
        for (i, t) in self.rhs.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            for (j, r) in t.factors.iter().enumerate() {
                if j > 0 {
                    f.write_str("*")?;
                }
                write!(f, "{r}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecurrenceSystem {
    pub name: String,
    pub symbols: Vec<IndexSymbol>,
    pub relations: Vec<Relation>,
}

impl RecurrenceSystem {
    /// Builds a system, checking that each variable keeps one arity.
    pub fn new(name: String, symbols: Vec<IndexSymbol>, relations: Vec<Relation>) -> Result<Self, RiaError> {
        let sys = Self {
            name,
            symbols,
            relations,
        };
        sys.arities()?;
        Ok(sys)
    }

    /// Number of indices of every variable.
    pub fn arities(&self) -> Result<BTreeMap<String, usize>, RiaError> {
        let mut out = BTreeMap::new();
        for r in &self.relations {
            for reference in std::iter::once(&r.lhs).chain(r.references()) {
                let n = reference.indices.len();
                match out.get(&reference.var) {
                    Some(&expected) if expected != n => {
                        return Err(RiaError::Arity {
                            var: reference.var.clone(),
                            expected,
                            found: n,
                        })
                    }
                    _ => {
                        out.insert(reference.var.clone(), n);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Variables assigned by some relation.
    pub fn defined(&self) -> BTreeSet<&str> {
        self.relations.iter().map(|r| r.lhs.var.as_str()).collect()
    }

    pub fn symbol_names(&self) -> Vec<&str> {
        self.symbols.iter().map(|s| s.name.as_str()).collect()
    }

    /// Renames index symbols; names missing from `map` are kept.
    pub fn rename_symbols(&self, map: &BTreeMap<String, String>) -> RecurrenceSystem {
        let rename = |s: &String| map.get(s).cloned().unwrap_or_else(|| s.clone());
        RecurrenceSystem {
            name: self.name.clone(),
            symbols: self
                .symbols
                .iter()
                .map(|s| IndexSymbol {
                    name: rename(&s.name),
                    lo: s.lo,
                    hi: s.hi,
                })
                .collect(),
            relations: self
                .relations
                .iter()
                .map(|r| Relation {
                    lhs: r.lhs.rename(map),
                    rhs: r
                        .rhs
                        .iter()
                        .map(|t| Term {
                            factors: t.factors.iter().map(|f| f.rename(map)).collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl fmt::Display for RecurrenceSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "system {}", self.name)?;
        for s in &self.symbols {
            writeln!(f, "index {} = {}..{}", s.name, s.lo, s.hi)?;
        }
        for r in &self.relations {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Displacement of a right-hand reference from the defined point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Offset {
    Constant(Vec<i64>),
    /// At least one component still varies with the index point.
    NonConstant {
        components: Vec<Linear>,
        depends_on: BTreeSet<String>,
    },
    /// Reference and defined variable have different arities.
    Incomparable { lhs_arity: usize, rhs_arity: usize },
}

impl Offset {
    pub fn is_constant(&self) -> bool {
        matches!(self, Offset::Constant(_))
    }
}

impl fmt::Display for Offset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Offset::Constant(v) => {
                let parts: Vec<String> = v.iter().map(i64::to_string).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            Offset::NonConstant { components, .. } => {
                let parts: Vec<String> = components.iter().map(Linear::to_string).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            Offset::Incomparable { lhs_arity, rhs_arity } => {
                write!(f, "incomparable ({rhs_arity} vs {lhs_arity} indices)")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetAnalysis {
    pub relation: usize,
    pub defined: Reference,
    pub reference: Reference,
    pub offset: Offset,
}

/// Offset (reference minus defined point) of every right-hand reference.
pub fn analyze_offsets(sys: &RecurrenceSystem) -> Vec<OffsetAnalysis> {
    let mut out = Vec::new();
    for (ri, r) in sys.relations.iter().enumerate() {
        for reference in r.references() {
            let offset = if reference.indices.len() != r.lhs.indices.len() {
                Offset::Incomparable {
                    lhs_arity: r.lhs.indices.len(),
                    rhs_arity: reference.indices.len(),
                }
            } else {
                let components: Vec<Linear> = reference
                    .indices
                    .iter()
                    .zip(&r.lhs.indices)
                    .map(|(a, b)| a.linear().plus(&b.linear(), -1))
                    .collect();
                if components.iter().all(Linear::is_constant) {
                    Offset::Constant(components.iter().map(|c| c.constant).collect())
                } else {
                    let depends_on = components.iter().flat_map(Linear::free_symbols).collect();
                    Offset::NonConstant {
                        components,
                        depends_on,
                    }
                }
            };
            out.push(OffsetAnalysis {
                relation: ri,
                defined: r.lhs.clone(),
                reference: reference.clone(),
                offset,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "class", content = "reasons", rename_all = "snake_case")]
pub enum Classification {
    Ria,
    /// Sorted, de-duplicated reasons.
    NotRia(Vec<String>),
}

impl Classification {
    pub fn is_ria(&self) -> bool {
        matches!(self, Classification::Ria)
    }
}

fn domain(sys: &RecurrenceSystem, names: &BTreeSet<String>) -> Vec<(String, i64, i64)> {
    names
        .iter()
        .map(|n| match sys.symbols.iter().find(|s| &s.name == n) {
            Some(s) => (n.clone(), s.lo, s.hi),
            None => (n.clone(), DEFAULT_BOUNDS.0, DEFAULT_BOUNDS.1),
        })
        .collect()
}

fn relation_symbols(r: &Relation) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for reference in std::iter::once(&r.lhs).chain(r.references()) {
        for e in &reference.indices {
            e.symbols(&mut out);
        }
    }
    out
}

/// Variables written twice at the same point, as `X[...]` strings.
pub fn single_assignment_violations(sys: &RecurrenceSystem) -> Result<Vec<String>, RiaError> {
    let mut written: HashMap<(String, Vec<i64>), usize> = HashMap::new();
    let mut clashes = BTreeSet::new();
    for (ri, r) in sys.relations.iter().enumerate() {
        let dom = domain(sys, &relation_symbols(r));
        let points = dom
            .iter()
            .try_fold(1u64, |acc, (_, lo, hi)| acc.checked_mul((hi - lo).max(0) as u64))
            .unwrap_or(u64::MAX);
        if points > MAX_DOMAIN_POINTS {
            return Err(RiaError::DomainTooLarge {
                relation: ri,
                points,
                limit: MAX_DOMAIN_POINTS,
            });
        }
        if points == 0 {
            continue;
        }
        let mut env: BTreeMap<String, i64> = dom.iter().map(|(n, lo, _)| (n.clone(), *lo)).collect();
        loop {
            let idx: Vec<i64> = r
                .lhs
                .indices
                .iter()
                .map(|e| e.eval(&env).expect("relation symbols are bound"))
                .collect();
            if written.insert((r.lhs.var.clone(), idx.clone()), ri).is_some() {
                let parts: Vec<String> = idx.iter().map(i64::to_string).collect();
                clashes.insert(format!("{}[{}]", r.lhs.var, parts.join(",")));
            }
            // Odometer step over the domain.
            let mut carry = true;
            for (n, lo, hi) in dom.iter().rev() {
                let v = env.get_mut(n).expect("bound");
                *v += 1;
                if *v < *hi {
                    carry = false;
                    break;
                }
                *v = *lo;
            }
            if carry {
                break;
            }
        }
    }
    Ok(clashes.into_iter().collect())
}

/// RIA verdict with reasons naming the offending reference.
pub fn classify(sys: &RecurrenceSystem) -> Result<Classification, RiaError> {
    let mut reasons = BTreeSet::new();
    for a in analyze_offsets(sys) {
        match &a.offset {
            Offset::Constant(_) => {}
            Offset::NonConstant { depends_on, .. } => {
                let syms: Vec<&str> = depends_on.iter().map(String::as_str).collect();
                reasons.insert(format!(
                    "offset of {} in {} depends on {}",
                    a.reference,
                    a.defined.var,
                    syms.join(", ")
                ));
            }
            Offset::Incomparable { lhs_arity, rhs_arity } => {
                reasons.insert(format!(
                    "{} has {} indices but {} has {}",
                    a.reference, rhs_arity, a.defined.var, lhs_arity
                ));
            }
        }
    }
    let clashes = single_assignment_violations(sys)?;
    if let Some(first) = clashes.first() {
        let more = if clashes.len() > 1 {
            format!(" and {} other points", clashes.len() - 1)
        } else {
            String::new()
        };
        reasons.insert(format!("{first}{more} assigned more than once"));
    }
    Ok(if reasons.is_empty() {
        Classification::Ria
    } else {
        Classification::NotRia(reasons.into_iter().collect())
    })
}

/// Dependence constraints `(distance, strict)` of a system with constant
/// offsets. Distance is defined point minus referenced point.
fn dependences(sys: &RecurrenceSystem) -> Option<Vec<(Vec<i64>, bool)>> {
    let defined = sys.defined();
    let mut out = Vec::new();
    for a in analyze_offsets(sys) {
        if !defined.contains(a.reference.var.as_str()) {
            continue;
        }
        let Offset::Constant(off) = &a.offset else {
            return None;
        };
        let strict = a.reference.var == a.defined.var;
        out.push((off.iter().map(|o| -o).collect(), strict));
    }
    Some(out)
}

fn dot(lambda: &[i64], dist: &[i64]) -> i64 {
    lambda.iter().zip(dist).map(|(a, b)| a * b).sum()
}

/// True when `lambda` respects every dependence: referenced values of a
/// defined variable are not scheduled later, and self-references strictly
/// earlier.
pub fn is_valid_schedule(sys: &RecurrenceSystem, lambda: &[i64]) -> bool {
    let Some(deps) = dependences(sys) else {
        return false;
    };
    lambda.iter().any(|&l| l != 0)
        && deps.iter().all(|(d, strict)| {
            d.len() == lambda.len() && {
                let v = dot(lambda, d);
                if *strict {
                    v > 0
                } else {
                    v >= 0
                }
            }
        })
}

/// Smallest valid linear schedule with coefficients in `{0, 1, 2}`, ordered
/// by coefficient sum then lexicographically. `None` when the system is not
/// RIA or no such schedule exists.
pub fn schedule(sys: &RecurrenceSystem) -> Option<Vec<i64>> {
    if !classify(sys).ok()?.is_ria() {
        return None;
    }
    let dims = sys.relations.first()?.lhs.indices.len();
    if sys.relations.iter().any(|r| r.lhs.indices.len() != dims) {
        return None;
    }
    let mut candidates: Vec<Vec<i64>> = (0..3usize.pow(dims as u32))
        .map(|mut n| {
            (0..dims)
                .map(|_| {
                    let d = (n % 3) as i64;
                    n /= 3;
                    d
                })
                .rev()
                .collect()
        })
        .collect();
    candidates.sort_by_key(|c| (c.iter().sum::<i64>(), c.clone()));
    candidates.into_iter().find(|c| is_valid_schedule(sys, c))
}

/// Everything `ria-check` reports, in printable form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RiaCheck {
    pub system: String,
    pub offsets: Vec<OffsetRow>,
    pub classification: Classification,
    pub schedule: Option<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OffsetRow {
    pub defined: String,
    pub reference: String,
    pub offset: String,
    pub constant: bool,
}

pub fn check(sys: &RecurrenceSystem) -> Result<RiaCheck, RiaError> {
    let classification = classify(sys)?;
    Ok(RiaCheck {
        system: sys.name.clone(),
        offsets: analyze_offsets(sys)
            .into_iter()
            .map(|a| OffsetRow {
                defined: a.defined.to_string(),
                reference: a.reference.to_string(),
                offset: a.offset.to_string(),
                constant: a.offset.is_constant(),
            })
            .collect(),
        schedule: if classification.is_ria() { schedule(sys) } else { None },
        classification,
    })
}
