use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Index expression: integer affine terms plus floor division and modulo by
/// positive literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(i64),
    Sym(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    /// Literal times expression.
    Scale(i64, Box<Expr>),
    /// Floor division by a positive literal.
    Div(Box<Expr>, i64),
    /// Euclidean remainder by a positive literal.
    Mod(Box<Expr>, i64),
}

impl Expr {
    pub fn sym(name: &str) -> Self {
        Expr::Sym(name.to_string())
    }

    /// True when the expression uses no floor division or modulo.
    pub fn is_affine(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Sym(_) => true,
            Expr::Add(a, b) | Expr::Sub(a, b) => a.is_affine() && b.is_affine(),
            Expr::Neg(a) | Expr::Scale(_, a) => a.is_affine(),
            Expr::Div(..) | Expr::Mod(..) => false,
        }
    }

    pub fn symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Sym(s) => {
                out.insert(s.clone());
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.symbols(out);
                b.symbols(out);
            }
            Expr::Neg(a) | Expr::Scale(_, a) | Expr::Div(a, _) | Expr::Mod(a, _) => a.symbols(out),
        }
    }

    /// Value under `env`; `None` if a symbol is unbound.
    pub fn eval(&self, env: &BTreeMap<String, i64>) -> Option<i64> {
        Some(match self {
            Expr::Const(c) => *c,
            Expr::Sym(s) => *env.get(s)?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Scale(k, a) => k * a.eval(env)?,
            Expr::Div(a, d) => a.eval(env)?.div_euclid(*d),
            Expr::Mod(a, d) => a.eval(env)?.rem_euclid(*d),
        })
    }

    pub fn rename(&self, map: &BTreeMap<String, String>) -> Expr {
        let r = |e: &Expr| Box::new(e.rename(map));
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Sym(s) => Expr::Sym(map.get(s).cloned().unwrap_or_else(|| s.clone())),
            Expr::Add(a, b) => Expr::Add(r(a), r(b)),
            Expr::Sub(a, b) => Expr::Sub(r(a), r(b)),
            Expr::Neg(a) => Expr::Neg(r(a)),
            Expr::Scale(k, a) => Expr::Scale(*k, r(a)),
            Expr::Div(a, d) => Expr::Div(r(a), *d),
            Expr::Mod(a, d) => Expr::Mod(r(a), *d),
        }
    }

    pub fn linear(&self) -> Linear {
        match self {
            Expr::Const(c) => Linear::constant(*c),
            Expr::Sym(s) => Linear::atom(Atom::Sym(s.clone())),
            Expr::Add(a, b) => a.linear().plus(&b.linear(), 1),
            Expr::Sub(a, b) => a.linear().plus(&b.linear(), -1),
            Expr::Neg(a) => a.linear().scaled(-1),
            Expr::Scale(k, a) => a.linear().scaled(*k),
            Expr::Div(a, d) => a.linear().floor_div(*d),
            Expr::Mod(a, d) => a.linear().modulo(*d),
        }
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Scale(..) | Expr::Div(..) | Expr::Mod(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Const(_) | Expr::Sym(_) => 4,
    }
}

fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if precedence(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Sym(s) => f.write_str(s),
            Expr::Add(a, b) => {
                wrap(f, a, 1)?;
                f.write_str("+")?;
                wrap(f, b, 2)
            }
            Expr::Sub(a, b) => {
                wrap(f, a, 1)?;
                f.write_str("-")?;
                wrap(f, b, 2)
            }
            Expr::Neg(a) => {
                f.write_str("-")?;
                wrap(f, a, 3)
            }
            Expr::Scale(k, a) => {
                write!(f, "{k}*")?;
                wrap(f, a, 3)
            }
            Expr::Div(a, d) => {
                wrap(f, a, 2)?;
                write!(f, "/{d}")
            }
            Expr::Mod(a, d) => {
                wrap(f, a, 2)?;
                write!(f, "%{d}")
            }
        }
    }
}

/// Non-linear building block of a normalised expression.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Sym(String),
    FloorDiv(Box<Linear>, i64),
    Mod(Box<Linear>, i64),
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Sym(s) => f.write_str(s),
            Atom::FloorDiv(l, d) => write!(f, "floor(({l})/{d})"),
            Atom::Mod(l, d) => write!(f, "({l})%{d}"),
        }
    }
}

/// `constant + sum(coefficient * atom)` with no zero coefficients.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Linear {
    pub constant: i64,
    pub terms: BTreeMap<Atom, i64>,
}

impl Linear {
    pub fn constant(c: i64) -> Self {
        Self {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    fn atom(a: Atom) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(a, 1);
        Self { constant: 0, terms }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// `self + k * other`
    pub fn plus(&self, other: &Linear, k: i64) -> Linear {
        let mut out = self.clone();
        out.constant += k * other.constant;
        for (a, c) in &other.terms {
            let e = out.terms.entry(a.clone()).or_insert(0);
            *e += k * c;
            if *e == 0 {
                out.terms.remove(a);
            }
        }
        out
    }

    pub fn scaled(&self, k: i64) -> Linear {
        if k == 0 {
            return Linear::constant(0);
        }
        Linear {
            constant: self.constant * k,
            terms: self.terms.iter().map(|(a, c)| (a.clone(), c * k)).collect(),
        }
    }

    fn floor_div(&self, d: i64) -> Linear {
        if d == 1 {
            self.clone()
        } else if self.is_constant() {
            Linear::constant(self.constant.div_euclid(d))
        } else {
            Linear::atom(Atom::FloorDiv(Box::new(self.clone()), d))
        }
    }

    fn modulo(&self, d: i64) -> Linear {
        if d == 1 {
            Linear::constant(0)
        } else if self.is_constant() {
            Linear::constant(self.constant.rem_euclid(d))
        } else {
            Linear::atom(Atom::Mod(Box::new(self.clone()), d))
        }
    }

    /// Index symbols the value still depends on.
    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for a in self.terms.keys() {
            match a {
                Atom::Sym(s) => {
                    out.insert(s.clone());
                }
                Atom::FloorDiv(l, _) | Atom::Mod(l, _) => out.extend(l.free_symbols()),
            }
        }
        out
    }
}

impl fmt::Display for Linear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (a, c) in &self.terms {
            let sign = if *c < 0 { "-" } else if first { "" } else { "+" };
            let mag = c.abs();
            f.write_str(sign)?;
            if mag != 1 {
                write!(f, "{mag}*")?;
            }
            write!(f, "{a}")?;
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant != 0 {
            write!(f, "{}{}", if self.constant < 0 { "-" } else { "+" }, self.constant.abs())
        } else {
            Ok(())
        }
    }
}
