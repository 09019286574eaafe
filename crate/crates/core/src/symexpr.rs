//! Canonical multivariate polynomials over named uncertainty parameters.
//!
//! A [`SymExpr`] is a sparse sum of `coefficient * monomial` terms with exact
//! rational coefficients. Monomials are sorted multisets of parameter names.
//! Context (`C_*`) and existence (`OPT_*`) parameters are binary, so their
//! exponents are flattened to one during normalization (`C^k = C`).
//!
//! Doubles only appear at [`SymExpr::evaluate`] and in [`CompiledExpr`], the
//! index-based evaluator used on hot paths such as the runtime planner.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Role of a parameter, derived from its name prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Reliability,
    Frequency,
    Cost,
    Context,
    Opt,
    /// A name outside the `r_/f_/w_/C_/OPT_` scheme. Real-valued, no domain.
    Free,
}

impl ParamKind {
    /// Binary parameters only ever take the values 0 and 1.
    pub fn is_binary(self) -> bool {
        matches!(self, ParamKind::Context | ParamKind::Opt)
    }

    pub fn admits(self, value: f64) -> bool {
        match self {
            ParamKind::Context | ParamKind::Opt => value == 0.0 || value == 1.0,
            ParamKind::Reliability | ParamKind::Frequency => (0.0..=1.0).contains(&value),
            ParamKind::Cost => value >= 0.0 && value.is_finite(),
            ParamKind::Free => value.is_finite(),
        }
    }
}

/// A named parameter together with its classification.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct Parameter {
    pub name: String,
    pub kind: ParamKind,
    /// Node or context id the parameter belongs to, in its encoded form
    /// (dots replaced by underscores). Empty for free names.
    pub owner: String,
}

impl Parameter {
    /// Classifies a name by prefix.
    ///
    /// `OPT_x`, `C_x` / `C1`, `r_x`, `f_x`, `w_x` follow the model naming
    /// scheme; the short forms `rT1_11` and `C1` used in hand-written
    /// formulae are accepted too.
    pub fn classify(name: &str) -> Parameter {
        let (kind, owner) = classify_name(name);
        Parameter { name: name.to_string(), kind, owner: owner.to_string() }
    }
}

fn classify_name(name: &str) -> (ParamKind, &str) {
    fn tail(rest: &str) -> Option<&str> {
        match rest.chars().next() {
            Some('_') => Some(&rest[1..]),
            Some(c) if c.is_ascii_digit() || c.is_ascii_uppercase() => Some(rest),
            _ => None,
        }
    }
    if let Some(rest) = name.strip_prefix("OPT") {
        if rest.is_empty() {
            return (ParamKind::Opt, "");
        }
        if let Some(owner) = tail(rest) {
            return (ParamKind::Opt, owner);
        }
    }
    let mut chars = name.chars();
    let kind = match chars.next() {
        Some('C') => ParamKind::Context,
        Some('r') => ParamKind::Reliability,
        Some('f') => ParamKind::Frequency,
        Some('w') => ParamKind::Cost,
        _ => return (ParamKind::Free, ""),
    };
    match tail(chars.as_str()) {
        Some(owner) => (kind, owner),
        None => (ParamKind::Free, ""),
    }
}

/// Whether `name` denotes a binary (context or existence) parameter.
pub fn is_binary(name: &str) -> bool {
    classify_name(name).0.is_binary()
}

/// Sorted product of parameter powers. The empty monomial is the constant 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Monomial(Vec<(Arc<str>, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(name: &str) -> Self {
        Monomial(vec![(Arc::from(name), 1)])
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factors(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(n, e)| (n.as_ref(), *e))
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let exp = if is_binary(&a[i].0) { 1 } else { a[i].1 + b[j].1 };
                    out.push((a[i].0.clone(), exp));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    fn from_factors(mut factors: Vec<(Arc<str>, u32)>) -> Monomial {
        factors.retain(|(_, e)| *e > 0);
        factors.sort_by(|x, y| x.0.cmp(&y.0));
        let mut out: Vec<(Arc<str>, u32)> = Vec::with_capacity(factors.len());
        for (name, exp) in factors {
            match out.last_mut() {
                Some(last) if last.0 == name => last.1 += exp,
                _ => out.push((name, exp)),
            }
        }
        for (name, exp) in out.iter_mut() {
            if is_binary(name) {
                *exp = 1;
            }
        }
        Monomial(out)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (i, (name, exp)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            write!(f, "{name}")?;
            if *exp > 1 {
                write!(f, "^{exp}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("missing binding for parameter `{0}`")]
    MissingBinding(String),
    #[error("value {value} is outside the domain of {kind:?} parameter `{name}`")]
    DomainViolation { name: String, kind: ParamKind, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("formula syntax error at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

/// Anything that can resolve a parameter name to a number.
pub trait Bindings {
    fn value_of(&self, name: &str) -> Option<f64>;
}

impl Bindings for HashMap<String, f64> {
    fn value_of(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Bindings for BTreeMap<String, f64> {
    fn value_of(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl<B: Bindings + ?Sized> Bindings for &B {
    fn value_of(&self, name: &str) -> Option<f64> {
        (**self).value_of(name)
    }
}

/// Canonical polynomial. Terms are kept in a `BTreeMap`, so monomials are
/// pairwise distinct and lexicographically sorted, and zero coefficients are
/// never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SymExpr {
    terms: BTreeMap<Monomial, BigRational>,
}

impl SymExpr {
    pub fn zero() -> Self {
        SymExpr::default()
    }

    pub fn one() -> Self {
        SymExpr::constant(1)
    }

    pub fn constant(c: impl Into<BigInt>) -> Self {
        SymExpr::from_rational(BigRational::from_integer(c.into()))
    }

    pub fn from_rational(c: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::one(), c);
        }
        SymExpr { terms }
    }

    pub fn param(name: &str) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Monomial::var(name), BigRational::one());
        SymExpr { terms }
    }

    /// Product of the given parameters (the constant 1 for an empty list).
    pub fn product_of<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let factors = names.into_iter().map(|n| (Arc::from(n), 1)).collect();
        let mut terms = BTreeMap::new();
        terms.insert(Monomial::from_factors(factors), BigRational::one());
        SymExpr { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn add(&self, other: &SymExpr) -> SymExpr {
        let mut out = self.clone();
        out.add_assign_scaled(other, &BigRational::one());
        out
    }

    pub fn sub(&self, other: &SymExpr) -> SymExpr {
        let mut out = self.clone();
        out.add_assign_scaled(other, &-BigRational::one());
        out
    }

    pub fn neg(&self) -> SymExpr {
        SymExpr { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect() }
    }

    pub fn mul(&self, other: &SymExpr) -> SymExpr {
        let mut terms: BTreeMap<Monomial, BigRational> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                accumulate(&mut terms, ma.mul(mb), ca * cb);
            }
        }
        SymExpr { terms }
    }

    pub fn scale(&self, c: &BigRational) -> SymExpr {
        if c.is_zero() {
            return SymExpr::zero();
        }
        SymExpr { terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect() }
    }

    fn add_assign_scaled(&mut self, other: &SymExpr, scale: &BigRational) {
        for (m, c) in &other.terms {
            accumulate(&mut self.terms, m.clone(), c * scale);
        }
    }

    /// Distinct parameter names with a nonzero coefficient somewhere.
    pub fn names(&self) -> BTreeSet<String> {
        self.terms
            .keys()
            .flat_map(|m| m.factors().map(|(n, _)| n.to_string()))
            .collect()
    }

    pub fn parameters(&self) -> BTreeSet<Parameter> {
        self.names().iter().map(|n| Parameter::classify(n)).collect()
    }

    /// Evaluates in double precision. Every occurring parameter must be
    /// bound, and bound inside its kind's domain.
    pub fn evaluate<B: Bindings + ?Sized>(&self, bindings: &B) -> Result<f64, EvalError> {
        let mut cache: HashMap<&str, f64> = HashMap::new();
        let mut total = 0.0;
        for (m, c) in &self.terms {
            let mut v = c.to_f64().unwrap_or(f64::NAN);
            for (name, exp) in m.factors() {
                let x = match cache.get(name) {
                    Some(x) => *x,
                    None => {
                        let x = bindings
                            .value_of(name)
                            .ok_or_else(|| EvalError::MissingBinding(name.to_string()))?;
                        let kind = classify_name(name).0;
                        if !kind.admits(x) {
                            return Err(EvalError::DomainViolation {
                                name: name.to_string(),
                                kind,
                                value: x,
                            });
                        }
                        cache.insert(name, x);
                        x
                    }
                };
                v *= x.powi(exp as i32);
            }
            total += v;
        }
        Ok(total)
    }

    /// Replaces the bound parameters by their (exact) values and
    /// renormalizes. Unbound parameters stay symbolic.
    pub fn substitute<B: Bindings + ?Sized>(&self, partial: &B) -> SymExpr {
        let mut memo: HashMap<&str, Option<BigRational>> = HashMap::new();
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut coeff = c.clone();
            let mut rest = Vec::new();
            for (name, exp) in m.factors() {
                let value = memo
                    .entry(name)
                    .or_insert_with(|| partial.value_of(name).and_then(BigRational::from_float));
                match value {
                    Some(v) => {
                        for _ in 0..exp {
                            coeff *= &*v;
                        }
                    }
                    None => rest.push((Arc::from(name), exp)),
                }
                if coeff.is_zero() {
                    break;
                }
            }
            if !coeff.is_zero() {
                accumulate(&mut terms, Monomial::from_factors(rest), coeff);
            }
        }
        SymExpr { terms }
    }

    /// Renames parameters; colliding names merge (and binary exponents
    /// flatten) through renormalization.
    pub fn rename(&self, f: impl Fn(&str) -> String) -> SymExpr {
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let factors = m.factors().map(|(n, e)| (Arc::from(f(n).as_str()), e)).collect();
            accumulate(&mut terms, Monomial::from_factors(factors), c.clone());
        }
        SymExpr { terms }
    }

    /// Deterministic infix rendering, e.g. `-C_a*r_x + 2*f_y^2 + 1/2`.
    pub fn render(&self) -> String {
        self.to_string()
    }

    pub fn size_bytes(&self) -> usize {
        self.render().len()
    }

    pub fn parse(text: &str) -> Result<SymExpr, ParseError> {
        Parser::new(text).parse_all()
    }

    pub fn compile(&self) -> CompiledExpr {
        CompiledExpr::from_expr(self)
    }
}

fn accumulate(terms: &mut BTreeMap<Monomial, BigRational>, m: Monomial, c: BigRational) {
    if c.is_zero() {
        return;
    }
    match terms.entry(m) {
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut e) => {
            *e.get_mut() += c;
            if e.get().is_zero() {
                e.remove();
            }
        }
    }
}

fn fmt_ratio(c: &BigRational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let negative = c.is_negative();
            match (i, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let abs = c.abs();
            if m.is_one() {
                write!(f, "{}", fmt_ratio(&abs))?;
            } else if abs.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{}*{m}", fmt_ratio(&abs))?;
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for SymExpr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SymExpr::parse(s)
    }
}

impl serde::Serialize for SymExpr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.render())
    }
}

impl<'de> serde::Deserialize<'de> for SymExpr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        SymExpr::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Recursive-descent parser for the rendering grammar, extended with
/// parentheses, unary minus and decimal literals.
struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { position: self.pos, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek_raw() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek_raw(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.peek_raw()
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek_raw() {
            self.pos += c.len_utf8();
        }
    }

    fn parse_all(mut self) -> Result<SymExpr, ParseError> {
        let e = self.expr()?;
        if self.peek().is_some() {
            return self.err("unexpected trailing input");
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<SymExpr, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.bump();
                    acc = acc.add(&self.term()?);
                }
                Some('-') => {
                    self.bump();
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<SymExpr, ParseError> {
        let mut acc = self.factor()?;
        while let Some('*') = self.peek() {
            self.bump();
            acc = acc.mul(&self.factor()?);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<SymExpr, ParseError> {
        match self.peek() {
            Some('-') => {
                self.bump();
                Ok(self.factor()?.neg())
            }
            Some('+') => {
                self.bump();
                self.factor()
            }
            _ => {
                let base = self.atom()?;
                if let Some('^') = self.peek() {
                    self.bump();
                    self.skip_ws();
                    let start = self.pos;
                    while matches!(self.peek_raw(), Some(c) if c.is_ascii_digit()) {
                        self.bump();
                    }
                    let exp: u32 = match self.src[start..self.pos].parse() {
                        Ok(e) => e,
                        Err(_) => return self.err("expected integer exponent"),
                    };
                    let mut out = SymExpr::one();
                    for _ in 0..exp {
                        out = out.mul(&base);
                    }
                    Ok(out)
                } else {
                    Ok(base)
                }
            }
        }
    }

    fn atom(&mut self) -> Result<SymExpr, ParseError> {
        match self.peek() {
            Some('(') => {
                self.bump();
                let e = self.expr()?;
                if self.peek() != Some(')') {
                    return self.err("expected `)`");
                }
                self.bump();
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let n = self.number()?;
                if let Some('/') = self.peek() {
                    self.bump();
                    self.skip_ws();
                    let d = self.number()?;
                    if d.is_zero() {
                        return self.err("division by zero");
                    }
                    Ok(SymExpr::from_rational(n / d))
                } else {
                    Ok(SymExpr::from_rational(n))
                }
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                while matches!(self.peek_raw(), Some(c) if c.is_ascii_alphanumeric() || c == '_' || c == '.')
                {
                    self.bump();
                }
                Ok(SymExpr::param(&self.src[start..self.pos]))
            }
            Some(c) => self.err(format!("unexpected character `{c}`")),
            None => self.err("unexpected end of input"),
        }
    }

    fn number(&mut self) -> Result<BigRational, ParseError> {
        let start = self.pos;
        while matches!(self.peek_raw(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        let int_part = &self.src[start..self.pos];
        let mut frac_part = "";
        if self.peek_raw() == Some('.') {
            self.bump();
            let fs = self.pos;
            while matches!(self.peek_raw(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
            frac_part = &self.src[fs..self.pos];
        }
        if int_part.is_empty() && frac_part.is_empty() {
            return self.err("expected number");
        }
        let digits = format!("{int_part}{frac_part}");
        let numer: BigInt = match digits.parse() {
            Ok(n) => n,
            Err(_) => return self.err("invalid number"),
        };
        let denom = num_traits::pow(BigInt::from(10), frac_part.len());
        Ok(BigRational::new(numer, denom))
    }
}

/// Index-based double-precision form of a [`SymExpr`].
///
/// Variables are addressed by position in [`CompiledExpr::vars`]; terms with
/// equal exponent vectors are merged. Partial evaluation folds known values
/// into the coefficients, which is what the planner does once per tick before
/// sweeping the knob grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    vars: Vec<Arc<str>>,
    terms: Vec<(f64, Vec<(usize, u32)>)>,
}

impl CompiledExpr {
    fn from_expr(e: &SymExpr) -> Self {
        let vars: Vec<Arc<str>> = {
            let set: BTreeSet<Arc<str>> =
                e.terms.keys().flat_map(|m| m.0.iter().map(|(n, _)| n.clone())).collect();
            set.into_iter().collect()
        };
        let index: HashMap<&str, usize> =
            vars.iter().enumerate().map(|(i, n)| (n.as_ref(), i)).collect();
        let terms = e
            .terms
            .iter()
            .map(|(m, c)| {
                let powers = m.factors().map(|(n, exp)| (index[n], exp)).collect();
                (c.to_f64().unwrap_or(f64::NAN), powers)
            })
            .collect();
        CompiledExpr { vars, terms }
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|v| v.as_ref())
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Evaluates with `values[i]` bound to `vars()[i]`. No domain checks.
    pub fn eval(&self, values: &[f64]) -> f64 {
        let mut total = 0.0;
        for (c, powers) in &self.terms {
            let mut v = *c;
            for &(i, e) in powers {
                let x = values[i];
                v *= if e == 1 { x } else { x.powi(e as i32) };
            }
            total += v;
        }
        total
    }

    /// Folds every variable `known` resolves into the coefficients.
    pub fn partial(&self, known: impl Fn(&str) -> Option<f64>) -> CompiledExpr {
        self.rebind(|name| match known(name) {
            Some(v) => Binding::Value(v),
            None => Binding::Var(name.to_string()),
        })
    }

    /// General rewrite: each variable is either replaced by a value or mapped
    /// to a (possibly shared) variable name in the result. Mapping several
    /// variables onto one name adds their exponents.
    pub fn rebind(&self, map: impl Fn(&str) -> Binding) -> CompiledExpr {
        let mapped: Vec<Binding> = self.vars.iter().map(|v| map(v)).collect();
        let new_vars: Vec<Arc<str>> = {
            let set: BTreeSet<&str> = mapped
                .iter()
                .filter_map(|b| match b {
                    Binding::Var(n) => Some(n.as_str()),
                    Binding::Value(_) => None,
                })
                .collect();
            set.into_iter().map(Arc::from).collect()
        };
        let index: HashMap<&str, usize> =
            new_vars.iter().enumerate().map(|(i, n)| (n.as_ref(), i)).collect();
        let mut merged: BTreeMap<Vec<(usize, u32)>, f64> = BTreeMap::new();
        for (c, powers) in &self.terms {
            let mut coeff = *c;
            let mut acc: BTreeMap<usize, u32> = BTreeMap::new();
            for &(i, e) in powers {
                match &mapped[i] {
                    Binding::Value(x) => coeff *= x.powi(e as i32),
                    Binding::Var(n) => *acc.entry(index[n.as_str()]).or_insert(0) += e,
                }
            }
            if coeff != 0.0 {
                *merged.entry(acc.into_iter().collect()).or_insert(0.0) += coeff;
            }
        }
        let terms = merged.into_iter().filter(|(_, c)| *c != 0.0).map(|(p, c)| (c, p)).collect();
        CompiledExpr { vars: new_vars, terms }
    }
}

/// Target of a variable in [`CompiledExpr::rebind`].
#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    Value(f64),
    Var(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> SymExpr {
        SymExpr::parse(s).unwrap()
    }

    fn bind(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn add_same_param_doubles() {
        let x = SymExpr::param("x");
        assert_eq!(x.add(&x).render(), "2*x");
    }

    #[test]
    fn context_is_idempotent() {
        let c = SymExpr::param("C1");
        assert_eq!(c.mul(&c), c);
        let opt = SymExpr::param("OPT_T1_X");
        assert_eq!(opt.mul(&opt).mul(&opt), opt);
        let r = SymExpr::param("r_a");
        assert_eq!(r.mul(&r).render(), "r_a^2");
    }

    #[test]
    fn sub_self_is_zero() {
        let a = p("3*r_a*f_a - C_c + 1/2");
        let z = a.sub(&a);
        assert!(z.is_zero());
        assert_eq!(z.render(), "0");
        assert_eq!(z.size_bytes(), 1);
    }

    #[test]
    fn evaluate_examples() {
        let e = p("r*f");
        assert_eq!(e.evaluate(&bind(&[("r", 0.9), ("f", 1.0)])).unwrap(), 0.9);
        let e = p("C1*r");
        assert_eq!(e.evaluate(&bind(&[("C1", 0.0), ("r", 0.7)])).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_errors() {
        let e = p("C1*r");
        assert_eq!(
            e.evaluate(&bind(&[("C1", 1.0)])),
            Err(EvalError::MissingBinding("r".into()))
        );
        assert!(matches!(
            e.evaluate(&bind(&[("C1", 0.5), ("r", 0.2)])),
            Err(EvalError::DomainViolation { kind: ParamKind::Context, .. })
        ));
        assert!(matches!(
            p("w_a").evaluate(&bind(&[("w_a", -1.0)])),
            Err(EvalError::DomainViolation { .. })
        ));
    }

    #[test]
    fn substitute_examples() {
        let e = p("C1*r");
        assert_eq!(e.substitute(&bind(&[("C1", 1.0)])), p("r"));
        assert_eq!(e.substitute(&bind(&[])), e);
        assert_eq!(p("r^2 + r").substitute(&bind(&[("r", 0.5)])).render(), "3/4");
    }

    #[test]
    fn parameters_lists_occurring_names() {
        let names: Vec<String> =
            p("r*f + C1").parameters().into_iter().map(|x| x.name).collect();
        assert_eq!(names, vec!["C1", "f", "r"]);
        assert!(p("x - x + y").names().contains("y"));
        assert!(!p("x - x + y").names().contains("x"));
    }

    #[test]
    fn classification() {
        assert_eq!(Parameter::classify("r_T1_11").kind, ParamKind::Reliability);
        assert_eq!(Parameter::classify("r_T1_11").owner, "T1_11");
        assert_eq!(Parameter::classify("rT1_11").kind, ParamKind::Reliability);
        assert_eq!(Parameter::classify("C_C1").kind, ParamKind::Context);
        assert_eq!(Parameter::classify("C1").kind, ParamKind::Context);
        assert_eq!(Parameter::classify("OPT_T1_X").kind, ParamKind::Opt);
        assert_eq!(Parameter::classify("w_T2").kind, ParamKind::Cost);
        assert_eq!(Parameter::classify("f").kind, ParamKind::Free);
        assert_eq!(Parameter::classify("reliability").kind, ParamKind::Free);
        assert_eq!(Parameter::classify("x").kind, ParamKind::Free);
    }

    #[test]
    fn render_is_canonical_and_reparses() {
        let e = p("-(C_a*r_x) + 2*f_y^2 + 1/2 + 0.25*w_q*C_a");
        let text = e.render();
        assert_eq!(text, "1/2 - C_a*r_x + 1/4*C_a*w_q + 2*f_y^2");
        assert_eq!(p(&text), e);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = SymExpr::parse("r + * f").unwrap_err();
        assert_eq!(err.position, 4);
        assert!(SymExpr::parse("(r").is_err());
        assert!(SymExpr::parse("1/0").is_err());
        assert!(SymExpr::parse("r $").is_err());
    }

    #[test]
    fn compiled_matches_exact() {
        let e = p("-C_a*r_x*r_y + C_a*r_x + 3*r_y^2 - 1/3");
        let b = bind(&[("C_a", 1.0), ("r_x", 0.3), ("r_y", 0.8)]);
        let c = e.compile();
        let values: Vec<f64> = c.vars().map(|v| b[v]).collect();
        assert!((c.eval(&values) - e.evaluate(&b).unwrap()).abs() < 1e-12);
        let part = c.partial(|n| if n == "C_a" { Some(1.0) } else { None });
        assert_eq!(part.vars().collect::<Vec<_>>(), vec!["r_x", "r_y"]);
        assert!((part.eval(&[0.3, 0.8]) - e.evaluate(&b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rebind_merges_grouped_variables() {
        let e = p("f_a*f_b*r + f_a");
        let g = e.compile().rebind(|n| match n {
            "r" => Binding::Value(0.5),
            _ => Binding::Var("k".into()),
        });
        assert_eq!(g.num_terms(), 2);
        assert!((g.eval(&[0.4]) - (0.5 * 0.16 + 0.4)).abs() < 1e-15);
    }
}
