//! Small exact symbolic layer: multivariate polynomials over `Q` in the
//! fixed variables `q1, q2, k`, rational functions of those, and linear
//! expressions in named unknowns with field coefficients.
//!
//! This is all the symbolic algebra the realization solvers need: matching
//! equations are linear in the unknown structure constants, with
//! coefficients that are rational functions of the weights, and the free
//! ghost-tower index `k` enters polynomially. Degrees stay tiny, so the
//! normalization here is deliberately light: rational content is stripped
//! and exact division is attempted, but no general multivariate gcd is
//! computed. Equality is decided by cross-multiplication, which is exact.

use std::collections::BTreeMap;
use std::fmt;

use crate::arith::Rational;

/// Variables of the polynomial layer.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PVar {
    Q1,
    Q2,
    K,
}

impl PVar {
    fn index(self) -> usize {
        match self {
            PVar::Q1 => 0,
            PVar::Q2 => 1,
            PVar::K => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            PVar::Q1 => "q1",
            PVar::Q2 => "q2",
            PVar::K => "k",
        }
    }
}

type Mono = [u8; 3];

/// A multivariate polynomial over `Q` in `(q1, q2, k)`.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct MPoly {
    terms: BTreeMap<Mono, Rational>,
}

impl MPoly {
    pub fn zero() -> Self {
        MPoly { terms: BTreeMap::new() }
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = MPoly::zero();
        if !c.is_zero() {
            p.terms.insert([0, 0, 0], c);
        }
        p
    }

    pub fn one() -> Self {
        MPoly::constant(Rational::one())
    }

    pub fn var(v: PVar) -> Self {
        let mut mono = [0u8; 3];
        mono[v.index()] = 1;
        let mut p = MPoly::zero();
        p.terms.insert(mono, Rational::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        if self.terms.is_empty() {
            return Some(Rational::zero());
        }
        if self.terms.len() == 1 {
            if let Some(c) = self.terms.get(&[0, 0, 0]) {
                return Some(c.clone());
            }
        }
        None
    }

    fn insert(&mut self, mono: Mono, c: Rational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(mono).or_insert_with(Rational::zero);
        *entry += &c;
        if entry.is_zero() {
            self.terms.remove(&mono);
        }
    }

    pub fn add(&self, other: &MPoly) -> MPoly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.insert(*m, c.clone());
        }
        out
    }

    pub fn neg(&self) -> MPoly {
        MPoly { terms: self.terms.iter().map(|(m, c)| (*m, -c)).collect() }
    }

    pub fn sub(&self, other: &MPoly) -> MPoly {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &MPoly) -> MPoly {
        let mut out = MPoly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mono = [ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2]];
                out.insert(mono, ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, c: &Rational) -> MPoly {
        if c.is_zero() {
            return MPoly::zero();
        }
        MPoly { terms: self.terms.iter().map(|(m, v)| (*m, v * c)).collect() }
    }

    /// Substitute rational values for any subset of the variables.
    pub fn eval(&self, q1: Option<&Rational>, q2: Option<&Rational>, k: Option<&Rational>) -> MPoly {
        let subs = [q1, q2, k];
        let mut out = MPoly::zero();
        for (m, c) in &self.terms {
            let mut coeff = c.clone();
            let mut mono = *m;
            for (i, sub) in subs.iter().enumerate() {
                if let Some(v) = sub {
                    coeff = &coeff * &v.pow(m[i] as i32);
                    mono[i] = 0;
                }
            }
            out.insert(mono, coeff);
        }
        out
    }

    /// Leading monomial under lexicographic order, with coefficient.
    fn leading(&self) -> Option<(Mono, &Rational)> {
        self.terms.iter().next_back().map(|(m, c)| (*m, c))
    }

    /// Exact division; `None` if `self` is not a polynomial multiple of `d`.
    pub fn exact_div(&self, d: &MPoly) -> Option<MPoly> {
        if d.is_zero() {
            return None;
        }
        let (dm, dc) = d.leading().unwrap();
        let mut rem = self.clone();
        let mut quot = MPoly::zero();
        while !rem.is_zero() {
            let (rm, rc) = rem.leading().unwrap();
            if rm[0] < dm[0] || rm[1] < dm[1] || rm[2] < dm[2] {
                return None;
            }
            let mono = [rm[0] - dm[0], rm[1] - dm[1], rm[2] - dm[2]];
            let coeff = rc / dc;
            let mut t = MPoly::zero();
            t.insert(mono, coeff);
            rem = rem.sub(&t.mul(d));
            quot = quot.add(&t);
        }
        Some(quot)
    }

    /// Degree in a single variable.
    pub fn degree_in(&self, v: PVar) -> u8 {
        self.terms.keys().map(|m| m[v.index()]).max().unwrap_or(0)
    }

    /// Compose with the substitution `k -> k + c`, exactly.
    pub fn shift_k(&self, c: i64) -> MPoly {
        let mut out = MPoly::zero();
        let shift = MPoly::var(PVar::K).add(&MPoly::constant(Rational::from_int(c)));
        for (m, coeff) in &self.terms {
            let mut term = MPoly::constant(coeff.clone());
            let mut rest = *m;
            let e = rest[PVar::K.index()];
            rest[PVar::K.index()] = 0;
            let mut base = MPoly::zero();
            base.insert(rest, Rational::one());
            term = term.mul(&base);
            for _ in 0..e {
                term = term.mul(&shift);
            }
            out = out.add(&term);
        }
        out
    }

    /// Coefficient polynomials with respect to powers of one variable.
    pub fn coefficients_in(&self, v: PVar) -> BTreeMap<u8, MPoly> {
        let mut out: BTreeMap<u8, MPoly> = BTreeMap::new();
        let i = v.index();
        for (m, c) in &self.terms {
            let mut rest = *m;
            let d = rest[i];
            rest[i] = 0;
            out.entry(d).or_insert_with(MPoly::zero).insert(rest, c.clone());
        }
        out
    }
}

impl fmt::Display for MPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            let mut part = String::new();
            let abs = c.abs();
            if m == &[0, 0, 0] || !abs.is_one() {
                part.push_str(&abs.to_string());
            }
            for (v, e) in [(PVar::Q1, m[0]), (PVar::Q2, m[1]), (PVar::K, m[2])] {
                if e > 0 {
                    if !part.is_empty() {
                        part.push('*');
                    }
                    part.push_str(v.name());
                    if e > 1 {
                        part.push_str(&format!("^{e}"));
                    }
                }
            }
            if first {
                if c.is_negative() {
                    write!(f, "-{part}")?;
                } else {
                    write!(f, "{part}")?;
                }
                first = false;
            } else if c.is_negative() {
                write!(f, " - {part}")?;
            } else {
                write!(f, " + {part}")?;
            }
        }
        Ok(())
    }
}

/// A rational function `num/den` of `(q1, q2, k)`.
#[derive(Clone, Debug)]
pub struct RatFunc {
    num: MPoly,
    den: MPoly,
}

impl RatFunc {
    pub fn new(num: MPoly, den: MPoly) -> Self {
        assert!(!den.is_zero(), "rational function with zero denominator");
        let mut rf = RatFunc { num, den };
        rf.normalize();
        rf
    }

    pub fn from_poly(p: MPoly) -> Self {
        RatFunc { num: p, den: MPoly::one() }
    }

    pub fn constant(c: Rational) -> Self {
        RatFunc::from_poly(MPoly::constant(c))
    }

    pub fn zero() -> Self {
        RatFunc::constant(Rational::zero())
    }

    pub fn one() -> Self {
        RatFunc::constant(Rational::one())
    }

    pub fn var(v: PVar) -> Self {
        RatFunc::from_poly(MPoly::var(v))
    }

    pub fn num(&self) -> &MPoly {
        &self.num
    }

    pub fn den(&self) -> &MPoly {
        &self.den
    }

    fn normalize(&mut self) {
        if self.num.is_zero() {
            self.den = MPoly::one();
            return;
        }
        if let Some(q) = self.num.exact_div(&self.den) {
            self.num = q;
            self.den = MPoly::one();
        }
        // Make the leading coefficient of the denominator positive and
        // clear rational content from the denominator.
        if let Some((_, c)) = self.den.leading() {
            let c = c.clone();
            if !c.is_one() {
                let inv = c.recip();
                self.den = self.den.scale(&inv);
                self.num = self.num.scale(&inv);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match (self.num.as_constant(), self.den.as_constant()) {
            (Some(n), Some(d)) => Some(&n / &d),
            _ => None,
        }
    }

    pub fn add(&self, other: &RatFunc) -> RatFunc {
        RatFunc::new(
            self.num.mul(&other.den).add(&other.num.mul(&self.den)),
            self.den.mul(&other.den),
        )
    }

    pub fn sub(&self, other: &RatFunc) -> RatFunc {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> RatFunc {
        RatFunc { num: self.num.neg(), den: self.den.clone() }
    }

    pub fn mul(&self, other: &RatFunc) -> RatFunc {
        RatFunc::new(self.num.mul(&other.num), self.den.mul(&other.den))
    }

    pub fn div(&self, other: &RatFunc) -> RatFunc {
        assert!(!other.is_zero(), "division by zero rational function");
        RatFunc::new(self.num.mul(&other.den), self.den.mul(&other.num))
    }

    pub fn scale(&self, c: &Rational) -> RatFunc {
        RatFunc::new(self.num.scale(c), self.den.clone())
    }

    pub fn eval(&self, q1: Option<&Rational>, q2: Option<&Rational>, k: Option<&Rational>) -> RatFunc {
        RatFunc::new(self.num.eval(q1, q2, k), self.den.eval(q1, q2, k))
    }
}

impl PartialEq for RatFunc {
    fn eq(&self, other: &Self) -> bool {
        self.num.mul(&other.den) == other.num.mul(&self.den)
    }
}

impl fmt::Display for RatFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.as_constant().map(|c| c.is_one()).unwrap_or(false) {
            write!(f, "{}", self.num)
        } else {
            write!(f, "({}) / ({})", self.num, self.den)
        }
    }
}

/// Field-like coefficient domains for linear algebra.
pub trait FieldElem: Clone + PartialEq + fmt::Debug + fmt::Display {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
}

impl FieldElem for Rational {
    fn zero() -> Self {
        Rational::zero()
    }
    fn one() -> Self {
        Rational::one()
    }
    fn is_zero(&self) -> bool {
        Rational::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn neg(&self) -> Self {
        -self
    }
}

impl FieldElem for RatFunc {
    fn zero() -> Self {
        RatFunc::zero()
    }
    fn one() -> Self {
        RatFunc::one()
    }
    fn is_zero(&self) -> bool {
        RatFunc::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        RatFunc::add(self, other)
    }
    fn sub(&self, other: &Self) -> Self {
        RatFunc::sub(self, other)
    }
    fn mul(&self, other: &Self) -> Self {
        RatFunc::mul(self, other)
    }
    fn div(&self, other: &Self) -> Self {
        RatFunc::div(self, other)
    }
    fn neg(&self) -> Self {
        RatFunc::neg(self)
    }
}

/// A linear expression `constant + sum coeff_i * unknown_i`.
#[derive(Clone, PartialEq, Debug)]
pub struct LinExpr<F: FieldElem> {
    pub constant: F,
    pub coeffs: BTreeMap<String, F>,
}

impl<F: FieldElem> LinExpr<F> {
    pub fn zero() -> Self {
        LinExpr { constant: F::zero(), coeffs: BTreeMap::new() }
    }

    pub fn constant(c: F) -> Self {
        LinExpr { constant: c, coeffs: BTreeMap::new() }
    }

    pub fn unknown(name: impl Into<String>) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(name.into(), F::one());
        LinExpr { constant: F::zero(), coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.coeffs.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_constant(&self) -> Option<&F> {
        self.coeffs.is_empty().then_some(&self.constant)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.constant = out.constant.add(&other.constant);
        for (k, v) in &other.coeffs {
            let entry = out.coeffs.entry(k.clone()).or_insert_with(F::zero);
            *entry = entry.add(v);
        }
        out.prune();
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        LinExpr {
            constant: self.constant.neg(),
            coeffs: self.coeffs.iter().map(|(k, v)| (k.clone(), v.neg())).collect(),
        }
    }

    pub fn scale(&self, c: &F) -> Self {
        if c.is_zero() {
            return LinExpr::zero();
        }
        LinExpr {
            constant: self.constant.mul(c),
            coeffs: self.coeffs.iter().map(|(k, v)| (k.clone(), v.mul(c))).collect(),
        }
    }

    /// Substitute an assignment `name := value` (value may itself be linear).
    pub fn substitute(&self, name: &str, value: &LinExpr<F>) -> Self {
        match self.coeffs.get(name) {
            None => self.clone(),
            Some(c) => {
                let c = c.clone();
                let mut out = self.clone();
                out.coeffs.remove(name);
                out.add(&value.scale(&c))
            }
        }
    }

    fn prune(&mut self) {
        self.coeffs.retain(|_, v| !v.is_zero());
    }
}

impl<F: FieldElem> fmt::Display for LinExpr<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if !self.constant.is_zero() || self.coeffs.is_empty() {
            parts.push(format!("{}", self.constant));
        }
        for (k, v) in &self.coeffs {
            parts.push(format!("({v})*{k}"));
        }
        write!(f, "{}", parts.join(" + "))
    }
}

/// Outcome of an exact linear solve.
#[derive(Clone, Debug)]
pub struct LinearSolution<F: FieldElem> {
    /// Solved unknowns, expressed over the free unknowns (if any).
    pub assignments: BTreeMap<String, LinExpr<F>>,
    /// Unknowns left undetermined by the system.
    pub free: Vec<String>,
    /// First equation that reduced to a nonzero constant, if any.
    pub inconsistency: Option<String>,
}

impl<F: FieldElem> LinearSolution<F> {
    pub fn is_consistent(&self) -> bool {
        self.inconsistency.is_none()
    }

    /// The solved value of an unknown when it is fully determined.
    pub fn value(&self, name: &str) -> Option<&F> {
        self.assignments.get(name).and_then(|e| e.as_constant())
    }
}

/// Solve `equations = 0` for the unknowns appearing in them.
///
/// Deterministic Gaussian elimination in symbol order; the solution is the
/// affine space over whatever unknowns remain free. The first equation that
/// becomes a nonzero constant is reported verbatim.
pub fn linear_solve<F: FieldElem>(equations: &[LinExpr<F>]) -> LinearSolution<F> {
    let mut assignments: BTreeMap<String, LinExpr<F>> = BTreeMap::new();
    let mut inconsistency = None;

    for eq in equations {
        let mut reduced = eq.clone();
        for (name, value) in &assignments {
            reduced = reduced.substitute(name, value);
        }
        if reduced.coeffs.is_empty() {
            if !reduced.constant.is_zero() && inconsistency.is_none() {
                inconsistency = Some(format!("{eq} = 0 reduces to {} = 0", reduced.constant));
            }
            continue;
        }
        // Deterministic pivot: first unknown in symbol order.
        let pivot = reduced.coeffs.keys().next().unwrap().clone();
        let c = reduced.coeffs.remove(&pivot).unwrap();
        let inv = F::one().div(&c);
        let value = reduced.neg().scale(&inv);
        for assigned in assignments.values_mut() {
            *assigned = assigned.substitute(&pivot, &value);
        }
        assignments.insert(pivot, value);
    }

    let mut free: Vec<String> = Vec::new();
    for expr in assignments.values() {
        for name in expr.coeffs.keys() {
            if !assignments.contains_key(name) && !free.contains(name) {
                free.push(name.clone());
            }
        }
    }
    free.sort();

    LinearSolution { assignments, free, inconsistency }
}
