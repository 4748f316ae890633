//! Canonical operator product expansions and mode extraction.
//!
//! An OPE here is a finite sum of terms
//!
//! ```text
//! coeff * (z-w)^{-a} * (zbar-wbar)^{-b} * dbar^j T(w, wbar)
//! ```
//!
//! with a single holomorphic pole order `a`, a signed antiholomorphic order
//! `b` (negative `b` encodes the positive powers `(zbar-wbar)^{-b}` that the
//! soft-current tower produces), a derivative order `j` acting on the target
//! current, and a generator label `T`. Canonical form means no derivative
//! operators are left pending on pole factors and terms with equal
//! `(a, b, j, T)` are merged.
//!
//! The templates built here keep their raw operator structure
//! `dbar_z^{p-x} dbar_w^{x} [content / (zbar - wbar)]` so that the
//! normalization steps stay visible: `dbar_z` acts only on the pole
//! (`dbar_z^k (zbar-wbar)^{-1} = (-1)^k k! (zbar-wbar)^{-k-1}`), while
//! `dbar_w` distributes by the Leibniz rule between pole and target.
//!
//! Mode extraction applies the triple contour of the 2D commutator to a
//! canonical expansion. The antiholomorphic `zbar` integral is the formal
//! rule
//!
//! ```text
//! oint dzbar/(2 pi i) zbar^A (zbar-wbar)^{-B} = -binom(A, B-1) wbar^{A-B+1}
//! ```
//!
//! for `A >= 0, B >= 1`, i.e. minus the residue at `zbar = wbar`; for
//! `B <= 0` the integrand is a polynomial in `zbar` times `zbar^A` and the
//! genuine residue at the origin applies (nonzero only for `A <= -1`). The
//! `wbar` integral then picks the mode `j = m + n` of the target.

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::arith::{binomial, factorial, pochhammer_falling, pochhammer_rising, HalfInt, Rational};
use crate::poly::LinExpr;
use crate::structure::{
    p_range, CouplingKey, CouplingRegistry, Family, GeneratorLabel, GeneratorMode, ModeCombination,
    StructureError,
};

/// Coefficient domains an OPE can carry: exact rationals, or linear
/// expressions in unknown structure constants.
pub trait OpeCoeff: Clone + PartialEq + fmt::Debug + fmt::Display {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    fn add_assign_ref(&mut self, other: &Self);
    fn scale(&self, r: &Rational) -> Self;
}

impl OpeCoeff for Rational {
    fn zero() -> Self {
        Rational::zero()
    }
    fn is_zero(&self) -> bool {
        Rational::is_zero(self)
    }
    fn add_assign_ref(&mut self, other: &Self) {
        *self += other;
    }
    fn scale(&self, r: &Rational) -> Self {
        self * r
    }
}

impl OpeCoeff for LinExpr<Rational> {
    fn zero() -> Self {
        LinExpr::zero()
    }
    fn is_zero(&self) -> bool {
        LinExpr::is_zero(self)
    }
    fn add_assign_ref(&mut self, other: &Self) {
        *self = self.add(other);
    }
    fn scale(&self, r: &Rational) -> Self {
        LinExpr::scale(self, r)
    }
}

/// One canonical OPE term.
#[derive(Clone, PartialEq, Debug)]
pub struct OpeTerm<C> {
    pub coeff: C,
    /// Order `a` of `(z-w)^{-a}`.
    pub hol_pole: u32,
    /// Order `b` of `(zbar-wbar)^{-b}`; negative values are positive powers.
    pub antihol_pole: i64,
    /// Order of `dbar` acting on the target at `(w, wbar)`.
    pub dbar: u32,
    pub target: GeneratorLabel,
}

type TermKey = (GeneratorLabel, u32, i64, u32);

fn term_key<C>(t: &OpeTerm<C>) -> TermKey {
    (t.target.clone(), t.hol_pole, t.antihol_pole, t.dbar)
}

/// A canonical finite sum of OPE terms: merged and sorted.
#[derive(Clone, PartialEq, Debug)]
pub struct OpeExpansion<C> {
    terms: Vec<OpeTerm<C>>,
}

impl<C> Default for OpeExpansion<C> {
    fn default() -> Self {
        OpeExpansion { terms: Vec::new() }
    }
}

impl<C: OpeCoeff> OpeExpansion<C> {
    pub fn empty() -> Self {
        OpeExpansion { terms: Vec::new() }
    }

    /// Build a canonical expansion from arbitrary terms.
    pub fn from_terms(terms: impl IntoIterator<Item = OpeTerm<C>>) -> Self {
        let mut merged: BTreeMap<TermKey, C> = BTreeMap::new();
        for t in terms {
            if t.coeff.is_zero() {
                continue;
            }
            let key = term_key(&t);
            match merged.get_mut(&key) {
                Some(c) => c.add_assign_ref(&t.coeff),
                None => {
                    merged.insert(key, t.coeff);
                }
            }
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|((target, hol_pole, antihol_pole, dbar), coeff)| OpeTerm {
                coeff,
                hol_pole,
                antihol_pole,
                dbar,
                target,
            })
            .collect();
        OpeExpansion { terms }
    }

    pub fn terms(&self) -> &[OpeTerm<C>] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn add(&self, other: &Self) -> Self {
        OpeExpansion::from_terms(self.terms.iter().cloned().chain(other.terms.iter().cloned()))
    }

    pub fn scale(&self, r: &Rational) -> Self {
        OpeExpansion::from_terms(self.terms.iter().map(|t| OpeTerm {
            coeff: t.coeff.scale(r),
            ..t.clone()
        }))
    }

    /// The coefficient of a specific `(a, b, j, T)` slot.
    pub fn coeff_of(&self, target: &GeneratorLabel, hol_pole: u32, antihol_pole: i64, dbar: u32) -> C {
        self.terms
            .iter()
            .find(|t| {
                &t.target == target
                    && t.hol_pole == hol_pole
                    && t.antihol_pole == antihol_pole
                    && t.dbar == dbar
            })
            .map(|t| t.coeff.clone())
            .unwrap_or_else(C::zero)
    }
}

impl<C: OpeCoeff> fmt::Display for OpeExpansion<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| {
                let mut s = format!("({})", t.coeff);
                if t.hol_pole > 0 {
                    s.push_str(&format!(" (z-w)^-{}", t.hol_pole));
                }
                if t.antihol_pole != 0 {
                    s.push_str(&format!(" (zb-wb)^{}", -t.antihol_pole));
                }
                if t.dbar > 0 {
                    s.push_str(&format!(" dbar^{}", t.dbar));
                }
                s.push_str(&format!(" {}", t.target));
                s
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl Serialize for OpeExpansion<Rational> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        struct TargetRef<'a>(&'a GeneratorLabel);
        impl Serialize for TargetRef<'_> {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(None)?;
                map.serialize_entry("family", self.0.family.token())?;
                map.serialize_entry("q", &self.0.q)?;
                if let Some(s) = &self.0.s {
                    map.serialize_entry("s", s)?;
                }
                map.end()
            }
        }
        #[derive(Serialize)]
        struct TermRef<'a> {
            coeff: &'a Rational,
            hol_pole: u32,
            antihol_pole: i64,
            dbar: u32,
            target: TargetRef<'a>,
        }
        serializer.collect_seq(self.terms.iter().map(|t| TermRef {
            coeff: &t.coeff,
            hol_pole: t.hol_pole,
            antihol_pole: t.antihol_pole,
            dbar: t.dbar,
            target: TargetRef(&t.target),
        }))
    }
}

/// One raw template summand, before normalization:
/// `coeff * (z-w)^{-1} * dbar_z^{dz} dbar_w^{dw} [ sum_i c_i T_i / (zbar-wbar) ]`.
#[derive(Clone, Debug)]
pub struct RawOpeTerm<C> {
    /// Coupling grade this summand came from.
    pub p: u32,
    /// Position in the `x`-sum of the template.
    pub x: u32,
    pub coeff: Rational,
    pub dz: u32,
    pub dw: u32,
    pub contents: Vec<(C, GeneratorLabel)>,
}

/// A structured OPE template with explicit derivative operators, as
/// printed; [`canonicalize`] converts it without loss.
#[derive(Clone, Debug)]
pub struct RawOpeTemplate<C> {
    pub terms: Vec<RawOpeTerm<C>>,
    /// Targets skipped at build time (weight below floor or bad spin).
    pub dropped_targets: Vec<String>,
}

impl<C> Default for RawOpeTemplate<C> {
    fn default() -> Self {
        RawOpeTemplate { terms: Vec::new(), dropped_targets: Vec::new() }
    }
}

/// The OPE template for two deformed currents:
///
/// ```text
/// sum_p kappa/2 (z-w)^{-1} sum_x (-1)^{-x} binom(p,x) (2q1-1-p)_x
///   [2q2-2-x]_{p-x} dbar_z^{p-x} dbar_w^x [ Wt^{q1+q2-1-p, s1+s2-p-1} / (zbar-wbar) ]
/// ```
pub fn build_wtilde_ope(
    q1: &HalfInt,
    s1: &HalfInt,
    q2: &HalfInt,
    s2: &HalfInt,
    reg: &CouplingRegistry,
) -> Result<RawOpeTemplate<Rational>, StructureError> {
    let mut template = RawOpeTemplate::default();
    let half = Rational::new(1, 2);
    for p in p_range(s1, s2)? {
        let s3 = &(s1 + s2) - &HalfInt::int(1 + p as i64);
        let q3 = &(q1 + q2) - &HalfInt::int(1 + p as i64);
        let kappa = reg.lookup(&CouplingKey::new(s1.clone(), s2.clone(), -&s3))?;
        if kappa.is_zero() {
            continue;
        }
        let target = match GeneratorLabel::new(Family::WTilde, q3.clone(), Some(s3.clone())) {
            Ok(t) => t,
            Err(_) => {
                template
                    .dropped_targets
                    .push(format!("p={p}: Wt[q={q3},s={s3}] is not a valid target"));
                continue;
            }
        };
        for x in 0..=p {
            let coeff = template_coefficient(q1, q2, p, x);
            if coeff.is_zero() {
                continue;
            }
            template.terms.push(RawOpeTerm {
                p,
                x,
                coeff: &(&half * &kappa) * &coeff,
                dz: p - x,
                dw: x,
                contents: vec![(Rational::one(), target.clone())],
            });
        }
    }
    Ok(template)
}

/// The combinatorial factor `(-1)^{-x} binom(p,x) (2q1-1-p)_x [2q2-2-x]_{p-x}`.
fn template_coefficient(q1: &HalfInt, q2: &HalfInt, p: u32, x: u32) -> Rational {
    let sign = if x % 2 == 0 { Rational::one() } else { Rational::from_int(-1) };
    let choose = binomial(&Rational::from_int(p as i64), x as i64);
    let rising = pochhammer_rising(
        &(&(&q1.to_rational() * &Rational::from_int(2)) - &Rational::from_int(1 + p as i64)),
        x,
    );
    let falling = pochhammer_falling(
        &(&(&q2.to_rational() * &Rational::from_int(2)) - &Rational::from_int(2 + x as i64)),
        p - x,
    );
    &(&sign * &choose) * &(&rising * &falling)
}

/// Table of structure constants `B^{p,x}` (or `Bt^{p,x}`); absent entries
/// are carried as symbolic unknowns by [`build_g_ope`].
#[derive(Clone, Debug)]
pub struct BTable {
    entries: BTreeMap<(u32, u32), Rational>,
    prefix: &'static str,
}

impl BTable {
    pub fn plain() -> Self {
        BTable { entries: BTreeMap::new(), prefix: "B" }
    }

    pub fn tilde() -> Self {
        BTable { entries: BTreeMap::new(), prefix: "Bt" }
    }

    pub fn set(&mut self, p: u32, x: u32, value: Rational) {
        self.entries.insert((p, x), value);
    }

    pub fn get(&self, p: u32, x: u32) -> Option<&Rational> {
        self.entries.get(&(p, x))
    }

    /// The symbol name used when the entry is unknown.
    pub fn symbol(&self, p: u32, x: u32) -> String {
        format!("{}[{p},{x}]", self.prefix)
    }

    fn coeff(&self, p: u32, x: u32) -> LinExpr<Rational> {
        match self.get(p, x) {
            Some(v) => LinExpr::constant(v.clone()),
            None => LinExpr::unknown(self.symbol(p, x)),
        }
    }
}

/// The OPE template for the fermionic currents `G^{q1-}(z) G^{q2+}(w)`:
/// same combinatorial skeleton as the deformed template, with content
/// `B^{p,x} Wt^{q1+q2-1-p} + (-1)^p Bt^{p,x} Wt2^{q1+q2-1-p}` and spin
/// labels suppressed. Absent table entries are carried symbolically.
pub fn build_g_ope(
    q1: &HalfInt,
    q2: &HalfInt,
    b: &BTable,
    btilde: &BTable,
    reg: &CouplingRegistry,
) -> Result<RawOpeTemplate<LinExpr<Rational>>, StructureError> {
    let mut template = RawOpeTemplate::default();
    let half = Rational::new(1, 2);
    // Weight floor q3 >= 1 caps the grade sum.
    let span = (&(q1 + q2) - &HalfInt::int(2)).to_rational();
    if span.is_negative() {
        return Ok(template);
    }
    let p_max = u32::try_from(span.numer() / span.denom()).unwrap_or(0);
    for p in 0..=p_max {
        let q3 = &(q1 + q2) - &HalfInt::int(1 + p as i64);
        let kappa = kappa_suppressed(reg)?;
        if kappa.is_zero() {
            continue;
        }
        let wt = GeneratorLabel::new(Family::WTilde, q3.clone(), None)?;
        let wt2 = GeneratorLabel::new(Family::WTilde2, q3.clone(), None)?;
        let p_sign = if p % 2 == 0 { Rational::one() } else { Rational::from_int(-1) };
        for x in 0..=p {
            let coeff = template_coefficient(q1, q2, p, x);
            if coeff.is_zero() {
                continue;
            }
            template.terms.push(RawOpeTerm {
                p,
                x,
                coeff: &(&half * &kappa) * &coeff,
                dz: p - x,
                dw: x,
                contents: vec![
                    (b.coeff(p, x), wt.clone()),
                    (btilde.coeff(p, x).scale(&p_sign), wt2.clone()),
                ],
            });
        }
    }
    Ok(template)
}

/// Coupling for the spin-suppressed super sector: resolved through the
/// registry default.
fn kappa_suppressed(reg: &CouplingRegistry) -> Result<Rational, StructureError> {
    reg.lookup(&CouplingKey::new(HalfInt::zero(), HalfInt::zero(), HalfInt::zero()))
}

/// The soft-current OPE, truncated at `dbar` order `alpha_max`:
///
/// ```text
/// -sum_p kappa/2 (z-w)^{-1} sum_{alpha<=alpha_max} (zbar-wbar)^{alpha+p}/alpha!
///   binom(-2h1-2h2-2p-alpha, -2h2-p) dbar^alpha H^{k1+k2+p-1, s1+s2-p-1}
/// ```
///
/// Grades whose target spin `s1+s2-p-1` is not positive have no current to
/// land on and are skipped; mode extraction reports the same boundary
/// through the bracket's diagnostics channel.
pub fn build_soft_ope(
    k1: &HalfInt,
    s1: &HalfInt,
    k2: &HalfInt,
    s2: &HalfInt,
    reg: &CouplingRegistry,
    alpha_max: u32,
) -> Result<OpeExpansion<Rational>, StructureError> {
    let label1 = GeneratorLabel::soft(k1.clone(), s1.clone())?;
    let label2 = GeneratorLabel::soft(k2.clone(), s2.clone())?;
    let h1 = label1.hbar().to_rational();
    let h2 = label2.hbar().to_rational();
    let minus_half = Rational::new(-1, 2);
    let mut terms = Vec::new();
    for p in p_range(s1, s2)? {
        let s3 = &(s1 + s2) - &HalfInt::int(1 + p as i64);
        let k3 = &(k1 + k2) + &HalfInt::int(p as i64 - 1);
        let kappa = reg.lookup(&CouplingKey::new(s1.clone(), s2.clone(), -&s3))?;
        let target = match GeneratorLabel::soft(k3.clone(), s3.clone()) {
            Ok(t) => t,
            Err(_) => continue,
        };
        for alpha in 0..=alpha_max {
            let two = Rational::from_int(2);
            let upper = &(&(&(-&h1 - &h2) * &two) - &Rational::from_int(2 * p as i64))
                - &Rational::from_int(alpha as i64);
            let lower = &(&h2 * &Rational::from_int(-2)) - &Rational::from_int(p as i64);
            let lower = lower.to_i64().expect("2*hbar is an integer");
            let choose = binomial(&upper, lower);
            if choose.is_zero() {
                continue;
            }
            let coeff = &(&(&minus_half * &kappa) * &choose) / &factorial(alpha);
            terms.push(OpeTerm {
                coeff,
                hol_pole: 1,
                antihol_pole: -((alpha + p) as i64),
                dbar: alpha,
                target: target.clone(),
            });
        }
    }
    Ok(OpeExpansion::from_terms(terms))
}

/// Normalize a raw template: `dbar_z` derivatives collapse onto the pole,
/// `dbar_w` derivatives distribute by Leibniz between pole and target.
pub fn canonicalize<C: OpeCoeff>(template: &RawOpeTemplate<C>) -> OpeExpansion<C> {
    let mut terms = Vec::new();
    for raw in &template.terms {
        // dbar_z^dz [1/(zbar-wbar)] = (-1)^dz dz! (zbar-wbar)^{-dz-1}
        let z_sign = if raw.dz % 2 == 0 { Rational::one() } else { Rational::from_int(-1) };
        let z_factor = &z_sign * &factorial(raw.dz);
        let base_pole = raw.dz as i64 + 1;
        for i in 0..=raw.dw {
            // dbar_w^i (zbar-wbar)^{-a} = (a)_i (zbar-wbar)^{-a-i}
            let choose = binomial(&Rational::from_int(raw.dw as i64), i as i64);
            let rising = pochhammer_rising(&Rational::from_int(base_pole), i);
            let scalar = &(&raw.coeff * &z_factor) * &(&choose * &rising);
            if scalar.is_zero() {
                continue;
            }
            for (c, target) in &raw.contents {
                terms.push(OpeTerm {
                    coeff: c.scale(&scalar),
                    hol_pole: 1,
                    antihol_pole: base_pole + i as i64,
                    dbar: raw.dw - i,
                    target: target.clone(),
                });
            }
        }
    }
    OpeExpansion::from_terms(terms)
}

/// The formal antiholomorphic contour value of
/// `oint dzbar/(2 pi i) zbar^A (zbar-wbar)^{-B}`, together with the power
/// of `wbar` it leaves behind.
///
/// For `B >= 1` this is minus the residue at `zbar = wbar` (the regime of
/// the deformed-current proof); for `B <= 0` it is the residue at the
/// origin of `zbar^A` times a polynomial (the soft tower).
pub fn zbar_contour_value(a: i64, b: i64) -> (Rational, i64) {
    let power = a - b + 1;
    let value = if b >= 1 {
        if a < 0 {
            Rational::zero()
        } else {
            -binomial(&Rational::from_int(a), b - 1)
        }
    } else {
        // Coefficient of zbar^{-1-A} in (zbar-wbar)^{-B}, signs from the
        // (-wbar) powers.
        let n = -b;
        let pick = -1 - a;
        let sign = if (n + 1 + a).rem_euclid(2) == 0 { Rational::one() } else { Rational::from_int(-1) };
        &sign * &binomial(&Rational::from_int(n), pick)
    };
    (value, power)
}

/// A dropped extraction term, reported rather than silently lost.
#[derive(Clone, Debug)]
pub struct ExtractDrop {
    pub target: GeneratorLabel,
    pub mode: HalfInt,
    pub detail: String,
}

/// Result of mode extraction with generic coefficients.
#[derive(Clone, Debug)]
pub struct Extraction<C> {
    terms: BTreeMap<GeneratorMode, C>,
    pub dropped: Vec<ExtractDrop>,
}

impl<C> Default for Extraction<C> {
    fn default() -> Self {
        Extraction { terms: BTreeMap::new(), dropped: Vec::new() }
    }
}

impl<C: OpeCoeff> Extraction<C> {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GeneratorMode, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, mode: &GeneratorMode) -> C {
        self.terms.get(mode).cloned().unwrap_or_else(C::zero)
    }

    fn add_term(&mut self, mode: GeneratorMode, coeff: C) {
        if coeff.is_zero() {
            return;
        }
        let now_zero = {
            let entry = self.terms.entry(mode.clone()).or_insert_with(C::zero);
            entry.add_assign_ref(&coeff);
            entry.is_zero()
        };
        if now_zero {
            self.terms.remove(&mode);
        }
    }

    pub fn scale(&self, r: &Rational) -> Self {
        Extraction {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c.scale(r))).collect(),
            dropped: self.dropped.clone(),
        }
    }
}

impl Extraction<Rational> {
    pub fn into_combination(self) -> ModeCombination {
        let mut combo = ModeCombination::empty();
        for (mode, coeff) in self.terms {
            combo.add_term(coeff, mode);
        }
        combo
    }
}

/// Extract the mode bracket `[X_m, Y_n]` from a canonical OPE of
/// `X(z, zbar) Y(w, wbar)`.
///
/// `hbar1` and `hbar2` are the antiholomorphic weights of the two currents
/// (`hbar = q` for the deformed and fermionic families, `(k-s)/2` for soft
/// currents); they fix the contour measures `zbar^{m+hbar1-1}` and
/// `wbar^{n+hbar2-1}`. Only simple holomorphic poles contribute. Target
/// modes outside their wedge are reported in the diagnostics channel.
pub fn mode_extract<C: OpeCoeff>(
    expansion: &OpeExpansion<C>,
    m: &HalfInt,
    n: &HalfInt,
    hbar1: &HalfInt,
    hbar2: &HalfInt,
) -> Extraction<C> {
    let mut out = Extraction { terms: BTreeMap::new(), dropped: Vec::new() };
    let target_mode = m + n;
    for term in &expansion.terms {
        if term.hol_pole != 1 {
            continue;
        }
        let a = &(m + hbar1) - &HalfInt::int(1);
        let a = match a.to_i64() {
            Some(a) => a,
            None => {
                out.dropped.push(ExtractDrop {
                    target: term.target.clone(),
                    mode: target_mode.clone(),
                    detail: format!("zbar exponent m + hbar1 - 1 = {a} is not an integer"),
                });
                continue;
            }
        };
        let (zval, zpow) = zbar_contour_value(a, term.antihol_pole);
        if zval.is_zero() {
            continue;
        }
        let hbar3 = term.target.hbar();
        // Total wbar power must be -1; this pins the surviving target mode
        // at j = m + n by weight bookkeeping.
        let j = &(&(&(n + hbar2) + &HalfInt::int(zpow)) - &hbar3) - &HalfInt::int(term.dbar as i64);
        debug_assert_eq!(j, target_mode, "wbar selection must land on j = m + n");
        // dbar^jd wbar^{-j-hbar3} = [-j-hbar3]_jd wbar^{-j-hbar3-jd}
        let wfactor = pochhammer_falling(&(-&(&target_mode + &hbar3)).to_rational(), term.dbar);
        let scalar = &zval * &wfactor;
        if scalar.is_zero() {
            continue;
        }
        let coeff = term.coeff.scale(&scalar);
        match GeneratorMode::new(term.target.clone(), target_mode.clone()) {
            Ok(mode) => out.add_term(mode, coeff),
            Err(_) => out.dropped.push(ExtractDrop {
                target: term.target.clone(),
                mode: target_mode.clone(),
                detail: "target mode outside its wedge".to_string(),
            }),
        }
    }
    out
}
