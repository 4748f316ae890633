//! Ghost towers, Wick contraction of normal-ordered bilinear currents, and
//! the linear solvers for realization coefficients.
//!
//! The ghost systems are infinite towers `b_i, c_i` (anticommuting) and
//! `beta_i, gamma_i, betabar_i, gammabar_i` (commuting) with the
//! delta-diagonal propagator
//!
//! ```text
//! <b_i(z,zbar) c_j(w,wbar)> = delta_ij / ((z-w)(zbar-wbar)).
//! ```
//!
//! The anticommuting pairing is symmetric under order exchange (it comes
//! from an anticommutator), so `<c_i(z) b_j(w)>` carries the same sign; the
//! commuting pairing is symplectic and flips sign under order exchange,
//! exactly as the four printed `beta/gamma` relations do.
//!
//! Currents are single free sums over the tower index `k >= 0` of
//! normal-ordered bilinears with polynomial-in-`k` coefficients. Sums are
//! never truncated: a contraction's delta eliminates one free index exactly
//! and the surviving bilinears keep a single free index with shifted
//! subscripts. Only single contractions are taken (no central terms), so
//! every output term carries exactly one holomorphic pole.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::arith::{binomial, factorial, HalfInt, Rational};
use crate::ope::{canonicalize, build_wtilde_ope, OpeExpansion, OpeTerm};
use crate::poly::{linear_solve, LinExpr, MPoly, PVar, RatFunc};
use crate::structure::{CouplingKey, CouplingRegistry, Family, GeneratorLabel, StructureError};

/// Ghost field kinds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum GhostKind {
    C,
    B,
    CTilde,
    BTilde,
    Gamma,
    GammaBar,
    Beta,
    BetaBar,
}

impl GhostKind {
    pub fn is_fermionic(self) -> bool {
        matches!(self, GhostKind::B | GhostKind::C | GhostKind::BTilde | GhostKind::CTilde)
    }

    pub fn token(self) -> &'static str {
        match self {
            GhostKind::C => "c",
            GhostKind::B => "b",
            GhostKind::CTilde => "ct",
            GhostKind::BTilde => "bt",
            GhostKind::Gamma => "gamma",
            GhostKind::GammaBar => "gammabar",
            GhostKind::Beta => "beta",
            GhostKind::BetaBar => "betabar",
        }
    }
}

/// Sign of `<kind1(z) kind2(w)>` as a multiple of
/// `1/((z-w)(zbar-wbar))`, or `None` when the pair does not contract.
pub fn propagator_sign(kind1: GhostKind, kind2: GhostKind) -> Option<i64> {
    use GhostKind::*;
    Some(match (kind1, kind2) {
        (B, C) | (C, B) => 1,
        (BTilde, CTilde) | (CTilde, BTilde) => 1,
        (BetaBar, Gamma) | (Beta, GammaBar) => 1,
        (GammaBar, Beta) | (Gamma, BetaBar) => -1,
        _ => return None,
    })
}

/// A ghost-tower index: a fixed subscript or `k + shift` with the current's
/// free index `k`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum GhostIndex {
    Fixed(i64),
    Shifted(i64),
}

impl fmt::Display for GhostIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GhostIndex::Fixed(i) => write!(f, "{i}"),
            GhostIndex::Shifted(0) => write!(f, "k"),
            GhostIndex::Shifted(d) if *d > 0 => write!(f, "k+{d}"),
            GhostIndex::Shifted(d) => write!(f, "k{d}"),
        }
    }
}

/// A single ghost field occurrence.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct GhostField {
    pub kind: GhostKind,
    pub index: GhostIndex,
}

impl GhostField {
    pub fn new(kind: GhostKind, index: GhostIndex) -> Self {
        GhostField { kind, index }
    }
}

/// One summand of a bilinear current:
/// `coeff(k) : dbar^{dbar1} field1  dbar^{dbar2} field2 :`.
#[derive(Clone, Debug)]
pub struct BilinearSummand {
    /// Polynomial in the free tower index `k`.
    pub coeff: MPoly,
    pub dbar1: u32,
    pub field1: GhostField,
    pub dbar2: u32,
    pub field2: GhostField,
}

/// A current built from normal-ordered ghost bilinears under a single free
/// sum over `k >= 0`.
#[derive(Clone, Debug)]
pub struct BilinearCurrent {
    pub label: GeneratorLabel,
    pub summands: Vec<BilinearSummand>,
}

impl BilinearCurrent {
    /// JSON form with symbolic index shifts (`"k+2"`) and the coefficient
    /// as the dense list of its `k`-power coefficients.
    pub fn to_json(&self) -> serde_json::Value {
        let summand = |s: &BilinearSummand| {
            let coeffs = s.coeff.coefficients_in(PVar::K);
            let top = coeffs.keys().max().cloned().unwrap_or(0);
            let dense: Vec<String> = (0..=top)
                .map(|e| {
                    coeffs
                        .get(&e)
                        .and_then(|p| p.as_constant())
                        .unwrap_or_else(Rational::zero)
                        .to_string()
                })
                .collect();
            serde_json::json!({
                "coeff": dense,
                "dbar1": s.dbar1,
                "field1": { "kind": s.field1.kind.token(), "index": s.field1.index.to_string() },
                "dbar2": s.dbar2,
                "field2": { "kind": s.field2.kind.token(), "index": s.field2.index.to_string() },
            })
        };
        serde_json::json!({
            "family": self.label.family.token(),
            "q": self.label.q,
            "summands": self.summands.iter().map(summand).collect::<Vec<_>>(),
        })
    }

    /// Inverse of [`BilinearCurrent::to_json`].
    pub fn from_json(v: &serde_json::Value) -> Result<Self, String> {
        let family = v["family"]
            .as_str()
            .and_then(crate::structure::Family::from_token)
            .ok_or("bad family token")?;
        let q: HalfInt = v["q"].as_str().ok_or("missing q")?.parse()?;
        let label = GeneratorLabel::new(family, q, None).map_err(|e| e.to_string())?;
        let parse_field = |f: &serde_json::Value| -> Result<GhostField, String> {
            let kind = f["kind"].as_str().ok_or("missing kind")?;
            let kind = GHOST_KINDS
                .iter()
                .find(|k| k.token() == kind)
                .copied()
                .ok_or_else(|| format!("unknown ghost kind {kind:?}"))?;
            let index = parse_index(f["index"].as_str().ok_or("missing index")?)?;
            Ok(GhostField::new(kind, index))
        };
        let mut summands = Vec::new();
        for s in v["summands"].as_array().ok_or("missing summands")? {
            let mut coeff = MPoly::zero();
            for (e, c) in s["coeff"].as_array().ok_or("missing coeff")?.iter().enumerate() {
                let c: Rational = c.as_str().ok_or("coeff entries are strings")?.parse()?;
                let mut mono = MPoly::constant(c);
                for _ in 0..e {
                    mono = mono.mul(&MPoly::var(PVar::K));
                }
                coeff = coeff.add(&mono);
            }
            summands.push(BilinearSummand {
                coeff,
                dbar1: s["dbar1"].as_u64().ok_or("missing dbar1")? as u32,
                field1: parse_field(&s["field1"])?,
                dbar2: s["dbar2"].as_u64().ok_or("missing dbar2")? as u32,
                field2: parse_field(&s["field2"])?,
            });
        }
        Ok(BilinearCurrent { label, summands })
    }
}

const GHOST_KINDS: [GhostKind; 8] = [
    GhostKind::C,
    GhostKind::B,
    GhostKind::CTilde,
    GhostKind::BTilde,
    GhostKind::Gamma,
    GhostKind::GammaBar,
    GhostKind::Beta,
    GhostKind::BetaBar,
];

fn parse_index(s: &str) -> Result<GhostIndex, String> {
    if let Some(rest) = s.strip_prefix('k') {
        if rest.is_empty() {
            return Ok(GhostIndex::Shifted(0));
        }
        let d: i64 = rest
            .strip_prefix('+')
            .unwrap_or(rest)
            .parse()
            .map_err(|e| format!("bad index shift {rest:?}: {e}"))?;
        Ok(GhostIndex::Shifted(d))
    } else {
        let i: i64 = s.parse().map_err(|e| format!("bad fixed index {s:?}: {e}"))?;
        Ok(GhostIndex::Fixed(i))
    }
}

/// Errors from the free-field layer.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum FreeFieldError {
    #[error("kappa = {0} has no exact rational square root; pass a perfect square or work at kappa = 1")]
    KappaNotSquare(Rational),
    #[error("w-currents require integer weight q >= 2, got {0}")]
    BadWeight(HalfInt),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

/// The two-term current
/// `w^q = -sqrt(kappa) sum_k [(q+2) :dbar c_k b_{q-1+k}: + (k+1) :c_k dbar b_{q-1+k}:]`.
pub fn make_w_current(q: &HalfInt, kappa: &Rational) -> Result<BilinearCurrent, FreeFieldError> {
    let qi = q.to_i64().filter(|&n| n >= 2).ok_or_else(|| FreeFieldError::BadWeight(q.clone()))?;
    let root = kappa.sqrt_exact().ok_or_else(|| FreeFieldError::KappaNotSquare(kappa.clone()))?;
    let scale = -&root;
    let label = GeneratorLabel::new(Family::W, q.clone(), None)?;
    let c_k = GhostField::new(GhostKind::C, GhostIndex::Shifted(0));
    let b_qk = GhostField::new(GhostKind::B, GhostIndex::Shifted(qi - 1));
    let q_plus_2 = MPoly::constant(&scale * &Rational::from_int(qi + 2));
    let k_plus_1 = MPoly::var(PVar::K)
        .add(&MPoly::constant(Rational::one()))
        .scale(&scale);
    Ok(BilinearCurrent {
        label,
        summands: vec![
            BilinearSummand { coeff: q_plus_2, dbar1: 1, field1: c_k, dbar2: 0, field2: b_qk },
            BilinearSummand { coeff: k_plus_1, dbar1: 0, field1: c_k, dbar2: 1, field2: b_qk },
        ],
    })
}

/// A surviving bilinear shape: derivative orders, kinds, and index shifts
/// relative to the free index of its sum.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct BilinearPattern {
    pub dbar1: u32,
    pub kind1: GhostKind,
    pub shift1: GhostIndex,
    pub dbar2: u32,
    pub kind2: GhostKind,
    pub shift2: GhostIndex,
}

impl fmt::Display for BilinearPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = |n: u32| if n == 0 { String::new() } else { format!("dbar^{n} ") };
        write!(
            f,
            ":{}{}_{{{}}} {}{}_{{{}}}:",
            d(self.dbar1),
            self.kind1.token(),
            self.shift1,
            d(self.dbar2),
            self.kind2.token(),
            self.shift2
        )
    }
}

/// One unrecognized output term: a bilinear pattern at an antiholomorphic
/// pole level, with a polynomial-in-`k` coefficient, all times `(z-w)^{-1}`.
#[derive(Clone, Debug)]
pub struct ResidualTerm {
    pub antihol_pole: i64,
    pub pattern: BilinearPattern,
    pub coeff: MPoly,
}

/// Wick OPE output: the part recognized as current labels, plus the raw
/// bilinear residual (reported, never silently dropped).
#[derive(Clone, Debug, Default)]
pub struct WickOutput {
    pub recognized: OpeExpansion<Rational>,
    pub residual: Vec<ResidualTerm>,
}

/// Wick sign for contracting position `i` of `:A1 A2:` with position `j`
/// of `:B1 B2:`: each crossing of two fermionic fields contributes a sign.
fn wick_position_sign(
    i: usize,
    j: usize,
    a: [&GhostField; 2],
    b: [&GhostField; 2],
) -> i64 {
    let f = |g: &GhostField| g.kind.is_fermionic();
    let contracted_b = f(b[j]);
    let mut crossings = 0u32;
    // Fields strictly between positions (A_i .. B_j) in the order A1 A2 B1 B2.
    if i == 0 && f(a[1]) && contracted_b {
        crossings += 1;
    }
    if j == 1 && f(b[0]) && contracted_b {
        crossings += 1;
    }
    if crossings % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Resolve the contraction delta between two tower indexes. Returns the
/// shifts of the A-side and B-side free indexes in terms of the surviving
/// free index, or `None` when the delta cannot be satisfied with `k >= 0`.
fn delta_match(ia: GhostIndex, ib: GhostIndex) -> Option<(Option<i64>, Option<i64>)> {
    match (ia, ib) {
        (GhostIndex::Fixed(i), GhostIndex::Fixed(j)) => (i == j).then_some((None, None)),
        (GhostIndex::Fixed(i), GhostIndex::Shifted(d)) => {
            let k = i - d;
            (k >= 0).then_some((None, Some(-k)))
        }
        (GhostIndex::Shifted(d), GhostIndex::Fixed(j)) => {
            let k = j - d;
            (k >= 0).then_some((Some(-k), None))
        }
        (GhostIndex::Shifted(da), GhostIndex::Shifted(db)) => {
            // k_a + da = k_b + db: the index with the larger shift is the
            // free one, keeping both towers at k >= 0.
            let delta = da - db;
            if delta >= 0 {
                Some((Some(0), Some(delta)))
            } else {
                Some((Some(-delta), Some(0)))
            }
        }
    }
}

fn apply_shift(index: GhostIndex, shift: Option<i64>) -> GhostIndex {
    match (index, shift) {
        (GhostIndex::Fixed(i), _) => GhostIndex::Fixed(i),
        (GhostIndex::Shifted(d), Some(s)) => GhostIndex::Shifted(d + s),
        // No free index survives on this side (it was fixed by the delta
        // against a fixed subscript): the shift substitution was already
        // folded into the coefficient.
        (GhostIndex::Shifted(d), None) => GhostIndex::Shifted(d),
    }
}

/// The single-contraction Wick OPE of two bilinear currents.
///
/// `antihol_order_max` bounds the Taylor expansion of the surviving
/// `(z, zbar)` field about `(w, wbar)`; only the `(z-w)^0` column survives
/// against the single holomorphic pole, so every output term has
/// `hol_pole = 1`. Surviving bilinears matching the shape of a `candidate`
/// current (or a `dbar`-derivative of one) are emitted as recognized OPE
/// terms; everything else lands in the residual channel.
pub fn wick_ope(
    a: &BilinearCurrent,
    b: &BilinearCurrent,
    antihol_order_max: u32,
    candidates: &[BilinearCurrent],
) -> WickOutput {
    let mut content: BTreeMap<(i64, BilinearPattern), MPoly> = BTreeMap::new();

    for sa in &a.summands {
        let a_fields = [&sa.field1, &sa.field2];
        let a_dbars = [sa.dbar1, sa.dbar2];
        for sb in &b.summands {
            let b_fields = [&sb.field1, &sb.field2];
            let b_dbars = [sb.dbar1, sb.dbar2];
            for i in 0..2 {
                for j in 0..2 {
                    let fa = a_fields[i];
                    let fb = b_fields[j];
                    let Some(sigma) = propagator_sign(fa.kind, fb.kind) else { continue };
                    let Some((shift_a, shift_b)) = delta_match(fa.index, fb.index) else {
                        continue;
                    };
                    let sign = wick_position_sign(i, j, a_fields, b_fields);
                    // <dbar^da X(z) dbar^db Y(w)> =
                    //   sigma (-1)^da (da+db)! / ((z-w)(zbar-wbar)^{1+da+db})
                    let da = a_dbars[i];
                    let db = b_dbars[j];
                    let prop_sign = if da % 2 == 0 { 1 } else { -1 };
                    let prop = &Rational::from_int(sigma * sign * prop_sign)
                        * &factorial(da + db);
                    let base_pole = 1 + (da + db) as i64;

                    // Substitute the delta into both coefficients.
                    let ca = match shift_a {
                        Some(s) => sa.coeff.shift_k(s),
                        None => {
                            // A's free index got pinned to a fixed value.
                            let GhostIndex::Shifted(d) = fa.index else { unreachable!() };
                            let GhostIndex::Fixed(ifix) = fb.index else { unreachable!() };
                            sa.coeff.eval(None, None, Some(&Rational::from_int(ifix - d)))
                        }
                    };
                    let cb = match shift_b {
                        Some(s) => sb.coeff.shift_k(s),
                        None => match (fa.index, fb.index) {
                            (GhostIndex::Fixed(ifix), GhostIndex::Shifted(d)) => {
                                sb.coeff.eval(None, None, Some(&Rational::from_int(ifix - d)))
                            }
                            _ => sb.coeff.clone(),
                        },
                    };
                    let coeff = ca.mul(&cb).scale(&prop);
                    if coeff.is_zero() {
                        continue;
                    }

                    // Remaining fields, in original order: A's other, B's other.
                    let ra = a_fields[1 - i];
                    let rb = b_fields[1 - j];
                    let ra_dbar = a_dbars[1 - i];
                    let rb_dbar = b_dbars[1 - j];
                    let ra_index = apply_shift(ra.index, shift_a);
                    let rb_index = apply_shift(rb.index, shift_b);

                    // Taylor-expand the surviving z-field about (w, wbar).
                    for t in 0..=antihol_order_max {
                        let taylor = factorial(t).recip();
                        let pole = base_pole - t as i64;
                        let mut c = coeff.scale(&taylor);
                        // Canonical order: lower kind rank first; swapping
                        // two fermions flips the sign.
                        let first = (ra_dbar + t, ra.kind, ra_index);
                        let second = (rb_dbar, rb.kind, rb_index);
                        let pattern = if ra.kind <= rb.kind {
                            BilinearPattern {
                                dbar1: first.0,
                                kind1: first.1,
                                shift1: first.2,
                                dbar2: second.0,
                                kind2: second.1,
                                shift2: second.2,
                            }
                        } else {
                            if ra.kind.is_fermionic() && rb.kind.is_fermionic() {
                                c = c.scale(&Rational::from_int(-1));
                            }
                            BilinearPattern {
                                dbar1: second.0,
                                kind1: second.1,
                                shift1: second.2,
                                dbar2: first.0,
                                kind2: first.1,
                                shift2: first.2,
                            }
                        };
                        let entry = content.entry((pole, pattern)).or_insert_with(MPoly::zero);
                        *entry = entry.add(&c);
                    }
                }
            }
        }
    }

    content.retain(|_, c| !c.is_zero());
    recognize(content, candidates)
}

/// The bilinear content of `dbar^j T` for a candidate current `T`.
fn derivative_patterns(current: &BilinearCurrent, j: u32) -> BTreeMap<BilinearPattern, MPoly> {
    let mut out: BTreeMap<BilinearPattern, MPoly> = BTreeMap::new();
    for s in &current.summands {
        for i in 0..=j {
            let choose = binomial(&Rational::from_int(j as i64), i as i64);
            let pattern = BilinearPattern {
                dbar1: s.dbar1 + i,
                kind1: s.field1.kind,
                shift1: s.field1.index,
                dbar2: s.dbar2 + (j - i),
                kind2: s.field2.kind,
                shift2: s.field2.index,
            };
            let entry = out.entry(pattern).or_insert_with(MPoly::zero);
            *entry = entry.add(&s.coeff.scale(&choose));
        }
    }
    out
}

/// Match the raw content pole level by pole level against the candidate
/// derivative towers; a level is recognized only when it matches exactly.
fn recognize(
    content: BTreeMap<(i64, BilinearPattern), MPoly>,
    candidates: &[BilinearCurrent],
) -> WickOutput {
    let mut by_pole: BTreeMap<i64, BTreeMap<BilinearPattern, MPoly>> = BTreeMap::new();
    for ((pole, pattern), coeff) in content {
        by_pole.entry(pole).or_default().insert(pattern, coeff);
    }

    let mut recognized_terms: Vec<OpeTerm<Rational>> = Vec::new();
    let mut residual = Vec::new();

    for (pole, level) in by_pole {
        let max_dbar = level.keys().map(|p| p.dbar1 + p.dbar2).max().unwrap_or(0);
        // Unknowns lambda[c,j]: content == sum lambda * patterns(dbar^j T_c).
        let mut unknown_names = Vec::new();
        let mut tower: Vec<(String, &BilinearCurrent, u32, BTreeMap<BilinearPattern, MPoly>)> =
            Vec::new();
        for (ci, cand) in candidates.iter().enumerate() {
            for j in 0..=max_dbar {
                let name = format!("lambda[{ci},{j}]");
                unknown_names.push(name.clone());
                tower.push((name, cand, j, derivative_patterns(cand, j)));
            }
        }

        // Equations per (pattern, k-power).
        let mut patterns: Vec<BilinearPattern> = level.keys().cloned().collect();
        for (_, _, _, tp) in &tower {
            for p in tp.keys() {
                if !patterns.contains(p) {
                    patterns.push(*p);
                }
            }
        }
        patterns.sort();
        let mut equations: Vec<LinExpr<Rational>> = Vec::new();
        for pattern in &patterns {
            let want = level.get(pattern).cloned().unwrap_or_else(MPoly::zero);
            let mut powers: Vec<u8> = want.coefficients_in(PVar::K).keys().cloned().collect();
            for (_, _, _, tp) in &tower {
                if let Some(c) = tp.get(pattern) {
                    for e in c.coefficients_in(PVar::K).keys() {
                        if !powers.contains(e) {
                            powers.push(*e);
                        }
                    }
                }
            }
            powers.sort_unstable();
            for e in powers {
                let rhs = want
                    .coefficients_in(PVar::K)
                    .get(&e)
                    .and_then(|p| p.as_constant())
                    .unwrap_or_else(Rational::zero);
                let mut eq = LinExpr::constant(-&rhs);
                for (name, _, _, tp) in &tower {
                    if let Some(c) = tp.get(pattern) {
                        if let Some(coe) =
                            c.coefficients_in(PVar::K).get(&e).and_then(|p| p.as_constant())
                        {
                            eq = eq.add(&LinExpr::unknown(name.clone()).scale(&coe));
                        }
                    }
                }
                equations.push(eq);
            }
        }

        let solution = linear_solve(&equations);
        let fully_determined = solution.is_consistent()
            && solution.free.is_empty()
            && !tower.is_empty()
            && unknown_names.iter().all(|n| solution.value(n).is_some() || {
                // Unknowns that never appear in any equation stay absent.
                !equations.iter().any(|e| e.coeffs.contains_key(n))
            });
        if fully_determined {
            for (name, cand, j, _) in &tower {
                let lambda = solution.value(name).cloned().unwrap_or_else(Rational::zero);
                if lambda.is_zero() {
                    continue;
                }
                recognized_terms.push(OpeTerm {
                    coeff: lambda,
                    hol_pole: 1,
                    antihol_pole: pole,
                    dbar: *j,
                    target: cand.label.clone(),
                });
            }
        } else {
            for (pattern, coeff) in level {
                residual.push(ResidualTerm { antihol_pole: pole, pattern, coeff });
            }
        }
    }

    WickOutput { recognized: OpeExpansion::from_terms(recognized_terms), residual }
}

/// One failed matching equation: the slot it belongs to, what the
/// realization produced, what the template requires, and the unknown
/// slots that could absorb it at a higher order.
#[derive(Clone, Debug)]
pub struct MatchMismatch {
    pub slot: String,
    pub lhs: String,
    pub rhs: String,
    pub unknowns: Vec<String>,
}

impl fmt::Display for MatchMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: lhs {} != rhs {}", self.slot, self.lhs, self.rhs)?;
        if !self.unknowns.is_empty() {
            write!(f, " (free: {})", self.unknowns.join(", "))?;
        }
        Ok(())
    }
}

/// The realization coefficient table `alpha^{q,k}_{a,b}` together with the
/// order-by-order matching report.
#[derive(Clone, Debug)]
pub struct AlphaSolution {
    /// Entries `(a, b) -> value`, symbolic in the weight `q` (variable
    /// `q1`) and the tower index `k`.
    pub table: BTreeMap<(u32, u32), RatFunc>,
    /// Slots of total derivative degree `2..=order_max` left undetermined.
    pub free: Vec<(u32, u32)>,
    /// Failed matching equations, in deterministic slot order.
    pub mismatches: Vec<MatchMismatch>,
}

/// Determine realization coefficients by matching the ghost OPE against
/// the deformed-current OPE, order by order.
///
/// Degree-one slots are fixed by the defining two-term current; the
/// returned report lists every matching equation the resulting realization
/// fails against the target template at the given weights (an inconsistent
/// system is reported, not asserted away). Matching at order `n` only
/// constrains slots of total derivative degree `<= n`.
pub fn solve_alpha(
    order_max: u32,
    q1: &HalfInt,
    s1: &HalfInt,
    q2: &HalfInt,
    s2: &HalfInt,
    reg: &CouplingRegistry,
) -> Result<AlphaSolution, FreeFieldError> {
    let s0 = &(s1 + s2) - &HalfInt::int(2);
    let kappa = reg.lookup(&CouplingKey::new(s1.clone(), s2.clone(), -&s0))?;
    let root = kappa.sqrt_exact().ok_or_else(|| FreeFieldError::KappaNotSquare(kappa.clone()))?;

    // Degree <= 1 slots, symbolic in (q, k): alpha_{0,0} = 0,
    // alpha_{1,0} = -sqrt(kappa) (q+2), alpha_{0,1} = -sqrt(kappa) (k+1).
    let mut table = BTreeMap::new();
    table.insert((0, 0), RatFunc::zero());
    table.insert(
        (1, 0),
        RatFunc::from_poly(
            MPoly::var(PVar::Q1)
                .add(&MPoly::constant(Rational::from_int(2)))
                .scale(&-&root),
        ),
    );
    table.insert(
        (0, 1),
        RatFunc::from_poly(
            MPoly::var(PVar::K)
                .add(&MPoly::constant(Rational::one()))
                .scale(&-&root),
        ),
    );
    let mut free = Vec::new();
    for n in 2..=order_max {
        for a in 0..=n {
            free.push((a, n - a));
        }
    }

    // Order-by-order check of the degree-1 realization against the target
    // template at these weights.
    let wa = make_w_current(q1, &kappa)?;
    let wb = make_w_current(q2, &kappa)?;
    let q3 = &(q1 + q2) - &HalfInt::int(1);
    let candidate = make_w_current(&q3, &kappa)?;
    let out = wick_ope(&wa, &wb, order_max + 1, std::slice::from_ref(&candidate));
    let target = canonicalize(&build_wtilde_ope(q1, s1, q2, s2, reg)?);

    let mut mismatches = Vec::new();
    let free_names: Vec<String> =
        free.iter().map(|(a, b)| format!("alpha[{a},{b}]")).collect();
    // Compare the weight-(q1+q2-1) sector slot by slot: the template's
    // p = 0 term is the only target at that weight.
    let p0_target = target
        .terms()
        .iter()
        .filter(|t| t.target.q == q3)
        .collect::<Vec<_>>();
    for t in &p0_target {
        let got = out.recognized.coeff_of(&candidate.label, 1, t.antihol_pole, t.dbar);
        if got != t.coeff {
            mismatches.push(MatchMismatch {
                slot: format!("(pole {}, dbar {}) at weight {q3}", t.antihol_pole, t.dbar),
                lhs: got.to_string(),
                rhs: t.coeff.to_string(),
                unknowns: free_names.clone(),
            });
        }
    }
    for term in out.recognized.terms() {
        let in_target = p0_target
            .iter()
            .any(|t| t.antihol_pole == term.antihol_pole && t.dbar == term.dbar);
        if !in_target {
            mismatches.push(MatchMismatch {
                slot: format!("(pole {}, dbar {}) at weight {q3}", term.antihol_pole, term.dbar),
                lhs: term.coeff.to_string(),
                rhs: "0".to_string(),
                unknowns: free_names.clone(),
            });
        }
    }
    for r in &out.residual {
        mismatches.push(MatchMismatch {
            slot: format!("unrecognized bilinear {} at pole {}", r.pattern, r.antihol_pole),
            lhs: r.coeff.to_string(),
            rhs: "0".to_string(),
            unknowns: free_names.clone(),
        });
    }

    Ok(AlphaSolution { table, free, mismatches })
}

/// The solved structure constants `B^{p,x}`, `Bt^{p,x}` with the matching
/// report.
#[derive(Clone, Debug)]
pub struct BMatch {
    pub b: BTreeMap<(u32, u32), RatFunc>,
    pub btilde: BTreeMap<(u32, u32), RatFunc>,
    pub free: Vec<String>,
    pub inconsistency: Option<String>,
}

/// The fermionic-sector OPE data the constants are matched against:
/// `2k Wt/(zb-wb) - 2k(q1+q2-2) Wt2/(zb-wb)^2 - 2k(q1-1) dbar Wt2/(zb-wb)`,
/// all times the implicit `(z-w)^{-1}`, at `kappa = 1`, entered slot by
/// slot as `(family, pole, dbar) -> coefficient in Q(q1, q2)`.
pub fn gg_target_slots() -> BTreeMap<(Family, i64, u32), RatFunc> {
    let q1 = MPoly::var(PVar::Q1);
    let q2 = MPoly::var(PVar::Q2);
    let mut slots = BTreeMap::new();
    slots.insert((Family::WTilde, 1, 0), RatFunc::constant(Rational::from_int(2)));
    slots.insert(
        (Family::WTilde2, 2, 0),
        RatFunc::from_poly(
            q1.add(&q2)
                .sub(&MPoly::constant(Rational::from_int(2)))
                .scale(&Rational::from_int(-2)),
        ),
    );
    slots.insert(
        (Family::WTilde2, 1, 1),
        RatFunc::from_poly(
            q1.sub(&MPoly::constant(Rational::one())).scale(&Rational::from_int(-2)),
        ),
    );
    slots
}

/// Solve for the structure constants `B^{p,x}`, `Bt^{p,x}` (grades
/// `p <= 1`) by matching the fermionic OPE template against target data,
/// symbolically in the weights `q1, q2`.
///
/// The expansion used for the matching is the template-comparison scheme
/// the published constants are defined by: both derivative types raise the
/// pole with the same sign, `dbar^i (zbar-wbar)^{-a} -> (-1)^i (a)_i
/// (zbar-wbar)^{-a-i}`, target derivatives distributing as usual.
pub fn match_b_constants(
    target: &BTreeMap<(Family, i64, u32), RatFunc>,
) -> BMatch {
    let q1 = RatFunc::var(PVar::Q1);
    let q2 = RatFunc::var(PVar::Q2);
    let two = RatFunc::constant(Rational::from_int(2));
    let one = RatFunc::one();
    let half = RatFunc::constant(Rational::new(1, 2));

    // Template slots (family, pole, dbar) as linear forms in the six
    // unknowns B[p,x], Bt[p,x] for p <= 1.
    let mut slots: BTreeMap<(Family, i64, u32), LinExpr<RatFunc>> = BTreeMap::new();
    let mut add = |key: (Family, i64, u32), expr: LinExpr<RatFunc>| {
        let entry = slots.entry(key).or_insert_with(LinExpr::zero);
        *entry = entry.add(&expr);
    };

    let unknown = |name: &str| LinExpr::<RatFunc>::unknown(name.to_string());

    // p = 0, x = 0: kappa/2 * (zb-wb)^{-1} [B00 Wt + Bt00 Wt2]
    add((Family::WTilde, 1, 0), unknown("B[0,0]").scale(&half));
    add((Family::WTilde2, 1, 0), unknown("Bt[0,0]").scale(&half));

    // p = 1 carries (-1)^p = -1 on the Bt content.
    // x = 0: coefficient kappa/2 [2q2-2]_1 acting with dbar_z on the pole.
    let c10 = half.mul(&two.mul(&q2.sub(&one)));
    // dbar_z [C/(zb-wb)] = -C/(zb-wb)^2
    add(
        (Family::WTilde, 2, 0),
        unknown("B[1,0]").scale(&c10.neg()),
    );
    add(
        (Family::WTilde2, 2, 0),
        unknown("Bt[1,0]").scale(&c10.neg().mul(&RatFunc::constant(Rational::from_int(-1)))),
    );
    // x = 1: coefficient kappa/2 (-1) (2q1-2)_1.
    let c11 = half.mul(&two.mul(&q1.sub(&one))).neg();
    // Matching-convention pole derivative: dbar_w [C/(zb-wb)] ->
    // -C/(zb-wb)^2 + dbar C/(zb-wb).
    add(
        (Family::WTilde, 2, 0),
        unknown("B[1,1]").scale(&c11.neg()),
    );
    add(
        (Family::WTilde2, 2, 0),
        unknown("Bt[1,1]").scale(&c11.neg().mul(&RatFunc::constant(Rational::from_int(-1)))),
    );
    add((Family::WTilde, 1, 1), unknown("B[1,1]").scale(&c11));
    add(
        (Family::WTilde2, 1, 1),
        unknown("Bt[1,1]").scale(&c11.mul(&RatFunc::constant(Rational::from_int(-1)))),
    );

    // Equations: template slot minus target slot = 0, over all slots.
    let mut keys: Vec<(Family, i64, u32)> = slots.keys().cloned().collect();
    for k in target.keys() {
        if !keys.contains(k) {
            keys.push(*k);
        }
    }
    keys.sort();
    let mut equations = Vec::new();
    for key in keys {
        let lhs = slots.get(&key).cloned().unwrap_or_else(LinExpr::zero);
        let rhs = target.get(&key).cloned().unwrap_or_else(RatFunc::zero);
        equations.push(lhs.sub(&LinExpr::constant(rhs)));
    }

    let solution = linear_solve(&equations);
    let mut b = BTreeMap::new();
    let mut btilde = BTreeMap::new();
    for p in 0..=1u32 {
        for x in 0..=p {
            if let Some(v) = solution.value(&format!("B[{p},{x}]")) {
                b.insert((p, x), v.clone());
            }
            if let Some(v) = solution.value(&format!("Bt[{p},{x}]")) {
                btilde.insert((p, x), v.clone());
            }
        }
    }
    BMatch { b, btilde, free: solution.free.clone(), inconsistency: solution.inconsistency }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::PVar;

    fn h(n: i64) -> HalfInt {
        HalfInt::int(n)
    }

    fn kpoly(c0: i64, c1: i64) -> MPoly {
        MPoly::constant(Rational::from_int(c0))
            .add(&MPoly::var(PVar::K).scale(&Rational::from_int(c1)))
    }

    #[test]
    fn propagator_table_matches_printed_rules() {
        use GhostKind::*;
        assert_eq!(propagator_sign(B, C), Some(1));
        assert_eq!(propagator_sign(C, B), Some(1));
        assert_eq!(propagator_sign(BTilde, CTilde), Some(1));
        assert_eq!(propagator_sign(BetaBar, Gamma), Some(1));
        assert_eq!(propagator_sign(Beta, GammaBar), Some(1));
        assert_eq!(propagator_sign(GammaBar, Beta), Some(-1));
        assert_eq!(propagator_sign(Gamma, BetaBar), Some(-1));
        assert_eq!(propagator_sign(B, B), None);
        assert_eq!(propagator_sign(B, Gamma), None);
    }

    #[test]
    fn delta_match_is_exact() {
        // b_1 c_1 contracts, b_1 c_2 does not.
        assert!(delta_match(GhostIndex::Fixed(1), GhostIndex::Fixed(1)).is_some());
        assert!(delta_match(GhostIndex::Fixed(1), GhostIndex::Fixed(2)).is_none());
        // k + 2 against k: free index from the smaller-shift side.
        assert_eq!(
            delta_match(GhostIndex::Shifted(2), GhostIndex::Shifted(0)),
            Some((Some(0), Some(2)))
        );
        assert_eq!(
            delta_match(GhostIndex::Shifted(0), GhostIndex::Shifted(2)),
            Some((Some(2), Some(0)))
        );
    }

    #[test]
    fn make_w_current_shapes() {
        let w = make_w_current(&h(2), &Rational::one()).unwrap();
        assert_eq!(w.summands.len(), 2);
        assert_eq!(w.summands[0].coeff, MPoly::constant(Rational::from_int(-4)));
        assert_eq!(w.summands[1].coeff, kpoly(-1, -1));
        assert_eq!(w.summands[0].field2.index, GhostIndex::Shifted(1));
        assert!(make_w_current(&h(1), &Rational::one()).is_err());
        assert!(make_w_current(&h(2), &Rational::from_int(2)).is_err());
        let w9 = make_w_current(&h(2), &Rational::from_int(9)).unwrap();
        assert_eq!(w9.summands[0].coeff, MPoly::constant(Rational::from_int(-12)));
    }

    /// Frozen single-contraction content of w^{q1}(z) w^{q2}(w), computed
    /// by hand from the eight contraction families:
    ///   pole 3  :c_k b_{k+Q}:        2 (k+1) (q1-q2)
    ///   pole 2  :dbar c_k b_{k+Q}:   2 (q2+2) (q1+1-k)
    ///   pole 2  :c_k dbar b_{k+Q}:   (k+1) (q1-q2+4-2k)
    /// with Q = q1+q2-2, all times kappa (z-w)^{-1}.
    fn expected_pole3(q1: i64, q2: i64) -> MPoly {
        kpoly(1, 1).scale(&Rational::from_int(2 * (q1 - q2)))
    }

    fn expected_pole2_dc_b(q1: i64, q2: i64) -> MPoly {
        kpoly(q1 + 1, -1).scale(&Rational::from_int(2 * (q2 + 2)))
    }

    fn expected_pole2_c_db(q1: i64, q2: i64) -> MPoly {
        kpoly(1, 1).mul(&kpoly(q1 - q2 + 4, -2))
    }

    fn content_of(out: &WickOutput, pole: i64, dbar1: u32, dbar2: u32, offset: i64) -> MPoly {
        let pattern = BilinearPattern {
            dbar1,
            kind1: GhostKind::C,
            shift1: GhostIndex::Shifted(0),
            dbar2,
            kind2: GhostKind::B,
            shift2: GhostIndex::Shifted(offset),
        };
        out.residual
            .iter()
            .filter(|r| r.antihol_pole == pole && r.pattern == pattern)
            .fold(MPoly::zero(), |acc, r| acc.add(&r.coeff))
    }

    #[test]
    fn wick_w_currents_match_hand_computation() {
        for (q1, q2) in [(2i64, 2i64), (2, 3), (3, 2), (4, 3)] {
            let a = make_w_current(&h(q1), &Rational::one()).unwrap();
            let b = make_w_current(&h(q2), &Rational::one()).unwrap();
            let out = wick_ope(&a, &b, 2, &[]);
            let offset = q1 + q2 - 2;
            assert_eq!(
                content_of(&out, 3, 0, 0, offset),
                expected_pole3(q1, q2),
                "pole-3 content at ({q1},{q2})"
            );
            assert_eq!(
                content_of(&out, 2, 1, 0, offset),
                expected_pole2_dc_b(q1, q2),
                "pole-2 dbar-c content at ({q1},{q2})"
            );
            assert_eq!(
                content_of(&out, 2, 0, 1, offset),
                expected_pole2_c_db(q1, q2),
                "pole-2 dbar-b content at ({q1},{q2})"
            );
        }
    }

    #[test]
    fn wick_diagonal_weights_have_no_triple_pole() {
        // The leading (zbar-wbar)^{-3} term is antisymmetric in (q1, q2).
        let a = make_w_current(&h(3), &Rational::one()).unwrap();
        let out = wick_ope(&a, &a, 2, &[]);
        assert!(content_of(&out, 3, 0, 0, 4).is_zero());
        // And the exchange flips its sign off the diagonal.
        let b = make_w_current(&h(2), &Rational::one()).unwrap();
        let ab = wick_ope(&a, &b, 0, &[]);
        let ba = wick_ope(&b, &a, 0, &[]);
        assert_eq!(
            content_of(&ab, 3, 0, 0, 3),
            content_of(&ba, 3, 0, 0, 3).scale(&Rational::from_int(-1))
        );
    }

    #[test]
    fn wick_output_has_only_simple_holomorphic_poles() {
        let a = make_w_current(&h(2), &Rational::one()).unwrap();
        let b = make_w_current(&h(3), &Rational::one()).unwrap();
        let q3 = h(4);
        let cand = make_w_current(&q3, &Rational::one()).unwrap();
        let out = wick_ope(&a, &b, 3, &[cand]);
        for t in out.recognized.terms() {
            assert_eq!(t.hol_pole, 1);
        }
    }

    #[test]
    fn recognizer_identifies_an_exact_current_multiple() {
        // Feed the recognizer content that IS 3*dbar(w^3) at pole 1 and
        // check it comes back as a single recognized term.
        let w3 = make_w_current(&h(3), &Rational::one()).unwrap();
        let mut content: BTreeMap<(i64, BilinearPattern), MPoly> = BTreeMap::new();
        for (pattern, coeff) in derivative_patterns(&w3, 1) {
            content.insert((1, pattern), coeff.scale(&Rational::from_int(3)));
        }
        let out = recognize(content, &[w3.clone()]);
        assert!(out.residual.is_empty());
        assert_eq!(out.recognized.len(), 1);
        let term = &out.recognized.terms()[0];
        assert_eq!(term.coeff, Rational::from_int(3));
        assert_eq!(term.dbar, 1);
        assert_eq!(term.antihol_pole, 1);
        assert_eq!(term.target, w3.label);
    }

    #[test]
    fn recognizer_rejects_non_multiples() {
        // Perturb one slot: the level must fall through to the residual.
        let w3 = make_w_current(&h(3), &Rational::one()).unwrap();
        let mut content: BTreeMap<(i64, BilinearPattern), MPoly> = BTreeMap::new();
        for (i, (pattern, coeff)) in derivative_patterns(&w3, 0).into_iter().enumerate() {
            let c = if i == 0 { coeff.add(&MPoly::one()) } else { coeff };
            content.insert((1, pattern), c);
        }
        let out = recognize(content, &[w3]);
        assert!(out.recognized.is_empty());
        assert!(!out.residual.is_empty());
    }

    #[test]
    fn bilinear_current_json_roundtrip() {
        let w = make_w_current(&h(3), &Rational::from_int(4)).unwrap();
        let v = w.to_json();
        let back = BilinearCurrent::from_json(&v).unwrap();
        assert_eq!(back.label, w.label);
        assert_eq!(back.summands.len(), w.summands.len());
        for (a, b) in back.summands.iter().zip(&w.summands) {
            assert_eq!(a.coeff, b.coeff);
            assert_eq!((a.dbar1, a.field1, a.dbar2, a.field2), (b.dbar1, b.field1, b.dbar2, b.field2));
        }
        assert!(v["summands"][0]["field2"]["index"].as_str().unwrap().contains("k+2"));
    }

    #[test]
    fn match_b_constants_recovers_published_values() {
        let m = match_b_constants(&gg_target_slots());
        assert!(m.inconsistency.is_none(), "matching failed: {:?}", m.inconsistency);
        assert_eq!(m.b.get(&(0, 0)).unwrap(), &RatFunc::constant(Rational::from_int(4)));
        assert_eq!(m.btilde.get(&(0, 0)).unwrap(), &RatFunc::zero());
        assert_eq!(m.b.get(&(1, 0)).unwrap(), &RatFunc::zero());
        assert_eq!(m.b.get(&(1, 1)).unwrap(), &RatFunc::zero());
        assert_eq!(m.btilde.get(&(1, 1)).unwrap(), &RatFunc::constant(Rational::from_int(-2)));
        // Bt[1,0] = -2 (2q1 + q2 - 3) / (q2 - 1)
        let q1 = MPoly::var(PVar::Q1);
        let q2 = MPoly::var(PVar::Q2);
        let num = q1
            .scale(&Rational::from_int(2))
            .add(&q2)
            .sub(&MPoly::constant(Rational::from_int(3)))
            .scale(&Rational::from_int(-2));
        let den = q2.sub(&MPoly::one());
        assert_eq!(m.btilde.get(&(1, 0)).unwrap(), &RatFunc::new(num, den));
    }

    #[test]
    fn solve_alpha_pins_degree_one_slots_and_reports_residuals() {
        let reg = CouplingRegistry::unit();
        let sol = solve_alpha(1, &h(2), &h(2), &h(3), &h(2), &reg).unwrap();
        // alpha_{0,0} = 0; alpha_{1,0} = -(q+2); alpha_{0,1} = -(k+1).
        assert_eq!(sol.table.get(&(0, 0)).unwrap(), &RatFunc::zero());
        let q_plus_2 = MPoly::var(PVar::Q1).add(&MPoly::constant(Rational::from_int(2)));
        assert_eq!(
            sol.table.get(&(1, 0)).unwrap(),
            &RatFunc::from_poly(q_plus_2.scale(&Rational::from_int(-1)))
        );
        let k_plus_1 = MPoly::var(PVar::K).add(&MPoly::one());
        assert_eq!(
            sol.table.get(&(0, 1)).unwrap(),
            &RatFunc::from_poly(k_plus_1.scale(&Rational::from_int(-1)))
        );
        assert!(sol.free.is_empty());
        // The degree-1 truncation does not close the template matching;
        // the report is expected to be non-empty and is data, not a panic.
        assert!(!sol.mismatches.is_empty());
        for m in &sol.mismatches {
            assert_ne!(m.lhs, m.rhs);
        }
    }
}
