//! Exact rational arithmetic and Pochhammer/binomial combinatorics.
//!
//! Every coefficient produced by this crate lives in `Q` and is represented
//! by [`Rational`]; weights, spins and mode indices live in `(1/2)Z` and are
//! represented by [`HalfInt`]. The three combinatorial primitives are the
//! ascending Pochhammer symbol `(a)_n = a(a+1)...(a+n-1)`, the descending
//! symbol `[a]_n = a(a-1)...(a-n+1)` and the generalized binomial
//! `binom(a, k) = [a]_k / k!` (zero for `k < 0`). All three are total on
//! their domains; factorials of negative integers are never evaluated.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// An exact rational number, always reduced, denominator positive.
///
/// Serializes as the string `"p/q"` in lowest terms (`"3"`, `"-1/2"`).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(BigRational);

impl Rational {
    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn new(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> Self {
        let d: BigInt = denom.into();
        assert!(!d.is_zero(), "rational with zero denominator");
        Rational(BigRational::new(numer.into(), d))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero");
        Rational(self.0.recip())
    }

    /// Integer power, negative exponents allowed for nonzero values.
    pub fn pow(&self, e: i32) -> Self {
        if e >= 0 {
            Rational(self.0.pow(e))
        } else {
            self.recip().pow(-e)
        }
    }

    /// Exact square root, if the value is a perfect square of a rational.
    pub fn sqrt_exact(&self) -> Option<Rational> {
        if self.is_negative() {
            return None;
        }
        let n = self.numer().sqrt();
        let d = self.denom().sqrt();
        if &(&n * &n) == self.numer() && &(&d * &d) == self.denom() {
            Some(Rational(BigRational::new(n, d)))
        } else {
            None
        }
    }

    /// The value as an `i64`, when it is an integer in range.
    pub fn to_i64(&self) -> Option<i64> {
        if !self.is_integer() {
            return None;
        }
        i64::try_from(self.numer().clone()).ok()
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Rational {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        // Tolerate the unicode minus that shows up in copied formulas.
        let s = s.replace('\u{2212}', "-");
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim().to_string(), d.trim().to_string()),
            None => (s.clone(), "1".to_string()),
        };
        let numer = BigInt::from_str(&n).map_err(|e| format!("bad numerator {n:?}: {e}"))?;
        let denom = BigInt::from_str(&d).map_err(|e| format!("bad denominator {d:?}: {e}"))?;
        if denom.is_zero() {
            return Err(format!("zero denominator in {s:?}"));
        }
        Ok(Rational(BigRational::new(numer, denom)))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::from_int(n)
    }
}

impl From<&HalfInt> for Rational {
    fn from(h: &HalfInt) -> Self {
        Rational::new(h.doubled.clone(), BigInt::from(2))
    }
}

macro_rules! impl_rational_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for &Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational(&self.0 $op &rhs.0)
            }
        }
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational(self.0 $op rhs.0)
            }
        }
        impl $trait<&Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational(self.0 $op &rhs.0)
            }
        }
        impl $trait<Rational> for &Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational(&self.0 $op rhs.0)
            }
        }
    };
}

impl_rational_binop!(Add, add, +);
impl_rational_binop!(Sub, sub, -);
impl_rational_binop!(Mul, mul, *);

impl Div for &Rational {
    type Output = Rational;
    fn div(self, rhs: &Rational) -> Rational {
        assert!(!rhs.is_zero(), "division by zero rational");
        Rational(&self.0 / &rhs.0)
    }
}

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl AddAssign<&Rational> for Rational {
    fn add_assign(&mut self, rhs: &Rational) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&Rational> for Rational {
    fn sub_assign(&mut self, rhs: &Rational) {
        self.0 -= &rhs.0;
    }
}

/// An element of `(1/2)Z`, stored as twice its value.
///
/// Weights `q`, spins `s` and mode indices `m, n` are all half-integers;
/// addition and subtraction stay in `(1/2)Z` and integer-ness is decidable.
/// Serializes like [`Rational`]: `"2"`, `"3/2"`, `"-1/2"`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt {
    doubled: BigInt,
}

impl HalfInt {
    pub fn zero() -> Self {
        HalfInt { doubled: BigInt::zero() }
    }

    /// The integer `n`.
    pub fn int(n: i64) -> Self {
        HalfInt { doubled: BigInt::from(2 * n) }
    }

    /// The half-integer `d/2`.
    pub fn halves(d: i64) -> Self {
        HalfInt { doubled: BigInt::from(d) }
    }

    pub fn from_doubled(doubled: BigInt) -> Self {
        HalfInt { doubled }
    }

    pub fn doubled(&self) -> &BigInt {
        &self.doubled
    }

    pub fn is_integer(&self) -> bool {
        (&self.doubled % 2i32).is_zero()
    }

    pub fn is_zero(&self) -> bool {
        self.doubled.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.doubled.sign() == Sign::Minus
    }

    pub fn abs(&self) -> Self {
        HalfInt { doubled: self.doubled.abs() }
    }

    pub fn to_rational(&self) -> Rational {
        Rational::from(self)
    }

    /// The value as an `i64` when it is an integer in range.
    pub fn to_i64(&self) -> Option<i64> {
        if !self.is_integer() {
            return None;
        }
        i64::try_from(&self.doubled / 2i32).ok()
    }

    /// The value as a non-negative `u32`, when it is one.
    pub fn to_u32(&self) -> Option<u32> {
        self.to_i64().and_then(|n| u32::try_from(n).ok())
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", &self.doubled / 2i32)
        } else {
            write!(f, "{}/2", self.doubled)
        }
    }
}

impl fmt::Debug for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for HalfInt {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let r: Rational = s.parse()?;
        let doubled = &r * &Rational::from_int(2);
        if !doubled.is_integer() {
            return Err(format!("{s:?} is not a half-integer"));
        }
        Ok(HalfInt { doubled: doubled.numer().clone() })
    }
}

impl Serialize for HalfInt {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for HalfInt {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

macro_rules! impl_halfint_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for &HalfInt {
            type Output = HalfInt;
            fn $method(self, rhs: &HalfInt) -> HalfInt {
                HalfInt { doubled: &self.doubled $op &rhs.doubled }
            }
        }
    };
}

impl_halfint_binop!(Add, add, +);
impl_halfint_binop!(Sub, sub, -);

impl Neg for &HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt { doubled: -&self.doubled }
    }
}

/// `n!` as a rational.
pub fn factorial(n: u32) -> Rational {
    let mut acc = BigInt::one();
    for i in 2..=n {
        acc *= i;
    }
    Rational(BigRational::from_integer(acc))
}

/// Factorial of a half-integer that must be a non-negative integer.
///
/// Used for the wedge normalizations `(m + q - 1)!`; callers are expected
/// to have checked the wedge condition, so a violation is reported.
pub fn half_factorial(h: &HalfInt) -> Result<Rational, String> {
    match h.to_i64() {
        Some(n) if n >= 0 => Ok(factorial(n as u32)),
        _ => Err(format!("factorial of {h} is not defined")),
    }
}

/// Ascending Pochhammer symbol `(a)_n = a(a+1)...(a+n-1)`, with `(a)_0 = 1`.
pub fn pochhammer_rising(a: &Rational, n: u32) -> Rational {
    let mut acc = Rational::one();
    let mut term = a.clone();
    let one = Rational::one();
    for _ in 0..n {
        acc = &acc * &term;
        if acc.is_zero() {
            return acc;
        }
        term = &term + &one;
    }
    acc
}

/// Descending Pochhammer symbol `[a]_n = a(a-1)...(a-n+1)`, with `[a]_0 = 1`.
///
/// Satisfies `[a]_n = (-1)^n (-a)_n = (a-n+1)_n`.
pub fn pochhammer_falling(a: &Rational, n: u32) -> Rational {
    let mut acc = Rational::one();
    let mut term = a.clone();
    let one = Rational::one();
    for _ in 0..n {
        acc = &acc * &term;
        if acc.is_zero() {
            return acc;
        }
        term = &term - &one;
    }
    acc
}

/// Generalized binomial coefficient `[a]_k / k!` for `k >= 0`, zero for `k < 0`.
///
/// The upper argument may be any rational; this is the unique convention
/// under which the symbol identities used by the mode-extraction proofs are
/// arithmetic identities.
pub fn binomial(a: &Rational, k: i64) -> Rational {
    if k < 0 {
        return Rational::zero();
    }
    let k = u32::try_from(k).expect("binomial order out of range");
    &pochhammer_falling(a, k) / &factorial(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn rising_empty_product_is_one() {
        assert_eq!(pochhammer_rising(&rat(7, 3), 0), Rational::one());
    }

    #[test]
    fn rising_three_two() {
        assert_eq!(pochhammer_rising(&Rational::from_int(3), 2), Rational::from_int(12));
    }

    #[test]
    fn rising_hits_zero_factor() {
        assert_eq!(pochhammer_rising(&Rational::from_int(-1), 4), Rational::zero());
    }

    #[test]
    fn falling_five_two() {
        assert_eq!(pochhammer_falling(&Rational::from_int(5), 2), Rational::from_int(20));
    }

    #[test]
    fn falling_minus_one_three_matches_sign_identity() {
        let direct = pochhammer_falling(&Rational::from_int(-1), 3);
        assert_eq!(direct, Rational::from_int(-6));
        let via_rising = &Rational::from_int(-1) * &pochhammer_rising(&Rational::from_int(1), 3);
        assert_eq!(via_rising, Rational::from_int(-6));
    }

    #[test]
    fn falling_one_half_two() {
        assert_eq!(pochhammer_falling(&rat(1, 2), 2), rat(-1, 4));
    }

    #[test]
    fn falling_recovers_factorial() {
        for n in 0..8i64 {
            let a = Rational::from_int(n);
            assert_eq!(pochhammer_falling(&a, n as u32), factorial(n as u32));
        }
    }

    #[test]
    fn binomial_conventions() {
        assert_eq!(binomial(&Rational::from_int(9), 0), Rational::one());
        assert_eq!(binomial(&Rational::from_int(-1), 2), Rational::one());
        assert_eq!(binomial(&rat(5, 2), -1), Rational::zero());
        assert_eq!(binomial(&Rational::from_int(4), 2), Rational::from_int(6));
    }

    #[test]
    fn rational_display_and_parse() {
        assert_eq!(rat(6, 4).to_string(), "3/2");
        assert_eq!(rat(-6, 4).to_string(), "-3/2");
        assert_eq!(Rational::from_int(3).to_string(), "3");
        assert_eq!("  -1/2 ".parse::<Rational>().unwrap(), rat(-1, 2));
        assert_eq!("7".parse::<Rational>().unwrap(), Rational::from_int(7));
        assert!("1/0".parse::<Rational>().is_err());
    }

    #[test]
    fn halfint_basics() {
        let h = HalfInt::halves(3);
        assert!(!h.is_integer());
        assert_eq!(h.to_string(), "3/2");
        assert_eq!("3/2".parse::<HalfInt>().unwrap(), h);
        assert_eq!((&h + &HalfInt::halves(1)), HalfInt::int(2));
        assert_eq!(HalfInt::int(-2).to_string(), "-2");
        assert!("1/3".parse::<HalfInt>().is_err());
    }

    #[test]
    fn sqrt_exact_detects_squares() {
        assert_eq!(rat(9, 4).sqrt_exact(), Some(rat(3, 2)));
        assert_eq!(Rational::from_int(2).sqrt_exact(), None);
        assert_eq!(Rational::from_int(-4).sqrt_exact(), None);
    }

    proptest! {
        // [a]_n = (-1)^n (-a)_n = (a-n+1)_n on sampled rational a, n <= 12.
        #[test]
        fn pochhammer_symbol_relations(num in -30i64..30, den in 1i64..6, n in 0u32..=12) {
            let a = rat(num, den);
            let falling = pochhammer_falling(&a, n);
            let sign = if n % 2 == 0 { Rational::one() } else { Rational::from_int(-1) };
            let via_neg = &sign * &pochhammer_rising(&(-&a), n);
            prop_assert_eq!(&falling, &via_neg);
            let shifted = &(&a - &Rational::from_int(n as i64)) + &Rational::one();
            prop_assert_eq!(&falling, &pochhammer_rising(&shifted, n));
        }

        #[test]
        fn rational_string_roundtrip(num in -1000i64..1000, den in 1i64..1000) {
            let r = rat(num, den);
            let back: Rational = r.to_string().parse().unwrap();
            prop_assert_eq!(r, back);
        }
    }
}
