//! Exact rational arithmetic for times, speeds and workloads.
//!
//! Values are kept in lowest terms. Small values live in a pair of `i128`s
//! and every operation on them is overflow-checked; when a result does not
//! fit, the computation is redone on arbitrary-precision integers. Results
//! that fit again are demoted, so every value has exactly one representation
//! and structural equality is numeric equality.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Magnitude limit for the small representation. Keeping well clear of
/// `i128::MIN` means negation and gcd never overflow.
const SMALL_LIMIT: u128 = 1 << 120;

#[derive(Clone)]
enum Repr {
    Small(Ratio<i128>),
    Big(BigRational),
}

/// An exact rational number in lowest terms with a positive denominator.
#[derive(Clone)]
pub struct Rational(Repr);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid rational `{input}`: {reason}")]
pub struct ParseRationalError {
    input: String,
    reason: &'static str,
}

fn fits(r: &Ratio<i128>) -> bool {
    r.numer().unsigned_abs() < SMALL_LIMIT && r.denom().unsigned_abs() < SMALL_LIMIT
}

fn to_big(r: &Ratio<i128>) -> BigRational {
    BigRational::new_raw(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

impl Rational {
    fn from_small(r: Ratio<i128>) -> Self {
        if fits(&r) {
            Rational(Repr::Small(r))
        } else {
            Rational(Repr::Big(to_big(&r)))
        }
    }

    fn from_big(r: BigRational) -> Self {
        if let (Some(n), Some(d)) = (r.numer().to_i128(), r.denom().to_i128()) {
            let small = Ratio::new_raw(n, d);
            if fits(&small) {
                return Rational(Repr::Small(small));
            }
        }
        Rational(Repr::Big(r))
    }

    fn big(&self) -> BigRational {
        match &self.0 {
            Repr::Small(r) => to_big(r),
            Repr::Big(r) => r.clone(),
        }
    }

    /// Builds `numer / denom` in lowest terms. Panics on a zero denominator.
    pub fn new(numer: i128, denom: i128) -> Self {
        assert!(denom != 0, "rational with zero denominator");
        if numer.unsigned_abs() < SMALL_LIMIT && denom.unsigned_abs() < SMALL_LIMIT {
            Self::from_small(Ratio::new(numer, denom))
        } else {
            Self::from_big(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
        }
    }

    pub fn from_bigints(numer: BigInt, denom: BigInt) -> Self {
        assert!(!denom.is_zero(), "rational with zero denominator");
        Self::from_big(BigRational::new(numer, denom))
    }

    pub fn from_integer(n: i64) -> Self {
        Rational(Repr::Small(Ratio::from_integer(n as i128)))
    }

    pub fn zero() -> Self {
        Self::from_integer(0)
    }

    pub fn one() -> Self {
        Self::from_integer(1)
    }

    pub fn is_zero(&self) -> bool {
        match &self.0 {
            Repr::Small(r) => r.is_zero(),
            Repr::Big(r) => r.is_zero(),
        }
    }

    pub fn is_positive(&self) -> bool {
        match &self.0 {
            Repr::Small(r) => r.is_positive(),
            Repr::Big(r) => r.is_positive(),
        }
    }

    pub fn is_negative(&self) -> bool {
        match &self.0 {
            Repr::Small(r) => r.is_negative(),
            Repr::Big(r) => r.is_negative(),
        }
    }

    pub fn is_integer(&self) -> bool {
        match &self.0 {
            Repr::Small(r) => r.is_integer(),
            Repr::Big(r) => r.is_integer(),
        }
    }

    pub fn numer(&self) -> BigInt {
        match &self.0 {
            Repr::Small(r) => BigInt::from(*r.numer()),
            Repr::Big(r) => r.numer().clone(),
        }
    }

    pub fn denom(&self) -> BigInt {
        match &self.0 {
            Repr::Small(r) => BigInt::from(*r.denom()),
            Repr::Big(r) => r.denom().clone(),
        }
    }

    pub fn abs(&self) -> Self {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    /// Largest integer not above the value.
    pub fn floor(&self) -> BigInt {
        let (n, d) = (self.numer(), self.denom());
        n.div_floor(&d)
    }

    /// Nearest `f64`; for reporting only.
    pub fn to_f64(&self) -> f64 {
        match &self.0 {
            Repr::Small(r) => *r.numer() as f64 / *r.denom() as f64,
            Repr::Big(r) => r.to_f64().unwrap_or(f64::NAN),
        }
    }

    pub fn max_of<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
        if a >= b {
            a
        } else {
            b
        }
    }

    pub fn min_of<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
        if a <= b {
            a
        } else {
            b
        }
    }

    fn add_ref(&self, rhs: &Rational) -> Rational {
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &rhs.0) {
            if let Some(r) = a.checked_add(b) {
                return Self::from_small(r);
            }
        }
        Self::from_big(self.big() + rhs.big())
    }

    fn sub_ref(&self, rhs: &Rational) -> Rational {
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &rhs.0) {
            if let Some(r) = a.checked_sub(b) {
                return Self::from_small(r);
            }
        }
        Self::from_big(self.big() - rhs.big())
    }

    fn mul_ref(&self, rhs: &Rational) -> Rational {
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &rhs.0) {
            if let Some(r) = a.checked_mul(b) {
                return Self::from_small(r);
            }
        }
        Self::from_big(self.big() * rhs.big())
    }

    fn div_ref(&self, rhs: &Rational) -> Rational {
        assert!(!rhs.is_zero(), "rational division by zero");
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &rhs.0) {
            if let Some(r) = a.checked_div(b) {
                return Self::from_small(r);
            }
        }
        Self::from_big(self.big() / rhs.big())
    }
}

impl Default for Rational {
    fn default() -> Self {
        Self::zero()
    }
}

impl PartialEq for Rational {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => a.numer() == b.numer() && a.denom() == b.denom(),
            (Repr::Big(a), Repr::Big(b)) => a.numer() == b.numer() && a.denom() == b.denom(),
            _ => false,
        }
    }
}

impl Eq for Rational {}

impl Hash for Rational {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match &self.0 {
            Repr::Small(r) => {
                0u8.hash(state);
                r.numer().hash(state);
                r.denom().hash(state);
            }
            Repr::Big(r) => {
                1u8.hash(state);
                r.numer().hash(state);
                r.denom().hash(state);
            }
        }
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => {
                // Cross-multiplication stays inside i128 for small values.
                let l = a.numer().checked_mul(b.denom());
                let r = b.numer().checked_mul(a.denom());
                match (l, r) {
                    (Some(l), Some(r)) => l.cmp(&r),
                    _ => a.cmp(b),
                }
            }
            _ => self.big().cmp(&other.big()),
        }
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $inner:ident) => {
        impl $trait<&Rational> for &Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                self.$inner(rhs)
            }
        }
        impl $trait<Rational> for &Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                self.$inner(&rhs)
            }
        }
        impl $trait<&Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                self.$inner(rhs)
            }
        }
        impl $trait<Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                self.$inner(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, add_ref);
forward_binop!(Sub, sub, sub_ref);
forward_binop!(Mul, mul, mul_ref);
forward_binop!(Div, div, div_ref);

impl AddAssign<&Rational> for Rational {
    fn add_assign(&mut self, rhs: &Rational) {
        *self = self.add_ref(rhs);
    }
}

impl AddAssign<Rational> for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        *self = self.add_ref(&rhs);
    }
}

impl SubAssign<&Rational> for Rational {
    fn sub_assign(&mut self, rhs: &Rational) {
        *self = self.sub_ref(rhs);
    }
}

impl SubAssign<Rational> for Rational {
    fn sub_assign(&mut self, rhs: Rational) {
        *self = self.sub_ref(&rhs);
    }
}

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        match &self.0 {
            Repr::Small(r) => Rational(Repr::Small(-r)),
            Repr::Big(r) => Rational(Repr::Big(-r)),
        }
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        -&self
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Self {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Self {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

macro_rules! from_int {
    ($($t:ty),*) => {$(
        impl From<$t> for Rational {
            fn from(n: $t) -> Self {
                Rational::new(n as i128, 1)
            }
        }
    )*};
}

from_int!(i32, i64, u32, u64, usize);

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match &self.0 {
            Repr::Small(r) if r.is_integer() => r.numer().to_string(),
            Repr::Small(r) => format!("{}/{}", r.numer(), r.denom()),
            Repr::Big(r) if r.is_integer() => r.numer().to_string(),
            Repr::Big(r) => format!("{}/{}", r.numer(), r.denom()),
        };
        f.pad(&s)
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

fn parse_decimal(s: &str) -> Option<(BigInt, BigInt)> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut numer: BigInt = digits.parse().ok()?;
    if neg {
        numer = -numer;
    }
    let denom = num_traits::pow(BigInt::from(10u8), frac_part.len());
    Some((numer, denom))
}

impl FromStr for Rational {
    type Err = ParseRationalError;

    /// Accepts integers, decimals (`2.5`) and fractions (`5/2`).
    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let err = |reason| ParseRationalError {
            input: input.to_string(),
            reason,
        };
        let s = input.trim();
        if s.is_empty() {
            return Err(err("empty"));
        }
        match s.split_once('/') {
            Some((n, d)) => {
                let (nn, nd) = parse_decimal(n.trim()).ok_or_else(|| err("bad numerator"))?;
                let (dn, dd) = parse_decimal(d.trim()).ok_or_else(|| err("bad denominator"))?;
                if dn.is_zero() {
                    return Err(err("zero denominator"));
                }
                Ok(Rational::from_bigints(nn * dd, nd * dn))
            }
            None => {
                let (n, d) = parse_decimal(s).ok_or_else(|| err("not a number"))?;
                Ok(Rational::from_bigints(n, d))
            }
        }
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

struct RationalVisitor;

impl<'de> Visitor<'de> for RationalVisitor {
    type Value = Rational;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a rational as \"p/q\", a decimal string, or a number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
        v.parse().map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
        Ok(Rational::from(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
        Ok(Rational::from(v))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rational, E> {
        if !v.is_finite() {
            return Err(E::custom("non-finite number"));
        }
        // Display prints the shortest round-tripping decimal without exponent.
        format!("{v}").parse().map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(RationalVisitor)
    }
}

/// Shorthand used throughout the crate and its tests: `rat("5/2")`.
///
/// Panics on malformed input; meant for literals.
pub fn rat(s: &str) -> Rational {
    s.parse().unwrap_or_else(|e| panic!("{e}"))
}
