//! Exact scalar arithmetic over prime fields `F_p` and the rationals.
//!
//! A [`Field`] is a small `Copy` descriptor; a [`FieldElement`] carries its
//! field with it, so arithmetic between elements of different fields is
//! detected at runtime. The operator impls (`+`, `-`, `*`, `/`) panic on such a
//! mix (and `/` on a zero divisor); the `checked_*` methods report it as a
//! [`FieldError`] instead.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("cannot parse {text:?} as an element of {field}")]
    Parse { text: String, field: Field },
    #[error("operands belong to different fields ({left} and {right})")]
    MixedField { left: Field, right: Field },
    #[error("{0} is not a prime")]
    NotPrime(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Kind {
    Prime(u64),
    Rationals,
}

/// The carrier field: `F_p` for a word-sized prime `p`, or `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Field(Kind);

impl Field {
    /// The prime field `F_p`. Fails unless `p` is prime.
    pub fn prime(p: u64) -> Result<Self, FieldError> {
        if is_prime(p) {
            Ok(Field(Kind::Prime(p)))
        } else {
            Err(FieldError::NotPrime(p))
        }
    }

    pub const fn rationals() -> Self {
        Field(Kind::Rationals)
    }

    /// `p` for `F_p`, `0` for `Q`.
    pub fn characteristic(&self) -> u64 {
        match self.0 {
            Kind::Prime(p) => p,
            Kind::Rationals => 0,
        }
    }

    /// Number of elements, `None` when infinite.
    pub fn order(&self) -> Option<u64> {
        match self.0 {
            Kind::Prime(p) => Some(p),
            Kind::Rationals => None,
        }
    }

    pub fn is_prime_field(&self) -> bool {
        matches!(self.0, Kind::Prime(_))
    }

    pub fn zero(&self) -> FieldElement {
        self.from_u64(0)
    }

    pub fn one(&self) -> FieldElement {
        self.from_u64(1)
    }

    pub fn from_u64(&self, v: u64) -> FieldElement {
        match self.0 {
            Kind::Prime(p) => FieldElement(Repr::Prime { value: v % p, modulus: p }),
            Kind::Rationals => FieldElement(Repr::Rational(BigRational::from_integer(v.into()))),
        }
    }

    pub fn from_i64(&self, v: i64) -> FieldElement {
        match self.0 {
            Kind::Prime(p) => {
                let r = (v as i128).rem_euclid(p as i128) as u64;
                FieldElement(Repr::Prime { value: r, modulus: p })
            }
            Kind::Rationals => FieldElement(Repr::Rational(BigRational::from_integer(v.into()))),
        }
    }

    /// The `k`-th element of the canonical enumeration `0, 1, 2, ...`
    /// (reduced mod `p` over `F_p`).
    pub fn element_at(&self, k: u64) -> FieldElement {
        self.from_u64(k)
    }

    /// Uniform element of `F_p`; over `Q` a uniform integer in `[-16, 16]`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        match self.0 {
            Kind::Prime(p) => self.from_u64(rng.random_range(0..p)),
            Kind::Rationals => self.from_i64(rng.random_range(-16..=16)),
        }
    }

    fn from_bigint(&self, v: &BigInt) -> FieldElement {
        match self.0 {
            Kind::Prime(p) => {
                let r = v.mod_floor(&BigInt::from(p));
                FieldElement(Repr::Prime { value: r.to_u64().expect("residue fits"), modulus: p })
            }
            Kind::Rationals => FieldElement(Repr::Rational(BigRational::from_integer(v.clone()))),
        }
    }

    /// Parse decimal text: an optionally signed integer or fraction `a/b`.
    /// Over `F_p` a fraction denotes `a * b^-1`.
    pub fn parse(&self, text: &str) -> Result<FieldElement, FieldError> {
        let err = || FieldError::Parse { text: text.to_string(), field: *self };
        let t = text.trim();
        let (num_txt, den_txt) = match t.split_once('/') {
            Some((n, d)) => (n.trim(), Some(d.trim())),
            None => (t, None),
        };
        let num = parse_int(num_txt, true).ok_or_else(err)?;
        let den = match den_txt {
            Some(d) => parse_int(d, false).ok_or_else(err)?,
            None => BigInt::one(),
        };
        if den.is_zero() {
            return Err(FieldError::DivisionByZero);
        }
        match self.0 {
            Kind::Prime(_) => self.from_bigint(&num).checked_div(&self.from_bigint(&den)),
            Kind::Rationals => Ok(FieldElement(Repr::Rational(BigRational::new(num, den)))),
        }
    }
}

fn parse_int(s: &str, allow_sign: bool) -> Option<BigInt> {
    let digits = match s.strip_prefix('-').or_else(|| s.strip_prefix('+')) {
        Some(rest) if allow_sign => rest,
        Some(_) => return None,
        None => s,
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    BigInt::from_str(s.strip_prefix('+').unwrap_or(s)).ok()
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Kind::Prime(p) => write!(f, "F_{p}"),
            Kind::Rationals => write!(f, "Q"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Repr {
    Prime { value: u64, modulus: u64 },
    Rational(BigRational),
}

/// An element in canonical form: least non-negative residue over `F_p`,
/// reduced fraction with positive denominator over `Q`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldElement(Repr);

impl FieldElement {
    pub fn field(&self) -> Field {
        match &self.0 {
            Repr::Prime { modulus, .. } => Field(Kind::Prime(*modulus)),
            Repr::Rational(_) => Field::rationals(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.0 {
            Repr::Prime { value, .. } => *value == 0,
            Repr::Rational(r) => r.is_zero(),
        }
    }

    pub fn is_one(&self) -> bool {
        match &self.0 {
            Repr::Prime { value, .. } => *value == 1,
            Repr::Rational(r) => r.is_one(),
        }
    }

    /// The residue in `[0, p)` for prime-field elements.
    pub fn residue(&self) -> Option<u64> {
        match &self.0 {
            Repr::Prime { value, .. } => Some(*value),
            Repr::Rational(_) => None,
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match &self.0 {
            Repr::Rational(r) => Some(r),
            Repr::Prime { .. } => None,
        }
    }

    fn same_field(&self, rhs: &Self) -> Result<(), FieldError> {
        let (l, r) = (self.field(), rhs.field());
        if l == r {
            Ok(())
        } else {
            Err(FieldError::MixedField { left: l, right: r })
        }
    }

    pub fn checked_add(&self, rhs: &Self) -> Result<Self, FieldError> {
        self.same_field(rhs)?;
        Ok(match (&self.0, &rhs.0) {
            (Repr::Prime { value: a, modulus: p }, Repr::Prime { value: b, .. }) => {
                let s = (*a as u128 + *b as u128) % *p as u128;
                FieldElement(Repr::Prime { value: s as u64, modulus: *p })
            }
            (Repr::Rational(a), Repr::Rational(b)) => FieldElement(Repr::Rational(a + b)),
            _ => unreachable!(),
        })
    }

    pub fn checked_sub(&self, rhs: &Self) -> Result<Self, FieldError> {
        self.same_field(rhs)?;
        Ok(match (&self.0, &rhs.0) {
            (Repr::Prime { value: a, modulus: p }, Repr::Prime { value: b, .. }) => {
                let s = (*a as u128 + (*p - *b) as u128) % *p as u128;
                FieldElement(Repr::Prime { value: s as u64, modulus: *p })
            }
            (Repr::Rational(a), Repr::Rational(b)) => FieldElement(Repr::Rational(a - b)),
            _ => unreachable!(),
        })
    }

    pub fn checked_mul(&self, rhs: &Self) -> Result<Self, FieldError> {
        self.same_field(rhs)?;
        Ok(match (&self.0, &rhs.0) {
            (Repr::Prime { value: a, modulus: p }, Repr::Prime { value: b, .. }) => {
                FieldElement(Repr::Prime { value: mul_mod(*a, *b, *p), modulus: *p })
            }
            (Repr::Rational(a), Repr::Rational(b)) => FieldElement(Repr::Rational(a * b)),
            _ => unreachable!(),
        })
    }

    pub fn checked_div(&self, rhs: &Self) -> Result<Self, FieldError> {
        self.same_field(rhs)?;
        self.checked_mul(&rhs.inv()?)
    }

    pub fn inv(&self) -> Result<Self, FieldError> {
        if self.is_zero() {
            return Err(FieldError::DivisionByZero);
        }
        Ok(match &self.0 {
            Repr::Prime { value, modulus } => {
                FieldElement(Repr::Prime { value: inv_mod(*value, *modulus), modulus: *modulus })
            }
            Repr::Rational(r) => FieldElement(Repr::Rational(r.recip())),
        })
    }

    pub fn pow(&self, mut exp: u64) -> Self {
        match &self.0 {
            Repr::Prime { value, modulus } => {
                let p = *modulus;
                let mut base = *value;
                let mut acc = 1 % p;
                while exp > 0 {
                    if exp & 1 == 1 {
                        acc = mul_mod(acc, base, p);
                    }
                    base = mul_mod(base, base, p);
                    exp >>= 1;
                }
                FieldElement(Repr::Prime { value: acc, modulus: p })
            }
            Repr::Rational(r) => {
                let e = i32::try_from(exp).expect("rational exponent too large");
                FieldElement(Repr::Rational(r.pow(e)))
            }
        }
    }

    /// Total order used for lexicographic point enumeration: residue order
    /// over `F_p`, numeric order over `Q`.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Prime { value: a, .. }, Repr::Prime { value: b, .. }) => a.cmp(b),
            (Repr::Rational(a), Repr::Rational(b)) => a.cmp(b),
            (Repr::Prime { .. }, Repr::Rational(_)) => Ordering::Less,
            (Repr::Rational(_), Repr::Prime { .. }) => Ordering::Greater,
        }
    }
}

impl PartialOrd for FieldElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FieldElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical_cmp(other)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Prime { value, .. } => write!(f, "{value}"),
            Repr::Rational(r) if r.denom().is_one() => write!(f, "{}", r.numer()),
            Repr::Rational(r) => write!(f, "{}/{}", r.numer(), r.denom()),
        }
    }
}

impl Neg for &FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        match &self.0 {
            Repr::Prime { value, modulus } => {
                FieldElement(Repr::Prime { value: (modulus - value) % modulus, modulus: *modulus })
            }
            Repr::Rational(r) => FieldElement(Repr::Rational(-r)),
        }
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        -&self
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&FieldElement> for &FieldElement {
            type Output = FieldElement;
            fn $method(self, rhs: &FieldElement) -> FieldElement {
                match self.$checked(rhs) {
                    Ok(v) => v,
                    Err(e) => panic!("{}", e),
                }
            }
        }
        impl $trait<FieldElement> for FieldElement {
            type Output = FieldElement;
            fn $method(self, rhs: FieldElement) -> FieldElement {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&FieldElement> for FieldElement {
            type Output = FieldElement;
            fn $method(self, rhs: &FieldElement) -> FieldElement {
                (&self).$method(rhs)
            }
        }
    };
}

binop!(Add, add, checked_add);
binop!(Sub, sub, checked_sub);
binop!(Mul, mul, checked_mul);
binop!(Div, div, checked_div);

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn inv_mod(a: u64, p: u64) -> u64 {
    let (mut r0, mut r1) = (p as i128, a as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    debug_assert_eq!(r0, 1);
    t0.rem_euclid(p as i128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1 % p;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &w in &WITNESSES {
        if n.is_multiple_of(w) {
            return n == w;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'outer: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

impl serde::Serialize for Field {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self.0 {
            Kind::Prime(p) => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("prime", &p)?;
                m.end()
            }
            Kind::Rationals => s.serialize_str("rationals"),
        }
    }
}

impl<'de> serde::Deserialize<'de> for Field {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Name(String),
            Prime { prime: u64 },
        }
        match Wire::deserialize(d)? {
            Wire::Name(n) if n == "rationals" => Ok(Field::rationals()),
            Wire::Name(n) => Err(serde::de::Error::custom(format!("unknown field {n:?}"))),
            Wire::Prime { prime } => Field::prime(prime).map_err(serde::de::Error::custom),
        }
    }
}

impl serde::Serialize for FieldElement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for Field {
    type Err = FieldError;

    /// `"rationals"`, `"Q"`, `"7"`, `"F7"` or `"F_7"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("rationals") || t == "Q" {
            return Ok(Field::rationals());
        }
        let digits = t.trim_start_matches(['F', 'f']).trim_start_matches('_');
        let p: u64 = digits.parse().map_err(|_| FieldError::Parse {
            text: s.to_string(),
            field: Field::rationals(),
        })?;
        Field::prime(p)
    }
}
