//! Exact arithmetic in the real quadratic field Q(√m).

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::rational::{self, is_perfect_square, Rational};
use crate::error::{Error, Result};

/// The number `a + b√m` with rational `a`, `b`.
///
/// `m` is a non-square radicand `>= 2`, or `1`, which marks the purely
/// rational field (used when the natural radicand is a perfect square and
/// √m collapses to an integer). With `m == 1` the `b` component is always
/// zero, so equality is componentwise in every case.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuadNum {
    a: Rational,
    b: Rational,
    m: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadOp {
    Add,
    Sub,
    Mul,
    Div,
}

pub fn valid_radicand(m: u64) -> bool {
    m == 1 || (m >= 2 && !is_perfect_square(m))
}

impl QuadNum {
    pub fn new(a: Rational, b: Rational, m: u64) -> Result<Self> {
        if !valid_radicand(m) {
            return Err(Error::domain(format!(
                "radicand {m} must be a positive non-square integer (or 1 for the rational field)"
            )));
        }
        Ok(Self::raw(a, b, m))
    }

    pub(crate) fn raw(a: Rational, b: Rational, m: u64) -> Self {
        debug_assert!(valid_radicand(m));
        if m == 1 {
            Self { a: a + b, b: Rational::zero(), m }
        } else {
            Self { a, b, m }
        }
    }

    pub fn rational(a: Rational, m: u64) -> Self {
        Self::raw(a, Rational::zero(), m)
    }

    pub fn from_int(v: i64, m: u64) -> Self {
        Self::rational(rational::int(v), m)
    }

    pub fn zero(m: u64) -> Self {
        Self::from_int(0, m)
    }

    pub fn one(m: u64) -> Self {
        Self::from_int(1, m)
    }

    /// `√r` inside the field whose radicand is `r`'s field radicand:
    /// `(0, 1)` over `Q(√r)` when `r` is non-square, the integer root otherwise.
    pub fn sqrt_of(r: u64) -> Self {
        match rational::exact_sqrt(r) {
            Some(root) => Self::from_int(root as i64, 1),
            None => Self::raw(Rational::zero(), Rational::one(), r),
        }
    }

    /// The radicand of the field that holds `√r`.
    pub fn field_radicand_for(r: u64) -> u64 {
        if is_perfect_square(r) {
            1
        } else {
            r
        }
    }

    pub fn a(&self) -> &Rational {
        &self.a
    }

    pub fn b(&self) -> &Rational {
        &self.b
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    fn same_field(&self, other: &Self) -> Result<()> {
        if self.m == other.m {
            Ok(())
        } else {
            Err(Error::Structural(format!(
                "radicand mismatch: √{} vs √{}",
                self.m, other.m
            )))
        }
    }

    fn assert_same_field(&self, other: &Self) {
        if let Err(e) = self.same_field(other) {
            panic!("{e}");
        }
    }

    /// Sign of the real value, decided by rational comparisons only.
    pub fn sign(&self) -> i8 {
        let sa = sign_of(&self.a);
        let sb = sign_of(&self.b);
        if sb == 0 {
            return sa;
        }
        if sa == 0 || sa == sb {
            return sb;
        }
        // Opposite signs: compare a² with m·b².
        let lhs = &self.a * &self.a;
        let rhs = &self.b * &self.b * Rational::from_integer(BigInt::from(self.m));
        match lhs.cmp(&rhs) {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => 0,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.sign() > 0
    }

    pub fn is_negative(&self) -> bool {
        self.sign() < 0
    }

    pub fn abs(&self) -> Self {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    /// Compares real values. Panics on a radicand mismatch.
    pub fn cmp_value(&self, other: &Self) -> Ordering {
        match (self - other).sign() {
            1 => Ordering::Greater,
            -1 => Ordering::Less,
            _ => Ordering::Equal,
        }
    }

    pub fn max_value<'a>(&'a self, other: &'a Self) -> &'a Self {
        if self.cmp_value(other) == Ordering::Less {
            other
        } else {
            self
        }
    }

    pub fn conj(&self) -> Self {
        Self { a: self.a.clone(), b: -&self.b, m: self.m }
    }

    /// Field norm `a² − m·b²`.
    pub fn norm(&self) -> Rational {
        &self.a * &self.a - &self.b * &self.b * Rational::from_integer(BigInt::from(self.m))
    }

    pub fn scale(&self, r: &Rational) -> Self {
        Self { a: &self.a * r, b: &self.b * r, m: self.m }
    }

    pub fn square(&self) -> Self {
        self * self
    }

    pub fn inv(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::arithmetic("division by zero in Q(√m)"));
        }
        let n = self.norm();
        // Non-square m means the norm of a non-zero element never vanishes.
        debug_assert!(!n.is_zero());
        let inv_n = n.recip();
        Ok(self.conj().scale(&inv_n))
    }

    pub fn checked_div(&self, other: &Self) -> Result<Self> {
        self.same_field(other)?;
        Ok(self * &other.inv()?)
    }

    /// A rational within `2^-bits` of the value.
    pub fn approx(&self, bits: u32) -> Rational {
        if self.b.is_zero() {
            return self.a.clone();
        }
        let bn = self.b.numer();
        let bd = self.b.denom();
        let scaled = bn.magnitude() * bn.magnitude() * BigInt::from(self.m).magnitude() << (2 * bits as usize);
        let root = BigInt::from_biguint(Sign::Plus, scaled.sqrt());
        let root = if bn.is_negative() { -root } else { root };
        let denom = bd * (BigInt::one() << bits as usize);
        &self.a + Rational::new(root, denom)
    }

    pub fn to_f64(&self) -> f64 {
        self.approx(96).to_f64().unwrap_or(f64::NAN)
    }

    /// Fixed-point decimal rendering with `digits` fractional digits.
    pub fn to_decimal(&self, digits: u32) -> String {
        let bits = (digits as f64 * std::f64::consts::LOG2_10).ceil() as u32 + 8;
        decimal_string(&self.approx(bits), digits)
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one(self.m);
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }
}

fn sign_of(r: &Rational) -> i8 {
    if r.is_positive() {
        1
    } else if r.is_negative() {
        -1
    } else {
        0
    }
}

pub(crate) fn decimal_string(r: &Rational, digits: u32) -> String {
    let scale = BigInt::from(10u32).pow(digits);
    let neg = r.is_negative();
    let scaled = (r.abs() * Rational::from_integer(scale.clone())).round().to_integer();
    let int_part = &scaled / &scale;
    let frac_part = &scaled % &scale;
    let sign = if neg && !scaled.is_zero() { "-" } else { "" };
    if digits == 0 {
        format!("{sign}{int_part}")
    } else {
        format!("{sign}{int_part}.{:0>width$}", frac_part.to_string(), width = digits as usize)
    }
}

/// Exact field arithmetic with structural checks on the operands.
pub fn quad_arith(x: &QuadNum, y: &QuadNum, op: QuadOp) -> Result<QuadNum> {
    x.same_field(y)?;
    let z = match op {
        QuadOp::Add => x + y,
        QuadOp::Sub => x - y,
        QuadOp::Mul => x * y,
        QuadOp::Div => x.checked_div(y)?,
    };
    debug_assert!(rational::is_reduced(&z.a) && rational::is_reduced(&z.b));
    Ok(z)
}

pub fn quad_sign(x: &QuadNum) -> i8 {
    x.sign()
}

/// Float rendering for reports, within `2^-precision` before the final rounding to f64.
pub fn quad_to_float(x: &QuadNum, precision: u32) -> f64 {
    x.approx(precision).to_f64().unwrap_or(f64::NAN)
}

impl<'a> Add<&'a QuadNum> for &'a QuadNum {
    type Output = QuadNum;
    fn add(self, rhs: &'a QuadNum) -> QuadNum {
        self.assert_same_field(rhs);
        QuadNum { a: &self.a + &rhs.a, b: &self.b + &rhs.b, m: self.m }
    }
}

impl<'a> Sub<&'a QuadNum> for &'a QuadNum {
    type Output = QuadNum;
    fn sub(self, rhs: &'a QuadNum) -> QuadNum {
        self.assert_same_field(rhs);
        QuadNum { a: &self.a - &rhs.a, b: &self.b - &rhs.b, m: self.m }
    }
}

impl<'a> Mul<&'a QuadNum> for &'a QuadNum {
    type Output = QuadNum;
    fn mul(self, rhs: &'a QuadNum) -> QuadNum {
        self.assert_same_field(rhs);
        if self.b.is_zero() && rhs.b.is_zero() {
            return QuadNum { a: &self.a * &rhs.a, b: Rational::zero(), m: self.m };
        }
        let m = Rational::from_integer(BigInt::from(self.m));
        QuadNum {
            a: &self.a * &rhs.a + &self.b * &rhs.b * m,
            b: &self.a * &rhs.b + &self.b * &rhs.a,
            m: self.m,
        }
    }
}

impl Neg for &QuadNum {
    type Output = QuadNum;
    fn neg(self) -> QuadNum {
        QuadNum { a: -&self.a, b: -&self.b, m: self.m }
    }
}

macro_rules! forward_owned {
    ($($tr:ident $method:ident),*) => {$(
        impl $tr<QuadNum> for QuadNum {
            type Output = QuadNum;
            fn $method(self, rhs: QuadNum) -> QuadNum {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $tr<&'a QuadNum> for QuadNum {
            type Output = QuadNum;
            fn $method(self, rhs: &'a QuadNum) -> QuadNum {
                (&self).$method(rhs)
            }
        }
    )*};
}
forward_owned!(Add add, Sub sub, Mul mul);

impl Neg for QuadNum {
    type Output = QuadNum;
    fn neg(self) -> QuadNum {
        -&self
    }
}

impl fmt::Display for QuadNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b.is_zero() {
            return write!(f, "{}", self.a);
        }
        if self.a.is_zero() {
            return write!(f, "({})√{}", self.b, self.m);
        }
        write!(f, "{} + ({})√{}", self.a, self.b, self.m)
    }
}

/// JSON shape `{"a": ["p","q"], "b": ["r","s"]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadJson {
    pub a: [String; 2],
    pub b: [String; 2],
}

impl QuadNum {
    pub fn to_json(&self) -> QuadJson {
        QuadJson { a: rational::to_strings(&self.a), b: rational::to_strings(&self.b) }
    }

    pub fn from_json(j: &QuadJson, m: u64) -> Result<Self> {
        let a = rational::from_strings(&j.a)?;
        let b = rational::from_strings(&j.b)?;
        if m == 1 && !b.is_zero() {
            return Err(Error::Parse("rational field element with a √ component".into()));
        }
        QuadNum::new(a, b, m).map_err(|e| Error::Parse(e.to_string()))
    }
}
