use num_bigint::BigInt;
use num_integer::{Integer, Roots};
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Arbitrary-precision rational, always kept in lowest terms with a positive denominator.
pub type Rational = num_rational::BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn frac(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Gcd audit used by debug builds: the representation must be canonical.
pub fn is_reduced(r: &Rational) -> bool {
    let (n, d) = (r.numer(), r.denom());
    if !d.is_positive() {
        return false;
    }
    if n.is_zero() {
        return d.is_one();
    }
    n.gcd(d).is_one()
}

/// Decimal-string pair `[numerator, denominator]` used by every JSON format.
pub fn to_strings(r: &Rational) -> [String; 2] {
    [r.numer().to_string(), r.denom().to_string()]
}

pub fn from_strings(parts: &[String; 2]) -> Result<Rational> {
    let n: BigInt = parts[0]
        .parse()
        .map_err(|_| Error::Parse(format!("bad numerator {:?}", parts[0])))?;
    let d: BigInt = parts[1]
        .parse()
        .map_err(|_| Error::Parse(format!("bad denominator {:?}", parts[1])))?;
    if d.is_zero() {
        return Err(Error::Parse("zero denominator".into()));
    }
    let r = Rational::new(n, d);
    // Accept only canonical input so that re-serialization is byte-identical.
    if to_strings(&r) != *parts {
        return Err(Error::Parse(format!("rational {}/{} not in lowest terms", parts[0], parts[1])));
    }
    Ok(r)
}

/// Exact integer square root, if `n` is a perfect square.
pub fn exact_sqrt(n: u64) -> Option<u64> {
    let r = n.sqrt();
    (r * r == n).then_some(r)
}

pub fn is_perfect_square(n: u64) -> bool {
    exact_sqrt(n).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        let r = frac(6, -4);
        assert_eq!(to_strings(&r), ["-3".to_string(), "2".to_string()]);
        assert!(is_reduced(&r));
        assert!(is_reduced(&int(0)));
        assert_eq!(from_strings(&to_strings(&r)).unwrap(), r);
        assert!(from_strings(&["2".into(), "4".into()]).is_err());
        assert!(from_strings(&["1".into(), "0".into()]).is_err());
    }

    #[test]
    fn squares() {
        assert_eq!(exact_sqrt(64), Some(8));
        assert_eq!(exact_sqrt(80), None);
        assert!(is_perfect_square(1));
        assert!(!is_perfect_square(12));
    }
}
