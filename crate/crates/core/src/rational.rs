//! Exact rational helpers shared by every module: the `p/q` wire format,
//! a human-readable display column, and a few conversions.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

pub type Q = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed rational {input:?}: {reason}")]
pub struct ParseRationalError {
    pub input: String,
    pub reason: &'static str,
}

/// Parses `"p/q"` or a bare integer `"p"`.
pub fn parse_q(s: &str) -> Result<Q, ParseRationalError> {
    let err = |reason| ParseRationalError {
        input: s.to_string(),
        reason,
    };
    let s_trim = s.trim();
    let (num, den) = match s_trim.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s_trim, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| err("numerator is not an integer"))?;
    let den: BigInt = den.parse().map_err(|_| err("denominator is not an integer"))?;
    if den.is_zero() {
        return Err(err("zero denominator"));
    }
    Ok(Q::new(num, den))
}

/// Canonical wire form: `"p/q"` in lowest terms, `q > 0`; integers keep `/1`.
pub fn fmt_q(q: &Q) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

/// Six significant digits, for display columns only.
pub fn display_q(q: &Q) -> String {
    match q.to_f64() {
        Some(v) if v.is_finite() => format!("{:.5e}", v),
        _ => {
            // Magnitude beyond f64: fall back to a digit-count estimate.
            let n = q.numer().abs().to_string().len() as i64;
            let d = q.denom().to_string().len() as i64;
            let sign = if q.is_negative() { "-" } else { "" };
            format!("{sign}~1e{}", n - d)
        }
    }
}

pub fn q_int(v: impl Into<BigInt>) -> Q {
    Q::from_integer(v.into())
}

pub fn q_frac(n: impl Into<BigInt>, d: impl Into<BigInt>) -> Q {
    Q::new(n.into(), d.into())
}

pub fn q_u64(v: u64) -> Q {
    Q::from_integer(BigInt::from(v))
}

/// `ceil(q)` as a big integer.
pub fn ceil_int(q: &Q) -> BigInt {
    q.ceil().to_integer()
}

pub fn floor_int(q: &Q) -> BigInt {
    q.floor().to_integer()
}

/// `floor(x^(1/k))` for nonnegative `x`.
pub fn int_root(x: &BigUint, k: u32) -> BigUint {
    if k == 1 {
        return x.clone();
    }
    x.nth_root(k)
}

pub fn lcm_denominators<'a>(qs: impl IntoIterator<Item = &'a Q>) -> BigInt {
    qs.into_iter()
        .fold(BigInt::one(), |acc, q| acc.lcm(q.denom()))
}

/// Serde adapter for a single rational as `"p/q"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rat(pub Q);

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&fmt_q(&self.0))
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_q(&self.0))
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).map(Rat).map_err(de::Error::custom)
    }
}

impl From<Q> for Rat {
    fn from(q: Q) -> Self {
        Rat(q)
    }
}

/// Serde adapter for a `u64` carried as a decimal string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecU64(pub u64);

impl Serialize for DecU64 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for DecU64 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.trim()
            .parse::<u64>()
            .map(DecU64)
            .map_err(|e| de::Error::custom(format!("bad decimal integer {s:?}: {e}")))
    }
}

pub fn is_positive(q: &Q) -> bool {
    q.is_positive() && !q.is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_q("3/10").unwrap(), q_frac(3, 10));
        assert_eq!(parse_q("6/20").unwrap(), q_frac(3, 10));
        assert_eq!(parse_q("7").unwrap(), q_int(7));
        assert_eq!(fmt_q(&q_frac(6, 4)), "3/2");
        assert_eq!(fmt_q(&q_int(2)), "2/1");
        assert!(parse_q("3/0").is_err());
        assert!(parse_q("x/2").is_err());
        assert!(parse_q("").is_err());
    }

    #[test]
    fn display_has_six_digits() {
        assert_eq!(display_q(&q_frac(1, 3)), "3.33333e-1");
    }

    #[test]
    fn roots() {
        assert_eq!(int_root(&BigUint::from(26u32), 2), BigUint::from(5u32));
        assert_eq!(int_root(&BigUint::from(27u32), 3), BigUint::from(3u32));
    }
}
