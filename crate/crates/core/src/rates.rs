//! Decay rates ψ(N) → +0 evaluated with exact rationals.
//!
//! Irrational values `b^(-p/q)` are bracketed by rationals with a fixed
//! binary scale, so `lower(N) ≤ ψ(N) ≤ upper(N) ≤ 2·ψ(N)` always holds and
//! perfect powers come out exact. Every slowness check uses `upper` where ψ
//! must be small and `lower` where ψ must be large.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Pow, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::{fmt_q, is_positive, parse_q, Q};

/// Fixed-point scale for root extraction.
const BRACKET_SHIFT: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RateError {
    #[error("rate evaluated at N = 0")]
    ZeroArgument,
    #[error("no N with psi(N) < {0}")]
    Unsatisfiable(String),
    #[error("invalid rate: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RateFunction {
    /// ψ(N) = N^(-alpha).
    Power { alpha: Q },
    /// ψ(N) = (ilog2(N) + 1)^(-beta).
    LogPower { beta: Q },
    /// Step function through `(N, value)` points, extended by the last value.
    Table { points: Vec<(u64, Q)> },
}

impl RateFunction {
    pub fn power(alpha: Q) -> Result<Self, RateError> {
        if !is_positive(&alpha) {
            return Err(RateError::Invalid(format!("exponent {} must be positive", fmt_q(&alpha))));
        }
        Ok(Self::Power { alpha })
    }

    pub fn logpower(beta: Q) -> Result<Self, RateError> {
        if !is_positive(&beta) {
            return Err(RateError::Invalid(format!("exponent {} must be positive", fmt_q(&beta))));
        }
        Ok(Self::LogPower { beta })
    }

    pub fn table(points: Vec<(u64, Q)>) -> Result<Self, RateError> {
        let Some(first) = points.first() else {
            return Err(RateError::Invalid("empty table".into()));
        };
        if first.0 != 1 {
            return Err(RateError::Invalid("table must start at N = 1".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(RateError::Invalid("table keys must strictly increase".into()));
            }
            if w[1].1 > w[0].1 {
                return Err(RateError::Invalid("table values must be nonincreasing".into()));
            }
        }
        if points.iter().any(|(_, v)| !is_positive(v)) {
            return Err(RateError::Invalid("table values must be positive".into()));
        }
        Ok(Self::Table { points })
    }

    /// Upper bracket ψ̄(N). Exact for tables, integer-exponent log rates and
    /// perfect powers.
    pub fn eval(&self, n: u64) -> Result<Q, RateError> {
        self.bracket(n).map(|(_, hi)| hi)
    }

    /// Lower bracket ψ_low(N).
    pub fn eval_lower(&self, n: u64) -> Result<Q, RateError> {
        self.bracket(n).map(|(lo, _)| lo)
    }

    /// `(lower, upper)` brackets of ψ(N).
    pub fn bracket(&self, n: u64) -> Result<(Q, Q), RateError> {
        if n == 0 {
            return Err(RateError::ZeroArgument);
        }
        match self {
            Self::Power { alpha } => Ok(power_bracket(&BigUint::from(n), alpha)),
            Self::LogPower { beta } => {
                let base = u64::from(64 - n.leading_zeros());
                Ok(power_bracket(&BigUint::from(base), beta))
            }
            Self::Table { points } => {
                let idx = points.partition_point(|(k, _)| *k <= n);
                let v = points[idx - 1].1.clone();
                Ok((v.clone(), v))
            }
        }
    }

    /// Least `N ≥ 1` with `eval(N) < y`.
    pub fn threshold(&self, y: &Q) -> Result<u64, RateError> {
        self.least_satisfying(|v| v < y)
            .ok_or_else(|| RateError::Unsatisfiable(fmt_q(y)))
    }

    /// Least `N ≥ 1` with `eval(N) ≤ y`.
    pub fn threshold_at_most(&self, y: &Q) -> Result<u64, RateError> {
        self.least_satisfying(|v| v <= y)
            .ok_or_else(|| RateError::Unsatisfiable(fmt_q(y)))
    }

    /// Exponential then binary search for the least N whose upper bracket
    /// satisfies a predicate that is monotone along nonincreasing values.
    fn least_satisfying(&self, pred: impl Fn(&Q) -> bool) -> Option<u64> {
        let ok = |n: u64| pred(&self.eval(n).expect("n >= 1"));
        if let Self::Table { points } = self {
            return points.iter().find(|(_, v)| pred(v)).map(|(k, _)| *k);
        }
        if ok(1) {
            return Some(1);
        }
        let mut lo = 1u64; // fails
        let mut hi = 2u64;
        while !ok(hi) {
            lo = hi;
            hi = hi.checked_mul(2)?;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

/// Brackets `base^(-p/q)`: with `x = base^p · D^q` and `r = floor(x^(1/q))`,
/// the upper bound is `D / r` and the lower bound `D / ceil(x^(1/q))`.
fn power_bracket(base: &BigUint, exponent: &Q) -> (Q, Q) {
    let p = exponent.numer().to_biguint().expect("positive exponent");
    let q: u32 = exponent
        .denom()
        .try_into()
        .expect("exponent denominator fits in u32");
    let p: u32 = (&p).try_into().expect("exponent numerator fits in u32");
    let powered: BigUint = Pow::pow(base, p);
    if q == 1 {
        let v = Q::new(BigInt::one(), BigInt::from(powered));
        return (v.clone(), v);
    }
    let scale = BigUint::one() << BRACKET_SHIFT;
    let x = &powered * Pow::pow(&scale, q);
    let floor_root = x.nth_root(q);
    let exact = Pow::pow(&floor_root, q) == x;
    let ceil_root = if exact { floor_root.clone() } else { &floor_root + 1u32 };
    debug_assert!(!floor_root.is_zero());
    let d = BigInt::from(scale);
    let upper = Q::new(d.clone(), BigInt::from(floor_root));
    let lower = Q::new(d, BigInt::from(ceil_root));
    (lower, upper)
}

/// Config form: `{"kind": "power", "param": "1/2"}` or
/// `{"kind": "table", "points": [["1", "1/2"], ["10", "1/4"]]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<(String, String)>>,
}

impl TryFrom<&RateSpec> for RateFunction {
    type Error = RateError;

    fn try_from(spec: &RateSpec) -> Result<Self, RateError> {
        let param = || -> Result<Q, RateError> {
            let p = spec
                .param
                .as_deref()
                .ok_or_else(|| RateError::Invalid(format!("{} rate needs \"param\"", spec.kind)))?;
            parse_q(p).map_err(|e| RateError::Invalid(e.to_string()))
        };
        match spec.kind.as_str() {
            "power" => Self::power(param()?),
            "logpower" => Self::logpower(param()?),
            "table" => {
                let pts = spec
                    .points
                    .as_ref()
                    .ok_or_else(|| RateError::Invalid("table rate needs \"points\"".into()))?;
                let mut out = Vec::with_capacity(pts.len());
                for (k, v) in pts {
                    let k: u64 = k
                        .trim()
                        .parse()
                        .map_err(|_| RateError::Invalid(format!("bad table key {k:?}")))?;
                    let v = parse_q(v).map_err(|e| RateError::Invalid(e.to_string()))?;
                    out.push((k, v));
                }
                Self::table(out)
            }
            other => Err(RateError::Invalid(format!("unknown rate kind {other:?}"))),
        }
    }
}

impl From<&RateFunction> for RateSpec {
    fn from(r: &RateFunction) -> Self {
        match r {
            RateFunction::Power { alpha } => RateSpec {
                kind: "power".into(),
                param: Some(fmt_q(alpha)),
                points: None,
            },
            RateFunction::LogPower { beta } => RateSpec {
                kind: "logpower".into(),
                param: Some(fmt_q(beta)),
                points: None,
            },
            RateFunction::Table { points } => RateSpec {
                kind: "table".into(),
                param: None,
                points: Some(points.iter().map(|(k, v)| (k.to_string(), fmt_q(v))).collect()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q_frac, q_int};
    use proptest::prelude::*;

    fn pw(n: i64, d: i64) -> RateFunction {
        RateFunction::power(q_frac(n, d)).unwrap()
    }

    fn lp(n: i64, d: i64) -> RateFunction {
        RateFunction::logpower(q_frac(n, d)).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(lp(1, 1).eval(7).unwrap(), q_frac(1, 3));
        assert_eq!(pw(1, 2).eval(25).unwrap(), q_frac(1, 5));
        let t = RateFunction::table(vec![(1, q_frac(1, 2)), (10, q_frac(1, 4))]).unwrap();
        assert_eq!(t.eval(100).unwrap(), q_frac(1, 4));
        assert_eq!(t.eval(9).unwrap(), q_frac(1, 2));
        assert_eq!(pw(1, 2).eval(0), Err(RateError::ZeroArgument));
    }

    /// Scan oracle: least N in 1..=limit whose exact square is > 1/y², i.e.
    /// N^(-1/2) < y, decided without any bracket.
    fn scan_power_half(y: &Q, limit: u64) -> u64 {
        (1..=limit)
            .find(|&n| q_int(n) * y * y > q_int(1))
            .unwrap()
    }

    #[test]
    fn threshold_examples() {
        let y = q_frac(1, 5);
        assert_eq!(scan_power_half(&y, 30), 26);
        assert_eq!(pw(1, 2).threshold(&y).unwrap(), 26);
        // ilog2(N)+1 > 4 first at N = 16.
        let scan = (1u64..=40).find(|&n| q_frac(1, 64 - n.leading_zeros() as i64) < q_frac(1, 4));
        assert_eq!(scan, Some(16));
        assert_eq!(lp(1, 1).threshold(&q_frac(1, 4)).unwrap(), 16);
        assert_eq!(lp(1, 1).threshold(&q_int(2)).unwrap(), 1);
        assert_eq!(pw(3, 1).threshold(&q_int(2)).unwrap(), 1);
    }

    #[test]
    fn table_threshold_unsatisfiable() {
        let t = RateFunction::table(vec![(1, q_frac(1, 2)), (10, q_frac(1, 4))]).unwrap();
        assert_eq!(t.threshold(&q_frac(1, 3)).unwrap(), 10);
        assert!(matches!(t.threshold(&q_frac(1, 4)), Err(RateError::Unsatisfiable(_))));
        assert_eq!(t.threshold_at_most(&q_frac(1, 4)).unwrap(), 10);
    }

    #[test]
    fn invalid_rates_rejected() {
        assert!(RateFunction::power(q_int(0)).is_err());
        assert!(RateFunction::table(vec![(2, q_int(1))]).is_err());
        assert!(RateFunction::table(vec![(1, q_frac(1, 4)), (5, q_frac(1, 2))]).is_err());
        let spec = RateSpec { kind: "exp".into(), param: Some("1".into()), points: None };
        assert!(RateFunction::try_from(&spec).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let r = pw(1, 2);
        let spec = RateSpec::from(&r);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"power","param":"1/2"}"#);
        let back: RateSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(RateFunction::try_from(&back).unwrap(), r);
    }

    fn any_rate() -> impl Strategy<Value = RateFunction> {
        prop_oneof![
            (1i64..6, 1i64..4).prop_map(|(n, d)| pw(n, d)),
            (1i64..4, 1i64..3).prop_map(|(n, d)| lp(n, d)),
        ]
    }

    proptest! {
        #[test]
        fn monotone_and_bracketed(rate in any_rate(), n in 1u64..5000) {
            let (lo, hi) = rate.bracket(n).unwrap();
            let next = rate.eval(n + 1).unwrap();
            prop_assert!(next <= hi);
            prop_assert!(lo <= hi);
            prop_assert!(hi <= lo.clone() * q_int(2));
            prop_assert!(is_positive(&lo));
        }

        #[test]
        fn power_bracket_contains_true_value(n in 1u64..10_000, d in 2u32..4) {
            // N^(-1/d) in [lo, hi]  <=>  lo^d <= 1/N <= hi^d.
            let rate = pw(1, d as i64);
            let (lo, hi) = rate.bracket(n).unwrap();
            let inv = q_frac(1, n as i64);
            prop_assert!(Pow::pow(&lo, d) <= inv);
            prop_assert!(Pow::pow(&hi, d) >= inv);
        }

        #[test]
        fn threshold_consistent(rate in any_rate(), num in 1i64..50, den in 2i64..400) {
            let y = q_frac(num, den);
            // Log rates can need N beyond u64 for small y.
            let Ok(n) = rate.threshold(&y) else { return Ok(()) };
            prop_assert!(rate.eval(n).unwrap() < y);
            if n > 1 {
                prop_assert!(rate.eval(n - 1).unwrap() >= y);
            }
        }
    }
}
