//! Exact rational scalars and the formatting conventions shared by the whole
//! crate: `p/q` text, dyadic `2^-k` literals, binary sizes, and decimal
//! renderings for reports.
//!
//! No machine floating point is used anywhere; every comparison is exact.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// Exact rational number, always kept in reduced form by `num-rational`.
pub type Rat = num_rational::BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RatParseError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid integer `{0}`")]
    BadInteger(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
    #[error("decimal literals are not accepted, write `{0}` as p/q or 2^-k")]
    DecimalRejected(String),
    #[error("invalid dyadic literal `{0}`, expected 2^-k")]
    BadDyadic(String),
}

/// Builds a rational from machine integers.
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// Builds an integer rational.
pub fn rint(num: i64) -> Rat {
    Rat::from_integer(BigInt::from(num))
}

/// 2^k for signed k, as an exact rational.
pub fn pow2(k: i64) -> Rat {
    let base = BigInt::one() << k.unsigned_abs() as usize;
    if k >= 0 {
        Rat::from_integer(base)
    } else {
        Rat::new(BigInt::one(), base)
    }
}

fn parse_bigint(text: &str) -> Result<BigInt, RatParseError> {
    if text.is_empty() {
        return Err(RatParseError::Empty);
    }
    text.parse::<BigInt>()
        .map_err(|_| RatParseError::BadInteger(text.to_string()))
}

/// Parses `p`, `-p`, or `p/q` with exact integer components.
///
/// Decimal notation is rejected so inexact inputs cannot slip in silently.
pub fn parse_rat(text: &str) -> Result<Rat, RatParseError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(RatParseError::Empty);
    }
    if text.contains('.') {
        return Err(RatParseError::DecimalRejected(text.to_string()));
    }
    match text.split_once('/') {
        None => Ok(Rat::from_integer(parse_bigint(text)?)),
        Some((p, q)) => {
            let num = parse_bigint(p.trim())?;
            let den = parse_bigint(q.trim())?;
            if den.is_zero() {
                return Err(RatParseError::ZeroDenominator(text.to_string()));
            }
            Ok(Rat::new(num, den))
        }
    }
}

/// Parses `p/q` or a dyadic literal `2^-k` / `2^k`.
pub fn parse_rat_or_dyadic(text: &str) -> Result<Rat, RatParseError> {
    let text = text.trim();
    if let Some(exp) = text.strip_prefix("2^") {
        let k: i64 = exp
            .parse()
            .map_err(|_| RatParseError::BadDyadic(text.to_string()))?;
        return Ok(pow2(k));
    }
    parse_rat(text)
}

/// Canonical `p/q` rendering, denominator always present and positive.
pub fn format_rat(x: &Rat) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// `bit` measure of a signed integer, taken on its absolute value.
pub fn bit_int(n: &BigInt) -> u64 {
    n.magnitude().bits()
}

/// `bit(p/q) = bit(p) + bit(q) + 1` for a reduced rational.
pub fn bit_rat(x: &Rat) -> u64 {
    bit_int(x.numer()) + bit_int(x.denom()) + 1
}

/// floor(log2(x)) for x > 0: the unique k with 2^k <= x < 2^(k+1).
pub fn floor_log2(x: &Rat) -> i64 {
    assert!(x.is_positive(), "floor_log2 requires a positive argument");
    let p = x.numer().magnitude();
    let q = x.denom().magnitude();
    let mut k = p.bits() as i64 - q.bits() as i64;
    // p.bits() - q.bits() is within 1 of the answer; fix up exactly.
    while pow2(k) > *x {
        k -= 1;
    }
    while pow2(k + 1) <= *x {
        k += 1;
    }
    k
}

/// Largest dyadic with denominator 2^bits that does not exceed x.
pub fn round_down_dyadic(x: &Rat, bits: u32) -> Rat {
    let scale = BigInt::one() << bits as usize;
    let scaled = (x * Rat::from_integer(scale.clone())).floor();
    scaled / Rat::from_integer(scale)
}

/// Decimal rendering with `sig` significant digits, round half away from
/// zero. Exact rationals stay the source of truth; this is display only.
pub fn decimal_approx(x: &Rat, sig: usize) -> String {
    assert!(sig > 0);
    if x.is_zero() {
        return format!("0.{}", "0".repeat(sig - 1));
    }
    let neg = x.is_negative();
    let ax = x.abs();
    // d = number of digits before the decimal point (can be <= 0).
    let mut d: i64 = 0;
    let one = Rat::one();
    let ten = rint(10);
    let mut probe = ax.clone();
    if probe >= one {
        while probe >= one {
            probe /= ten.clone();
            d += 1;
        }
    } else {
        while probe < one {
            probe *= ten.clone();
            d -= 1;
        }
        d += 1;
    }
    // Scale so that exactly `sig` digits sit left of the point, then round.
    let shift = sig as i64 - d;
    let mut scaled = ax;
    if shift >= 0 {
        for _ in 0..shift {
            scaled *= ten.clone();
        }
    } else {
        for _ in 0..(-shift) {
            scaled /= ten.clone();
        }
    }
    let mut digits = (scaled + rat(1, 2)).floor().to_integer();
    // Rounding can carry into an extra digit (e.g. 9.99 -> 10.0).
    let limit = BigInt::from(10u32).pow(sig as u32);
    if digits >= limit {
        digits /= BigInt::from(10u32);
        d += 1;
    }
    let digit_str = digits.to_string();
    debug_assert_eq!(digit_str.len(), sig);
    let body = if d <= 0 {
        format!("0.{}{}", "0".repeat((-d) as usize), digit_str)
    } else if (d as usize) >= sig {
        // Keep it exact-looking only when no truncation happens; otherwise
        // fall back to scientific notation.
        if d as usize == sig {
            digit_str
        } else {
            let mut s = String::new();
            s.push_str(&digit_str[..1]);
            s.push('.');
            s.push_str(&digit_str[1..]);
            format!("{s}e{}", d - 1)
        }
    } else {
        format!("{}.{}", &digit_str[..d as usize], &digit_str[d as usize..])
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["3/4", "-7/2", "0/1", "12", "-5"] {
            let r = parse_rat(s).unwrap();
            let r2 = parse_rat(&format_rat(&r)).unwrap();
            assert_eq!(r, r2);
        }
        assert_eq!(parse_rat("6/8").unwrap(), rat(3, 4));
        assert!(parse_rat("0.5").is_err());
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("").is_err());
    }

    #[test]
    fn dyadic_literals() {
        assert_eq!(parse_rat_or_dyadic("2^-3").unwrap(), rat(1, 8));
        assert_eq!(parse_rat_or_dyadic("2^4").unwrap(), rint(16));
        assert_eq!(parse_rat_or_dyadic("5/3").unwrap(), rat(5, 3));
        assert!(parse_rat_or_dyadic("2^x").is_err());
    }

    #[test]
    fn bit_sizes_match_definition() {
        // bit(n) = ceil(log2(n+1)): bit(0)=0, bit(1)=1, bit(2)=2, bit(3)=2, bit(4)=3
        assert_eq!(bit_int(&BigInt::from(0)), 0);
        assert_eq!(bit_int(&BigInt::from(1)), 1);
        assert_eq!(bit_int(&BigInt::from(2)), 2);
        assert_eq!(bit_int(&BigInt::from(3)), 2);
        assert_eq!(bit_int(&BigInt::from(4)), 3);
        assert_eq!(bit_rat(&rat(3, 4)), 2 + 3 + 1);
    }

    #[test]
    fn floor_log2_exact() {
        assert_eq!(floor_log2(&rint(1)), 0);
        assert_eq!(floor_log2(&rint(2)), 1);
        assert_eq!(floor_log2(&rat(7, 2)), 1);
        assert_eq!(floor_log2(&rat(1, 3)), -2);
        assert_eq!(floor_log2(&rat(1, 4)), -2);
        assert_eq!(floor_log2(&rat(255, 1)), 7);
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(decimal_approx(&rat(1, 3), 20), "0.33333333333333333333");
        assert_eq!(decimal_approx(&rint(1), 20), "1.0000000000000000000");
        assert_eq!(decimal_approx(&rat(-1, 8), 5), "-0.12500");
        assert_eq!(decimal_approx(&rat(2, 3), 4), "0.6667");
        assert_eq!(decimal_approx(&rint(0), 3), "0.00");
        assert_eq!(decimal_approx(&rat(999, 100), 2), "10");
    }

    #[test]
    fn dyadic_rounding_floors() {
        let x = rat(1, 3);
        let y = round_down_dyadic(&x, 8);
        assert!(y <= x);
        assert_eq!(y, rat(85, 256));
        assert_eq!(round_down_dyadic(&rat(1, 2), 8), rat(1, 2));
    }
}
