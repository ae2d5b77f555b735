//! l-bit floating-point numbers with truncated arithmetic, the relative
//! distance metric, (l, i)-closeness, and floating-point probability
//! distributions.
//!
//! F(l) is the set `m * 2^e` with mantissa `m` in `[0, 2^l - 1]` and an
//! unbounded signed exponent. Values are kept canonical: zero is `(0, 0)`,
//! and any nonzero value has its top mantissa bit set, so equality of values
//! is structural equality. All bound checks run in exact rational
//! arithmetic.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::{floor_log2, pow2, Rat};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FpError {
    #[error("precision must be at least 1")]
    BadPrecision,
    #[error("precision must be at least 2 for closeness thresholds")]
    PrecisionTooSmallForCloseness,
    #[error("expected a positive value, got {0}")]
    NotPositive(String),
    #[error("mantissa {mantissa} does not fit precision {ell}")]
    MantissaOverflow { mantissa: String, ell: u32 },
    #[error("non-canonical mantissa {mantissa} for precision {ell}")]
    NotCanonical { mantissa: String, ell: u32 },
    #[error("operands mix precisions {0} and {1}")]
    PrecisionMismatch(u32, u32),
    #[error("truncated subtraction would be negative")]
    NegativeSubtraction,
    #[error("division by zero")]
    DivisionByZero,
    #[error("weights must share one precision")]
    MixedWeights,
    #[error("distribution needs at least one positive weight")]
    NoPositiveWeight,
    #[error("distribution entry inside the declared support is zero or negative")]
    ZeroSupportEntry,
    #[error("distribution does not sum to 1")]
    NotADistribution,
}

/// A floating-point number with `l`-bit mantissa: value = mantissa * 2^exponent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FloatL {
    mantissa: BigUint,
    exponent: BigInt,
    ell: u32,
}

impl FloatL {
    /// Zero at the given precision.
    pub fn zero(ell: u32) -> Self {
        FloatL {
            mantissa: BigUint::zero(),
            exponent: BigInt::zero(),
            ell,
        }
    }

    /// One at the given precision: mantissa 2^(l-1), exponent 1-l.
    pub fn one(ell: u32) -> Self {
        FloatL {
            mantissa: BigUint::one() << (ell - 1) as usize,
            exponent: BigInt::from(1i64 - ell as i64),
            ell,
        }
    }

    /// Builds from raw parts, enforcing the canonical form.
    pub fn from_parts(mantissa: BigUint, exponent: BigInt, ell: u32) -> Result<Self, FpError> {
        if ell < 1 {
            return Err(FpError::BadPrecision);
        }
        if mantissa.bits() > ell as u64 {
            return Err(FpError::MantissaOverflow {
                mantissa: mantissa.to_string(),
                ell,
            });
        }
        if mantissa.is_zero() {
            if !exponent.is_zero() {
                return Err(FpError::NotCanonical {
                    mantissa: mantissa.to_string(),
                    ell,
                });
            }
        } else if mantissa.bits() != ell as u64 {
            return Err(FpError::NotCanonical {
                mantissa: mantissa.to_string(),
                ell,
            });
        }
        Ok(FloatL {
            mantissa,
            exponent,
            ell,
        })
    }

    pub fn mantissa(&self) -> &BigUint {
        &self.mantissa
    }

    pub fn exponent(&self) -> &BigInt {
        &self.exponent
    }

    pub fn precision(&self) -> u32 {
        self.ell
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    /// Exact rational value `m * 2^e`.
    pub fn value(&self) -> Rat {
        if self.mantissa.is_zero() {
            return Rat::zero();
        }
        let m = Rat::from_integer(BigInt::from(self.mantissa.clone()));
        let e = i64::try_from(self.exponent.clone()).expect("exponent fits i64 at desk scale");
        m * pow2(e)
    }

    /// Representation size: bit(m) + bit(|e|).
    pub fn representation_bits(&self) -> u64 {
        self.mantissa.bits() + self.exponent.magnitude().bits()
    }
}

/// Largest y in F(l) with y <= x, for positive rational x.
///
/// The result is canonical and satisfies
/// `rel(x, y) <= (1 - 2^(1-l))^(-1) - 1`.
pub fn truncate(x: &Rat, ell: u32) -> Result<FloatL, FpError> {
    if ell < 1 {
        return Err(FpError::BadPrecision);
    }
    if !x.is_positive() {
        return Err(FpError::NotPositive(x.to_string()));
    }
    Ok(truncate_nonneg(x, ell))
}

/// Truncation extended with truncate(0) = 0, used by the arithmetic ops.
fn truncate_nonneg(x: &Rat, ell: u32) -> FloatL {
    if x.is_zero() {
        return FloatL::zero(ell);
    }
    // Pick e so that floor(x / 2^e) lands in [2^(l-1), 2^l - 1].
    let k = floor_log2(x);
    let e = k - ell as i64 + 1;
    let m = (x * pow2(-e)).floor().to_integer();
    let m = m.magnitude().clone();
    debug_assert!(m.bits() == ell as u64);
    FloatL {
        mantissa: m,
        exponent: BigInt::from(e),
        ell,
    }
}

fn check_precisions(a: &FloatL, b: &FloatL) -> Result<u32, FpError> {
    if a.ell != b.ell {
        return Err(FpError::PrecisionMismatch(a.ell, b.ell));
    }
    Ok(a.ell)
}

/// Truncated addition.
pub fn fp_add(a: &FloatL, b: &FloatL) -> Result<FloatL, FpError> {
    let ell = check_precisions(a, b)?;
    Ok(truncate_nonneg(&(a.value() + b.value()), ell))
}

/// Truncated subtraction; the exact difference must be non-negative since
/// F(l) holds no negative values.
pub fn fp_sub(a: &FloatL, b: &FloatL) -> Result<FloatL, FpError> {
    let ell = check_precisions(a, b)?;
    let d = a.value() - b.value();
    if d.is_negative() {
        return Err(FpError::NegativeSubtraction);
    }
    Ok(truncate_nonneg(&d, ell))
}

/// Truncated multiplication.
pub fn fp_mul(a: &FloatL, b: &FloatL) -> Result<FloatL, FpError> {
    let ell = check_precisions(a, b)?;
    Ok(truncate_nonneg(&(a.value() * b.value()), ell))
}

/// Truncated division.
pub fn fp_div(a: &FloatL, b: &FloatL) -> Result<FloatL, FpError> {
    let ell = check_precisions(a, b)?;
    if b.is_zero() {
        return Err(FpError::DivisionByZero);
    }
    Ok(truncate_nonneg(&(a.value() / b.value()), ell))
}

/// Relative distance of two positive rationals: max{x/y, y/x} - 1.
pub fn rel(x: &Rat, y: &Rat) -> Result<Rat, FpError> {
    if !x.is_positive() {
        return Err(FpError::NotPositive(x.to_string()));
    }
    if !y.is_positive() {
        return Err(FpError::NotPositive(y.to_string()));
    }
    let a = x / y;
    let b = y / x;
    Ok(if a >= b {
        a - Rat::one()
    } else {
        b - Rat::one()
    })
}

/// The (l, i)-closeness threshold `(1 - 2^(1-l))^(-i) - 1`, exact.
pub fn closeness_threshold(ell: u32, i: u64) -> Result<Rat, FpError> {
    if ell < 2 {
        return Err(FpError::PrecisionTooSmallForCloseness);
    }
    let base = Rat::one() - pow2(1 - ell as i64);
    let mut inv = Rat::one();
    let inv_base = Rat::one() / base;
    let mut k = i;
    let mut sq = inv_base;
    // Fast exponentiation keeps this cheap for large i.
    while k > 0 {
        if k & 1 == 1 {
            inv *= sq.clone();
        }
        sq = sq.clone() * sq;
        k >>= 1;
    }
    Ok(inv - Rat::one())
}

/// True iff rel(x, y) <= (1 - 2^(1-l))^(-i) - 1.
pub fn is_close(x: &Rat, y: &Rat, ell: u32, i: u64) -> Result<bool, FpError> {
    let threshold = closeness_threshold(ell, i)?;
    Ok(rel(x, y)? <= threshold)
}

/// A probability distribution given by normalized F(l) weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FloatDist {
    weights: Vec<FloatL>,
}

impl FloatDist {
    /// Weights must be non-negative (guaranteed by `FloatL`), share one
    /// precision, and include at least one positive entry.
    pub fn new(weights: Vec<FloatL>) -> Result<Self, FpError> {
        let mut ell = None;
        for w in &weights {
            match ell {
                None => ell = Some(w.ell),
                Some(l) if l == w.ell => {}
                Some(_) => return Err(FpError::MixedWeights),
            }
        }
        if weights.iter().all(|w| w.is_zero()) {
            return Err(FpError::NoPositiveWeight);
        }
        Ok(FloatDist { weights })
    }

    pub fn weights(&self) -> &[FloatL] {
        &self.weights
    }

    pub fn precision(&self) -> u32 {
        self.weights[0].ell
    }

    pub fn outcomes(&self) -> usize {
        self.weights.len()
    }

    /// Exact probabilities mu(i) = w_i / sum_j w_j.
    pub fn probabilities(&self) -> Vec<Rat> {
        let total: Rat = self.weights.iter().map(|w| w.value()).sum();
        self.weights
            .iter()
            .map(|w| w.value() / total.clone())
            .collect()
    }

    /// D(l) membership: the exact weight sum must be (l, t)-close to 1.
    pub fn is_dl_member(&self) -> bool {
        let total: Rat = self.weights.iter().map(|w| w.value()).sum();
        if !total.is_positive() {
            return false;
        }
        is_close(
            &total,
            &Rat::one(),
            self.precision(),
            self.outcomes() as u64,
        )
        .unwrap_or(false)
    }
}

/// Rounds an exact distribution into D(l): x_i = truncate(mu_i), weights
/// w_i = x_i (/) (+)_j x_j, probabilities w_i / sum w_j.
///
/// The output is guaranteed to be in D(l) and (l, 2t)-close to the input.
pub fn round_distribution(mu: &[Rat], ell: u32) -> Result<FloatDist, FpError> {
    if ell < 2 {
        return Err(FpError::PrecisionTooSmallForCloseness);
    }
    if mu.is_empty() {
        return Err(FpError::NoPositiveWeight);
    }
    if mu.iter().any(|p| !p.is_positive()) {
        return Err(FpError::ZeroSupportEntry);
    }
    let total: Rat = mu.iter().cloned().sum();
    if !total.is_one() {
        return Err(FpError::NotADistribution);
    }
    let truncated: Vec<FloatL> = mu
        .iter()
        .map(|p| truncate(p, ell))
        .collect::<Result<_, _>>()?;
    let mut sum = FloatL::zero(ell);
    for x in &truncated {
        sum = fp_add(&sum, x)?;
    }
    let weights: Vec<FloatL> = truncated
        .iter()
        .map(|x| fp_div(x, &sum))
        .collect::<Result<_, _>>()?;
    FloatDist::new(weights)
}

/// Relative distance of two same-length positive distributions:
/// max_i rel(mu(i), nu(i)).
pub fn rel_dist(mu: &[Rat], nu: &[Rat]) -> Result<Rat, FpError> {
    debug_assert_eq!(mu.len(), nu.len());
    let mut worst = Rat::zero();
    for (a, b) in mu.iter().zip(nu.iter()) {
        let r = rel(a, b)?;
        if r > worst {
            worst = r;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rint};
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force oracle: the largest F(l) value <= x, found by scanning
    /// every mantissa at every plausible exponent.
    fn truncate_oracle(x: &Rat, ell: u32) -> Rat {
        let mut best = Rat::zero();
        for e in -64i64..=16 {
            for m in 0u64..(1 << ell) {
                let v = rint(m as i64) * pow2(e);
                if v <= *x && v > best {
                    best = v.clone();
                }
            }
        }
        best
    }

    #[test]
    fn truncate_one_is_exact() {
        for ell in [1u32, 2, 4, 9, 24] {
            let t = truncate(&Rat::one(), ell).unwrap();
            assert_eq!(t.value(), Rat::one());
            if ell > 1 {
                assert_eq!(t.mantissa().bits(), ell as u64);
                assert_eq!(*t.exponent(), num_bigint::BigInt::from(1i64 - ell as i64));
            }
        }
    }

    #[test]
    fn truncate_matches_exhaustive_scan() {
        // Frozen cases from the F(l) scan oracle.
        assert_eq!(truncate(&rat(1, 3), 4).unwrap().value(), rat(5, 16));
        assert_eq!(truncate(&rat(7, 2), 2).unwrap().value(), rint(3));
        for (num, den) in [(1i64, 3i64), (7, 2), (5, 7), (100, 9), (1, 100), (13, 8)] {
            let x = rat(num, den);
            for ell in [2u32, 3, 4, 6] {
                let got = truncate(&x, ell).unwrap().value();
                assert_eq!(got, truncate_oracle(&x, ell), "x={x} ell={ell}");
            }
        }
    }

    #[test]
    fn truncate_rejects_nonpositive() {
        assert!(truncate(&Rat::zero(), 4).is_err());
        assert!(truncate(&rat(-1, 2), 4).is_err());
        assert!(truncate(&Rat::one(), 0).is_err());
    }

    #[test]
    fn truncation_error_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let num = rng.next_u64() % 10_000 + 1;
            let den = rng.next_u64() % 10_000 + 1;
            let ell = (rng.next_u64() % 63 + 2) as u32;
            let x = rat(num as i64, den as i64);
            let y = truncate(&x, ell).unwrap().value();
            assert!(y <= x);
            let bound = closeness_threshold(ell, 1).unwrap();
            assert!(rel(&x, &y).unwrap() <= bound, "x={x} ell={ell}");
        }
    }

    #[test]
    fn arithmetic_identities() {
        let ell = 6;
        let one = FloatL::one(ell);
        let two = fp_add(&one, &one).unwrap();
        assert_eq!(two.value(), rint(2));
        let third = fp_div(&one, &truncate(&rint(3), ell).unwrap()).unwrap();
        assert!(third.value() <= rat(1, 3));
        // fp_div(1, 3) at l=4 equals truncate(1/3, 4).
        let l4_one = FloatL::one(4);
        let l4_three = truncate(&rint(3), 4).unwrap();
        assert_eq!(
            fp_div(&l4_one, &l4_three).unwrap().value(),
            truncate(&rat(1, 3), 4).unwrap().value()
        );
        for v in [rat(5, 7), rat(9, 8), rint(4)] {
            let x = truncate(&v, ell).unwrap();
            assert_eq!(fp_mul(&x, &one).unwrap(), x);
            assert_eq!(fp_div(&x, &one).unwrap(), x);
        }
        // Commutativity and never-round-up, on random operands.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let a = truncate(
                &rat(
                    (rng.next_u64() % 500 + 1) as i64,
                    (rng.next_u64() % 500 + 1) as i64,
                ),
                ell,
            )
            .unwrap();
            let b = truncate(
                &rat(
                    (rng.next_u64() % 500 + 1) as i64,
                    (rng.next_u64() % 500 + 1) as i64,
                ),
                ell,
            )
            .unwrap();
            assert_eq!(fp_add(&a, &b).unwrap(), fp_add(&b, &a).unwrap());
            assert!(fp_add(&a, &b).unwrap().value() <= a.value() + b.value());
            assert!(fp_mul(&a, &b).unwrap().value() <= a.value() * b.value());
            assert!(fp_div(&a, &b).unwrap().value() <= a.value() / b.value());
            if a.value() >= b.value() {
                assert!(fp_sub(&a, &b).unwrap().value() <= a.value() - b.value());
            }
        }
    }

    #[test]
    fn arithmetic_errors() {
        let a = FloatL::one(4);
        let b = FloatL::one(5);
        assert!(matches!(
            fp_add(&a, &b),
            Err(FpError::PrecisionMismatch(4, 5))
        ));
        assert!(matches!(
            fp_sub(&FloatL::zero(4), &FloatL::one(4)),
            Err(FpError::NegativeSubtraction)
        ));
        assert!(matches!(
            fp_div(&a, &FloatL::zero(4)),
            Err(FpError::DivisionByZero)
        ));
    }

    #[test]
    fn rel_definition() {
        assert_eq!(rel(&rat(3, 4), &rat(3, 4)).unwrap(), Rat::zero());
        assert_eq!(rel(&rint(1), &rint(2)).unwrap(), rint(1));
        assert_eq!(rel(&rint(2), &rint(1)).unwrap(), rint(1));
        assert_eq!(rel(&rat(3, 4), &rint(1)).unwrap(), rat(1, 3));
        assert!(rel(&Rat::zero(), &rint(1)).is_err());
    }

    #[test]
    fn closeness() {
        // i = 0 threshold is 0: only equality passes.
        assert!(is_close(&rat(5, 7), &rat(5, 7), 4, 0).unwrap());
        assert!(!is_close(&rat(5, 7), &rat(5, 8), 4, 0).unwrap());
        // rel(1, 1 + 2^(1-l)) = 1/8 <= (7/8)^(-1) - 1 = 1/7 at l = 4.
        assert!(is_close(&rint(1), &(Rat::one() + pow2(-3)), 4, 1).unwrap());
        assert!(is_close(&rint(1), &rint(1), 2, 0).unwrap());
        assert!(closeness_threshold(1, 1).is_err());
    }

    #[test]
    fn round_distribution_fixed_points() {
        let point = round_distribution(&[Rat::one()], 4).unwrap();
        assert_eq!(point.probabilities(), vec![Rat::one()]);
        assert!(point.is_dl_member());
        for ell in [2u32, 3, 8, 24] {
            let half = round_distribution(&[rat(1, 2), rat(1, 2)], ell).unwrap();
            assert_eq!(half.probabilities(), vec![rat(1, 2), rat(1, 2)]);
            assert!(half.is_dl_member());
        }
    }

    #[test]
    fn round_distribution_closeness() {
        // (1/3, 2/3) at l = 8 is within the (l, 2t) bound.
        let mu = vec![rat(1, 3), rat(2, 3)];
        let d = round_distribution(&mu, 8).unwrap();
        assert!(d.is_dl_member());
        let bound = closeness_threshold(8, 4).unwrap();
        assert!(rel_dist(&mu, &d.probabilities()).unwrap() <= bound);
    }

    #[test]
    fn round_distribution_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..500 {
            let t = (rng.next_u64() % 8 + 1) as usize;
            let ell = (rng.next_u64() % 57 + 8) as u32;
            let mut weights: Vec<i64> = (0..t).map(|_| (rng.next_u64() % 99 + 1) as i64).collect();
            let total: i64 = weights.iter().sum();
            let mu: Vec<Rat> = weights.drain(..).map(|w| rat(w, total)).collect();
            let d = round_distribution(&mu, ell).unwrap();
            assert!(d.is_dl_member(), "t={t} ell={ell}");
            let bound = closeness_threshold(ell, 2 * t as u64).unwrap();
            assert!(
                rel_dist(&mu, &d.probabilities()).unwrap() <= bound,
                "t={t} ell={ell}"
            );
        }
    }

    #[test]
    fn round_distribution_rejects_bad_input() {
        assert!(round_distribution(&[rat(1, 2), Rat::zero(), rat(1, 2)], 8).is_err());
        assert!(round_distribution(&[rat(1, 2), rat(1, 3)], 8).is_err());
    }

    #[test]
    fn dl_membership_boundaries() {
        // A single weight of 1 is trivially in D(l).
        let one = FloatDist::new(vec![FloatL::one(4)]).unwrap();
        assert!(one.is_dl_member());
        // Weights summing to 2 with t = 2 at small l: rel(2, 1) = 1 is far
        // beyond the (l, 2) threshold.
        let two = FloatDist::new(vec![FloatL::one(4), FloatL::one(4)]).unwrap();
        assert!(!two.is_dl_member());
    }

    #[test]
    fn float_parts_canonical_form() {
        use num_bigint::{BigInt, BigUint};
        let f = FloatL::from_parts(BigUint::from(10u32), BigInt::from(-5), 4).unwrap();
        assert_eq!(f.representation_bits(), 4 + 3);
        // 5 = 0b101 lacks the top bit at l = 4.
        assert!(FloatL::from_parts(BigUint::from(5u32), BigInt::from(-4), 4).is_err());
        assert!(FloatL::from_parts(BigUint::from(16u32), BigInt::from(0), 4).is_err());
        assert!(FloatL::from_parts(BigUint::zero(), BigInt::from(3), 4).is_err());
    }
}
