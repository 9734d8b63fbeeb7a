//! Scalar backends and the tolerance policy.
//!
//! The default scalar is an exact big rational; every identity in the library
//! is decided either by literal equality over Q or against a certified
//! truncation-tail budget. A binary big-float with explicit precision exists
//! for experiments and is deliberately kept out of the exact verification
//! paths.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::MopsError;

pub type Rat = BigRational;

/// Safety factor applied on top of a certified tail bound: 2^20.
pub fn default_amplification() -> Rat {
    Rat::from_integer(BigInt::from(1u64 << 20))
}

pub const DEFAULT_FLOAT_PREC: u32 = 128;

/// Shared scalar interface. Rationals are exact; `BigFloat` rounds every
/// operation to its precision (result precision = max of the operands).
pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn from_i64(v: i64) -> Self;
    fn from_rat(r: &Rat) -> Self;
    fn abs(&self) -> Self;
    fn to_f64(&self) -> f64;
}

impl Scalar for Rat {
    fn zero() -> Self {
        <Rat as Zero>::zero()
    }
    fn one() -> Self {
        <Rat as One>::one()
    }
    fn is_zero(&self) -> bool {
        <Rat as Zero>::is_zero(self)
    }
    fn from_i64(v: i64) -> Self {
        Rat::from_integer(BigInt::from(v))
    }
    fn from_rat(r: &Rat) -> Self {
        r.clone()
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn to_f64(&self) -> f64 {
        rat_to_f64(self)
    }
}

/// f64 view of a rational of unbounded size. Mantissas are trimmed to 64 bits
/// first so astronomically large numerators and denominators cannot overflow
/// the conversion separately.
pub fn rat_to_f64(r: &Rat) -> f64 {
    if Zero::is_zero(r) {
        return 0.0;
    }
    let (m_num, e_num) = trim_to_bits(r.numer(), 64);
    let (m_den, e_den) = trim_to_bits(r.denom(), 64);
    let q = m_num.to_f64().unwrap_or(f64::NAN) / m_den.to_f64().unwrap_or(f64::NAN);
    q * ((e_num - e_den) as f64).exp2()
}

fn trim_to_bits(x: &BigInt, bits: u64) -> (BigInt, i64) {
    let b = x.bits();
    if b <= bits {
        (x.clone(), 0)
    } else {
        let drop = b - bits;
        (x >> drop, drop as i64)
    }
}

/// Canonical text form used everywhere a rational leaves the library:
/// "num/den", or plain "num" when the denominator is one.
pub fn rat_string(r: &Rat) -> String {
    if r.denom() == &BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parse an exact rational from "n", "n/d", or scientific/decimal notation
/// ("1e-40", "2.5e3", "0.125"). Everything maps to an exact value; there is
/// no floating-point intermediate.
pub fn parse_rat(s: &str) -> Result<Rat, MopsError> {
    let s = s.trim();
    let bad = || MopsError::InvalidParameters {
        reason: format!("cannot parse rational from {s:?}"),
    };
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| bad())?;
        let d: BigInt = den.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rat::new(n, d));
    }
    let (mantissa, exp10) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i64>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if frac_part.contains(['+', '-']) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    if digits.is_empty() || digits == "+" || digits == "-" {
        return Err(bad());
    }
    let n: BigInt = digits.parse().map_err(|_| bad())?;
    let shift = exp10 - frac_part.len() as i64;
    let ten = BigInt::from(10);
    Ok(if shift >= 0 {
        Rat::from_integer(n * ten.pow(shift as u32))
    } else {
        Rat::new(n, ten.pow((-shift) as u32))
    })
}

/// Binary floating point number `mant * 2^exp` with unbounded mantissa kept
/// to at most `prec` significant bits. Rounding is round-half-even. The
/// representation is normalized (mantissa odd or zero), so equality and
/// ordering are value-based; `prec` is carried metadata, not identity.
#[derive(Clone, Debug)]
pub struct BigFloat {
    mant: BigInt,
    exp: i64,
    prec: u32,
}

impl BigFloat {
    pub fn new(mant: BigInt, exp: i64, prec: u32) -> Self {
        assert!(prec > 0, "precision must be positive");
        let mut f = BigFloat { mant, exp, prec };
        f.round_in_place();
        f
    }

    pub fn from_rat_prec(r: &Rat, prec: u32) -> Self {
        assert!(prec > 0, "precision must be positive");
        if Zero::is_zero(r) {
            return BigFloat { mant: BigInt::zero(), exp: 0, prec };
        }
        let (mant, exp) = round_div_half_even(r.numer().clone(), r.denom().clone(), prec);
        let mut f = BigFloat { mant, exp, prec };
        f.normalize();
        f
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn mant(&self) -> &BigInt {
        &self.mant
    }

    pub fn exp(&self) -> i64 {
        self.exp
    }

    /// Exact rational value of this float.
    pub fn to_rat(&self) -> Rat {
        let two = BigInt::from(2);
        if self.exp >= 0 {
            Rat::from_integer(&self.mant * two.pow(self.exp as u32))
        } else {
            Rat::new(self.mant.clone(), two.pow((-self.exp) as u32))
        }
    }

    fn normalize(&mut self) {
        if self.mant.is_zero() {
            self.exp = 0;
            return;
        }
        let tz = self.mant.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            self.mant = &self.mant >> tz;
            self.exp += tz as i64;
        }
    }

    // Round the raw (mant, exp) to `prec` significant bits, half to even.
    fn round_in_place(&mut self) {
        let bits = self.mant.bits();
        if bits > self.prec as u64 {
            let drop = bits - self.prec as u64;
            self.mant = round_shift_half_even(&self.mant, drop);
            self.exp += drop as i64;
        }
        // A carry out of rounding (0b111 + 1 = 0b1000) leaves a power of two;
        // normalization folds it back under the precision budget.
        self.normalize();
    }

    fn binop(a: &BigFloat, b: &BigFloat, f: impl FnOnce(&BigInt, i64, &BigInt, i64) -> (BigInt, i64)) -> BigFloat {
        let prec = a.prec.max(b.prec);
        let (mant, exp) = f(&a.mant, a.exp, &b.mant, b.exp);
        BigFloat::new(mant, exp, prec)
    }
}

// Shift `m` right by `drop` bits rounding half to even.
fn round_shift_half_even(m: &BigInt, drop: u64) -> BigInt {
    let neg = m.is_negative();
    let mag = m.abs();
    let mut keep: BigInt = &mag >> drop;
    let rem: BigInt = &mag - (&keep << drop);
    let half: BigInt = BigInt::one() << (drop - 1);
    let round_up = match rem.cmp(&half) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => keep.bit(0),
    };
    if round_up {
        keep += 1;
    }
    if neg {
        -keep
    } else {
        keep
    }
}

// Correctly rounded (half-even) binary quotient num/den with exactly `prec`
// significant bits: returns (mant, exp) with value ~= num/den.
fn round_div_half_even(num: BigInt, den: BigInt, prec: u32) -> (BigInt, i64) {
    assert!(!den.is_zero(), "division by zero");
    if num.is_zero() {
        return (BigInt::zero(), 0);
    }
    let neg = num.is_negative() ^ den.is_negative();
    let n = num.abs();
    let d = den.abs();
    let mut e: i64 = n.bits() as i64 - d.bits() as i64 - prec as i64;
    loop {
        let (scaled_n, scaled_d) = if e <= 0 {
            (&n << (-e) as u64, d.clone())
        } else {
            (n.clone(), &d << e as u64)
        };
        let q = &scaled_n / &scaled_d;
        let bits = q.bits();
        if bits != prec as u64 {
            e += bits as i64 - prec as i64;
            continue;
        }
        let r: BigInt = &scaled_n - &q * &scaled_d;
        let two_r = &r << 1u32;
        let round_up = match two_r.cmp(&scaled_d) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => q.bit(0),
        };
        let mut q = q;
        if round_up {
            q += 1;
            if q.bits() > prec as u64 {
                q >>= 1;
                e += 1;
            }
        }
        return (if neg { -q } else { q }, e);
    }
}

impl PartialEq for BigFloat {
    fn eq(&self, other: &Self) -> bool {
        self.mant == other.mant && (self.mant.is_zero() || self.exp == other.exp)
    }
}

impl PartialOrd for BigFloat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        use num_bigint::Sign::*;
        let (sa, sb) = (self.mant.sign(), other.mant.sign());
        if sa != sb {
            return Some(match (sa, sb) {
                (Minus, _) | (NoSign, Plus) => Ordering::Less,
                _ => Ordering::Greater,
            });
        }
        if sa == NoSign {
            return Some(Ordering::Equal);
        }
        let e = self.exp.min(other.exp);
        let a = &self.mant << (self.exp - e) as u64;
        let b = &other.mant << (other.exp - e) as u64;
        Some(a.cmp(&b))
    }
}

impl fmt::Display for BigFloat {
    // Lossless binary-exponent form, e.g. "13p-4" = 13/16.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}p{}", self.mant, self.exp)
    }
}

impl Add for BigFloat {
    type Output = BigFloat;
    fn add(self, rhs: Self) -> Self {
        BigFloat::binop(&self, &rhs, |ma, ea, mb, eb| {
            let e = ea.min(eb);
            (
                (ma << (ea - e) as u64) + (mb << (eb - e) as u64),
                e,
            )
        })
    }
}

impl Sub for BigFloat {
    type Output = BigFloat;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for BigFloat {
    type Output = BigFloat;
    fn mul(self, rhs: Self) -> Self {
        BigFloat::binop(&self, &rhs, |ma, ea, mb, eb| (ma * mb, ea + eb))
    }
}

impl Div for BigFloat {
    type Output = BigFloat;
    fn div(self, rhs: Self) -> Self {
        assert!(!rhs.mant.is_zero(), "division by zero");
        let prec = self.prec.max(rhs.prec);
        if self.mant.is_zero() {
            return BigFloat { mant: BigInt::zero(), exp: 0, prec };
        }
        let (mant, e) = round_div_half_even(self.mant.clone(), rhs.mant.clone(), prec);
        let mut f = BigFloat { mant, exp: e + self.exp - rhs.exp, prec };
        f.normalize();
        f
    }
}

impl Neg for BigFloat {
    type Output = BigFloat;
    fn neg(mut self) -> Self {
        self.mant = -self.mant;
        self
    }
}

impl Scalar for BigFloat {
    fn zero() -> Self {
        BigFloat { mant: BigInt::zero(), exp: 0, prec: DEFAULT_FLOAT_PREC }
    }
    fn one() -> Self {
        BigFloat { mant: BigInt::one(), exp: 0, prec: DEFAULT_FLOAT_PREC }
    }
    fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }
    fn from_i64(v: i64) -> Self {
        BigFloat::new(BigInt::from(v), 0, DEFAULT_FLOAT_PREC)
    }
    fn from_rat(r: &Rat) -> Self {
        BigFloat::from_rat_prec(r, DEFAULT_FLOAT_PREC)
    }
    fn abs(&self) -> Self {
        BigFloat { mant: self.mant.abs(), exp: self.exp, prec: self.prec }
    }
    fn to_f64(&self) -> f64 {
        let (m, e) = trim_to_bits(&self.mant, 64);
        m.to_f64().unwrap_or(f64::NAN) * ((self.exp + e) as f64).exp2()
    }
}

/// Zero-test policy for verification reports. Exact mode demands literal
/// equality; Tail mode accepts |residual| <= bound * amplification.
#[derive(Clone, Debug, PartialEq)]
pub enum BudgetMode {
    Exact,
    Tail(Rat),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToleranceBudget {
    pub mode: BudgetMode,
    pub amplification: Rat,
}

impl ToleranceBudget {
    pub fn exact() -> Self {
        ToleranceBudget { mode: BudgetMode::Exact, amplification: default_amplification() }
    }

    pub fn tail(bound: Rat) -> Self {
        ToleranceBudget { mode: BudgetMode::Tail(bound), amplification: default_amplification() }
    }

    pub fn with_amplification(mut self, amp: Rat) -> Self {
        self.amplification = amp;
        self
    }

    /// The acceptance threshold as a number: 0 in Exact mode, bound * amplification in Tail mode.
    pub fn budget_value(&self) -> Rat {
        match &self.mode {
            BudgetMode::Exact => <Rat as Zero>::zero(),
            BudgetMode::Tail(b) => b * &self.amplification,
        }
    }

    pub fn allows(&self, residual: &Rat) -> bool {
        match &self.mode {
            BudgetMode::Exact => Zero::is_zero(residual),
            BudgetMode::Tail(_) => Signed::abs(residual) <= self.budget_value(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn parse_rat_forms() {
        assert_eq!(parse_rat("1/3").unwrap(), rat(1, 3));
        assert_eq!(parse_rat("-7/2").unwrap(), rat(-7, 2));
        assert_eq!(parse_rat("42").unwrap(), rat(42, 1));
        assert_eq!(parse_rat("1e-40").unwrap(), Rat::new(BigInt::one(), BigInt::from(10).pow(40)));
        assert_eq!(parse_rat("2.5e3").unwrap(), rat(2500, 1));
        assert_eq!(parse_rat("0.125").unwrap(), rat(1, 8));
        assert_eq!(parse_rat("-1.5e-2").unwrap(), rat(-3, 200));
        assert!(parse_rat("").is_err());
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("x").is_err());
        assert!(parse_rat("1.2.3").is_err());
    }

    #[test]
    fn rat_roundtrip_strings() {
        for s in ["1/3", "-7/2", "42", "0"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(parse_rat(&r.to_string()).unwrap(), r);
        }
    }

    #[test]
    fn rat_to_f64_huge() {
        let big = Rat::new(BigInt::from(10).pow(500) * 3, BigInt::from(10).pow(500));
        assert!((rat_to_f64(&big) - 3.0).abs() < 1e-12);
        let tiny = Rat::new(BigInt::one(), BigInt::from(10).pow(400));
        assert_eq!(rat_to_f64(&tiny), 0.0); // underflows cleanly, no NaN
        assert_eq!(rat_to_f64(&<Rat as Zero>::zero()), 0.0);
    }

    #[test]
    fn bigfloat_half_even() {
        // 19 at 4 bits: 10011 -> drop 1 bit, rem == half, keep=1001 odd -> 1010p1 = 20
        let f = BigFloat::new(BigInt::from(19), 0, 4);
        assert_eq!(f.to_rat(), rat(20, 1));
        // 17 at 4 bits: rem == half, keep=1000 even -> stays 16
        let f = BigFloat::new(BigInt::from(17), 0, 4);
        assert_eq!(f.to_rat(), rat(16, 1));
        // all-ones overflow: 1111 at 3 bits -> 100p1 = 16
        let f = BigFloat::new(BigInt::from(0b1111), 0, 3);
        assert_eq!(f.to_rat(), rat(16, 1));
    }

    #[test]
    fn bigfloat_div_correctly_rounded() {
        // 1/3 at 8 bits: 1.0101010|101... x 2^-2 rounds up to 10101011 x 2^-9
        let a = BigFloat::from_rat_prec(&rat(1, 3), 8);
        assert_eq!(a.to_rat(), rat(171, 512));
        let b = BigFloat::from_rat_prec(&rat(1, 1), 8) / BigFloat::from_rat_prec(&rat(3, 1), 8);
        assert_eq!(a, b);
    }

    #[test]
    fn bigfloat_precision_is_max_of_operands() {
        let lo = BigFloat::from_rat_prec(&rat(1, 3), 16);
        let hi = BigFloat::from_rat_prec(&rat(1, 5), 96);
        assert_eq!((lo.clone() * hi.clone()).prec(), 96);
        assert_eq!((lo + hi).prec(), 96);
    }

    #[test]
    fn bigfloat_exact_small_arithmetic() {
        let x = BigFloat::from_i64(7);
        let y = BigFloat::from_i64(-3);
        assert_eq!((x.clone() + y.clone()).to_rat(), rat(4, 1));
        assert_eq!((x.clone() * y.clone()).to_rat(), rat(-21, 1));
        assert_eq!((x - y).to_rat(), rat(10, 1));
    }

    #[test]
    fn bigfloat_ordering() {
        let a = BigFloat::from_rat_prec(&rat(1, 3), 64);
        let b = BigFloat::from_rat_prec(&rat(1, 2), 64);
        assert!(a < b);
        assert!(BigFloat::from_i64(-1) < BigFloat::from_i64(0));
        // equality ignores precision
        assert_eq!(BigFloat::from_rat_prec(&rat(3, 4), 16), BigFloat::from_rat_prec(&rat(3, 4), 128));
    }

    #[test]
    fn budget_modes() {
        let exact = ToleranceBudget::exact();
        assert!(exact.allows(&<Rat as Zero>::zero()));
        assert!(!exact.allows(&rat(1, 1_000_000)));
        let tail = ToleranceBudget::tail(rat(1, 1 << 30));
        // bound * 2^20 = 2^-10
        assert_eq!(tail.budget_value(), rat(1, 1 << 10));
        assert!(tail.allows(&rat(-1, 1 << 10)));
        assert!(!tail.allows(&rat(1, 1 << 9)));
        let tight = ToleranceBudget::tail(rat(1, 1 << 30)).with_amplification(rat(1, 1));
        assert!(!tight.allows(&rat(1, 1 << 20)));
    }

    proptest! {
        // Field axioms at random points: the exact backend must satisfy them literally.
        #[test]
        fn rational_distributivity(an in -50i64..50, ad in 1i64..20, bn in -50i64..50, bd in 1i64..20, cn in -50i64..50, cd in 1i64..20) {
            let a = rat(an, ad);
            let b = rat(bn, bd);
            let c = rat(cn, cd);
            prop_assert_eq!((a.clone() + b.clone()) * c.clone(), a.clone() * c.clone() + b * c);
        }

        #[test]
        fn bigfloat_matches_exact_when_representable(n in -1000i64..1000, m in -1000i64..1000) {
            // products of small integers fit well inside 128 bits: no rounding
            let f = BigFloat::from_i64(n) * BigFloat::from_i64(m);
            prop_assert_eq!(f.to_rat(), rat(n, 1) * rat(m, 1));
        }

        #[test]
        fn bigfloat_from_rat_error_bounded(n in -10_000i64..10_000, d in 1i64..10_000) {
            let r = rat(n, d);
            let f = BigFloat::from_rat_prec(&r, 64);
            let err = Signed::abs(&(f.to_rat() - r.clone()));
            // correctly rounded at 64 bits: relative error at most 2^-64
            prop_assert!(err <= Signed::abs(&r) * Rat::new(BigInt::one(), BigInt::one() << 64u32));
        }
    }
}
