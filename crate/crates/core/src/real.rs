//! Exact dyadic reals `sign · m · 2^e`.
//!
//! [`WorkingReal`] is the carrier for every value that gets rounded. Sums,
//! differences and products are exact, so "the exact result of an operation"
//! is always available to a rounding kernel.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// An exact value `(-1)^negative · significand · 2^exponent`.
///
/// The representation is canonical: the significand is odd, or it is zero and
/// the exponent is zero. Zero keeps its sign so that `-0` survives
/// encode/decode round trips.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WorkingReal {
    negative: bool,
    significand: BigUint,
    exponent: i64,
}

impl WorkingReal {
    pub fn new(negative: bool, significand: BigUint, exponent: i64) -> Self {
        if significand.is_zero() {
            return WorkingReal {
                negative,
                significand,
                exponent: 0,
            };
        }
        let tz = significand.trailing_zeros().unwrap_or(0);
        WorkingReal {
            negative,
            significand: significand >> tz,
            exponent: exponent + tz as i64,
        }
    }

    pub fn zero() -> Self {
        WorkingReal::new(false, BigUint::zero(), 0)
    }

    pub fn negative_zero() -> Self {
        WorkingReal::new(true, BigUint::zero(), 0)
    }

    pub fn one() -> Self {
        WorkingReal::pow2(0)
    }

    /// `2^e`.
    pub fn pow2(e: i64) -> Self {
        WorkingReal::new(false, BigUint::one(), e)
    }

    pub fn from_int(v: i64) -> Self {
        WorkingReal::new(v < 0, BigUint::from(v.unsigned_abs()), 0)
    }

    /// Signed integer scaled by a power of two.
    pub fn from_scaled(v: &BigInt, exponent: i64) -> Self {
        WorkingReal::new(v.sign() == Sign::Minus, v.magnitude().clone(), exponent)
    }

    /// Exact conversion; `None` for infinities and NaN.
    pub fn from_f64(v: f64) -> Option<Self> {
        if !v.is_finite() {
            return None;
        }
        let bits = v.to_bits();
        let negative = bits >> 63 == 1;
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        Some(WorkingReal::new(negative, BigUint::from(m), e))
    }

    /// Nearest binary64 value (ties to even); saturates to ±inf.
    pub fn to_f64(&self) -> f64 {
        if self.significand.is_zero() {
            return if self.negative { -0.0 } else { 0.0 };
        }
        let bits = self.significand.bits() as i64;
        let top = self.exponent + bits - 1;
        let mag = if top > 1023 {
            f64::INFINITY
        } else {
            // Quantum of the binary64 grid at this magnitude.
            let quantum = top.max(-1022) - 52;
            let shift = quantum - self.exponent;
            let int = if shift <= 0 {
                (&self.significand << (-shift) as u64).to_u64().unwrap_or(u64::MAX)
            } else {
                let shift = shift as u64;
                let int = &self.significand >> shift;
                let rem = &self.significand - (&int << shift);
                let half = BigUint::one() << (shift - 1);
                let mut int = int.to_u64().unwrap_or(u64::MAX);
                match rem.cmp(&half) {
                    Ordering::Greater => int += 1,
                    Ordering::Equal if int & 1 == 1 => int += 1,
                    _ => {}
                }
                int
            };
            // int <= 2^53, so every product below is exact (or overflows to inf).
            if quantum >= -1022 {
                (int as f64) * pow2_f64(quantum)
            } else {
                (int as f64) * pow2_f64(-537) * pow2_f64(-537)
            }
        };
        if self.negative {
            -mag
        } else {
            mag
        }
    }

    pub fn is_zero(&self) -> bool {
        self.significand.is_zero()
    }

    /// True for negative values and for `-0`.
    pub fn is_sign_negative(&self) -> bool {
        self.negative
    }

    pub fn significand(&self) -> &BigUint {
        &self.significand
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    /// `floor(log2 |x|)`; `None` for zero.
    pub fn floor_log2(&self) -> Option<i64> {
        if self.significand.is_zero() {
            None
        } else {
            Some(self.exponent + self.significand.bits() as i64 - 1)
        }
    }

    pub fn abs(&self) -> Self {
        WorkingReal {
            negative: false,
            ..self.clone()
        }
    }

    pub fn with_sign(&self, negative: bool) -> Self {
        WorkingReal {
            negative,
            ..self.clone()
        }
    }

    /// `x · 2^k`, exact.
    pub fn mul_pow2(&self, k: i64) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        WorkingReal {
            negative: self.negative,
            significand: self.significand.clone(),
            exponent: self.exponent + k,
        }
    }

    pub fn is_integer(&self) -> bool {
        self.is_zero() || self.exponent >= 0
    }

    /// Number of significant bits in `|x|` (0 for zero).
    pub fn significant_bits(&self) -> u64 {
        self.significand.bits()
    }

    pub fn to_rational(&self) -> BigRational {
        let m = BigInt::from_biguint(
            if self.negative { Sign::Minus } else { Sign::Plus },
            self.significand.clone(),
        );
        if self.exponent >= 0 {
            BigRational::from_integer(m << self.exponent as u64)
        } else {
            BigRational::new(m, BigInt::one() << (-self.exponent) as u64)
        }
    }

    /// Exact conversion from a rational whose reduced denominator is a power
    /// of two.
    pub fn from_dyadic_rational(q: &BigRational) -> Option<Self> {
        let den = q.denom().magnitude();
        if den.is_zero() || den.count_ones() != 1 {
            return None;
        }
        let k = den.trailing_zeros().unwrap_or(0) as i64;
        Some(WorkingReal::from_scaled(q.numer(), -k))
    }

    /// Compare magnitudes.
    pub fn cmp_abs(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let a = self.floor_log2().unwrap();
        let b = other.floor_log2().unwrap();
        if a != b {
            return a.cmp(&b);
        }
        let e = self.exponent.min(other.exponent);
        let sa = &self.significand << (self.exponent - e) as u64;
        let sb = &other.significand << (other.exponent - e) as u64;
        sa.cmp(&sb)
    }

    /// Compare by numeric value (so `-0 == +0` here, unlike `==`).
    pub fn cmp_value(&self, other: &Self) -> Ordering {
        if self.is_zero() && other.is_zero() {
            return Ordering::Equal;
        }
        let sa = !self.is_zero() && self.negative;
        let sb = !other.is_zero() && other.negative;
        match (sa, sb) {
            (false, true) => Ordering::Greater,
            (true, false) => Ordering::Less,
            (false, false) => self.cmp_abs(other),
            (true, true) => other.cmp_abs(self),
        }
    }

    fn signed_significand(&self) -> BigInt {
        BigInt::from_biguint(
            if self.negative { Sign::Minus } else { Sign::Plus },
            self.significand.clone(),
        )
    }

    fn add_impl(&self, other: &Self) -> Self {
        if other.is_zero() {
            if self.is_zero() {
                // IEEE-style: -0 + -0 = -0, otherwise +0.
                return WorkingReal::new(self.negative && other.negative, BigUint::zero(), 0);
            }
            return self.clone();
        }
        if self.is_zero() {
            return other.clone();
        }
        let e = self.exponent.min(other.exponent);
        let a = self.signed_significand() << (self.exponent - e) as u64;
        let b = other.signed_significand() << (other.exponent - e) as u64;
        let s = a + b;
        WorkingReal::from_scaled(&s, e)
    }

    /// Hex-float text, e.g. `0x1.92p+1`. `min_digits` pads the fraction with
    /// zeros to at least that many hex digits.
    pub fn to_hex_float(&self, min_digits: usize) -> String {
        let sign = if self.negative { "-" } else { "" };
        if self.is_zero() {
            return if min_digits == 0 {
                format!("{sign}0x0p+0")
            } else {
                format!("{sign}0x0.{}p+0", "0".repeat(min_digits))
            };
        }
        let bits = self.significand.bits();
        let top = self.exponent + bits as i64 - 1;
        let frac_bits = bits - 1;
        let digits = (frac_bits.div_ceil(4) as usize).max(min_digits);
        let frac = &self.significand - (BigUint::one() << frac_bits);
        let frac = frac << (4 * digits as u64 - frac_bits);
        let mut hex = if digits == 0 {
            String::new()
        } else {
            format!("{:0>width$}", frac.to_str_radix(16), width = digits)
        };
        if !hex.is_empty() {
            hex.insert(0, '.');
        }
        format!("{sign}0x1{hex}p{top:+}")
    }

    /// Decimal scientific notation with `digits` significant digits,
    /// correctly rounded (ties to even).
    pub fn to_decimal(&self, digits: usize) -> String {
        let digits = digits.max(1);
        let sign = if self.negative { "-" } else { "" };
        if self.is_zero() {
            return format!("{sign}0.{}e+0", "0".repeat(digits - 1));
        }
        let v = self.abs().to_rational();
        let ten = BigInt::from(10);
        // Estimate the decimal exponent, then correct it.
        let mut exp10 = ((self.floor_log2().unwrap() as f64) * std::f64::consts::LOG10_2).floor() as i64;
        let pow10 = |k: i64| -> BigRational {
            if k >= 0 {
                BigRational::from_integer(num_traits::pow(ten.clone(), k as usize))
            } else {
                BigRational::new(BigInt::one(), num_traits::pow(ten.clone(), (-k) as usize))
            }
        };
        loop {
            if v < pow10(exp10) {
                exp10 -= 1;
            } else if v >= pow10(exp10 + 1) {
                exp10 += 1;
            } else {
                break;
            }
        }
        let scaled = &v * pow10(digits as i64 - 1 - exp10);
        let (int, frac) = (scaled.floor(), scaled.fract());
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let mut int = int.to_integer();
        match frac.cmp(&half) {
            Ordering::Greater => int += 1,
            Ordering::Equal if int.is_odd() => int += 1,
            _ => {}
        }
        if int == num_traits::pow(ten.clone(), digits) {
            int /= &ten;
            exp10 += 1;
        }
        let s = int.to_string();
        let (head, tail) = s.split_at(1);
        if tail.is_empty() {
            format!("{sign}{head}e{exp10:+}")
        } else {
            format!("{sign}{head}.{tail}e{exp10:+}")
        }
    }
}

impl Default for WorkingReal {
    fn default() -> Self {
        WorkingReal::zero()
    }
}

/// Total order by value, with `-0` ordered just below `+0` so that it stays
/// consistent with `Eq`.
impl Ord for WorkingReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.cmp_value(other) {
            Ordering::Equal => other.negative.cmp(&self.negative),
            ord => ord,
        }
    }
}

impl PartialOrd for WorkingReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Neg for WorkingReal {
    type Output = WorkingReal;
    fn neg(self) -> WorkingReal {
        WorkingReal {
            negative: !self.negative,
            ..self
        }
    }
}

impl Neg for &WorkingReal {
    type Output = WorkingReal;
    fn neg(self) -> WorkingReal {
        -(self.clone())
    }
}

impl Add for &WorkingReal {
    type Output = WorkingReal;
    fn add(self, rhs: &WorkingReal) -> WorkingReal {
        self.add_impl(rhs)
    }
}

impl Sub for &WorkingReal {
    type Output = WorkingReal;
    fn sub(self, rhs: &WorkingReal) -> WorkingReal {
        self.add_impl(&-rhs)
    }
}

impl Mul for &WorkingReal {
    type Output = WorkingReal;
    fn mul(self, rhs: &WorkingReal) -> WorkingReal {
        WorkingReal::new(
            self.negative != rhs.negative,
            &self.significand * &rhs.significand,
            self.exponent + rhs.exponent,
        )
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl $tr for WorkingReal {
            type Output = WorkingReal;
            fn $method(self, rhs: WorkingReal) -> WorkingReal {
                (&self).$method(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl fmt::Display for WorkingReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex_float(0))
    }
}

fn pow2_f64(k: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// `num/den` text for a rational, always with an explicit denominator.
pub fn rational_to_string(q: &BigRational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

/// Absolute value of a rational as a float approximation, for statistics only.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    let num = q.numer();
    let den = q.denom();
    if num.is_zero() {
        return 0.0;
    }
    // Scale to keep ~64 significant bits in the quotient.
    let shift = den.bits() as i64 - num.bits() as i64 + 64;
    let scaled = if shift >= 0 {
        (num.abs() << shift as u64) / den
    } else {
        (num.abs() >> (-shift) as u64) / den
    };
    let w = WorkingReal::new(num.is_negative(), scaled.magnitude().clone(), -shift);
    w.to_f64()
}
