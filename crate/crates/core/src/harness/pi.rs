//! Decimal stochastic rounding of the first digits of π, in base-10 integer
//! arithmetic.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::Serialize;

const PI_DIGITS: &str = "314159265358979323846";
/// Decimal places kept by the rounding.
const KEEP: u32 = 3;

/// Exact decimal `v · 10^-scale`.
fn decimal(v: &BigInt, scale: u32) -> String {
    let digits = v.abs().to_string();
    let scale = scale as usize;
    let padded = format!("{digits:0>width$}", width = scale + 1);
    let (int, frac) = padded.split_at(padded.len() - scale);
    let sign = if v.is_negative() { "-" } else { "" };
    if scale == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PiDemoReport {
    pub x: String,
    pub round_down: String,
    pub round_up: String,
    /// Nearest of the two candidates.
    pub round_to_nearest: String,
    /// `q` as an unreduced fraction over a power of ten.
    pub q_fraction: String,
    pub q: String,
    pub p_up: String,
    pub p_down: String,
    /// `round_up - x`.
    pub error_up: String,
    /// `round_down - x`.
    pub error_down: String,
    /// `p_up · round_up + p_down · round_down`.
    pub expected_sr_value: String,
    pub expected_equals_x: bool,
    /// Decimal digits of randomness needed to realise `q` exactly.
    pub random_digits_for_exact_sr: u32,
    pub note: String,
}

pub fn run_pi_demo() -> PiDemoReport {
    let x: BigInt = PI_DIGITS.parse().expect("digits");
    let scale = (PI_DIGITS.len() - 1) as u32;
    let drop = scale - KEEP;
    let step = BigInt::from(10u32).pow(drop);
    let (lo_units, rem) = x.div_mod_floor(&step);
    let lo = &lo_units * &step;
    let hi = &lo + &step;
    // q = rem / 10^drop; strip trailing zeros for the digit count.
    let mut q_digits = drop;
    let mut r = rem.clone();
    while q_digits > 0 && (&r % 10u32).is_zero() {
        r /= 10u32;
        q_digits -= 1;
    }
    let nearest = if &rem * 2u32 >= step { &hi } else { &lo };
    let p_down = &step - &rem;
    // E = (rem·hi + (step - rem)·lo) / step, which must equal x.
    let expected_num = &rem * &hi + &p_down * &lo;
    let (expected, leftover) = expected_num.div_rem(&step);
    PiDemoReport {
        x: decimal(&x, scale),
        round_down: decimal(&lo, scale),
        round_up: decimal(&hi, scale),
        round_to_nearest: decimal(nearest, scale),
        q_fraction: format!("{rem}/10^{drop}"),
        q: decimal(&rem, drop),
        p_up: decimal(&rem, drop),
        p_down: decimal(&p_down, drop),
        error_up: format!("+{}", decimal(&(&hi - &x), scale)),
        error_down: decimal(&(&lo - &x), scale),
        expected_sr_value: decimal(&expected, scale),
        expected_equals_x: leftover.is_zero() && expected == x,
        random_digits_for_exact_sr: q_digits,
        note: format!(
            "exact SR compares a uniform {q_digits}-digit random decimal with q; \
             fewer digits truncate q and bias the expected value"
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_formatting() {
        assert_eq!(decimal(&BigInt::from(5), 3), "0.005");
        assert_eq!(decimal(&BigInt::from(-31415), 4), "-3.1415");
        assert_eq!(decimal(&BigInt::from(42), 0), "42");
    }

    #[test]
    fn demo_values() {
        let r = run_pi_demo();
        assert_eq!(r.x, "3.14159265358979323846");
        assert_eq!((r.round_down.as_str(), r.round_up.as_str()), ("3.14100000000000000000", "3.14200000000000000000"));
        assert_eq!(r.q_fraction, "59265358979323846/10^17");
        assert_eq!(r.q, "0.59265358979323846");
        assert_eq!(r.error_up, "+0.00040734641020676154");
        assert_eq!(r.error_down, "-0.00059265358979323846");
        assert_eq!(r.round_to_nearest, r.round_up);
        assert!(r.expected_equals_x);
        assert_eq!(r.random_digits_for_exact_sr, 17);
    }
}
