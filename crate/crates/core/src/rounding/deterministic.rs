use crate::format::FloatFormat;
use crate::grid::Split;
use crate::real::WorkingReal;

use super::{overflowed, Rounded, RoundingMode};

/// Round `x` into `fmt` with a deterministic mode.
///
/// Overflow follows IEEE 754: round-to-nearest and the directed modes that
/// point away from zero go to infinity (saturating, with the overflow flag,
/// when the format has none); the others clamp to the largest finite value.
pub fn round_deterministic(fmt: &FloatFormat, x: &WorkingReal, mode: RoundingMode) -> Rounded {
    let split = Split::new(fmt, x);
    let negative = split.negative;
    let away = if split.is_exact() {
        false
    } else {
        match mode {
            RoundingMode::Rz => false,
            RoundingMode::Ru => !negative,
            RoundingMode::Rd => negative,
            RoundingMode::Rne => {
                let half = split.rem_bits - 1;
                let above_half = split.rem.bit(half);
                let exactly_half = above_half && split.rem.trailing_zeros() == Some(half);
                if exactly_half {
                    split.int.bit(0)
                } else {
                    above_half
                }
            }
        }
    };
    if split.exceeds_max(fmt, away) {
        let to_infinity = match mode {
            RoundingMode::Rne => true,
            RoundingMode::Rz => false,
            RoundingMode::Ru => !negative,
            RoundingMode::Rd => negative,
        };
        return overflowed(fmt, negative, to_infinity);
    }
    Rounded::finite(split.magnitude_candidate(away))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::FpValue;
    use crate::grid::{neighbors, q_fraction};
    use num_rational::BigRational;
    use num_traits::One;

    fn b16() -> FloatFormat {
        FloatFormat::preset("binary16").unwrap()
    }

    fn one_plus(k: i64) -> WorkingReal {
        &WorkingReal::one() + &WorkingReal::pow2(k)
    }

    fn r(fmt: &FloatFormat, x: &WorkingReal, mode: RoundingMode) -> WorkingReal {
        round_deterministic(fmt, x, mode).into_real().unwrap()
    }

    #[test]
    fn ties_go_to_even() {
        assert_eq!(r(&b16(), &one_plus(-11), RoundingMode::Rne), WorkingReal::one());
        // 1 + 3·2^-11 sits between 1+2^-10 (odd) and 1+2^-9 (even).
        let x = &one_plus(-10) + &WorkingReal::pow2(-11);
        assert_eq!(r(&b16(), &x, RoundingMode::Rne), one_plus(-9));
    }

    #[test]
    fn directed_modes() {
        let x = one_plus(-13);
        assert_eq!(r(&b16(), &x, RoundingMode::Rz), WorkingReal::one());
        assert_eq!(r(&b16(), &x, RoundingMode::Ru), one_plus(-10));
        assert_eq!(r(&b16(), &x, RoundingMode::Rd), WorkingReal::one());
        assert_eq!(r(&b16(), &-&x, RoundingMode::Rd), -one_plus(-10));
        assert_eq!(r(&b16(), &-&x, RoundingMode::Ru), -WorkingReal::one());
    }

    #[test]
    fn pi_rounds_down_in_binary16() {
        let x = WorkingReal::from_f64(std::f64::consts::PI).unwrap();
        // Oracle: q < 1/2 means nearest is the lower candidate.
        let q = q_fraction(&b16(), &x).unwrap();
        let half = BigRational::one() / BigRational::from_integer(2.into());
        assert!(q.as_rational() < &half);
        let lo = neighbors(&b16(), &x).unwrap().lo;
        assert_eq!(r(&b16(), &x, RoundingMode::Rne), lo);
        assert_eq!(lo.to_f64(), 3.140625);
    }

    #[test]
    fn overflow_rules() {
        let max = b16().max_finite();
        let just_above = &max + &WorkingReal::from_int(15); // below max + ulp/2 (16)
        assert_eq!(r(&b16(), &just_above, RoundingMode::Rne), max);
        let tie = &max + &WorkingReal::from_int(16);
        let out = round_deterministic(&b16(), &tie, RoundingMode::Rne);
        assert!(out.overflow);
        assert_eq!(out.value, FpValue::Infinite { negative: false });
        let out = round_deterministic(&b16(), &tie, RoundingMode::Rz);
        assert_eq!(out.value, FpValue::Finite(max.clone()));
        let huge = WorkingReal::from_int(1 << 20);
        assert_eq!(
            round_deterministic(&b16(), &-&huge, RoundingMode::Ru).value,
            FpValue::Finite(-&max)
        );
        assert_eq!(
            round_deterministic(&b16(), &-&huge, RoundingMode::Rd).value,
            FpValue::Infinite { negative: true }
        );
        // No infinity in e4m3: saturate and flag.
        let e4m3 = FloatFormat::preset("fp8-e4m3").unwrap();
        let out = round_deterministic(&e4m3, &WorkingReal::from_int(500), RoundingMode::Rne);
        assert!(out.overflow);
        assert_eq!(out.value.to_f64(), 448.0);
        // 460 is nearer 448 than 480.
        let out = round_deterministic(&e4m3, &WorkingReal::from_int(460), RoundingMode::Rne);
        assert!(!out.overflow);
    }

    #[test]
    fn signed_zero_and_tiny() {
        let out = r(&b16(), &-WorkingReal::pow2(-40), RoundingMode::Rne);
        assert!(out.is_zero() && out.is_sign_negative());
        assert_eq!(r(&b16(), &WorkingReal::negative_zero(), RoundingMode::Ru), WorkingReal::negative_zero());
    }
}
