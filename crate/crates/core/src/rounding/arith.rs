use serde::{Deserialize, Serialize};

use crate::entropy::BitSource;
use crate::error::{Error, Result};
use crate::format::{FloatFormat, FpValue};
use crate::real::WorkingReal;

use super::{round_deterministic, overflowed, OverflowPolicy, Rounded, Rounding, RoundingMode, SrConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(ArithOp::Add),
            "sub" => Ok(ArithOp::Sub),
            "mul" => Ok(ArithOp::Mul),
            other => Err(Error::Contract(format!("unknown operation {other:?}"))),
        }
    }
}

/// The exact result of `a op b`.
pub fn exact_op(op: ArithOp, a: &WorkingReal, b: &WorkingReal) -> WorkingReal {
    match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
    }
}

/// Compute `a op b` exactly, then round once.
pub fn exact_op_then_round(
    op: ArithOp,
    a: &WorkingReal,
    b: &WorkingReal,
    fmt: &FloatFormat,
    rounding: &Rounding,
    src: &mut dyn BitSource,
) -> Result<Rounded> {
    rounding.apply(fmt, &exact_op(op, a, b), src)
}

/// RNE to binary32, then SR from binary32 into `dst`.
///
/// Flushing in `cfg` is tested against the binary32 value.
pub fn two_stage_round(
    x: &WorkingReal,
    dst: &FloatFormat,
    cfg: &SrConfig,
    src: &mut dyn BitSource,
) -> Result<Rounded> {
    let b32 = FloatFormat::preset("binary32")?;
    let stage = round_deterministic(&b32, x, RoundingMode::Rne);
    match stage.value {
        FpValue::Finite(y) => cfg.round(dst, &y, src),
        FpValue::Infinite { negative } => Ok(overflowed(
            dst,
            negative,
            cfg.overflow() == OverflowPolicy::ToInfinity || dst.has_infinity(),
        )),
        FpValue::Nan => unreachable!("finite input never rounds to NaN"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{derive_stream, ReplaySource};
    use crate::grid::{neighbors, q_fraction};
    use crate::rounding::{Intermediate, RandomDraw};
    use num_rational::BigRational;

    fn b16() -> FloatFormat {
        FloatFormat::preset("binary16").unwrap()
    }

    fn one_plus(k: i64) -> WorkingReal {
        &WorkingReal::one() + &WorkingReal::pow2(k)
    }

    #[test]
    fn add_then_limited_sr() {
        let cfg = Rounding::Stochastic(SrConfig::limited(3, Intermediate::Truncate).unwrap());
        let mut ups = 0;
        for d in 0..8u64 {
            let mut src = ReplaySource::from_value(d, 3);
            let v = exact_op_then_round(ArithOp::Add, &WorkingReal::one(), &WorkingReal::pow2(-13), &b16(), &cfg, &mut src)
                .unwrap()
                .into_real()
                .unwrap();
            assert!(v == WorkingReal::one() || v == one_plus(-10));
            ups += (v == one_plus(-10)) as u32;
        }
        assert_eq!(ups, 1);
    }

    #[test]
    fn representable_sum_is_exact_everywhere() {
        let configs = [
            Rounding::Deterministic(RoundingMode::Rne),
            Rounding::Deterministic(RoundingMode::Ru),
            Rounding::Stochastic(SrConfig::exact()),
            Rounding::Stochastic(SrConfig::limited(5, Intermediate::Rne).unwrap()),
        ];
        for cfg in &configs {
            let mut src = derive_stream(3, 4);
            let v = exact_op_then_round(ArithOp::Sub, &WorkingReal::from_int(3), &WorkingReal::pow2(-2), &b16(), cfg, &mut src)
                .unwrap();
            assert_eq!(v.value.to_f64(), 2.75);
        }
    }

    #[test]
    fn product_candidates() {
        let a = one_plus(-10);
        let p = exact_op(ArithOp::Mul, &a, &a);
        assert_eq!(p, &one_plus(-9) + &WorkingReal::pow2(-20));
        let c = neighbors(&b16(), &p).unwrap();
        assert_eq!(c.lo, one_plus(-9));
        assert_eq!(c.hi, &one_plus(-9) + &WorkingReal::pow2(-10));
        let q = q_fraction(&b16(), &p).unwrap();
        assert_eq!(q.as_rational(), &BigRational::new(1.into(), 1024.into()));
    }

    #[test]
    fn two_stage_equals_direct_for_binary32_inputs() {
        let cfg = SrConfig::limited(13, Intermediate::Truncate).unwrap();
        let x = WorkingReal::from_f64(1.2345678f32 as f64).unwrap();
        for d in [0u64, 1, 4095, 8191] {
            let mut a = ReplaySource::from_value(d, 13);
            let two = two_stage_round(&x, &b16(), &cfg, &mut a).unwrap();
            let one = cfg.round_with_draw(&b16(), &x, RandomDraw::new(d, 13).unwrap()).unwrap();
            assert_eq!(two, one);
        }
    }

    #[test]
    fn two_stage_differs_when_rne32_moves_x() {
        // Just below 1 + 2^-11 at 53 bits: RNE32 lands on 1 + 2^-11 exactly,
        // changing the fraction the second stage sees.
        let x = &one_plus(-11) - &WorkingReal::pow2(-40);
        let cfg = SrConfig::limited(13, Intermediate::Truncate).unwrap();
        let hi = one_plus(-10);
        let mut differ = false;
        for d in 0..1u64 << 13 {
            let mut src = ReplaySource::from_value(d, 13);
            let two = two_stage_round(&x, &b16(), &cfg, &mut src).unwrap().value;
            let one = cfg.round_with_draw(&b16(), &x, RandomDraw::new(d, 13).unwrap()).unwrap().value;
            differ |= (two == FpValue::Finite(hi.clone())) != (one == FpValue::Finite(hi.clone()));
        }
        assert!(differ);
    }

    #[test]
    fn two_stage_fixed_point_and_binary32_overflow() {
        let cfg = SrConfig::exact();
        let mut src = derive_stream(0, 0);
        let out = two_stage_round(&WorkingReal::from_int(3), &b16(), &cfg, &mut src).unwrap();
        assert_eq!(out.value.to_f64(), 3.0);
        let huge = WorkingReal::pow2(200);
        let e4m3 = FloatFormat::preset("fp8-e4m3").unwrap();
        let out = two_stage_round(&huge, &e4m3, &cfg, &mut src).unwrap();
        assert!(out.overflow);
        assert_eq!(out.value.to_f64(), 448.0);
    }
}
