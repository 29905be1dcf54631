use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::entropy::BitSource;
use crate::error::Result;
use crate::format::FloatFormat;
use crate::grid::Split;
use crate::real::WorkingReal;

use super::{Intermediate, P3109Kind, RandomDraw, Rounded, SrConfig};

/// Exact SR: compare a lazily drawn uniform `U` against `q(|x|)` bit by bit.
/// Goes away from zero iff `U < q`.
pub(super) fn exact_away(split: &Split, src: &mut dyn BitSource) -> Result<bool> {
    if split.is_exact() {
        return Ok(false);
    }
    for i in (0..split.rem_bits).rev() {
        let q_bit = split.rem.bit(i);
        let u_bit = src.next_bits(1)? == 1;
        if q_bit != u_bit {
            return Ok(q_bit);
        }
    }
    // U agrees with q on every bit of q, so U >= q.
    Ok(false)
}

/// Add-and-carry: place `|x|` on the grid `r` bits finer than the destination,
/// add `R` at the bottom and see whether the carry reaches the destination ulp.
pub(super) fn limited_away(
    split: &Split,
    x: &WorkingReal,
    r: u32,
    intermediate: Intermediate,
    draw: u64,
) -> bool {
    if x.is_zero() {
        return false;
    }
    let fine = split.quantum - r as i64;
    let m = x.significand();
    let v: BigUint = if x.exponent() >= fine {
        m << (x.exponent() - fine) as u64
    } else {
        let shift = (fine - x.exponent()) as u64;
        let kept = m >> shift;
        match intermediate {
            Intermediate::Truncate => kept,
            Intermediate::Rne => {
                // m is odd, so the dropped bits are never zero: only the
                // half bit and the rest decide.
                let half = m.bit(shift - 1);
                let rest_zero = m.trailing_zeros() == Some(shift - 1);
                if half && (!rest_zero || kept.bit(0)) {
                    kept + 1u32
                } else {
                    kept
                }
            }
        }
    };
    let sum = v + BigUint::from(draw);
    (sum >> r as u64) != split.int
}

fn pow2_u128(k: u32) -> u128 {
    1u128 << k
}

/// P3109 variants, from the exact rational `q(|x|)`.
pub(super) fn p3109_away(split: &Split, kind: P3109Kind, r: u32, draw: u64) -> bool {
    let q = split.q();
    if q.is_zero() {
        return false;
    }
    let draw = draw as u128;
    let scaled = |k: u32| -> BigRational { &q * BigRational::from_integer(BigInt::one() << k) };
    let as_u128 = |v: BigInt| v.to_u128().expect("bounded by 2^(r+1)");
    match kind {
        P3109Kind::A => {
            let t = as_u128(scaled(r).floor().to_integer());
            t + draw >= pow2_u128(r)
        }
        P3109Kind::B => {
            let k = as_u128(scaled(r + 1).floor().to_integer());
            k + 2 * draw + 1 >= pow2_u128(r + 1)
        }
        P3109Kind::C => {
            let y = scaled(r);
            let floor = y.floor();
            let frac = &y - &floor;
            let half = BigRational::new(BigInt::one(), BigInt::from(2));
            let mut t = floor.to_integer();
            if frac > half || (frac == half && t.is_odd()) {
                t += 1;
            }
            as_u128(t) + draw >= pow2_u128(r)
        }
    }
}

/// Exact SR of `x` into `fmt` (no flush, saturating overflow).
pub fn sr_exact(fmt: &FloatFormat, x: &WorkingReal, bits: &mut dyn BitSource) -> Result<Rounded> {
    SrConfig::exact().round(fmt, x, bits)
}

/// Limited-precision SR with an explicit draw `R ∈ [0, 2^r)`.
pub fn sr_limited(
    fmt: &FloatFormat,
    x: &WorkingReal,
    r: u32,
    intermediate: Intermediate,
    draw: u64,
) -> Result<Rounded> {
    SrConfig::limited(r, intermediate)?.round_with_draw(fmt, x, RandomDraw::new(draw, r)?)
}

/// P3109 StochasticA/B/C with an explicit draw.
pub fn p3109_round(
    fmt: &FloatFormat,
    x: &WorkingReal,
    kind: P3109Kind,
    r: u32,
    draw: u64,
) -> Result<Rounded> {
    SrConfig::p3109(kind, r)?.round_with_draw(fmt, x, RandomDraw::new(draw, r)?)
}
