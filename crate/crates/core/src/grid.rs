//! Position of a real relative to a format's grid: rounding candidates, the
//! fraction `q(x)`, and the local spacing.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::format::FloatFormat;
use crate::real::WorkingReal;

/// `⌊x⌋_p` and `⌈x⌉_p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundingCandidates {
    pub lo: WorkingReal,
    pub hi: WorkingReal,
    /// `x` is itself representable; then `lo == hi == x`.
    pub exact: bool,
}

/// Exact `q(x) = (x - ⌊x⌋_p) / (⌈x⌉_p - ⌊x⌋_p)`, reduced, in `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QFraction(BigRational);

impl QFraction {
    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }

    pub fn numerator(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denominator(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl std::fmt::Display for QFraction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&crate::real::rational_to_string(&self.0))
    }
}

/// `|x|` split against the (unbounded-exponent) grid of a format:
/// `|x| = int · 2^quantum + rem · 2^(quantum - rem_bits)` with
/// `rem < 2^rem_bits`.
///
/// The grid is extended past `emax` so kernels can decide a direction before
/// applying their overflow policy.
#[derive(Clone, Debug)]
pub(crate) struct Split {
    pub negative: bool,
    pub int: BigUint,
    pub quantum: i64,
    pub rem: BigUint,
    pub rem_bits: u64,
}

impl Split {
    pub fn new(fmt: &FloatFormat, x: &WorkingReal) -> Split {
        let negative = x.is_sign_negative();
        let p = fmt.precision() as i64;
        let quantum = match x.floor_log2() {
            Some(top) if top >= fmt.emin() => top - p + 1,
            _ if fmt.has_subnormals() => fmt.emin() - p + 1,
            // Gap between 0 and 2^emin: candidates are 0 and 2^emin.
            _ => fmt.emin(),
        };
        if x.is_zero() {
            return Split {
                negative,
                int: BigUint::zero(),
                quantum,
                rem: BigUint::zero(),
                rem_bits: 0,
            };
        }
        let m = x.significand();
        if x.exponent() >= quantum {
            Split {
                negative,
                int: m << (x.exponent() - quantum) as u64,
                quantum,
                rem: BigUint::zero(),
                rem_bits: 0,
            }
        } else {
            let shift = (quantum - x.exponent()) as u64;
            let int = m >> shift;
            let rem = m - (&int << shift);
            Split {
                negative,
                int,
                quantum,
                rem,
                rem_bits: shift,
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        self.rem.is_zero()
    }

    /// Signed value for the lower (`away == false`) or upper magnitude candidate.
    pub fn magnitude_candidate(&self, away: bool) -> WorkingReal {
        let int = if away { &self.int + 1u32 } else { self.int.clone() };
        WorkingReal::new(self.negative, int, self.quantum)
    }

    /// `q(|x|)` as an exact rational.
    pub fn q(&self) -> BigRational {
        if self.is_exact() {
            return BigRational::zero();
        }
        BigRational::new(
            BigInt::from(self.rem.clone()),
            BigInt::one() << self.rem_bits,
        )
    }

    /// Whether `int + 1` overflows `fmt` (the magnitude candidate above is
    /// beyond `max_finite`).
    pub fn exceeds_max(&self, fmt: &FloatFormat, away: bool) -> bool {
        let int = if away { &self.int + 1u32 } else { self.int.clone() };
        exceeds_max(fmt, &int, self.quantum)
    }
}

/// `int · 2^quantum > max_finite(fmt)`.
pub(crate) fn exceeds_max(fmt: &FloatFormat, int: &BigUint, quantum: i64) -> bool {
    let top_quantum = fmt.emax() - fmt.precision() as i64 + 1;
    let max_int = fmt.max_top_significand();
    match quantum.cmp(&top_quantum) {
        Ordering::Equal => int > &max_int,
        Ordering::Greater => !int.is_zero(),
        Ordering::Less => {
            let shift = (top_quantum - quantum) as u64;
            if shift > int.bits() {
                false
            } else {
                int > &(max_int << shift)
            }
        }
    }
}

fn check_range(fmt: &FloatFormat, x: &WorkingReal) -> Result<()> {
    if x.cmp_abs(&fmt.max_finite()).is_gt() {
        return Err(Error::OverflowRange {
            format: fmt.name().to_string(),
            value: x.to_string(),
        });
    }
    Ok(())
}

/// Grid-adjacent candidates around `x`.
pub fn neighbors(fmt: &FloatFormat, x: &WorkingReal) -> Result<RoundingCandidates> {
    check_range(fmt, x)?;
    let split = Split::new(fmt, x);
    if split.is_exact() {
        return Ok(RoundingCandidates {
            lo: x.clone(),
            hi: x.clone(),
            exact: true,
        });
    }
    let toward = split.magnitude_candidate(false);
    let away = split.magnitude_candidate(true);
    let (lo, hi) = if split.negative {
        (away, toward)
    } else {
        (toward, away)
    };
    Ok(RoundingCandidates {
        lo,
        hi,
        exact: false,
    })
}

/// Exact `q(x)`; zero iff `x` is representable.
pub fn q_fraction(fmt: &FloatFormat, x: &WorkingReal) -> Result<QFraction> {
    check_range(fmt, x)?;
    let split = Split::new(fmt, x);
    let q = split.q();
    if split.negative && !q.is_zero() {
        Ok(QFraction(BigRational::one() - q))
    } else {
        Ok(QFraction(q))
    }
}

/// Grid spacing at `x`. Between 0 and `2^emin` in a format without
/// subnormals this is the gap `2^emin`.
pub fn ulp(fmt: &FloatFormat, x: &WorkingReal) -> Result<WorkingReal> {
    check_range(fmt, x)?;
    Ok(WorkingReal::pow2(Split::new(fmt, x).quantum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::enumerate_finite;

    fn f(name: &str) -> FloatFormat {
        FloatFormat::preset(name).unwrap()
    }

    fn v(x: f64) -> WorkingReal {
        WorkingReal::from_f64(x).unwrap()
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn binary16_candidates_near_one() {
        let x = &WorkingReal::one() + &WorkingReal::pow2(-13);
        let c = neighbors(&f("binary16"), &x).unwrap();
        assert_eq!(c.lo, WorkingReal::one());
        assert_eq!(c.hi, &WorkingReal::one() + &WorkingReal::pow2(-10));
        assert!(!c.exact);
        assert_eq!(q_fraction(&f("binary16"), &x).unwrap().as_rational(), &rat(1, 8));
    }

    #[test]
    fn representable_is_exact() {
        let c = neighbors(&f("binary16"), &v(1.5)).unwrap();
        assert!(c.exact);
        assert_eq!(c.lo, v(1.5));
        assert!(q_fraction(&f("binary16"), &v(1.5)).unwrap().is_zero());
        let z = q_fraction(&f("binary16"), &WorkingReal::negative_zero()).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn e4m3_candidates_for_3_3_by_grid_enumeration() {
        let fmt = f("fp8-e4m3");
        let x = crate::parse::parse_working_real("3.3", 200).unwrap().value;
        let grid = enumerate_finite(&fmt).unwrap();
        let below = grid.iter().filter(|g| g.cmp_value(&x).is_le()).max().unwrap();
        let above = grid.iter().filter(|g| g.cmp_value(&x).is_ge()).min().unwrap();
        assert_eq!((below.to_f64(), above.to_f64()), (3.25, 3.5));
        let c = neighbors(&fmt, &x).unwrap();
        assert_eq!((&c.lo, &c.hi), (below, above));
    }

    #[test]
    fn pi_q_in_binary16() {
        let x = v(std::f64::consts::PI);
        let q = q_fraction(&f("binary16"), &x).unwrap();
        // Oracle: (x - 3.140625) / 2^-9 in exact rationals.
        let expect = (x.to_rational() - v(3.140625).to_rational()) * BigRational::from_integer(512.into());
        assert_eq!(q.as_rational(), &expect);
        let approx = crate::real::rational_to_f64(q.as_rational());
        assert!((approx - 0.495).abs() < 1e-3, "{approx}");
    }

    #[test]
    fn ulp_examples() {
        assert_eq!(ulp(&f("binary16"), &v(1.0)).unwrap(), WorkingReal::pow2(-10));
        assert_eq!(ulp(&f("bfloat16"), &v(256.0)).unwrap(), WorkingReal::from_int(2));
        assert_eq!(
            ulp(&f("binary16"), &WorkingReal::pow2(-24)).unwrap(),
            WorkingReal::pow2(-24)
        );
    }

    #[test]
    fn overflow_range_is_signalled() {
        let fmt = f("fp8-e4m3");
        assert!(neighbors(&fmt, &v(448.0)).unwrap().exact);
        assert!(matches!(
            neighbors(&fmt, &v(449.0)),
            Err(Error::OverflowRange { .. })
        ));
    }

    #[test]
    fn subnormal_normal_boundary_and_zero() {
        let fmt = f("binary16");
        let min_normal = WorkingReal::pow2(-14);
        let below = &min_normal - &WorkingReal::pow2(-30);
        let c = neighbors(&fmt, &below).unwrap();
        assert_eq!(c.hi, min_normal);
        assert_eq!(c.lo, &min_normal - &WorkingReal::pow2(-24));
        let tiny = WorkingReal::pow2(-40);
        let c = neighbors(&fmt, &tiny).unwrap();
        assert_eq!(c.lo, WorkingReal::zero());
        assert_eq!(c.hi, WorkingReal::pow2(-24));
        let c = neighbors(&fmt, &-&tiny).unwrap();
        assert!(c.hi.is_sign_negative() && c.hi.is_zero());
        assert_eq!(c.lo, -WorkingReal::pow2(-24));
    }

    #[test]
    fn no_subnormal_gap() {
        let fmt = FloatFormat::new("nosub", 3, -2, 3, false, crate::format::SpecialEncoding::None)
            .unwrap();
        let c = neighbors(&fmt, &WorkingReal::pow2(-5)).unwrap();
        assert_eq!(c.lo, WorkingReal::zero());
        assert_eq!(c.hi, WorkingReal::pow2(-2));
        assert_eq!(ulp(&fmt, &WorkingReal::pow2(-5)).unwrap(), WorkingReal::pow2(-2));
    }
}
