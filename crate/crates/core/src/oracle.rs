//! Exhaustive ground truth: exact rounding distributions and exact expected
//! values of short stochastic sums. Rational arithmetic only.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::format::{FloatFormat, FpValue};
use crate::grid::{neighbors, q_fraction, ulp};
use crate::real::{rational_to_string, WorkingReal};
use crate::rounding::{RandomDraw, SrConfig, SrVariant};

/// Largest `r` enumerated by [`distribution`].
pub const MAX_DISTRIBUTION_BITS: u32 = 20;
/// Largest `n · r` enumerated by [`expected_sum_enumeration`].
pub const MAX_PATH_BITS: u32 = 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistributionReport {
    pub x: WorkingReal,
    pub lo: WorkingReal,
    pub hi: WorkingReal,
    pub q: BigRational,
    /// Probability the result is `hi` (0 when `x` is representable).
    pub p_up: BigRational,
    pub mean: BigRational,
    /// `mean - x`.
    pub bias: BigRational,
    /// `bias / ulp(x)`.
    pub bias_ulps: BigRational,
    /// Random bits enumerated; `None` for exact SR (analytic).
    pub r_used: Option<u32>,
    pub variant: String,
    pub format: String,
}

impl DistributionReport {
    /// JSON with every rational as a `"num/den"` string.
    pub fn to_json(&self) -> serde_json::Value {
        let r = |q: &BigRational| rational_to_string(q);
        json!({
            "format": self.format,
            "variant": self.variant,
            "r_used": self.r_used,
            "x": self.x.to_hex_float(0),
            "lo": self.lo.to_hex_float(0),
            "hi": self.hi.to_hex_float(0),
            "q": r(&self.q),
            "p_up": r(&self.p_up),
            "mean": r(&self.mean),
            "bias": r(&self.bias),
            "bias_ulps": r(&self.bias_ulps),
        })
    }
}

fn tally(
    cfg: &SrConfig,
    fmt: &FloatFormat,
    x: &WorkingReal,
    r: u32,
) -> Result<BTreeMap<WorkingReal, u64>> {
    (0..1u64 << r)
        .into_par_iter()
        .map(|d| {
            let out = cfg.round_with_draw(fmt, x, RandomDraw::new(d, r)?)?;
            let v = out.value.into_finite()?;
            Ok(BTreeMap::from([(v, 1u64)]))
        })
        .try_reduce(BTreeMap::new, |mut a, b| {
            for (k, n) in b {
                *a.entry(k).or_insert(0) += n;
            }
            Ok(a)
        })
}

/// Outcome distribution of one rounding: value -> probability.
fn outcomes(cfg: &SrConfig, fmt: &FloatFormat, x: &WorkingReal) -> Result<Vec<(WorkingReal, BigRational)>> {
    match cfg.random_bits() {
        None => {
            if cfg.flush_below().is_some_and(|t| x.cmp_abs(t).is_lt()) {
                return Ok(vec![(WorkingReal::zero().with_sign(x.is_sign_negative()), BigRational::one())]);
            }
            let c = neighbors(fmt, x)?;
            if c.exact {
                return Ok(vec![(x.clone(), BigRational::one())]);
            }
            let q = q_fraction(fmt, x)?.as_rational().clone();
            Ok(vec![(c.lo, BigRational::one() - &q), (c.hi, q)])
        }
        Some(r) => {
            let total = BigRational::from_integer(BigInt::one() << r);
            Ok(tally(cfg, fmt, x, r)?
                .into_iter()
                .map(|(v, n)| (v, BigRational::from_integer(n.into()) / &total))
                .collect())
        }
    }
}

/// Exact distribution of `cfg` applied to `x`.
pub fn distribution(fmt: &FloatFormat, x: &WorkingReal, cfg: &SrConfig) -> Result<DistributionReport> {
    if let Some(r) = cfg.random_bits() {
        if r > MAX_DISTRIBUTION_BITS {
            return Err(Error::Budget(format!(
                "enumerating 2^{r} draws exceeds the 2^{MAX_DISTRIBUTION_BITS} budget"
            )));
        }
    }
    let c = neighbors(fmt, x)?;
    let q = q_fraction(fmt, x)?.as_rational().clone();
    let dist = outcomes(cfg, fmt, x)?;
    let mut p_up = BigRational::zero();
    let mut mean = BigRational::zero();
    for (v, p) in &dist {
        if !c.exact && v == &c.hi {
            p_up += p;
        }
        mean += v.to_rational() * p;
    }
    let bias = &mean - x.to_rational();
    let bias_ulps = &bias / ulp(fmt, x)?.to_rational();
    Ok(DistributionReport {
        x: x.clone(),
        lo: c.lo,
        hi: c.hi,
        q,
        p_up,
        mean,
        bias,
        bias_ulps,
        r_used: cfg.random_bits(),
        variant: cfg.label(),
        format: fmt.name().to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SumExpectation {
    pub mean: BigRational,
    pub variance: BigRational,
    /// Distinct partial-sum states after the last step.
    pub final_states: usize,
}

/// Exact expectation and variance of recursive summation
/// `s_1 = round(a_1)`, `s_i = round(s_{i-1} + a_i)`, enumerating every draw.
/// Paths reaching the same partial sum are merged.
pub fn expected_sum_enumeration(
    addends: &[WorkingReal],
    fmt: &FloatFormat,
    cfg: &SrConfig,
) -> Result<SumExpectation> {
    let per_step = match cfg.variant() {
        SrVariant::Exact => 1,
        _ => cfg.random_bits().expect("fixed width"),
    };
    let path_bits = per_step as u64 * addends.len() as u64;
    if path_bits > MAX_PATH_BITS as u64 {
        return Err(Error::Budget(format!(
            "{} addends at {per_step} bits give 2^{path_bits} paths (budget 2^{MAX_PATH_BITS})",
            addends.len()
        )));
    }
    let mut states: BTreeMap<WorkingReal, BigRational> = BTreeMap::new();
    for (i, a) in addends.iter().enumerate() {
        let mut next: BTreeMap<WorkingReal, BigRational> = BTreeMap::new();
        let inputs: Vec<(WorkingReal, BigRational)> = if i == 0 {
            vec![(a.clone(), BigRational::one())]
        } else {
            states.iter().map(|(s, w)| (s + a, w.clone())).collect()
        };
        for (x, w) in inputs {
            for (v, p) in outcomes(cfg, fmt, &x)? {
                *next.entry(v).or_insert_with(BigRational::zero) += &w * p;
            }
        }
        states = next;
    }
    let mut mean = BigRational::zero();
    let mut second = BigRational::zero();
    for (s, w) in &states {
        let v = s.to_rational();
        second += &v * &v * w;
        mean += v * w;
    }
    let variance = second - &mean * &mean;
    Ok(SumExpectation {
        mean,
        variance,
        final_states: states.len(),
    })
}

/// Outcome probabilities as `(value, p)`; handy for inspecting one rounding.
pub fn outcome_distribution(
    fmt: &FloatFormat,
    x: &WorkingReal,
    cfg: &SrConfig,
) -> Result<Vec<(FpValue, BigRational)>> {
    if cfg.random_bits().is_some_and(|r| r > MAX_DISTRIBUTION_BITS) {
        return Err(Error::Budget("too many random bits to enumerate".into()));
    }
    Ok(outcomes(cfg, fmt, x)?
        .into_iter()
        .map(|(v, p)| (FpValue::Finite(v), p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::derive_stream;
    use crate::rounding::{Intermediate, P3109Kind};
    use proptest::prelude::*;

    fn b16() -> FloatFormat {
        FloatFormat::preset("binary16").unwrap()
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn with_q(n: i64, d_log2: i64) -> WorkingReal {
        &WorkingReal::one() + &WorkingReal::from_scaled(&BigInt::from(n), -10 - d_log2)
    }

    fn trunc(r: u32) -> SrConfig {
        SrConfig::limited(r, Intermediate::Truncate).unwrap()
    }

    #[test]
    fn exact_sr_is_analytic_and_unbiased() {
        let x = WorkingReal::from_f64(std::f64::consts::PI).unwrap();
        let d = distribution(&b16(), &x, &SrConfig::exact()).unwrap();
        assert_eq!(d.p_up, d.q);
        assert!(d.bias.is_zero());
        assert_eq!(d.r_used, None);
    }

    #[test]
    fn limited_examples() {
        let d = distribution(&b16(), &with_q(1, 3), &trunc(3)).unwrap();
        assert_eq!((d.p_up.clone(), d.bias.clone()), (rat(1, 8), BigRational::zero()));
        let d = distribution(&b16(), &with_q(23, 5), &trunc(3)).unwrap();
        assert_eq!(d.p_up, rat(5, 8));
        assert_eq!(d.bias_ulps, rat(-3, 32));
        assert_eq!(d.bias, rat(-3, 32) / rat(1024, 1));
        let json = serde_json::to_string(&d.to_json()).unwrap();
        assert!(json.contains("\"p_up\":\"5/8\""), "{json}");
    }

    #[test]
    fn budget() {
        assert!(matches!(
            distribution(&b16(), &with_q(1, 3), &trunc(21)),
            Err(Error::Budget(_))
        ));
        let addends = vec![WorkingReal::one(); 7];
        assert!(matches!(
            expected_sum_enumeration(&addends, &b16(), &trunc(4)),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn mean_is_the_candidate_mixture() {
        for cfg in [trunc(4), SrConfig::p3109(P3109Kind::B, 3).unwrap()] {
            let x = WorkingReal::from_f64(-0.123456789).unwrap();
            let d = distribution(&b16(), &x, &cfg).unwrap();
            let mix = &d.p_up * d.hi.to_rational() + (BigRational::one() - &d.p_up) * d.lo.to_rational();
            assert_eq!(d.mean, mix);
        }
    }

    #[test]
    fn single_addend_sum_matches_distribution() {
        let x = with_q(23, 5);
        let cfg = trunc(3);
        let s = expected_sum_enumeration(std::slice::from_ref(&x), &b16(), &cfg).unwrap();
        assert_eq!(s.mean, distribution(&b16(), &x, &cfg).unwrap().mean);
    }

    #[test]
    fn fine_grid_sum_is_unbiased() {
        // Every partial sum stays on the 2^-14 grid, i.e. within p + 4 bits.
        let addends = vec![
            WorkingReal::one(),
            WorkingReal::from_scaled(&5.into(), -14),
            WorkingReal::from_scaled(&3.into(), -14),
        ];
        let s = expected_sum_enumeration(&addends, &b16(), &trunc(4)).unwrap();
        let exact: BigRational = addends.iter().map(|a| a.to_rational()).sum();
        assert_eq!(s.mean, exact);
        assert!(s.variance > BigRational::zero());
    }

    #[test]
    fn monte_carlo_agrees_with_enumeration() {
        let addends: Vec<WorkingReal> = [0.7, 0.013, 0.21, 0.0009]
            .iter()
            .map(|&a| WorkingReal::from_f64(a).unwrap())
            .collect();
        let fmt = FloatFormat::preset("fp8-e4m3").unwrap();
        let cfg = trunc(5);
        let e = expected_sum_enumeration(&addends, &fmt, &cfg).unwrap();
        let trials = 100_000u64;
        let mut src = derive_stream(0x0AC1E, 0);
        let mut total = 0.0;
        for _ in 0..trials {
            let mut s = cfg.round(&fmt, &addends[0], &mut src).unwrap().into_real().unwrap();
            for a in &addends[1..] {
                s = cfg.round(&fmt, &(&s + a), &mut src).unwrap().into_real().unwrap();
            }
            total += s.to_f64();
        }
        let mc = total / trials as f64;
        let sigma = (crate::real::rational_to_f64(&e.variance) / trials as f64).sqrt();
        let mean = crate::real::rational_to_f64(&e.mean);
        assert!((mc - mean).abs() <= 4.0 * sigma, "{mc} vs {mean} (sigma {sigma})");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn truncate_law_and_monotone_p_up(n in 0i64..1 << 12, r in 1u32..10) {
            // q = n / 2^12.
            let x = with_q(n, 12);
            let d = distribution(&b16(), &x, &trunc(r)).unwrap();
            let scale = BigRational::from_integer(BigInt::one() << r);
            prop_assert_eq!(&d.p_up, &((&d.q * &scale).floor() / &scale));
            let d2 = distribution(&b16(), &with_q((n + 1).min((1 << 12) - 1), 12), &trunc(r)).unwrap();
            prop_assert!(d2.p_up >= d.p_up);
            if (&d.q * &scale).is_integer() {
                prop_assert!(d.bias.is_zero());
                let a = distribution(&b16(), &x, &SrConfig::p3109(P3109Kind::A, r).unwrap()).unwrap();
                prop_assert!(a.bias.is_zero());
            }
        }
    }
}
