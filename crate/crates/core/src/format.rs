//! Reduced-precision number systems and their bit encodings.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::WorkingReal;

/// How the top exponent code is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpecialEncoding {
    /// All-ones exponent reserved: zero significand is infinity, else NaN.
    Ieee,
    /// OCP e4m3 style: only the all-ones exponent *and* significand is NaN;
    /// no infinities.
    NanOnly,
    /// Every code is finite (OCP fp6/fp4).
    None,
}

/// A binary floating-point number system with `precision` significand bits
/// (implicit bit included) and normalized exponents in `emin..=emax`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FloatFormat {
    name: String,
    precision: u32,
    emin: i64,
    emax: i64,
    has_subnormals: bool,
    specials: SpecialEncoding,
}

/// Names accepted by [`FloatFormat::preset`].
pub const PRESET_NAMES: &[&str] = &[
    "binary64", "binary32", "binary16", "bfloat16", "fp8-e4m3", "fp8-e5m2", "fp6-e2m3",
    "fp6-e3m2", "fp4-e2m1",
];

impl FloatFormat {
    pub fn new(
        name: impl Into<String>,
        precision: u32,
        emin: i64,
        emax: i64,
        has_subnormals: bool,
        specials: SpecialEncoding,
    ) -> Result<Self> {
        let name = name.into();
        if precision == 0 || precision > 4096 {
            return Err(Error::Contract(format!("{name}: precision must be in 1..=4096")));
        }
        if emin > emax {
            return Err(Error::Contract(format!("{name}: emin {emin} > emax {emax}")));
        }
        if specials == SpecialEncoding::NanOnly && precision < 2 {
            return Err(Error::Contract(format!(
                "{name}: NaN-only encoding needs a significand field"
            )));
        }
        Ok(FloatFormat {
            name,
            precision,
            emin,
            emax,
            has_subnormals,
            specials,
        })
    }

    pub fn preset(name: &str) -> Result<Self> {
        use SpecialEncoding::*;
        let (canonical, p, emin, emax, specials) = match name.to_ascii_lowercase().as_str() {
            "binary64" | "fp64" => ("binary64", 53, -1022, 1023, Ieee),
            "binary32" | "fp32" => ("binary32", 24, -126, 127, Ieee),
            "binary16" | "fp16" => ("binary16", 11, -14, 15, Ieee),
            "bfloat16" | "bf16" => ("bfloat16", 8, -126, 127, Ieee),
            "fp8-e4m3" | "e4m3" => ("fp8-e4m3", 4, -6, 8, NanOnly),
            "fp8-e5m2" | "e5m2" => ("fp8-e5m2", 3, -14, 15, Ieee),
            "fp6-e2m3" | "e2m3" => ("fp6-e2m3", 4, 0, 2, None),
            "fp6-e3m2" | "e3m2" => ("fp6-e3m2", 3, -2, 4, None),
            "fp4-e2m1" | "e2m1" => ("fp4-e2m1", 2, 0, 2, None),
            _ => return Err(Error::UnknownFormat(name.to_string())),
        };
        FloatFormat::new(canonical, p, emin, emax, true, specials)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn emin(&self) -> i64 {
        self.emin
    }

    pub fn emax(&self) -> i64 {
        self.emax
    }

    pub fn has_subnormals(&self) -> bool {
        self.has_subnormals
    }

    pub fn specials(&self) -> SpecialEncoding {
        self.specials
    }

    pub fn has_infinity(&self) -> bool {
        self.specials == SpecialEncoding::Ieee
    }

    pub fn has_nan(&self) -> bool {
        self.specials != SpecialEncoding::None
    }

    /// Same exponent range with a different precision; used for the
    /// intermediate grid `fl_{p+r}`.
    pub fn with_precision(&self, precision: u32) -> Result<Self> {
        FloatFormat::new(
            format!("{}+p{}", self.name, precision),
            precision,
            self.emin,
            self.emax,
            self.has_subnormals,
            self.specials,
        )
    }

    /// `u = 2^-p`.
    pub fn unit_roundoff(&self) -> WorkingReal {
        WorkingReal::pow2(-(self.precision as i64))
    }

    /// Largest integral significand allowed in the top binade.
    pub(crate) fn max_top_significand(&self) -> BigUint {
        let full = (BigUint::one() << self.precision) - 1u32;
        match self.specials {
            SpecialEncoding::NanOnly => full - 1u32,
            _ => full,
        }
    }

    pub fn max_finite(&self) -> WorkingReal {
        WorkingReal::new(
            false,
            self.max_top_significand(),
            self.emax - self.precision as i64 + 1,
        )
    }

    pub fn min_normal(&self) -> WorkingReal {
        WorkingReal::pow2(self.emin)
    }

    /// `2^(emin - p + 1)`, or `None` without subnormals.
    pub fn min_subnormal(&self) -> Option<WorkingReal> {
        self.has_subnormals
            .then(|| WorkingReal::pow2(self.emin - self.precision as i64 + 1))
    }

    /// Smallest positive representable magnitude.
    pub fn min_positive(&self) -> WorkingReal {
        self.min_subnormal().unwrap_or_else(|| self.min_normal())
    }

    pub fn bias(&self) -> i64 {
        1 - self.emin
    }

    /// Width of the exponent field.
    pub fn exponent_bits(&self) -> u32 {
        let top_code = self.emax + self.bias()
            + if self.specials == SpecialEncoding::Ieee { 1 } else { 0 };
        64 - (top_code as u64).leading_zeros()
    }

    pub fn total_bits(&self) -> u32 {
        1 + self.exponent_bits() + self.precision - 1
    }

    /// Hex digits needed for the fraction of a normalized significand.
    pub fn hex_digits(&self) -> usize {
        (self.precision as usize - 1).div_ceil(4)
    }

    /// True when `x` lies on this format's grid and inside its range.
    pub fn is_representable(&self, x: &WorkingReal) -> bool {
        let Some(top) = x.floor_log2() else {
            return true;
        };
        if x.cmp_abs(&self.max_finite()).is_gt() {
            return false;
        }
        if top >= self.emin {
            x.exponent() > top - self.precision as i64
        } else {
            self.has_subnormals && x.exponent() > self.emin - self.precision as i64
        }
    }

    pub fn encode(&self, value: &FpValue) -> Result<u64> {
        if self.total_bits() > 64 {
            return Err(Error::Contract(format!("{} is wider than 64 bits", self.name)));
        }
        let mant_bits = self.precision - 1;
        let exp_bits = self.exponent_bits();
        let exp_all = (1u64 << exp_bits) - 1;
        let mant_all = (1u64 << mant_bits) - 1;
        let pack = |neg: bool, exp: u64, mant: u64| -> u64 {
            ((neg as u64) << (exp_bits + mant_bits)) | (exp << mant_bits) | mant
        };
        let unrepresentable = || Error::Encoding {
            format: self.name.clone(),
            value: value.to_string(),
        };
        match value {
            FpValue::Nan => match self.specials {
                SpecialEncoding::Ieee if mant_bits >= 1 => {
                    Ok(pack(false, exp_all, 1u64 << (mant_bits - 1)))
                }
                SpecialEncoding::NanOnly => Ok(pack(false, exp_all, mant_all)),
                _ => Err(unrepresentable()),
            },
            FpValue::Infinite { negative } => {
                if self.has_infinity() {
                    Ok(pack(*negative, exp_all, 0))
                } else {
                    Err(unrepresentable())
                }
            }
            FpValue::Finite(x) => {
                let neg = x.is_sign_negative();
                let Some(top) = x.floor_log2() else {
                    return Ok(pack(neg, 0, 0));
                };
                if !self.is_representable(x) {
                    return Err(unrepresentable());
                }
                let p = self.precision as i64;
                let (exp, quantum) = if top >= self.emin {
                    ((top + self.bias()) as u64, top - p + 1)
                } else {
                    (0, self.emin - p + 1)
                };
                let int = x.significand() << (x.exponent() - quantum) as u64;
                let int = int.to_u64().ok_or_else(unrepresentable)?;
                let mant = if exp == 0 { int } else { int - (1u64 << mant_bits) };
                Ok(pack(neg, exp, mant))
            }
        }
    }

    pub fn decode(&self, bits: u64) -> Result<FpValue> {
        let total = self.total_bits();
        if total > 64 {
            return Err(Error::Contract(format!("{} is wider than 64 bits", self.name)));
        }
        let bad = || Error::Decoding {
            format: self.name.clone(),
            bits,
        };
        if total < 64 && bits >> total != 0 {
            return Err(bad());
        }
        let mant_bits = self.precision - 1;
        let exp_bits = self.exponent_bits();
        let neg = (bits >> (exp_bits + mant_bits)) & 1 == 1;
        let exp = (bits >> mant_bits) & ((1u64 << exp_bits) - 1);
        let mant = bits & ((1u64 << mant_bits) - 1);
        let exp_all = (1u64 << exp_bits) - 1;
        let mant_all = (1u64 << mant_bits) - 1;
        match self.specials {
            SpecialEncoding::Ieee if exp == exp_all => {
                return Ok(if mant == 0 {
                    FpValue::Infinite { negative: neg }
                } else {
                    FpValue::Nan
                });
            }
            SpecialEncoding::NanOnly if exp == exp_all && mant == mant_all => {
                return Ok(FpValue::Nan);
            }
            _ => {}
        }
        let p = self.precision as i64;
        let value = if exp == 0 {
            if mant != 0 && !self.has_subnormals {
                return Err(bad());
            }
            WorkingReal::new(neg, BigUint::from(mant), self.emin - p + 1)
        } else {
            let e = exp as i64 - self.bias();
            if e > self.emax {
                return Err(bad());
            }
            WorkingReal::new(neg, BigUint::from(mant | (1u64 << mant_bits)), e - p + 1)
        };
        Ok(FpValue::Finite(value))
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// A floating-point datum: finite exact value, infinity, or NaN.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FpValue {
    Finite(WorkingReal),
    Infinite { negative: bool },
    Nan,
}

impl FpValue {
    pub fn finite(&self) -> Option<&WorkingReal> {
        match self {
            FpValue::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn into_finite(self) -> Result<WorkingReal> {
        match self {
            FpValue::Finite(x) => Ok(x),
            other => Err(Error::Domain(format!("{other} is not finite"))),
        }
    }

    pub fn is_nan(&self) -> bool {
        matches!(self, FpValue::Nan)
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            FpValue::Finite(x) => x.to_f64(),
            FpValue::Infinite { negative: false } => f64::INFINITY,
            FpValue::Infinite { negative: true } => f64::NEG_INFINITY,
            FpValue::Nan => f64::NAN,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v.is_nan() {
            FpValue::Nan
        } else if v.is_infinite() {
            FpValue::Infinite { negative: v < 0.0 }
        } else {
            FpValue::Finite(WorkingReal::from_f64(v).expect("finite"))
        }
    }

    pub fn to_hex_float(&self, min_digits: usize) -> String {
        match self {
            FpValue::Finite(x) => x.to_hex_float(min_digits),
            FpValue::Infinite { negative } => {
                if *negative { "-inf" } else { "inf" }.to_string()
            }
            FpValue::Nan => "nan".to_string(),
        }
    }
}

impl From<WorkingReal> for FpValue {
    fn from(x: WorkingReal) -> Self {
        FpValue::Finite(x)
    }
}

impl fmt::Display for FpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex_float(0))
    }
}

/// Every finite value of a small format, ascending, `-0` and `+0` included.
pub fn enumerate_finite(fmt: &FloatFormat) -> Result<Vec<WorkingReal>> {
    if fmt.total_bits() > 20 {
        return Err(Error::Budget(format!("{} has too many codes to enumerate", fmt.name)));
    }
    let mut out = Vec::new();
    for bits in 0..(1u64 << fmt.total_bits()) {
        if let Ok(FpValue::Finite(x)) = fmt.decode(bits) {
            out.push(x);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(name: &str) -> FloatFormat {
        FloatFormat::preset(name).unwrap()
    }

    #[test]
    fn preset_precisions_match_column_labels() {
        let expect = [
            ("binary32", 24),
            ("binary16", 11),
            ("bfloat16", 8),
            ("fp8-e4m3", 4),
            ("fp8-e5m2", 3),
            ("fp6-e2m3", 4),
            ("fp6-e3m2", 3),
            ("fp4-e2m1", 2),
        ];
        for (name, p) in expect {
            let fmt = f(name);
            assert_eq!(fmt.precision(), p, "{name}");
            assert_eq!(fmt.name(), name);
        }
        assert_eq!(f("e4m3").name(), "fp8-e4m3");
        assert!(matches!(FloatFormat::preset("fp7"), Err(Error::UnknownFormat(_))));
    }

    #[test]
    fn widths_and_extremes() {
        let cases = [
            ("binary32", 32, 3.4028234663852886e38, 1.401298464324817e-45),
            ("binary16", 16, 65504.0, 5.960464477539063e-8),
            ("bfloat16", 16, 3.3895313892515355e38, 9.183549615799121e-41),
            ("fp8-e4m3", 8, 448.0, 0.001953125),
            ("fp8-e5m2", 8, 57344.0, 1.52587890625e-5),
            ("fp6-e2m3", 6, 7.5, 0.125),
            ("fp6-e3m2", 6, 28.0, 0.0625),
            ("fp4-e2m1", 4, 6.0, 0.5),
        ];
        for (name, width, max, min_sub) in cases {
            let fmt = f(name);
            assert_eq!(fmt.total_bits(), width, "{name}");
            assert_eq!(fmt.max_finite().to_f64(), max, "{name}");
            assert_eq!(fmt.min_subnormal().unwrap().to_f64(), min_sub, "{name}");
        }
    }

    #[test]
    fn e4m3_max_is_448_by_enumeration() {
        let grid = enumerate_finite(&f("fp8-e4m3")).unwrap();
        assert_eq!(grid.last().unwrap().to_f64(), 448.0);
        // 2 zeros + 2 * 126 nonzero finite codes (0x7F/0xFF are NaN).
        assert_eq!(grid.len(), 254);
    }

    #[test]
    fn standard_encodings() {
        let b16 = f("binary16");
        let one = FpValue::Finite(WorkingReal::one());
        assert_eq!(b16.encode(&one).unwrap(), 0x3C00);
        assert_eq!(b16.encode(&FpValue::Infinite { negative: true }).unwrap(), 0xFC00);
        assert_eq!(b16.encode(&FpValue::Nan).unwrap(), 0x7E00);
        assert_eq!(
            b16.encode(&FpValue::Finite(WorkingReal::negative_zero())).unwrap(),
            0x8000
        );
        assert_eq!(f("fp8-e4m3").encode(&FpValue::Nan).unwrap(), 0x7F);
        assert_eq!(
            f("fp8-e4m3").encode(&FpValue::Finite(WorkingReal::from_int(448))).unwrap(),
            0x7E
        );
        assert_eq!(f("binary32").encode(&one).unwrap(), 0x3F80_0000);
        assert_eq!(f("bfloat16").encode(&one).unwrap(), 0x3F80);
    }

    #[test]
    fn encoding_errors() {
        let e2m1 = f("fp4-e2m1");
        assert!(matches!(e2m1.encode(&FpValue::Nan), Err(Error::Encoding { .. })));
        assert!(matches!(
            e2m1.encode(&FpValue::Finite(WorkingReal::from_f64(1.25).unwrap())),
            Err(Error::Encoding { .. })
        ));
        assert!(matches!(
            e2m1.encode(&FpValue::Finite(WorkingReal::from_int(8))),
            Err(Error::Encoding { .. })
        ));
        assert!(matches!(e2m1.decode(0x10), Err(Error::Decoding { .. })));
        let no_sub = FloatFormat::new("nosub", 3, -2, 3, false, SpecialEncoding::None).unwrap();
        assert!(matches!(no_sub.decode(0b0_000_01), Err(Error::Decoding { .. })));
    }

    #[test]
    fn decode_specials() {
        let b16 = f("binary16");
        assert_eq!(b16.decode(0x7C00).unwrap(), FpValue::Infinite { negative: false });
        assert!(b16.decode(0x7C01).unwrap().is_nan());
        assert!(f("fp8-e4m3").decode(0xFF).unwrap().is_nan());
        assert_eq!(f("fp8-e4m3").decode(0x78).unwrap().to_f64(), 256.0);
    }

    #[test]
    fn small_formats_round_trip_every_code() {
        for name in ["fp8-e4m3", "fp8-e5m2", "fp6-e2m3", "fp6-e3m2", "fp4-e2m1", "binary16"] {
            let fmt = f(name);
            for bits in 0..(1u64 << fmt.total_bits()) {
                let v = fmt.decode(bits).unwrap();
                if v.is_nan() {
                    continue;
                }
                assert_eq!(fmt.encode(&v).unwrap(), bits, "{name} {bits:#x}");
            }
        }
    }

    #[test]
    fn invalid_format_parameters() {
        assert!(FloatFormat::new("x", 0, 0, 1, true, SpecialEncoding::None).is_err());
        assert!(FloatFormat::new("x", 3, 2, 1, true, SpecialEncoding::None).is_err());
    }
}
