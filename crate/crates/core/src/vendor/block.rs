use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::derive_stream;
use crate::error::{Error, Result};
use crate::format::{FloatFormat, FpValue};
use crate::real::WorkingReal;
use crate::rounding::Rounding;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleFormat {
    /// Unsigned power of two, exponents -127..=127.
    E8m0,
    E4m3,
}

impl ScaleFormat {
    /// Exponent range of the power-of-two scales this format can hold.
    fn exponent_range(self) -> (i64, i64) {
        match self {
            ScaleFormat::E8m0 => (-127, 127),
            // Powers of two representable in e4m3: 2^-9 (subnormal) to 2^8.
            ScaleFormat::E4m3 => (-9, 8),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScaleFormat::E8m0 => "e8m0",
            ScaleFormat::E4m3 => "fp8-e4m3",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockFormatSpec {
    pub name: String,
    pub group_size: usize,
    pub element_fmt: FloatFormat,
    pub scale_fmt: ScaleFormat,
}

impl BlockFormatSpec {
    pub fn mxfp4() -> Self {
        BlockFormatSpec {
            name: "mxfp4".into(),
            group_size: 32,
            element_fmt: FloatFormat::preset("fp4-e2m1").expect("preset"),
            scale_fmt: ScaleFormat::E8m0,
        }
    }

    pub fn nvfp4() -> Self {
        BlockFormatSpec {
            name: "nvfp4".into(),
            group_size: 16,
            element_fmt: FloatFormat::preset("fp4-e2m1").expect("preset"),
            scale_fmt: ScaleFormat::E4m3,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "mxfp4" => Ok(Self::mxfp4()),
            "nvfp4" => Ok(Self::nvfp4()),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockQuantized {
    /// Power-of-two exponent of each group's scale.
    pub scale_exponents: Vec<i64>,
    /// Quantized elements, including any zero padding.
    pub elements: Vec<WorkingReal>,
    /// Element bit patterns in the element format.
    pub element_codes: Vec<u64>,
    /// The input length was not a multiple of the group size.
    pub padded: bool,
    pub len: usize,
    /// Some element saturated at the element format's largest value.
    pub overflow: bool,
}

impl BlockQuantized {
    pub fn scales(&self) -> Vec<WorkingReal> {
        self.scale_exponents.iter().map(|&k| WorkingReal::pow2(k)).collect()
    }

    /// `s · e` for each original (unpadded) element.
    pub fn dequantize(&self, group_size: usize) -> Vec<WorkingReal> {
        self.elements[..self.len]
            .iter()
            .enumerate()
            .map(|(i, e)| e.mul_pow2(self.scale_exponents[i / group_size]))
            .collect()
    }
}

/// Smallest `k` in range with `amax <= max_elem · 2^k`.
fn scale_exponent(amax: &WorkingReal, max_elem: &WorkingReal, (lo, hi): (i64, i64)) -> i64 {
    let Some(top) = amax.floor_log2() else {
        return lo;
    };
    let mut k = top - max_elem.floor_log2().expect("nonzero max");
    while amax.cmp_abs(&max_elem.mul_pow2(k)).is_gt() {
        k += 1;
    }
    while amax.cmp_abs(&max_elem.mul_pow2(k - 1)).is_le() {
        k -= 1;
    }
    k.clamp(lo, hi)
}

/// Quantize `values` into groups sharing a power-of-two scale.
///
/// Group `g` draws its randomness from `derive_stream(seed, g)`, so the result
/// does not depend on how groups are scheduled.
pub fn block_quantize(
    values: &[FpValue],
    spec: &BlockFormatSpec,
    rounding: &Rounding,
    seed: u64,
) -> Result<BlockQuantized> {
    if spec.group_size == 0 {
        return Err(Error::Contract("group size must be positive".into()));
    }
    let mut finite = Vec::with_capacity(values.len().next_multiple_of(spec.group_size));
    for v in values {
        match v {
            FpValue::Finite(x) => finite.push(x.clone()),
            other => return Err(Error::Domain(format!("cannot block-quantize {other}"))),
        }
    }
    let len = finite.len();
    let padded = len % spec.group_size != 0;
    finite.resize(len.next_multiple_of(spec.group_size), WorkingReal::zero());

    let elem = &spec.element_fmt;
    let max_elem = elem.max_finite();
    let groups: Vec<(i64, Vec<(WorkingReal, u64)>, bool)> = finite
        .par_chunks(spec.group_size)
        .enumerate()
        .map(|(g, group)| {
            let amax = group.iter().max_by(|a, b| a.cmp_abs(b)).expect("nonempty group").abs();
            let k = scale_exponent(&amax, &max_elem, spec.scale_fmt.exponent_range());
            let mut src = derive_stream(seed, g as u64);
            let mut overflow = false;
            let out = group
                .iter()
                .map(|x| {
                    let r = rounding.apply(elem, &x.mul_pow2(-k), &mut src)?;
                    overflow |= r.overflow;
                    let code = elem.encode(&r.value)?;
                    Ok((r.into_real()?, code))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((k, out, overflow))
        })
        .collect::<Result<_>>()?;

    let mut result = BlockQuantized {
        scale_exponents: Vec::with_capacity(groups.len()),
        elements: Vec::with_capacity(finite.len()),
        element_codes: Vec::with_capacity(finite.len()),
        padded,
        len,
        overflow: false,
    };
    for (k, out, overflow) in groups {
        result.scale_exponents.push(k);
        result.overflow |= overflow;
        for (e, code) in out {
            result.elements.push(e);
            result.element_codes.push(code);
        }
    }
    Ok(result)
}
