//! Vendor conversion profiles and microscaling block quantization.

mod block;

use serde::{Deserialize, Serialize};

use crate::entropy::{data_entropy, BitSource, DataScheme};
use crate::error::{Error, Result};
use crate::format::{FloatFormat, FpValue};
use crate::parse::{parse_working_real, DEFAULT_DECIMAL_BITS};
use crate::real::WorkingReal;
use crate::rounding::{
    round_deterministic, Intermediate, RandomDraw, Rounded, RoundingMode, SrConfig,
};

pub use block::{block_quantize, BlockFormatSpec, BlockQuantized, ScaleFormat};

const BUILTIN: &str = include_str!("profiles.json");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubnormalRule {
    #[default]
    FixedR,
    /// Add the destination subnormal's leading-zero count to `r_min`,
    /// capped at `r_max`.
    ExtendToCoverSubnormal,
}

/// Where a rule's random bits come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EntropyKind {
    /// A PRNG bit stream.
    Stream,
    /// An integer operand; its low `r` bits are used.
    Word,
    /// The least-significant bits of the source significand.
    DataLsb,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionRule {
    pub src_precision: u32,
    pub dst_precision: u32,
    pub src_formats: Vec<String>,
    pub dst_formats: Vec<String>,
    pub r_min: u32,
    pub r_max: u32,
    /// The vendor only gives an upper bound; `r_max` is used as is.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub r_is_upper_bound: bool,
    /// Round to binary32 with RNE before the stochastic step.
    #[serde(default)]
    pub intermediate_binary32: bool,
    #[serde(default)]
    pub subnormal_rule: SubnormalRule,
    /// Hex-float magnitude below which inputs flush to signed zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flush_threshold: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_word_width: Option<u32>,
    /// One random word feeds two results.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub packed_pair: bool,
    pub entropy: EntropyKind,
}

impl ConversionRule {
    fn validate(&self, vendor: &str) -> Result<()> {
        let bad = |why: String| Err(Error::Registry(format!("{vendor}: {why}")));
        if self.r_min == 0 || self.r_min > self.r_max || self.r_max > 64 {
            return bad(format!("invalid r range {}..={}", self.r_min, self.r_max));
        }
        if self.src_formats.is_empty() || self.dst_formats.is_empty() {
            return bad("rule without formats".into());
        }
        for (names, p) in [
            (&self.src_formats, self.src_precision),
            (&self.dst_formats, self.dst_precision),
        ] {
            for name in names {
                let f = FloatFormat::preset(name)
                    .map_err(|_| Error::Registry(format!("{vendor}: unknown format {name}")))?;
                if f.precision() != p {
                    return bad(format!("{name} does not have {p}-bit significands"));
                }
            }
        }
        if let Some(w) = self.random_word_width {
            if w < self.r_max || w > 64 {
                return bad(format!("random word of {w} bits cannot hold r = {}", self.r_max));
            }
        }
        if self.packed_pair && self.r_max > 16 {
            return bad("packed pairs supply at most 16 bits per result".into());
        }
        self.flush()?;
        Ok(())
    }

    /// Source format used by [`convert`] (the first listed).
    pub fn src_format(&self) -> Result<FloatFormat> {
        FloatFormat::preset(&self.src_formats[0])
    }

    /// The rule's destination, or the named one if the rule covers it.
    pub fn dst_format(&self, name: Option<&str>) -> Result<FloatFormat> {
        match name {
            None => FloatFormat::preset(&self.dst_formats[0]),
            Some(n) => {
                let f = FloatFormat::preset(n)?;
                if self.dst_formats.iter().any(|d| d == f.name()) {
                    Ok(f)
                } else {
                    Err(Error::Contract(format!(
                        "rule does not convert to {n} (covers {})",
                        self.dst_formats.join(", ")
                    )))
                }
            }
        }
    }

    pub fn flush(&self) -> Result<Option<WorkingReal>> {
        self.flush_threshold
            .as_deref()
            .map(|t| parse_working_real(t, DEFAULT_DECIMAL_BITS).map(|p| p.value.abs()))
            .transpose()
    }

    /// Random bits used for a (stage-one) value `y` rounded into `dst`.
    pub fn effective_r(&self, dst: &FloatFormat, y: &WorkingReal) -> u32 {
        match self.subnormal_rule {
            SubnormalRule::FixedR => self.r_max,
            SubnormalRule::ExtendToCoverSubnormal => {
                let deficit = match y.floor_log2() {
                    Some(top) if top < dst.emin() => (dst.emin() - top) as u64,
                    _ => 0,
                };
                (self.r_min as u64 + deficit).min(self.r_max as u64) as u32
            }
        }
    }

    /// `13-24`-style text for listings.
    pub fn r_label(&self) -> String {
        match (self.r_min == self.r_max, self.r_is_upper_bound) {
            (true, true) => format!("up to {}", self.r_max),
            (true, false) => self.r_max.to_string(),
            _ => format!("{}-{}", self.r_min, self.r_max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VendorProfile {
    pub vendor: String,
    pub display_name: String,
    /// False for vendors described only in prose, not in the comparison table.
    #[serde(default = "yes")]
    pub in_table: bool,
    #[serde(default)]
    pub notes: Vec<String>,
    pub rules: Vec<ConversionRule>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    pub profiles: Vec<VendorProfile>,
}

impl Registry {
    /// The registry shipped with the library.
    pub fn builtin() -> Registry {
        Registry::from_json(BUILTIN).expect("built-in registry is valid")
    }

    pub fn from_json(text: &str) -> Result<Registry> {
        let reg: Registry =
            serde_json::from_str(text).map_err(|e| Error::Registry(e.to_string()))?;
        for p in &reg.profiles {
            for rule in &p.rules {
                rule.validate(&p.vendor)?;
            }
        }
        Ok(reg)
    }

    pub fn load(path: &std::path::Path) -> Result<Registry> {
        Registry::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("registry serializes")
    }

    pub fn vendor(&self, name: &str) -> Result<&VendorProfile> {
        self.profiles
            .iter()
            .find(|p| p.vendor.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::UnknownVendor(name.to_string()))
    }

    /// Rule for `(vendor, src, dst)`. Formats are preset names or `pN`
    /// significand widths.
    pub fn lookup(&self, vendor: &str, src: &str, dst: &str) -> Result<&ConversionRule> {
        let profile = self.vendor(vendor)?;
        let src_sel = FormatSelector::parse(src)?;
        let dst_sel = FormatSelector::parse(dst)?;
        profile
            .rules
            .iter()
            .find(|r| {
                src_sel.matches(r.src_precision, &r.src_formats)
                    && dst_sel.matches(r.dst_precision, &r.dst_formats)
            })
            .ok_or_else(|| Error::NotSpecified {
                vendor: profile.vendor.clone(),
                src: src.to_string(),
                dst: dst.to_string(),
            })
    }
}

enum FormatSelector {
    Precision(u32),
    Name(String),
}

impl FormatSelector {
    fn parse(s: &str) -> Result<Self> {
        if let Some(p) = s.strip_prefix(['p', 'P']).and_then(|d| d.parse().ok()) {
            return Ok(FormatSelector::Precision(p));
        }
        Ok(FormatSelector::Name(FloatFormat::preset(s)?.name().to_string()))
    }

    fn matches(&self, precision: u32, names: &[String]) -> bool {
        match self {
            FormatSelector::Precision(p) => *p == precision,
            FormatSelector::Name(n) => names.iter().any(|m| m == n),
        }
    }
}

/// Look up a rule in the built-in registry.
pub fn profile_lookup(vendor: &str, src: &str, dst: &str) -> Result<ConversionRule> {
    Registry::builtin().lookup(vendor, src, dst).cloned()
}

/// Random bits handed to a conversion.
pub enum Entropy<'a> {
    Stream(&'a mut dyn BitSource),
    /// A raw integer operand; the low `r` bits are used.
    Word(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conversion {
    pub rounded: Rounded,
    /// Random bits consumed (0 for flushed inputs).
    pub r_used: u32,
}

/// Convert `x` under `rule` into `dst`.
///
/// `x` is first placed in the rule's source format with RNE (after the
/// binary32 stage when the rule has one). The flush threshold is tested on
/// that value.
pub fn convert(
    rule: &ConversionRule,
    dst: &FloatFormat,
    x: &WorkingReal,
    entropy: Entropy<'_>,
) -> Result<Conversion> {
    rule.dst_format(Some(dst.name()))?;
    let src = rule.src_format()?;
    let mut y = x.clone();
    if rule.intermediate_binary32 {
        y = stage(&FloatFormat::preset("binary32")?, &y)?;
    }
    y = stage(&src, &y)?;
    if let Some(t) = rule.flush()? {
        if y.cmp_abs(&t).is_lt() {
            let cfg = SrConfig::exact().with_flush_below(Some(t));
            let mut none = crate::entropy::ReplaySource::from_str_bits("");
            return Ok(Conversion {
                rounded: cfg.round(dst, &y, &mut none)?,
                r_used: 0,
            });
        }
    }
    let r = rule.effective_r(dst, &y);
    let draw = match rule.entropy {
        EntropyKind::DataLsb => {
            let code = src.encode(&FpValue::Finite(y.clone()))?;
            let field = src.precision() - 1;
            data_entropy(code, field, r, DataScheme::Lsb)?
        }
        _ => match entropy {
            Entropy::Stream(s) => s.next_bits(r)?,
            Entropy::Word(w) => {
                let width = rule.random_word_width.unwrap_or(64);
                if width < 64 && w >> width != 0 {
                    return Err(Error::Contract(format!(
                        "random word {w:#x} is wider than {width} bits"
                    )));
                }
                if r >= 64 { w } else { w & ((1u64 << r) - 1) }
            }
        },
    };
    let cfg = SrConfig::limited(r, Intermediate::Truncate)?;
    Ok(Conversion {
        rounded: cfg.round_with_draw(dst, &y, RandomDraw::new(draw, r)?)?,
        r_used: r,
    })
}

fn stage(fmt: &FloatFormat, x: &WorkingReal) -> Result<WorkingReal> {
    match round_deterministic(fmt, x, RoundingMode::Rne).value {
        FpValue::Finite(v) => Ok(v),
        _ => Err(Error::OverflowRange {
            format: fmt.name().to_string(),
            value: x.to_string(),
        }),
    }
}

/// Convert two values with one 32-bit random word: `x1` takes the low 16
/// bits, `x2` the high 16 bits.
pub fn convert_packed_pair(
    rule: &ConversionRule,
    dst: &FloatFormat,
    x1: &WorkingReal,
    x2: &WorkingReal,
    random_word: u32,
) -> Result<(Conversion, Conversion)> {
    if !rule.packed_pair || rule.random_word_width != Some(32) {
        return Err(Error::Contract("rule has no packed-pair form".into()));
    }
    let lo = (random_word & 0xFFFF) as u64;
    let hi = (random_word >> 16) as u64;
    Ok((
        convert(rule, dst, x1, Entropy::Word(lo))?,
        convert(rule, dst, x2, Entropy::Word(hi))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{derive_stream, ReplaySource};
    use crate::rounding::sr_limited;

    /// Checked-in copy of the comparison table: (vendor, column, r range).
    const TABLE: &[(&str, (u32, u32), Option<(u32, u32)>)] = &[
        ("graphcore", (24, 11), Some((13, 24))),
        ("graphcore", (24, 8), None),
        ("graphcore", (24, 4), None),
        ("graphcore", (24, 3), None),
        ("graphcore", (11, 4), Some((7, 11))),
        ("graphcore", (11, 3), Some((8, 11))),
        ("nvidia-blackwell", (24, 11), Some((13, 13))),
        ("nvidia-blackwell", (24, 8), Some((16, 16))),
        ("nvidia-blackwell", (24, 4), Some((16, 16))),
        ("nvidia-blackwell", (24, 3), Some((16, 16))),
        ("nvidia-blackwell", (11, 4), None),
        ("nvidia-blackwell", (11, 3), None),
        ("amd-mi300", (24, 11), None),
        ("amd-mi300", (24, 8), None),
        ("amd-mi300", (24, 4), Some((20, 20))),
        ("amd-mi300", (24, 3), Some((21, 21))),
        ("amd-mi300", (11, 4), None),
        ("amd-mi300", (11, 3), None),
        ("intel-patent", (24, 11), Some((13, 13))),
        ("intel-patent", (24, 8), Some((16, 16))),
        ("intel-patent", (24, 4), None),
        ("intel-patent", (24, 3), Some((21, 21))),
        ("intel-patent", (11, 4), None),
        ("intel-patent", (11, 3), Some((8, 8))),
    ];

    fn v(x: f64) -> WorkingReal {
        WorkingReal::from_f64(x).unwrap()
    }

    fn f(name: &str) -> FloatFormat {
        FloatFormat::preset(name).unwrap()
    }

    #[test]
    fn registry_matches_table() {
        let reg = Registry::builtin();
        for &(vendor, (sp, dp), cell) in TABLE {
            let got = reg.lookup(vendor, &format!("p{sp}"), &format!("p{dp}"));
            match cell {
                Some((lo, hi)) => {
                    let rule = got.unwrap();
                    assert_eq!((rule.r_min, rule.r_max), (lo, hi), "{vendor} {sp}->{dp}");
                }
                None => assert!(matches!(got, Err(Error::NotSpecified { .. })), "{vendor} {sp}->{dp}"),
            }
        }
        let table_rules: usize = reg
            .profiles
            .iter()
            .filter(|p| p.in_table)
            .map(|p| p.rules.len())
            .sum();
        assert_eq!(table_rules, TABLE.iter().filter(|t| t.2.is_some()).count());
    }

    #[test]
    fn lookup_examples() {
        let g = profile_lookup("graphcore", "p24", "p11").unwrap();
        assert_eq!((g.r_min, g.r_max), (13, 24));
        assert_eq!(g.subnormal_rule, SubnormalRule::ExtendToCoverSubnormal);
        assert_eq!(profile_lookup("AMD-MI300", "binary32", "fp8-e4m3").unwrap().r_max, 20);
        assert!(matches!(
            profile_lookup("nvidia-blackwell", "p11", "p4"),
            Err(Error::NotSpecified { .. })
        ));
        assert!(matches!(profile_lookup("acme", "p24", "p11"), Err(Error::UnknownVendor(_))));
        assert_eq!(profile_lookup("huawei", "p24", "p3").unwrap().entropy, EntropyKind::DataLsb);
        assert_eq!(profile_lookup("nvidia-blackwell", "p24", "fp6-e2m3").unwrap().r_label(), "up to 16");
    }

    #[test]
    fn registry_validation() {
        let mut reg = Registry::builtin();
        reg.profiles[0].rules[0].r_min = 30;
        assert!(matches!(Registry::from_json(&reg.to_json()), Err(Error::Registry(_))));
        assert!(Registry::from_json("{").is_err());
        let round_trip = Registry::from_json(&Registry::builtin().to_json()).unwrap();
        assert_eq!(round_trip, Registry::builtin());
    }

    #[test]
    fn graphcore_flush() {
        let rule = profile_lookup("graphcore", "p24", "p11").unwrap();
        let mut src = derive_stream(1, 1);
        let out = convert(&rule, &f("binary16"), &WorkingReal::pow2(-26), Entropy::Stream(&mut src)).unwrap();
        assert!(out.rounded.flushed);
        assert_eq!(out.rounded.value, FpValue::Finite(WorkingReal::zero()));
        assert_eq!(src.draws_consumed(), 0);
        let out = convert(&rule, &f("binary16"), &-WorkingReal::pow2(-26), Entropy::Word(0)).unwrap();
        assert_eq!(out.rounded.value, FpValue::Finite(WorkingReal::negative_zero()));
        let out = convert(&rule, &f("binary16"), &WorkingReal::pow2(-25), Entropy::Word(0)).unwrap();
        assert!(!out.rounded.flushed);
    }

    #[test]
    fn graphcore_bits_cover_the_subnormal_range() {
        let rule = profile_lookup("graphcore", "p24", "p11").unwrap();
        let dst = f("binary16");
        for top in -25..=0i64 {
            let x = &WorkingReal::pow2(top) + &WorkingReal::pow2(top - 23);
            let mut src = derive_stream(9, top as u64);
            let out = convert(&rule, &dst, &x, Entropy::Stream(&mut src)).unwrap();
            let deficit = (-14 - top).max(0) as u32;
            assert_eq!(out.r_used, (13 + deficit).min(24), "2^{top}");
            assert_eq!(src.draws_consumed(), out.r_used as u64);
        }
    }

    #[test]
    fn amd_matches_limited_sr_at_reduced_r() {
        let mut rule = profile_lookup("amd-mi300", "p24", "p4").unwrap();
        rule.r_min = 6;
        rule.r_max = 6;
        let dst = f("fp8-e4m3");
        let x = v(3.3f32 as f64);
        for d in 0..64u64 {
            let got = convert(&rule, &dst, &x, Entropy::Word(d)).unwrap().rounded;
            let want = sr_limited(&dst, &x, 6, Intermediate::Truncate, d).unwrap();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn word_entropy_is_deterministic_and_uses_low_bits() {
        let rule = profile_lookup("amd-mi300", "binary32", "fp8-e4m3").unwrap();
        let dst = f("fp8-e4m3");
        let x = v(0.3f32 as f64);
        let a = convert(&rule, &dst, &x, Entropy::Word(0xDEAD_BEEF)).unwrap();
        let b = convert(&rule, &dst, &x, Entropy::Word(0xDEAD_BEEF)).unwrap();
        assert_eq!(a, b);
        let c = convert(&rule, &dst, &x, Entropy::Word(0xDEAD_BEEF & 0xF_FFFF)).unwrap();
        assert_eq!(a, c);
        assert!(convert(&rule, &dst, &x, Entropy::Word(1 << 32)).is_err());
        assert!(convert(&rule, &f("fp8-e5m2"), &x, Entropy::Word(0)).is_err());
    }

    #[test]
    fn packed_pair_halves() {
        let rule = profile_lookup("nvidia-blackwell", "p24", "p4").unwrap();
        let dst = f("fp8-e4m3");
        let x = &v(1.0) + &WorkingReal::pow2(-10);
        let (a, b) = convert_packed_pair(&rule, &dst, &x, &x, 0xFFFF_0000).unwrap();
        assert_eq!(a.rounded.value.to_f64(), 1.0);
        assert_eq!(b.rounded.value.to_f64(), 1.125);
        let (a, b) = convert_packed_pair(&rule, &dst, &x, &x, 0x1234_1234).unwrap();
        assert_eq!(a, b);
        let amd = profile_lookup("amd-mi300", "p24", "p4").unwrap();
        assert!(convert_packed_pair(&amd, &dst, &x, &x, 0).is_err());
    }

    #[test]
    fn packed_slot_matches_single_convert() {
        let rule = profile_lookup("nvidia-blackwell", "p24", "p3").unwrap();
        let dst = f("fp8-e5m2");
        let x = v(0.7f32 as f64);
        for half in [0u32, 1, 0x7FFF, 0xFFFF, 0x1357] {
            let (a, b) = convert_packed_pair(&rule, &dst, &x, &x, half | (half << 16)).unwrap();
            let single = convert(&rule, &dst, &x, Entropy::Word(half as u64)).unwrap();
            assert_eq!(a, single);
            assert_eq!(b, single);
        }
    }

    #[test]
    fn huawei_draws_from_the_data() {
        let rule = profile_lookup("huawei", "binary32", "fp8-e5m2").unwrap();
        let dst = f("fp8-e5m2");
        let x = v(1.2345f32 as f64);
        let mut none = ReplaySource::from_str_bits("");
        let a = convert(&rule, &dst, &x, Entropy::Stream(&mut none)).unwrap();
        let b = convert(&rule, &dst, &x, Entropy::Word(0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.r_used, 14);
        let bits = f("binary32").encode(&FpValue::Finite(x.clone())).unwrap();
        let draw = bits & 0x3FFF;
        let want = sr_limited(&dst, &x, 14, Intermediate::Truncate, draw).unwrap();
        assert_eq!(a.rounded, want);
    }

    #[test]
    fn convert_confinement() {
        let reg = Registry::builtin();
        let mut src = derive_stream(5, 5);
        for p in &reg.profiles {
            for rule in &p.rules {
                for dst_name in &rule.dst_formats {
                    let dst = f(dst_name);
                    for x in [0.1, -2.5, 1e-6, 3.0e-3, 0.0] {
                        let x = v(x);
                        let out = convert(rule, &dst, &x, Entropy::Stream(&mut src)).unwrap();
                        let got = out.rounded.into_real().unwrap();
                        assert!(dst.is_representable(&got), "{} {dst_name}", p.vendor);
                    }
                }
            }
        }
    }
}
