//! Rounding functions into a [`FloatFormat`].
//!
//! Every kernel works on `|x|` and reattaches the sign, so "up" inside a
//! kernel means away from zero. The exported results are always one of the
//! two rounding candidates of `x` (or `x` itself when representable), unless
//! an overflow or flush policy intervenes.

mod arith;
mod deterministic;
mod stochastic;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::entropy::BitSource;
use crate::error::{Error, Result};
use crate::format::{FloatFormat, FpValue};
use crate::grid::Split;
use crate::real::WorkingReal;

pub use arith::{exact_op, exact_op_then_round, two_stage_round, ArithOp};
pub use deterministic::round_deterministic;
pub use stochastic::{p3109_round, sr_exact, sr_limited};

/// Largest supported random-bit count; `R` must fit one machine word.
pub const MAX_RANDOM_BITS: u32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundingMode {
    /// Nearest, ties to even.
    Rne,
    /// Toward zero.
    Rz,
    /// Toward +inf.
    Ru,
    /// Toward -inf.
    Rd,
}

impl RoundingMode {
    pub fn name(self) -> &'static str {
        match self {
            RoundingMode::Rne => "rne",
            RoundingMode::Rz => "rz",
            RoundingMode::Ru => "ru",
            RoundingMode::Rd => "rd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rne" | "rn" => Ok(RoundingMode::Rne),
            "rz" | "rtz" | "truncate" => Ok(RoundingMode::Rz),
            "ru" => Ok(RoundingMode::Ru),
            "rd" => Ok(RoundingMode::Rd),
            other => Err(Error::Contract(format!("unknown rounding mode {other:?}"))),
        }
    }
}

/// The rounding used for the intermediate grid `fl_{p+r}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intermediate {
    #[default]
    Truncate,
    Rne,
}

impl Intermediate {
    pub fn name(self) -> &'static str {
        match self {
            Intermediate::Truncate => "rz",
            Intermediate::Rne => "rne",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rz" | "truncate" | "trunc" => Ok(Intermediate::Truncate),
            "rne" | "rn" => Ok(Intermediate::Rne),
            other => Err(Error::Contract(format!("unknown intermediate rounding {other:?}"))),
        }
    }

    /// The deterministic mode this degenerates to with zero random bits.
    pub fn as_mode(self) -> RoundingMode {
        match self {
            Intermediate::Truncate => RoundingMode::Rz,
            Intermediate::Rne => RoundingMode::Rne,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum P3109Kind {
    A,
    B,
    C,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverflowPolicy {
    #[default]
    Saturate,
    ToInfinity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SrVariant {
    Exact,
    Limited { r: u32, intermediate: Intermediate },
    P3109 { kind: P3109Kind, r: u32 },
}

/// A stochastic rounding configuration.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SrConfig {
    variant: SrVariant,
    overflow: OverflowPolicy,
    flush_below: Option<WorkingReal>,
}

fn check_r(r: u32) -> Result<()> {
    if r == 0 || r > MAX_RANDOM_BITS {
        Err(Error::Contract(format!("random bit count must be in 1..=64, got {r}")))
    } else {
        Ok(())
    }
}

impl SrConfig {
    pub fn exact() -> Self {
        SrConfig {
            variant: SrVariant::Exact,
            overflow: OverflowPolicy::Saturate,
            flush_below: None,
        }
    }

    pub fn limited(r: u32, intermediate: Intermediate) -> Result<Self> {
        check_r(r)?;
        Ok(SrConfig {
            variant: SrVariant::Limited { r, intermediate },
            ..SrConfig::exact()
        })
    }

    pub fn p3109(kind: P3109Kind, r: u32) -> Result<Self> {
        check_r(r)?;
        Ok(SrConfig {
            variant: SrVariant::P3109 { kind, r },
            ..SrConfig::exact()
        })
    }

    pub fn with_overflow(mut self, policy: OverflowPolicy) -> Self {
        self.overflow = policy;
        self
    }

    /// Magnitudes strictly below `threshold` become signed zero.
    pub fn with_flush_below(mut self, threshold: Option<WorkingReal>) -> Self {
        self.flush_below = threshold.map(|t| t.abs());
        self
    }

    pub fn variant(&self) -> SrVariant {
        self.variant
    }

    pub fn overflow(&self) -> OverflowPolicy {
        self.overflow
    }

    pub fn flush_below(&self) -> Option<&WorkingReal> {
        self.flush_below.as_ref()
    }

    /// Random bits per rounding for fixed-width variants.
    pub fn random_bits(&self) -> Option<u32> {
        match self.variant {
            SrVariant::Exact => None,
            SrVariant::Limited { r, .. } | SrVariant::P3109 { r, .. } => Some(r),
        }
    }

    /// Short identifier, e.g. `sr-limited-rz-r6`, `sr-c-r3`, `sr-exact`.
    pub fn label(&self) -> String {
        match self.variant {
            SrVariant::Exact => "sr-exact".into(),
            SrVariant::Limited { r, intermediate } => {
                format!("sr-limited-{}-r{r}", intermediate.name())
            }
            SrVariant::P3109 { kind, r } => format!("sr-{}-r{r}", format!("{kind:?}").to_lowercase()),
        }
    }

    fn flushes(&self, x: &WorkingReal) -> bool {
        self.flush_below
            .as_ref()
            .is_some_and(|t| x.cmp_abs(t).is_lt())
    }

    /// Round with an explicit draw (fixed-width variants only).
    pub fn round_with_draw(
        &self,
        fmt: &FloatFormat,
        x: &WorkingReal,
        draw: RandomDraw,
    ) -> Result<Rounded> {
        if self.flushes(x) {
            return Ok(Rounded::flushed(x));
        }
        let split = Split::new(fmt, x);
        let away = match self.variant {
            SrVariant::Exact => {
                return Err(Error::Contract(
                    "exact SR consumes a lazy bit stream, not a fixed draw".into(),
                ))
            }
            SrVariant::Limited { r, intermediate } => {
                draw.check(r)?;
                stochastic::limited_away(&split, x, r, intermediate, draw.value())
            }
            SrVariant::P3109 { kind, r } => {
                draw.check(r)?;
                stochastic::p3109_away(&split, kind, r, draw.value())
            }
        };
        Ok(finish_stochastic(fmt, &split, away, self.overflow))
    }

    /// Round `x`, drawing randomness from `src`.
    ///
    /// Fixed-width variants always consume exactly `r` bits, representable or
    /// not, like hardware that reads one random word per operation. Exact SR
    /// reads lazily and consumes nothing for representable `x`.
    pub fn round(
        &self,
        fmt: &FloatFormat,
        x: &WorkingReal,
        src: &mut dyn BitSource,
    ) -> Result<Rounded> {
        match self.variant {
            SrVariant::Exact => {
                if self.flushes(x) {
                    return Ok(Rounded::flushed(x));
                }
                let split = Split::new(fmt, x);
                let away = stochastic::exact_away(&split, src)?;
                Ok(finish_stochastic(fmt, &split, away, self.overflow))
            }
            SrVariant::Limited { r, .. } | SrVariant::P3109 { r, .. } => {
                let draw = RandomDraw::new(src.next_bits(r)?, r)?;
                self.round_with_draw(fmt, x, draw)
            }
        }
    }
}

impl fmt::Display for SrConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A fixed-width random integer `R ∈ [0, 2^r)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomDraw {
    value: u64,
    width: u32,
}

impl RandomDraw {
    pub fn new(value: u64, width: u32) -> Result<Self> {
        check_r(width)?;
        if width < 64 && value >> width != 0 {
            return Err(Error::Contract(format!(
                "draw {value} is out of range for {width} random bits"
            )));
        }
        Ok(RandomDraw { value, width })
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn width(self) -> u32 {
        self.width
    }

    fn check(self, r: u32) -> Result<()> {
        if self.width != r {
            return Err(Error::Contract(format!(
                "draw has {} bits, configuration expects {r}",
                self.width
            )));
        }
        Ok(())
    }
}

/// Result of a rounding plus sticky status.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rounded {
    pub value: FpValue,
    /// The chosen candidate lay beyond the largest finite value.
    pub overflow: bool,
    /// The input was flushed to signed zero.
    pub flushed: bool,
}

impl Rounded {
    fn finite(value: WorkingReal) -> Self {
        Rounded {
            value: FpValue::Finite(value),
            overflow: false,
            flushed: false,
        }
    }

    fn flushed(x: &WorkingReal) -> Self {
        Rounded {
            value: FpValue::Finite(WorkingReal::zero().with_sign(x.is_sign_negative())),
            overflow: false,
            flushed: true,
        }
    }

    /// The finite result, or a domain error for inf/NaN.
    pub fn into_real(self) -> Result<WorkingReal> {
        self.value.into_finite()
    }

    pub fn real(&self) -> Option<&WorkingReal> {
        self.value.finite()
    }
}

fn overflowed(fmt: &FloatFormat, negative: bool, to_infinity: bool) -> Rounded {
    let value = if to_infinity && fmt.has_infinity() {
        FpValue::Infinite { negative }
    } else {
        FpValue::Finite(fmt.max_finite().with_sign(negative))
    };
    Rounded {
        value,
        overflow: true,
        flushed: false,
    }
}

fn finish_stochastic(fmt: &FloatFormat, split: &Split, away: bool, policy: OverflowPolicy) -> Rounded {
    if split.exceeds_max(fmt, away) {
        overflowed(fmt, split.negative, policy == OverflowPolicy::ToInfinity)
    } else {
        Rounded::finite(split.magnitude_candidate(away))
    }
}

/// Deterministic or stochastic rounding, as chosen per experiment or call.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Rounding {
    Deterministic(RoundingMode),
    Stochastic(SrConfig),
}

impl Rounding {
    pub fn apply(
        &self,
        fmt: &FloatFormat,
        x: &WorkingReal,
        src: &mut dyn BitSource,
    ) -> Result<Rounded> {
        match self {
            Rounding::Deterministic(mode) => Ok(round_deterministic(fmt, x, *mode)),
            Rounding::Stochastic(cfg) => cfg.round(fmt, x, src),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Rounding::Deterministic(mode) => mode.name().to_string(),
            Rounding::Stochastic(cfg) => cfg.label(),
        }
    }

    /// Parse a mode label: `rne|rz|ru|rd`, `exact`/`sr-exact`,
    /// `sr-limited-{rz,rne}-rN`, `sr-{a,b,c}-rN`.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if let Ok(mode) = RoundingMode::parse(&lower) {
            return Ok(Rounding::Deterministic(mode));
        }
        let bad = || Error::Contract(format!("unknown rounding {s:?}"));
        let body = lower.strip_prefix("sr-").unwrap_or(&lower);
        if body == "exact" {
            return Ok(Rounding::Stochastic(SrConfig::exact()));
        }
        let (head, r) = body.rsplit_once("-r").ok_or_else(bad)?;
        let r: u32 = r.parse().map_err(|_| bad())?;
        let cfg = match head {
            "limited" | "limited-rz" => SrConfig::limited(r, Intermediate::Truncate)?,
            "limited-rne" => SrConfig::limited(r, Intermediate::Rne)?,
            "a" => SrConfig::p3109(P3109Kind::A, r)?,
            "b" => SrConfig::p3109(P3109Kind::B, r)?,
            "c" => SrConfig::p3109(P3109Kind::C, r)?,
            _ => return Err(bad()),
        };
        Ok(Rounding::Stochastic(cfg))
    }

    pub fn random_bits(&self) -> Option<u32> {
        match self {
            Rounding::Deterministic(_) => None,
            Rounding::Stochastic(cfg) => cfg.random_bits(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Rounding::Deterministic(_))
    }
}

/// Round a possibly non-finite value: NaN and infinities pass through when
/// `fmt` can hold them.
pub fn round_value(
    fmt: &FloatFormat,
    value: &FpValue,
    rounding: &Rounding,
    src: &mut dyn BitSource,
) -> Result<Rounded> {
    match value {
        FpValue::Finite(x) => rounding.apply(fmt, x, src),
        FpValue::Nan if fmt.has_nan() => Ok(Rounded {
            value: FpValue::Nan,
            overflow: false,
            flushed: false,
        }),
        FpValue::Infinite { negative } if fmt.has_infinity() => Ok(Rounded {
            value: FpValue::Infinite {
                negative: *negative,
            },
            overflow: false,
            flushed: false,
        }),
        other => Err(Error::Domain(format!("{other} cannot be represented in {fmt}"))),
    }
}
