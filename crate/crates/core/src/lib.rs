//! Exact emulation of stochastic rounding (SR) into reduced-precision
//! floating-point formats.
//!
//! Values are carried as exact dyadic rationals ([`WorkingReal`]); every
//! rounding kernel is a pure function of the value, the target
//! [`FloatFormat`] and the random bits it is given.

pub mod cli;
pub mod entropy;
pub mod error;
pub mod format;
pub mod grid;
pub mod harness;
pub mod oracle;
pub mod parse;
pub mod real;
pub mod rounding;
pub mod vendor;

pub use error::{Error, Result};
pub use format::{FloatFormat, FpValue, SpecialEncoding};
pub use grid::{neighbors, q_fraction, ulp, QFraction, RoundingCandidates};
pub use parse::{parse_working_real, ParsedReal};
pub use real::WorkingReal;
pub use rounding::{
    Intermediate, OverflowPolicy, P3109Kind, RandomDraw, Rounded, Rounding, RoundingMode,
    SrConfig, SrVariant,
};
