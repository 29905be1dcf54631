//! Text to [`WorkingReal`]: hex-float (exact), dyadic rational (exact),
//! decimal and other rationals (rounded to a working precision).

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::real::WorkingReal;

/// Default significand width for decimal literals.
pub const DEFAULT_DECIMAL_BITS: u32 = 200;

/// Decimal exponents beyond this would build absurdly large integers.
const MAX_DECIMAL_EXPONENT: i64 = 100_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedReal {
    pub value: WorkingReal,
    /// The literal was rounded to the working precision.
    pub inexact: bool,
}

fn parse_err(text: &str, reason: &str) -> Error {
    Error::Parse {
        text: text.to_string(),
        reason: reason.to_string(),
    }
}

/// Parse a real literal.
///
/// Accepted forms: `0x1.8p0` (C99 hex float), `3/8` (rational; exact when
/// the denominator is a power of two), `0.1` / `1e-3` (decimal). Inexact
/// forms are rounded to nearest-even at `decimal_working_bits` significant
/// bits and flagged.
pub fn parse_working_real(text: &str, decimal_working_bits: u32) -> Result<ParsedReal> {
    if decimal_working_bits < 64 {
        return Err(Error::Contract(format!(
            "decimal working precision must be >= 64 bits, got {decimal_working_bits}"
        )));
    }
    let t = text.trim();
    let (negative, body) = match t.as_bytes().first() {
        Some(b'-') => (true, &t[1..]),
        Some(b'+') => (false, &t[1..]),
        _ => (false, t),
    };
    if body.is_empty() {
        return Err(parse_err(text, "empty literal"));
    }
    let (mag, inexact) = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        (parse_hex(text, hex)?, false)
    } else if let Some((n, d)) = body.split_once('/') {
        let n = parse_uint(text, n)?;
        let d = parse_uint(text, d)?;
        if d.is_zero() {
            return Err(parse_err(text, "zero denominator"));
        }
        round_ratio(&n, &d, decimal_working_bits)
    } else {
        let (n, d) = parse_decimal(text, body)?;
        round_ratio(&n, &d, decimal_working_bits)
    };
    Ok(ParsedReal {
        value: mag.with_sign(negative),
        inexact,
    })
}

fn parse_uint(text: &str, digits: &str) -> Result<BigUint> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_err(text, "expected decimal digits"));
    }
    Ok(BigUint::parse_bytes(digits.as_bytes(), 10).expect("digits checked"))
}

fn parse_exponent(text: &str, s: &str) -> Result<i64> {
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_err(text, "malformed exponent"));
    }
    s.parse::<i64>()
        .map_err(|_| Error::Capacity(format!("exponent of {text:?} does not fit in 64 bits")))
}

fn parse_hex(text: &str, body: &str) -> Result<WorkingReal> {
    let (mantissa, exp) = match body.find(['p', 'P']) {
        Some(i) => (&body[..i], parse_exponent(text, &body[i + 1..])?),
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(parse_err(text, "missing hex digits"));
    }
    let digits: String = format!("{int_part}{frac_part}");
    if !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(parse_err(text, "invalid hex digit"));
    }
    let m = BigUint::parse_bytes(digits.as_bytes(), 16).expect("hex digits checked");
    let shift = 4i64
        .checked_mul(frac_part.len() as i64)
        .and_then(|s| exp.checked_sub(s))
        .ok_or_else(|| Error::Capacity(format!("exponent of {text:?} overflows")))?;
    Ok(WorkingReal::new(false, m, shift))
}

/// Decimal literal as an exact ratio `n / d`.
fn parse_decimal(text: &str, body: &str) -> Result<(BigUint, BigUint)> {
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], parse_exponent(text, &body[i + 1..])?),
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(parse_err(text, "missing digits"));
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_err(text, "invalid decimal digit"));
    }
    let m = BigUint::parse_bytes(digits.as_bytes(), 10).expect("digits checked");
    let exp10 = exp
        .checked_sub(frac_part.len() as i64)
        .filter(|e| e.abs() <= MAX_DECIMAL_EXPONENT)
        .ok_or_else(|| Error::Capacity(format!("decimal exponent of {text:?} is too large")))?;
    let pow = num_traits::pow(BigUint::from(10u32), exp10.unsigned_abs() as usize);
    Ok(if exp10 >= 0 {
        (m * pow, BigUint::one())
    } else {
        (m, pow)
    })
}

/// Round `n / d` to `bits` significant bits, nearest-even.
fn round_ratio(n: &BigUint, d: &BigUint, bits: u32) -> (WorkingReal, bool) {
    if n.is_zero() {
        return (WorkingReal::zero(), false);
    }
    // floor(log2(n/d))
    let mut top = n.bits() as i64 - d.bits() as i64;
    let below = |e: i64| {
        if e >= 0 {
            n < &(d << e as u64)
        } else {
            &(n << (-e) as u64) < d
        }
    };
    if below(top) {
        top -= 1;
    }
    let quantum = top - bits as i64 + 1;
    let (num, den) = if quantum >= 0 {
        (n.clone(), d << quantum as u64)
    } else {
        (n << (-quantum) as u64, d.clone())
    };
    let mut int = &num / &den;
    let rem = &num - &int * &den;
    let inexact = !rem.is_zero();
    let twice = &rem << 1u32;
    if twice > den || (twice == den && int.bit(0)) {
        int += 1u32;
    }
    (WorkingReal::new(false, int, quantum), inexact)
}
