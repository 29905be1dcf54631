//! C ABI for srkit.
//!
//! Objects are opaque handles created by `*_new`/`*_preset`/`*_parse`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`SrkitStatus`]; on failure the message is available from
//! [`srkit_last_error`] on the same thread. Strings are NUL-terminated UTF-8.
//! Output strings are written into caller buffers: the required size
//! (including the NUL) is always stored in `*needed`, and
//! `SRKIT_STATUS_BUFFER_TOO_SMALL` is returned when `cap` is short.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use srkit::entropy::{derive_stream, BitSource, Lfsr};
use srkit::oracle::distribution;
use srkit::rounding::{round_value, Rounded};
use srkit::vendor::{convert, profile_lookup, Entropy};
use srkit::{parse_working_real, Error, FloatFormat, FpValue, Rounding, SpecialEncoding, WorkingReal};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SrkitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Parse = 4,
    Capacity = 5,
    Overflow = 6,
    Encoding = 7,
    Decoding = 8,
    EntropyExhausted = 9,
    Contract = 10,
    Domain = 11,
    UnknownFormat = 12,
    UnknownVendor = 13,
    NotSpecified = 14,
    Budget = 15,
    Registry = 16,
    Io = 17,
    Panic = 18,
}

/// Special-value encoding for [`srkit_format_new`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SrkitSpecials {
    Ieee = 0,
    NanOnly = 1,
    None = 2,
}

/// Result flag: the chosen value lay beyond the largest finite value.
pub const SRKIT_FLAG_OVERFLOW: u32 = 1;
/// Result flag: the input was flushed to signed zero.
pub const SRKIT_FLAG_FLUSHED: u32 = 2;

/// A floating-point format.
pub struct SrkitFormat(FloatFormat);

/// A rounding mode or stochastic rounding configuration.
pub struct SrkitRounding(Rounding);

/// A random bit source.
pub struct SrkitSource(Box<dyn BitSource>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SrkitStatus {
    match e {
        Error::Parse { .. } => SrkitStatus::Parse,
        Error::Capacity(_) => SrkitStatus::Capacity,
        Error::OverflowRange { .. } => SrkitStatus::Overflow,
        Error::Encoding { .. } => SrkitStatus::Encoding,
        Error::Decoding { .. } => SrkitStatus::Decoding,
        Error::EntropyExhausted { .. } => SrkitStatus::EntropyExhausted,
        Error::Contract(_) => SrkitStatus::Contract,
        Error::Domain(_) => SrkitStatus::Domain,
        Error::UnknownFormat(_) => SrkitStatus::UnknownFormat,
        Error::UnknownVendor(_) => SrkitStatus::UnknownVendor,
        Error::NotSpecified { .. } => SrkitStatus::NotSpecified,
        Error::Budget(_) => SrkitStatus::Budget,
        Error::Registry(_) => SrkitStatus::Registry,
        Error::Io(_) => SrkitStatus::Io,
    }
}

struct Fail(SrkitStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SrkitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrkitStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SrkitStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(SrkitStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SrkitStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(SrkitStatus::NullPointer, format!("{what} is null")))
}

unsafe fn store<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(SrkitStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_str(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), Fail> {
    let bytes = s.as_bytes();
    if !needed.is_null() {
        needed.write(bytes.len() + 1);
    }
    if cap < bytes.len() + 1 || buf.is_null() {
        return Err(Fail(SrkitStatus::BufferTooSmall, format!("{} bytes needed", bytes.len() + 1)));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
    buf.add(bytes.len()).write(0);
    Ok(())
}

fn flags(r: &Rounded) -> u32 {
    (u32::from(r.overflow) * SRKIT_FLAG_OVERFLOW) | (u32::from(r.flushed) * SRKIT_FLAG_FLUSHED)
}

unsafe fn source_of<'a>(p: *mut SrkitSource) -> Result<&'a mut dyn BitSource, Fail> {
    p.as_mut()
        .map(|s| &mut *s.0 as &mut dyn BitSource)
        .ok_or_else(|| Fail(SrkitStatus::NullPointer, "source is null".into()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn srkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf`.
///
/// # Safety
/// `buf` must hold `cap` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn srkit_last_error(buf: *mut c_char, cap: usize, needed: *mut usize) -> SrkitStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().to_string_lossy().into_owned());
    match write_str(&msg, buf, cap, needed) {
        Ok(()) => SrkitStatus::Ok,
        Err(Fail(s, _)) => s,
    }
}

/// Look up a preset format by name (`binary16`, `bfloat16`, `fp8-e4m3`, ...).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn srkit_format_preset(name: *const c_char, out: *mut *mut SrkitFormat) -> SrkitStatus {
    guard(|| {
        let f = FloatFormat::preset(text(name, "name")?)?;
        store(out, Box::into_raw(Box::new(SrkitFormat(f))), "out")
    })
}

/// Define a format with `precision` significand bits and exponents
/// `emin..=emax`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn srkit_format_new(
    name: *const c_char,
    precision: u32,
    emin: i64,
    emax: i64,
    subnormals: bool,
    specials: SrkitSpecials,
    out: *mut *mut SrkitFormat,
) -> SrkitStatus {
    guard(|| {
        let specials = match specials {
            SrkitSpecials::Ieee => SpecialEncoding::Ieee,
            SrkitSpecials::NanOnly => SpecialEncoding::NanOnly,
            SrkitSpecials::None => SpecialEncoding::None,
        };
        let f = FloatFormat::new(text(name, "name")?, precision, emin, emax, subnormals, specials)?;
        store(out, Box::into_raw(Box::new(SrkitFormat(f))), "out")
    })
}

/// # Safety
/// `fmt` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn srkit_format_free(fmt: *mut SrkitFormat) {
    if !fmt.is_null() {
        drop(Box::from_raw(fmt));
    }
}

/// Significand bits including the implicit bit; 0 for a null handle.
///
/// # Safety
/// `fmt` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn srkit_format_precision(fmt: *const SrkitFormat) -> u32 {
    fmt.as_ref().map_or(0, |f| f.0.precision())
}

/// Parse a rounding label: `rne`, `rz`, `ru`, `rd`, `sr-exact`,
/// `sr-limited-rz-r6`, `sr-limited-rne-r6`, `sr-a-r3`, `sr-b-r3`, `sr-c-r3`.
///
/// # Safety
/// `label` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn srkit_rounding_parse(label: *const c_char, out: *mut *mut SrkitRounding) -> SrkitStatus {
    guard(|| {
        let r = Rounding::parse(text(label, "label")?)?;
        store(out, Box::into_raw(Box::new(SrkitRounding(r))), "out")
    })
}

/// # Safety
/// `rounding` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn srkit_rounding_free(rounding: *mut SrkitRounding) {
    if !rounding.is_null() {
        drop(Box::from_raw(rounding));
    }
}

/// xoroshiro128+ stream number `stream` under `seed`.
#[no_mangle]
pub extern "C" fn srkit_source_xoroshiro(seed: u64, stream: u64) -> *mut SrkitSource {
    Box::into_raw(Box::new(SrkitSource(Box::new(derive_stream(seed, stream)))))
}

/// Fibonacci LFSR of `width` bits with the default taps.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn srkit_source_lfsr(width: u32, seed: u64, out: *mut *mut SrkitSource) -> SrkitStatus {
    guard(|| {
        let l = Lfsr::with_default_taps(width, seed)?;
        store(out, Box::into_raw(Box::new(SrkitSource(Box::new(l)))), "out")
    })
}

/// The next `k` bits (1..=64) of a source.
///
/// # Safety
/// `src` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn srkit_source_next_bits(src: *mut SrkitSource, k: u32, out: *mut u64) -> SrkitStatus {
    guard(|| {
        let bits = source_of(src)?.next_bits(k)?;
        store(out, bits, "out")
    })
}

/// # Safety
/// `src` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn srkit_source_free(src: *mut SrkitSource) {
    if !src.is_null() {
        drop(Box::from_raw(src));
    }
}

unsafe fn round_any(
    fmt: *const SrkitFormat,
    rounding: *const SrkitRounding,
    src: *mut SrkitSource,
    x: &FpValue,
) -> Result<Rounded, Fail> {
    let fmt = handle(fmt, "format")?;
    let rounding = handle(rounding, "rounding")?;
    if rounding.0.is_deterministic() && src.is_null() {
        let mut none = srkit::entropy::ReplaySource::from_str_bits("");
        return Ok(round_value(&fmt.0, x, &rounding.0, &mut none)?);
    }
    Ok(round_value(&fmt.0, x, &rounding.0, source_of(src)?)?)
}

/// Round a double. `src` may be null for deterministic modes; `flags` may be
/// null.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn srkit_round_f64(
    fmt: *const SrkitFormat,
    rounding: *const SrkitRounding,
    src: *mut SrkitSource,
    x: f64,
    out: *mut f64,
    flags_out: *mut u32,
) -> SrkitStatus {
    guard(|| {
        let r = round_any(fmt, rounding, src, &FpValue::from_f64(x))?;
        if !flags_out.is_null() {
            flags_out.write(flags(&r));
        }
        store(out, r.value.to_f64(), "out")
    })
}

/// Round a literal (hex float, decimal or `a/b`) exactly and write the result
/// as a hex float.
///
/// # Safety
/// Handles must be live; `x` NUL-terminated; `buf` holds `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn srkit_round_str(
    fmt: *const SrkitFormat,
    rounding: *const SrkitRounding,
    src: *mut SrkitSource,
    x: *const c_char,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
    flags_out: *mut u32,
) -> SrkitStatus {
    guard(|| {
        let v = parse_working_real(text(x, "x")?, srkit::parse::DEFAULT_DECIMAL_BITS)?.value;
        let r = round_any(fmt, rounding, src, &FpValue::Finite(v))?;
        if !flags_out.is_null() {
            flags_out.write(flags(&r));
        }
        let digits = handle(fmt, "format")?.0.hex_digits();
        write_str(&r.value.to_hex_float(digits), buf, cap, needed)
    })
}

/// Bit pattern of a double that is representable in `fmt`.
///
/// # Safety
/// `fmt` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn srkit_encode_f64(fmt: *const SrkitFormat, x: f64, out: *mut u64) -> SrkitStatus {
    guard(|| {
        let bits = handle(fmt, "format")?.0.encode(&FpValue::from_f64(x))?;
        store(out, bits, "out")
    })
}

/// Value of a bit pattern as a double.
///
/// # Safety
/// `fmt` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn srkit_decode_f64(fmt: *const SrkitFormat, bits: u64, out: *mut f64) -> SrkitStatus {
    guard(|| {
        let v = handle(fmt, "format")?.0.decode(bits)?;
        store(out, v.to_f64(), "out")
    })
}

/// Convert through a built-in vendor rule, drawing bits from `src`.
/// `r_used` may be null.
///
/// # Safety
/// Strings NUL-terminated; `src` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn srkit_vendor_convert_f64(
    vendor: *const c_char,
    src_fmt: *const c_char,
    dst_fmt: *const c_char,
    src: *mut SrkitSource,
    x: f64,
    out: *mut f64,
    r_used: *mut u32,
) -> SrkitStatus {
    guard(|| {
        let dst_name = text(dst_fmt, "dst_fmt")?;
        let rule = profile_lookup(text(vendor, "vendor")?, text(src_fmt, "src_fmt")?, dst_name)?;
        let dst = rule.dst_format(Some(dst_name))?;
        let x = WorkingReal::from_f64(x)
            .ok_or_else(|| Fail(SrkitStatus::Domain, format!("{x} is not finite")))?;
        let c = convert(&rule, &dst, &x, Entropy::Stream(source_of(src)?))?;
        if !r_used.is_null() {
            r_used.write(c.r_used);
        }
        store(out, c.rounded.value.to_f64(), "out")
    })
}

/// Exact rounding distribution of a stochastic configuration as JSON
/// (rationals as `"num/den"` strings).
///
/// # Safety
/// Handles live; `x` NUL-terminated; `buf` holds `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn srkit_distribution_json(
    fmt: *const SrkitFormat,
    rounding: *const SrkitRounding,
    x: *const c_char,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> SrkitStatus {
    guard(|| {
        let fmt = handle(fmt, "format")?;
        let Rounding::Stochastic(cfg) = &handle(rounding, "rounding")?.0 else {
            return Err(Fail(SrkitStatus::Contract, "distribution needs a stochastic rounding".into()));
        };
        let v = parse_working_real(text(x, "x")?, srkit::parse::DEFAULT_DECIMAL_BITS)?.value;
        let report = distribution(&fmt.0, &v, cfg)?;
        write_str(&report.to_json().to_string(), buf, cap, needed)
    })
}
