/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SRKIT_H
#define SRKIT_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result flag: the chosen value lay beyond the largest finite value.
 */
#define SRKIT_FLAG_OVERFLOW 1

/**
 * Result flag: the input was flushed to signed zero.
 */
#define SRKIT_FLAG_FLUSHED 2

/**
 * Result code of every fallible call.
 */
typedef enum SrkitStatus {
  SRKIT_STATUS_OK = 0,
  SRKIT_STATUS_NULL_POINTER = 1,
  SRKIT_STATUS_INVALID_UTF8 = 2,
  SRKIT_STATUS_BUFFER_TOO_SMALL = 3,
  SRKIT_STATUS_PARSE = 4,
  SRKIT_STATUS_CAPACITY = 5,
  SRKIT_STATUS_OVERFLOW = 6,
  SRKIT_STATUS_ENCODING = 7,
  SRKIT_STATUS_DECODING = 8,
  SRKIT_STATUS_ENTROPY_EXHAUSTED = 9,
  SRKIT_STATUS_CONTRACT = 10,
  SRKIT_STATUS_DOMAIN = 11,
  SRKIT_STATUS_UNKNOWN_FORMAT = 12,
  SRKIT_STATUS_UNKNOWN_VENDOR = 13,
  SRKIT_STATUS_NOT_SPECIFIED = 14,
  SRKIT_STATUS_BUDGET = 15,
  SRKIT_STATUS_REGISTRY = 16,
  SRKIT_STATUS_IO = 17,
  SRKIT_STATUS_PANIC = 18,
} SrkitStatus;

/**
 * Special-value encoding for [`srkit_format_new`].
 */
typedef enum SrkitSpecials {
  SRKIT_SPECIALS_IEEE = 0,
  SRKIT_SPECIALS_NAN_ONLY = 1,
  SRKIT_SPECIALS_NONE = 2,
} SrkitSpecials;

/**
 * A floating-point format.
 */
typedef struct SrkitFormat SrkitFormat;

/**
 * A rounding mode or stochastic rounding configuration.
 */
typedef struct SrkitRounding SrkitRounding;

/**
 * A random bit source.
 */
typedef struct SrkitSource SrkitSource;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *srkit_version(void);

/**
 * Copy the calling thread's last error message into `buf`.
 *
 * # Safety
 * `buf` must hold `cap` bytes; `needed` may be null.
 */
enum SrkitStatus srkit_last_error(char *buf, size_t cap, size_t *needed);

/**
 * Look up a preset format by name (`binary16`, `bfloat16`, `fp8-e4m3`, ...).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` writable.
 */
enum SrkitStatus srkit_format_preset(const char *name, struct SrkitFormat **out);

/**
 * Define a format with `precision` significand bits and exponents
 * `emin..=emax`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` writable.
 */
enum SrkitStatus srkit_format_new(const char *name,
                                  uint32_t precision,
                                  int64_t emin,
                                  int64_t emax,
                                  bool subnormals,
                                  enum SrkitSpecials specials,
                                  struct SrkitFormat **out);

/**
 * # Safety
 * `fmt` must come from this library and not be used afterwards.
 */
void srkit_format_free(struct SrkitFormat *fmt);

/**
 * Significand bits including the implicit bit; 0 for a null handle.
 *
 * # Safety
 * `fmt` must be null or a live handle.
 */
uint32_t srkit_format_precision(const struct SrkitFormat *fmt);

/**
 * Parse a rounding label: `rne`, `rz`, `ru`, `rd`, `sr-exact`,
 * `sr-limited-rz-r6`, `sr-limited-rne-r6`, `sr-a-r3`, `sr-b-r3`, `sr-c-r3`.
 *
 * # Safety
 * `label` must be a NUL-terminated string and `out` writable.
 */
enum SrkitStatus srkit_rounding_parse(const char *label, struct SrkitRounding **out);

/**
 * # Safety
 * `rounding` must come from this library and not be used afterwards.
 */
void srkit_rounding_free(struct SrkitRounding *rounding);

/**
 * xoroshiro128+ stream number `stream` under `seed`.
 */
struct SrkitSource *srkit_source_xoroshiro(uint64_t seed, uint64_t stream);

/**
 * Fibonacci LFSR of `width` bits with the default taps.
 *
 * # Safety
 * `out` must be writable.
 */
enum SrkitStatus srkit_source_lfsr(uint32_t width, uint64_t seed, struct SrkitSource **out);

/**
 * The next `k` bits (1..=64) of a source.
 *
 * # Safety
 * `src` must be a live handle and `out` writable.
 */
enum SrkitStatus srkit_source_next_bits(struct SrkitSource *src, uint32_t k, uint64_t *out);

/**
 * # Safety
 * `src` must come from this library and not be used afterwards.
 */
void srkit_source_free(struct SrkitSource *src);

/**
 * Round a double. `src` may be null for deterministic modes; `flags` may be
 * null.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum SrkitStatus srkit_round_f64(const struct SrkitFormat *fmt,
                                 const struct SrkitRounding *rounding,
                                 struct SrkitSource *src,
                                 double x,
                                 double *out,
                                 uint32_t *flags_out);

/**
 * Round a literal (hex float, decimal or `a/b`) exactly and write the result
 * as a hex float.
 *
 * # Safety
 * Handles must be live; `x` NUL-terminated; `buf` holds `cap` bytes.
 */
enum SrkitStatus srkit_round_str(const struct SrkitFormat *fmt,
                                 const struct SrkitRounding *rounding,
                                 struct SrkitSource *src,
                                 const char *x,
                                 char *buf,
                                 size_t cap,
                                 size_t *needed,
                                 uint32_t *flags_out);

/**
 * Bit pattern of a double that is representable in `fmt`.
 *
 * # Safety
 * `fmt` must be live; `out` writable.
 */
enum SrkitStatus srkit_encode_f64(const struct SrkitFormat *fmt, double x, uint64_t *out);

/**
 * Value of a bit pattern as a double.
 *
 * # Safety
 * `fmt` must be live; `out` writable.
 */
enum SrkitStatus srkit_decode_f64(const struct SrkitFormat *fmt, uint64_t bits, double *out);

/**
 * Convert through a built-in vendor rule, drawing bits from `src`.
 * `r_used` may be null.
 *
 * # Safety
 * Strings NUL-terminated; `src` live; `out` writable.
 */
enum SrkitStatus srkit_vendor_convert_f64(const char *vendor,
                                          const char *src_fmt,
                                          const char *dst_fmt,
                                          struct SrkitSource *src,
                                          double x,
                                          double *out,
                                          uint32_t *r_used);

/**
 * Exact rounding distribution of a stochastic configuration as JSON
 * (rationals as `"num/den"` strings).
 *
 * # Safety
 * Handles live; `x` NUL-terminated; `buf` holds `cap` bytes.
 */
enum SrkitStatus srkit_distribution_json(const struct SrkitFormat *fmt,
                                         const struct SrkitRounding *rounding,
                                         const char *x,
                                         char *buf,
                                         size_t cap,
                                         size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SRKIT_H */
