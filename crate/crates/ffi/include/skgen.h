#ifndef SKGEN_H
#define SKGEN_H

/* Generated by cbindgen from skgen-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every entry point.
typedef enum SkStatus {
  SK_OK = 0,
  // Structurally invalid arguments (shapes, indices, bad UTF-8).
  SK_USAGE = 1,
  // Input data failed validation.
  SK_VALIDATION = 2,
  // A memory or enumeration budget was exceeded.
  SK_RESOURCE = 3,
  // A required pointer argument was null.
  SK_NULL_ARGUMENT = 4,
  // Internal panic; the handle state is unchanged.
  SK_PANIC = 5,
} SkStatus;

// Opaque auxiliary-scheme handle (U-channel plus per-receiver S-channels).
typedef struct SkAux SkAux;

// Opaque source handle (joint pmf over Z and the receiver sources).
typedef struct SkSource SkSource;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null after a
// success. The pointer stays valid until the next call on the same thread.
const char *sk_last_error(void);

// Library version as a static NUL-terminated string.
const char *sk_version(void);

// Parses a source JSON document into a new handle. The caller owns the
// result and must release it with [`sk_source_free`].
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum SkStatus sk_source_parse_json(const char *json, struct SkSource **out);

// Releases a source handle; null is ignored.
//
// # Safety
// `source` must come from [`sk_source_parse_json`] and not be used after.
void sk_source_free(struct SkSource *source);

// Number of receivers m, or -1 for a null handle.
//
// # Safety
// `source` must be a live handle or null.
int32_t sk_source_receivers(const struct SkSource *source);

// Parses an auxiliary-scheme JSON document against a source's shapes.
//
// # Safety
// `json` must be NUL-terminated; `source` a live handle; `out` valid.
enum SkStatus sk_aux_parse_json(const char *json,
                                const struct SkSource *source,
                                struct SkAux **out);

// Releases an auxiliary-scheme handle; null is ignored.
//
// # Safety
// `aux` must come from [`sk_aux_parse_json`] and not be used after.
void sk_aux_free(struct SkAux *aux);

// Key rate with unconstrained communication (nats).
//
// # Safety
// `source` must be a live handle and `out` a valid pointer.
enum SkStatus sk_unconstrained_capacity(const struct SkSource *source, double *out);

// Extreme point of the general achievable region for a scheme. Writes the
// key rate and m communication rates (nats).
//
// # Safety
// Handles must be live; `comm_rates` must have room for m doubles.
enum SkStatus sk_region_point(const struct SkSource *source,
                              const struct SkAux *aux,
                              double *key_rate,
                              double *comm_rates);

// Seeded search for the best key rate under per-receiver budgets (nats).
// Writes the achieved key rate and communication rates.
//
// # Safety
// `budgets` must hold `budget_count` doubles; outputs as in
// [`sk_region_point`].
enum SkStatus sk_maximize_key_rate(const struct SkSource *source,
                                   const double *budgets,
                                   size_t budget_count,
                                   uint64_t restarts,
                                   uint64_t iterations,
                                   uint64_t seed,
                                   double *key_rate,
                                   double *comm_rates);

// One-shot achievability bounds at blocklength n: writes m error bounds
// (clamped to [0,1]) and m secrecy bounds (nats, unclamped).
//
// # Safety
// Size arrays must hold the stated counts; each output must have room for
// m doubles.
enum SkStatus sk_one_shot_bounds(const struct SkSource *source,
                                 const struct SkAux *aux,
                                 const uint64_t *i_sizes,
                                 size_t i_count,
                                 const uint64_t *j_sizes,
                                 size_t j_count,
                                 size_t n,
                                 double *error_bounds,
                                 double *secrecy_bounds);

// Zero-rate converse: lower bound on half the total variation between the
// receivers' key law and the equal-uniform ideal. May be negative.
//
// # Safety
// `w_sizes` and `p` must hold `count` entries; `out` must be valid.
enum SkStatus sk_zero_rate_tv_bound(uint64_t key_size,
                                    const uint64_t *w_sizes,
                                    const double *p,
                                    size_t count,
                                    double *out);

// Degradation margin ln k - sum (1/p_l)(ln k - ln w_l), nats.
//
// # Safety
// `w_sizes` and `p` must hold `count` entries; `out` must be valid.
enum SkStatus sk_zero_rate_margin(double key_size,
                                  const double *w_sizes,
                                  const double *p,
                                  size_t count,
                                  double *out);

// Strong data-processing coefficient of the (X_1, X_2) pair of a two
// receiver source, via the seeded search.
//
// # Safety
// `source` must be a live handle and `out` a valid pointer.
enum SkStatus sk_sdpi_coefficient(const struct SkSource *source,
                                  uint64_t restarts,
                                  uint64_t iterations,
                                  uint64_t seed,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKGEN_H */
