#ifndef SPIKELAB_H
#define SPIKELAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpkStatus {
  SPK_STATUS_OK = 0,
  SPK_STATUS_NULL_POINTER = 1,
  SPK_STATUS_INVALID_UTF8 = 2,
  // Bad JSON, configuration or precondition.
  SPK_STATUS_CONFIG = 3,
  // The subordination solver or root finder failed.
  SPK_STATUS_SOLVER = 4,
  SPK_STATUS_NUMERICAL = 5,
  SPK_STATUS_PANIC = 6,
} SpkStatus;

// Values accepted for `conv_type` in `spk_pair_new`.
typedef enum SpkConvType {
  SPK_CONV_TYPE_ADDITIVE_REAL = 0,
  SPK_CONV_TYPE_MULTIPLICATIVE_POSITIVE = 1,
  SPK_CONV_TYPE_MULTIPLICATIVE_UNITARY = 2,
} SpkConvType;

// Opaque probability measure.
typedef struct SpkMeasure SpkMeasure;

// Opaque pair of measures with its subordination solver.
typedef struct SpkPair SpkPair;

typedef struct SpkComplex {
  double re;
  double im;
} SpkComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *spk_last_error_message(void);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void spk_string_free(char *s);

// Parses a measure from JSON, e.g.
// `{"kind":"semicircle","center":0,"radius":2}`.
//
// # Safety
// `json` must be a nul-terminated string; `out` must be writable.
enum SpkStatus spk_measure_from_json(const char *json, struct SpkMeasure **out);

// # Safety
// `m` must be null or a handle from `spk_measure_from_json`, not yet freed.
void spk_measure_free(struct SpkMeasure *m);

// Cauchy transform `G_μ(z)`.
//
// # Safety
// `m` must be a live measure handle; `out` must be writable.
enum SpkStatus spk_measure_cauchy(const struct SpkMeasure *m,
                                  struct SpkComplex z,
                                  struct SpkComplex *out);

// Builds a pair from two measures (copied; the inputs stay owned by the caller).
//
// # Safety
// `mu` and `nu` must be live measure handles; `out` must be writable.
enum SpkStatus spk_pair_new(uint32_t conv_type,
                            const struct SpkMeasure *mu,
                            const struct SpkMeasure *nu,
                            struct SpkPair **out);

// # Safety
// `p` must be null or a handle from `spk_pair_new`, not yet freed.
void spk_pair_free(struct SpkPair *p);

// Subordination functions `ω₁(z)`, `ω₂(z)`.
//
// # Safety
// `p` must be a live pair handle; `omega1` and `omega2` must be writable.
enum SpkStatus spk_pair_omega(const struct SpkPair *p,
                              struct SpkComplex z,
                              struct SpkComplex *omega1,
                              struct SpkComplex *omega2);

// Cauchy transform of the convolution.
//
// # Safety
// `p` must be a live pair handle; `out` must be writable.
enum SpkStatus spk_pair_cauchy(const struct SpkPair *p,
                               struct SpkComplex z,
                               struct SpkComplex *out);

// Support of the convolution as a JSON list of `[lo, hi]` intervals.
//
// # Safety
// `p` must be a live pair handle; `out` must be writable.
enum SpkStatus spk_pair_support_json(const struct SpkPair *p, char **out);

// Predicted outliers for an experiment configuration, at its largest size.
//
// # Safety
// `config_json` must be a nul-terminated string; `out` must be writable.
enum SpkStatus spk_predict_json(const char *config_json, char **out);

// One trial of a model; returns the simulation run as JSON.
//
// # Safety
// `spec_json` must be a nul-terminated string; `out` must be writable.
enum SpkStatus spk_run_trial_json(const char *spec_json, uint64_t trial, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPIKELAB_H */
