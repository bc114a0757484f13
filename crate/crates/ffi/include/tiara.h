#ifndef TIARA_H
#define TIARA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum TiaraStatus {
  TIARA_STATUS_OK = 0,
  TIARA_STATUS_NULL_POINTER = 1,
  TIARA_STATUS_DOMAIN = 2,
  TIARA_STATUS_SHAPE = 3,
  TIARA_STATUS_PARSE = 4,
  TIARA_STATUS_ALIGNMENT = 5,
  TIARA_STATUS_CONFIG = 6,
  TIARA_STATUS_ASSUMPTION_VIOLATED = 7,
  TIARA_STATUS_FORMAT = 8,
  TIARA_STATUS_IO = 9,
  TIARA_STATUS_PANIC = 10,
} TiaraStatus;

typedef enum TiaraWindowKind {
  TIARA_WINDOW_KIND_RECTANGULAR = 0,
  TIARA_WINDOW_KIND_HANN = 1,
  TIARA_WINDOW_KIND_GAUSSIAN = 2,
  TIARA_WINDOW_KIND_BLACKMAN = 3,
} TiaraWindowKind;

// Opaque multi-prompt schedule handle.
typedef struct TiaraBlendSchedule TiaraBlendSchedule;

// Opaque window handle.
typedef struct TiaraWindow TiaraWindow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *tiara_last_error_message(void);

// # Safety
// `out` must be valid for one write.
enum TiaraStatus tiara_window_new(enum TiaraWindowKind kind,
                                  size_t length,
                                  struct TiaraWindow **out);

// # Safety
// `window` must come from [`tiara_window_new`] and not be used afterwards.
void tiara_window_free(struct TiaraWindow *window);

// Window length, 0 for a null handle.
//
// # Safety
// `window` must be null or a live handle.
size_t tiara_window_len(const struct TiaraWindow *window);

// Copy the coefficients into `out`, which holds `capacity` values.
//
// # Safety
// `out` must be valid for `capacity` writes.
enum TiaraStatus tiara_window_coefficients(const struct TiaraWindow *window,
                                           double *out,
                                           size_t capacity);

// One DSTFT coefficient of `x[0..n]` at shift `m`, frequency `k`.
//
// # Safety
// `x` must hold `n` values; `re` and `im` must be valid for one write.
enum TiaraStatus tiara_dstft(const double *x,
                             size_t n,
                             const struct TiaraWindow *window,
                             int64_t m,
                             size_t k,
                             double *re,
                             double *im);

// Motion intensity of attention row `row[0..n]` at frame `i`. A band with
// `phi1 == 0 && phi2 == 0` selects the default for the padded row length.
//
// # Safety
// `row` must hold `n` values; `out` must be valid for one write.
enum TiaraStatus tiara_motion_intensity(const double *row,
                                        size_t n,
                                        const struct TiaraWindow *window,
                                        size_t i,
                                        size_t phi1,
                                        size_t phi2,
                                        double *out);

// Reweight one location: `logits` is `n x n`, `values` and `out_values`
// are `n x channels`, `out_attention` (nullable) is `n x n`. A negative
// `corner_size` or NaN `corner_penalty` selects the default.
//
// # Safety
// Buffers must hold the sizes above.
enum TiaraStatus tiara_reweight(const double *logits,
                                const double *values,
                                size_t n,
                                size_t channels,
                                const struct TiaraWindow *window,
                                double alpha,
                                int64_t corner_size,
                                double corner_penalty,
                                double *out_values,
                                double *out_attention);

// High-frequency inconsistency of `x[0..n]` at shift `tau`, summing bins
// `k_threshold..=n/2`.
//
// # Safety
// `x` must hold `n` values; `out` must be valid for one write.
enum TiaraStatus tiara_inconsistency_error(const double *x,
                                           size_t n,
                                           const struct TiaraWindow *window,
                                           int64_t tau,
                                           size_t k_threshold,
                                           double *out);

// Reweighting strength that reaches reduction factor `eta`.
//
// # Safety
// `out` must be valid for one write.
enum TiaraStatus tiara_alpha_from_closed_form(double kappa, double eta, double a_min, double *out);

// `spans` holds `count` closed `[start, end]` pairs as `2 * count` values.
//
// # Safety
// `spans` must hold `2 * count` values; `out` must be valid for one write.
enum TiaraStatus tiara_schedule_new(const size_t *spans,
                                    size_t count,
                                    double t1,
                                    double t2,
                                    size_t layer_threshold,
                                    struct TiaraBlendSchedule **out);

// # Safety
// `schedule` must come from [`tiara_schedule_new`] and not be used afterwards.
void tiara_schedule_free(struct TiaraBlendSchedule *schedule);

// Frames covered by the schedule, 0 for a null handle.
//
// # Safety
// `schedule` must be null or a live handle.
size_t tiara_schedule_total_frames(const struct TiaraBlendSchedule *schedule);

// Conditioning for frame `n` at timestep `t` and layer `layer`.
// `embedded` holds `prompts` aligned embeddings of `length x dim` each,
// back to back; `out` receives `length x dim` values.
//
// # Safety
// Buffers must hold the sizes above.
enum TiaraStatus tiara_conditioning(const struct TiaraBlendSchedule *schedule,
                                    const double *embedded,
                                    size_t prompts,
                                    size_t length,
                                    size_t dim,
                                    size_t n,
                                    double t,
                                    size_t layer,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIARA_H */
