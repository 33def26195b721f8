#ifndef REXCESS_H
#define REXCESS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RexBoundaryKind {
  REX_BOUNDARY_KIND_ACCESSIBLE = 0,
  REX_BOUNDARY_KIND_NATURAL = 1,
  REX_BOUNDARY_KIND_ENTRANCE = 2,
} RexBoundaryKind;

// `Increasing` is psi_r, `Decreasing` is phi_r.
typedef enum RexDirection {
  REX_DIRECTION_INCREASING = 0,
  REX_DIRECTION_DECREASING = 1,
} RexDirection;

typedef enum RexSide {
  REX_SIDE_ALPHA = 0,
  REX_SIDE_BETA = 1,
} RexSide;

// Result of every call. The first four match the command-line exit codes.
typedef enum RexStatus {
  REX_STATUS_OK = 0,
  // Invalid input: configuration, parameters, expressions.
  REX_STATUS_CONFIG = 1,
  // A diagnostic could not reach a conclusion.
  REX_STATUS_INCONCLUSIVE = 2,
  // Quadrature, solver or simulation failure.
  REX_STATUS_NUMERICAL = 3,
  REX_STATUS_NULL_POINTER = 4,
  // A string argument is not valid UTF-8.
  REX_STATUS_INVALID_UTF8 = 5,
  // A caller buffer is too small; the required length is reported.
  REX_STATUS_BUFFER_TOO_SMALL = 6,
  REX_STATUS_PANIC = 7,
} RexStatus;

typedef enum RexVerdict {
  REX_VERDICT_MARTINGALE = 0,
  REX_VERDICT_STRICT_LOCAL_MARTINGALE = 1,
  REX_VERDICT_DEGENERATE_ZERO = 2,
  REX_VERDICT_SUPERMARTINGALE = 3,
  REX_VERDICT_SUBMARTINGALE = 4,
} RexVerdict;

// A validated diffusion.
typedef struct RexDiffusion RexDiffusion;

// A solved psi_r or phi_r on its grid.
typedef struct RexExcessive RexExcessive;

typedef struct RexSimulation {
  double initial_state;
  double horizon;
  double step;
  uint64_t paths;
  uint64_t seed;
} RexSimulation;

// Mean with a 99% confidence half-width.
typedef struct RexEstimate {
  double mean;
  double half_width;
  uint64_t n_effective;
} RexEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The message of the last failed call on this thread, or null. Valid until
// the next call on the same thread.
const char *rex_last_error(void);

// Builds a catalog diffusion (`brownian`, `gbm`, `bessel`, `cir`, `ou`)
// from `n` named parameters. `names` and `values` may be null when `n` is 0.
//
// # Safety
// `family` is a NUL-terminated string; `names` and `values` point to `n`
// entries; `out` is writable.
enum RexStatus rex_diffusion_from_family(const char *family,
                                         const char *const *names,
                                         const double *values,
                                         size_t n,
                                         struct RexDiffusion **out);

// Builds a diffusion from a JSON run configuration, or from its
// `diffusion` section alone.
//
// # Safety
// `json` is a NUL-terminated string; `out` is writable.
enum RexStatus rex_diffusion_from_json(const char *json, struct RexDiffusion **out);

// # Safety
// `d` is null or came from a `rex_diffusion_*` constructor and is not used again.
void rex_diffusion_free(struct RexDiffusion *d);

// The reference point where solutions are normalized and simulations start
// by default.
//
// # Safety
// `d` is a live handle; `out` is writable.
enum RexStatus rex_diffusion_reference_point(const struct RexDiffusion *d, double *out);

// # Safety
// `d` is a live handle; `alpha` and `beta` are writable.
enum RexStatus rex_classify(const struct RexDiffusion *d,
                            enum RexBoundaryKind *alpha,
                            enum RexBoundaryKind *beta);

// Martingale verdicts at both endpoints and for the scale process.
//
// # Safety
// `d` is a live handle; the three outputs are writable.
enum RexStatus rex_verdicts(const struct RexDiffusion *d,
                            enum RexVerdict *alpha,
                            enum RexVerdict *beta,
                            enum RexVerdict *scale_process);

// Solves for psi_r or phi_r, normalized to 1 at the reference point.
//
// # Safety
// `d` is a live handle; `out` is writable.
enum RexStatus rex_solve(const struct RexDiffusion *d,
                         double r,
                         enum RexDirection direction,
                         struct RexExcessive **out);

// # Safety
// `f` is null or came from [`rex_solve`] and is not used again.
void rex_excessive_free(struct RexExcessive *f);

// Number of grid nodes.
//
// # Safety
// `f` is a live handle; `out` is writable.
enum RexStatus rex_excessive_len(const struct RexExcessive *f, size_t *out);

// Copies grid nodes and `ln f` at the nodes. With `capacity` below the
// node count nothing is copied, `len` receives the count and the status
// is `REX_STATUS_BUFFER_TOO_SMALL`.
//
// # Safety
// `f` is a live handle; `x` and `log_value` hold `capacity` doubles; `len`
// is writable.
enum RexStatus rex_excessive_nodes(const struct RexExcessive *f,
                                   double *x,
                                   double *log_value,
                                   size_t capacity,
                                   size_t *len);

// `f(x)` by interpolation; `x` must lie inside the grid hull.
//
// # Safety
// `f` is a live handle; `out` is writable.
enum RexStatus rex_excessive_eval(const struct RexExcessive *f, double x, double *out);

// Monte Carlo estimate of `f(x) - E_x[e^{-r(t∧T)} f(X_{t∧T})]`, with `f`
// the solution that is recessive at `side` (phi at alpha, psi at beta).
//
// # Safety
// `d` is a live handle; `sim` is readable; `out` is writable.
enum RexStatus rex_martingale_deficit(const struct RexDiffusion *d,
                                      enum RexSide side,
                                      double r,
                                      const struct RexSimulation *sim,
                                      struct RexEstimate *out);

// Monte Carlo estimate of `p(x) - E_x[p(X_t)]` for the scale process.
//
// # Safety
// `d` is a live handle; `sim` is readable; `out` is writable.
enum RexStatus rex_scale_deficit(const struct RexDiffusion *d,
                                 const struct RexSimulation *sim,
                                 struct RexEstimate *out);

// The full limit table with verdicts as a JSON document, to be released
// with [`rex_string_free`].
//
// # Safety
// `d` is a live handle; `rates` holds `n` doubles; `out` is writable.
enum RexStatus rex_table_json(const struct RexDiffusion *d,
                              const double *rates,
                              size_t n,
                              char **out);

// # Safety
// `s` is null or came from this library and is not used again.
void rex_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* REXCESS_H */
