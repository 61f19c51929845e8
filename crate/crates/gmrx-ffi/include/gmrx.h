/* C interface to the collision-recovery physical layer. */

#ifndef GMRX_H
#define GMRX_H

/* Generated by cbindgen from the gmrx-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a fallible call.
typedef enum {
  // Success.
  GMRX_STATUS_OK = 0,
  // A required pointer argument was null.
  GMRX_STATUS_NULL_ARG = 1,
  // A string argument was not valid UTF-8.
  GMRX_STATUS_UTF8 = 2,
  // The configuration failed to parse or validate.
  GMRX_STATUS_CONFIG = 3,
  // The simulation itself failed.
  GMRX_STATUS_RUNTIME = 4,
  // An index or buffer length was out of range.
  GMRX_STATUS_RANGE = 5,
} GmrxStatus;

// Simulation configuration handle.
typedef struct GmrxConfig GmrxConfig;

// A finished sweep: one row per (grid point, receiver, metric).
typedef struct GmrxResults GmrxResults;

// Outcome of a threshold search.
typedef struct {
  // Nonzero when the ratio crossed the target inside the deficit grid.
  bool found;
  // Interferer power deficit in dB at the crossing; NaN when not found.
  double deficit_db;
  // Largest observed ratio when not found; NaN when found.
  double max_ratio;
} GmrxThreshold;

// One result row. The string pointers borrow from the parent
// `GmrxResults` and stay valid until it is freed.
typedef struct {
  const char *scenario;
  const char *receiver;
  const char *metric;
  double snr_db;
  double sinr_db;
  double value;
  // Samples the value averages over (symbols, positions, or trials).
  uint64_t count;
  uint64_t trials;
  uint64_t seed;
} GmrxRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread. Borrowed; valid
// until the next failing gmrx call on the same thread.
const char *gmrx_last_error(void);

// Library version as a static string; do not free.
const char *gmrx_version(void);

// A configuration with every field at its default.
GmrxConfig *gmrx_config_default(void);

// Parse a configuration from TOML text. Null on failure.
//
// # Safety
// `toml` must be a NUL-terminated string.
GmrxConfig *gmrx_config_parse(const char *toml);

// Load a configuration from a TOML file. Null on failure.
//
// # Safety
// `path` must be a NUL-terminated string.
GmrxConfig *gmrx_config_load(const char *path);

// Select the scenario by name: "uncoded", "coded", "detect-prob",
// "mse", or "threshold".
//
// # Safety
// `cfg` must come from a gmrx constructor; `name` must be NUL-terminated.
GmrxStatus gmrx_config_set_scenario(GmrxConfig *cfg, const char *name);

// Set the master seed of the sweep.
//
// # Safety
// `cfg` must come from a gmrx constructor.
GmrxStatus gmrx_config_set_seed(GmrxConfig *cfg, uint64_t seed);

// Set the initial trial count and the auto-extension cap per grid point.
//
// # Safety
// `cfg` must come from a gmrx constructor.
GmrxStatus gmrx_config_set_trials(GmrxConfig *cfg, uint64_t trials, uint64_t max_trials);

// Replace the SNR and interferer-to-desired power ratio grids (dB).
//
// # Safety
// `cfg` must come from a gmrx constructor; `snr_db` and `ratio_db`
// must point to `n_snr` and `n_ratio` doubles.
GmrxStatus gmrx_config_set_grid(GmrxConfig *cfg,
                                const double *snr_db,
                                size_t n_snr,
                                const double *ratio_db,
                                size_t n_ratio);

// Set the mixture size cap and the preamble detection threshold.
//
// # Safety
// `cfg` must come from a gmrx constructor.
GmrxStatus gmrx_config_set_detector(GmrxConfig *cfg, size_t k_max, double tau);

// Set the frame geometry (symbol counts; pilot period in symbols).
//
// # Safety
// `cfg` must come from a gmrx constructor.
GmrxStatus gmrx_config_set_frame(GmrxConfig *cfg,
                                 size_t preamble_len,
                                 size_t payload_len,
                                 size_t pilot_period);

// Check the configuration without running it.
//
// # Safety
// `cfg` must come from a gmrx constructor.
GmrxStatus gmrx_config_validate(const GmrxConfig *cfg);

// Release a configuration. Null is ignored.
//
// # Safety
// `cfg` must come from a gmrx constructor and not be used afterwards.
void gmrx_config_free(GmrxConfig *cfg);

// Run the configured scenario over its grid. Null on failure.
//
// # Safety
// `cfg` must come from a gmrx constructor.
GmrxResults *gmrx_run_sweep(const GmrxConfig *cfg);

// Search the threshold scenario's deficit grid for the point where the
// linear receiver's BER reaches the configured multiple of the mixture
// detector's. The scenario must be "threshold".
//
// # Safety
// `cfg` and `out` must be valid pointers.
GmrxStatus gmrx_find_sinr_threshold(const GmrxConfig *cfg, GmrxThreshold *out);

// Number of rows in a result set.
//
// # Safety
// `res` must come from `gmrx_run_sweep`.
size_t gmrx_results_len(const GmrxResults *res);

// Copy row `idx` into `out`.
//
// # Safety
// `res` must come from `gmrx_run_sweep`; `out` must be valid.
GmrxStatus gmrx_results_row(const GmrxResults *res, size_t idx, GmrxRow *out);

// Render a result set as CSV. Free with `gmrx_string_free`.
//
// # Safety
// `res` must come from `gmrx_run_sweep`.
char *gmrx_results_csv(const GmrxResults *res);

// Release a result set. Null is ignored.
//
// # Safety
// `res` must come from `gmrx_run_sweep` and not be used afterwards.
void gmrx_results_free(GmrxResults *res);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from a gmrx call that transfers ownership.
void gmrx_string_free(char *s);

// Write the library's pseudorandom +/-1 preamble into `out`.
//
// # Safety
// `out` must point to `len` bytes.
GmrxStatus gmrx_gen_preamble(size_t len, uint64_t seed, int8_t *out);

// Locate the start of a second packet in raw samples by preamble
// correlation. `iq` holds `n_samples * n_r` complex values as
// interleaved re,im doubles, antenna-major within each symbol time.
// On success `*out_offset` is the earliest symbol offset at or above
// the threshold `tau`, or -1 when nothing is detected.
//
// # Safety
// `iq` must point to `2 * n_samples * n_r` doubles; `preamble` to
// `preamble_len` bytes; `out_offset` must be valid.
GmrxStatus gmrx_detect_offset(const double *iq,
                              size_t n_samples,
                              size_t n_r,
                              const int8_t *preamble,
                              size_t preamble_len,
                              double tau,
                              int64_t *out_offset);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GMRX_H */
