#ifndef SLIPT_H
#define SLIPT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SliptStatus {
  SLIPT_STATUS_OK = 0,
  SLIPT_STATUS_NULL_POINTER = 1,
  SLIPT_STATUS_INVALID_UTF8 = 2,
  SLIPT_STATUS_IO = 3,
  SLIPT_STATUS_VALIDATION = 4,
  SLIPT_STATUS_DOMAIN = 5,
  SLIPT_STATUS_FRAME = 6,
  SLIPT_STATUS_RUNTIME = 7,
  SLIPT_STATUS_PANIC = 8,
} SliptStatus;

typedef enum SliptTraceFormat {
  SLIPT_TRACE_FORMAT_CSV = 0,
  SLIPT_TRACE_FORMAT_JSONL = 1,
} SliptTraceFormat;

// The result of one simulation run.
typedef struct SliptRun SliptRun;

// A validated scenario.
typedef struct SliptScenario SliptScenario;

// Per-node totals from a run.
typedef struct SliptNodeMetrics {
  double harvested_j;
  double consumed_j;
  double initial_stored_j;
  double final_stored_j;
  double decoded_bits;
  double uplink_bits;
  double outage_s;
  // Time of the first full charge, or -1 if the store never filled.
  double first_full_s;
  uint64_t brown_outs;
  uint64_t frames_received;
} SliptNodeMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread; empty after a
// success. Valid until the next call into this library on the same thread.
const char *slipt_last_error(void);

// Library version as a static NUL-terminated string.
const char *slipt_version(void);

// # Safety
// `s` must be null or a string returned by this library.
void slipt_string_free(char *s);

// Parses and validates scenario text (JSON5).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum SliptStatus slipt_scenario_from_str(const char *text, struct SliptScenario **out);

// Reads, parses and validates a scenario file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SliptStatus slipt_scenario_load(const char *path, struct SliptScenario **out);

// # Safety
// `scenario` must be null or a handle from this library, freed once.
void slipt_scenario_free(struct SliptScenario *scenario);

// Checks scenario text without keeping it. Every problem found is listed
// in the error message, one per line.
//
// # Safety
// `text` must be a NUL-terminated string.
enum SliptStatus slipt_validate(const char *text);

// SHA-256 of the scenario's canonical JSON, as lowercase hex.
//
// # Safety
// `scenario` must be a live handle; `out` must be writable.
enum SliptStatus slipt_scenario_hash(const struct SliptScenario *scenario, char **out);

// Runs a scenario. `seed` overrides the scenario's own seed; pass null to
// use the one in the file.
//
// # Safety
// `scenario` must be a live handle; `seed` null or readable; `out` writable.
enum SliptStatus slipt_run(const struct SliptScenario *scenario,
                           const uint64_t *seed,
                           struct SliptRun **out);

// # Safety
// `run` must be null or a handle from this library, freed once.
void slipt_run_free(struct SliptRun *run);

// Run summary as pretty-printed JSON.
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum SliptStatus slipt_run_summary_json(const struct SliptRun *run, char **out);

// Full event trace, CSV with header or one JSON object per line.
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum SliptStatus slipt_run_trace(const struct SliptRun *run,
                                 enum SliptTraceFormat format,
                                 char **out);

// Totals for one node, looked up by id.
//
// # Safety
// `run` must be a live handle, `node_id` a NUL-terminated string and
// `out` writable.
enum SliptStatus slipt_run_node_metrics(const struct SliptRun *run,
                                        const char *node_id,
                                        struct SliptNodeMetrics *out);

// Intensity after `distance` metres of water with total attenuation
// `alpha` per metre.
//
// # Safety
// `out` must be writable.
enum SliptStatus slipt_attenuate(double intensity, double alpha, double distance, double *out);

// Fraction of a top-hat beam caught by a centred circular aperture.
// Lengths in metres, divergence half-angle in radians.
//
// # Safety
// `out` must be writable.
enum SliptStatus slipt_geometric_capture(double beam_radius,
                                         double divergence,
                                         double aperture_radius,
                                         double distance,
                                         double *out);

// Encodes a command such as `SensorOn(3)` or `SendData` into a 4-byte
// frame.
//
// # Safety
// `command` must be a NUL-terminated string; `out` must have room for 4
// bytes.
enum SliptStatus slipt_command_encode(const char *command, uint8_t *out);

// Decodes a frame back to its command text.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` must be writable.
enum SliptStatus slipt_command_decode(const uint8_t *bytes, size_t len, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLIPT_H */
