/* dynavoid — LiDAR-style dynamic obstacle avoidance stack: tracking and
 * trajectory prediction, dual-layer occupancy mapping, corridor-constrained
 * MPC, and a deterministic closed-loop simulator.
 *
 * C API: opaque handles + status codes. All returned strings are heap
 * allocated and must be released with dv_string_free(). Handles are not
 * thread-safe; dv_last_error() is thread-local.
 */
#ifndef DYNAVOID_H
#define DYNAVOID_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dv_status {
  DV_OK = 0,
  DV_ERR_IO = 1,       /* file not found / unreadable / unwritable */
  DV_ERR_PARSE = 2,    /* malformed JSON or schema violation */
  DV_ERR_INVALID = 3,  /* scenario or configuration invariant violated */
  DV_ERR_RUNTIME = 4,  /* internal failure */
  DV_ERR_USAGE = 5     /* null handle / bad argument */
} dv_status;

typedef struct dv_scenario dv_scenario;
typedef struct dv_options dv_options;

const char* dv_version(void);

/* Message for the most recent failure on this thread (empty if none). */
const char* dv_last_error(void);

dv_status dv_scenario_load_file(const char* path, dv_scenario** out);
dv_status dv_scenario_load_string(const char* json_text, dv_scenario** out);
void dv_scenario_free(dv_scenario* sc);

/* DV_OK iff valid. *diagnostics_json (optional) always receives a JSON
 * report {"valid": bool, "issues": [{"path", "message"}, ...]}. */
dv_status dv_scenario_validate(const dv_scenario* sc, char** diagnostics_json);

dv_status dv_options_create(dv_options** out);
void dv_options_free(dv_options* opt);
dv_status dv_options_set_seed(dv_options* opt, uint64_t seed);
dv_status dv_options_set_trace_path(dv_options* opt, const char* path);
dv_status dv_options_set_map_dump_path(dv_options* opt, const char* path);
/* "oracle" (ground-truth labels) or "baseline" (frame-displacement). */
dv_status dv_options_set_detector(dv_options* opt, const char* kind);
/* Dotted configuration override, e.g. ("mpc.N", "15"). */
dv_status dv_options_set_override(dv_options* opt, const char* key, const char* value);

/* Runs one closed-loop episode; *report_json receives the episode report
 * (with the effective configuration echoed under "config"). */
dv_status dv_run_episode(const dv_scenario* sc, const dv_options* opt, char** report_json);

/* Runs `runs` episodes with seeds seed_base..seed_base+runs-1 and aggregates
 * the batch metrics. */
dv_status dv_run_batch(const dv_scenario* sc, int runs, uint64_t seed_base,
                       const dv_options* opt, char** report_json);

void dv_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* DYNAVOID_H */
