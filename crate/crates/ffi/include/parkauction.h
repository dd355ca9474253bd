#ifndef PARKAUCTION_H
#define PARKAUCTION_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PkStatus {
  PK_STATUS_OK = 0,
  PK_STATUS_NULL_POINTER = 1,
  PK_STATUS_INVALID_ARGUMENT = 2,
  PK_STATUS_CONFIG = 3,
  PK_STATUS_SIMULATION = 4,
  PK_STATUS_IO = 5,
  PK_STATUS_PANIC = 6,
} PkStatus;

typedef enum PkBehavior {
  PK_BEHAVIOR_BASELINE = 0,
  PK_BEHAVIOR_INFORMATION = 1,
  PK_BEHAVIOR_AUCTION = 2,
} PkBehavior;

typedef enum PkMix {
  PK_MIX_MIX10 = 0,
  PK_MIX_MIX25 = 1,
  PK_MIX_MIX50 = 2,
} PkMix;

// Opaque result of a finished run.
typedef struct PkRun PkRun;

// Opaque scenario configuration.
typedef struct PkScenario PkScenario;

// Headline numbers of one run. Undefined means (no participants, no
// reservations) are NaN.
typedef struct PkSummary {
  uint64_t vehicles;
  uint64_t participants;
  double route_length_m;
  double price_eur;
  double participant_price_eur;
  double non_participant_price_eur;
  double parking_distance_m;
  double participant_parking_distance_m;
  double flow_veh_h;
  uint64_t reservations_granted;
  uint64_t reservations_fulfilled;
  double reservation_success;
  double short_route_fraction;
} PkSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *pk_last_error(void);

// Library version as a static string.
const char *pk_version(void);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void pk_string_free(char *s);

// A scenario with every setting at its default.
struct PkScenario *pk_scenario_default(void);

// Parse a scenario from TOML text. Missing keys take their defaults.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a writable pointer.
enum PkStatus pk_scenario_from_toml(const char *toml, struct PkScenario **out);

// Read a scenario file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum PkStatus pk_scenario_load(const char *path, struct PkScenario **out);

// The resolved scenario as TOML; free with [`pk_string_free`]. Null if
// `scenario` is null.
//
// # Safety
// `scenario` must be null or a live handle.
char *pk_scenario_to_toml(const struct PkScenario *scenario);

// # Safety
// `scenario` must be null or a live handle.
enum PkStatus pk_scenario_set_behavior(struct PkScenario *scenario, enum PkBehavior behavior);

// Share of drivers using the app, in `[0, 1]`.
//
// # Safety
// `scenario` must be null or a live handle.
enum PkStatus pk_scenario_set_penetration(struct PkScenario *scenario, double penetration);

// # Safety
// `scenario` must be null or a live handle.
enum PkStatus pk_scenario_set_mix(struct PkScenario *scenario, enum PkMix mix);

// # Safety
// `scenario` must be null or a live handle.
enum PkStatus pk_scenario_set_seed(struct PkScenario *scenario, uint64_t seed);

// Number of visitors to simulate.
//
// # Safety
// `scenario` must be null or a live handle.
enum PkStatus pk_scenario_set_drivers(struct PkScenario *scenario, uint32_t drivers);

// # Safety
// `scenario` must be null or a handle not yet freed.
void pk_scenario_free(struct PkScenario *scenario);

// Simulate the scenario to completion. The scenario handle stays usable.
//
// # Safety
// `scenario` must be a live handle and `out` a writable pointer.
enum PkStatus pk_run(const struct PkScenario *scenario, struct PkRun **out);

// # Safety
// `run` must be a live handle and `out` a writable pointer.
enum PkStatus pk_run_summary(const struct PkRun *run, struct PkSummary *out);

// Write the run's CSV files into `dir`, creating it if needed.
//
// # Safety
// `run` must be a live handle and `dir` a NUL-terminated string.
enum PkStatus pk_run_write(const struct PkRun *run, const char *dir);

// # Safety
// `run` must be null or a handle not yet freed.
void pk_run_free(struct PkRun *run);

// Weighted parking cost `beta * price / p_max + (1 - beta) * distance / d_max`;
// the distance term is zero when `d_max` is zero.
//
// # Safety
// `out` must be a writable pointer.
enum PkStatus pk_parking_cost(double beta,
                              double price,
                              double p_max,
                              double distance,
                              double d_max,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARKAUCTION_H */
