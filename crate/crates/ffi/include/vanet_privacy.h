#ifndef VANET_PRIVACY_H
#define VANET_PRIVACY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VpStatus {
  VP_STATUS_OK = 0,
  VP_STATUS_NULL_ARGUMENT = 1,
  VP_STATUS_INVALID_UTF8 = 2,
  VP_STATUS_CONFIG_ERROR = 3,
  VP_STATUS_RUNTIME_ERROR = 4,
  /*
   The requested value does not exist for this result.
   */
  VP_STATUS_NOT_AVAILABLE = 5,
  VP_STATUS_PANIC = 6,
} VpStatus;

/*
 Parsed experiment configuration.
 */
typedef struct VpConfig VpConfig;

/*
 Completed experiment with its logs.
 */
typedef struct VpRun VpRun;

/*
 Incremental multi-target tracker.
 */
typedef struct VpTracker VpTracker;

/*
 Beacon as seen by the tracker. Heading in radians, counter-clockwise from
 the x axis.
 */
typedef struct VpBeacon {
  uint64_t pseudonym;
  int64_t step;
  double x;
  double y;
  double speed;
  double heading;
} VpBeacon;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static nul-terminated string.
 */
const char *vp_version(void);

/*
 Message of the last failed call on this thread, or null. Valid until the
 next call into the library on this thread.
 */
const char *vp_last_error_message(void);

/*
 Releases a string returned by the library. Null is ignored.

 # Safety
 `s` must come from this library and not be freed twice.
 */
void vp_string_free(char *s);

/*
 Parses and validates a JSON experiment configuration.

 # Safety
 `json` must be a nul-terminated string; `out` must be writable.
 */
enum VpStatus vp_config_from_json(const char *json, struct VpConfig **out);

/*
 Loads a JSON or TOML configuration file.

 # Safety
 `path` must be a nul-terminated string; `out` must be writable.
 */
enum VpStatus vp_config_from_file(const char *path, struct VpConfig **out);

/*
 Canonical JSON of a configuration.

 # Safety
 `cfg` must be a live handle; `out` must be writable.
 */
enum VpStatus vp_config_to_json(const struct VpConfig *cfg, char **out);

/*
 # Safety
 `cfg` must come from this library and not be freed twice. Null is ignored.
 */
void vp_config_free(struct VpConfig *cfg);

/*
 Runs every repetition of the experiment.

 # Safety
 `cfg` must be a live handle; `out` must be writable.
 */
enum VpStatus vp_run(const struct VpConfig *cfg, struct VpRun **out);

/*
 Seed-mean traceability in percent.

 # Safety
 `run` must be a live handle; `out` must be writable.
 */
enum VpStatus vp_run_traceability(const struct VpRun *run, double *out);

/*
 Seed-mean normalized traceability in percent.

 # Safety
 `run` must be a live handle; `out` must be writable.
 */
enum VpStatus vp_run_normalized_traceability(const struct VpRun *run, double *out);

/*
 Seed-mean FCW QoS in percent; `NotAvailable` when no repetition produced
 one.

 # Safety
 `run` must be a live handle; `out` must be writable.
 */
enum VpStatus vp_run_qos(const struct VpRun *run, double *out);

/*
 Full result as JSON, to be released with [`vp_string_free`].

 # Safety
 `run` must be a live handle; `out` must be writable.
 */
enum VpStatus vp_run_result_json(const struct VpRun *run, char **out);

/*
 Writes the run directory below `dir`.

 # Safety
 `run` must be a live handle; `dir` a nul-terminated string.
 */
enum VpStatus vp_run_write(const struct VpRun *run, const char *dir);

/*
 # Safety
 `run` must come from this library and not be freed twice. Null is ignored.
 */
void vp_run_free(struct VpRun *run);

/*
 Creates a tracker from a JSON tracker configuration, or the defaults when
 `json` is null.

 # Safety
 `json` must be null or a nul-terminated string; `out` must be writable.
 */
enum VpStatus vp_tracker_new(const char *json, struct VpTracker **out);

/*
 Feeds the beacons of step `step`. When `out_track_ids` is not null it
 receives, per beacon, the id of the track it was assigned to.

 # Safety
 `beacons` must point to `n` readable beacons (or be null with `n == 0`);
 `out_track_ids`, if not null, to `n` writable slots.
 */
enum VpStatus vp_tracker_step(struct VpTracker *tracker,
                              int64_t step,
                              const struct VpBeacon *beacons,
                              size_t n,
                              uint64_t *out_track_ids);

/*
 Number of tracks currently held, active or inactive.

 # Safety
 `tracker` must be a live handle or null (returns 0).
 */
size_t vp_tracker_track_count(const struct VpTracker *tracker);

/*
 # Safety
 `tracker` must come from this library and not be freed twice. Null is
 ignored.
 */
void vp_tracker_free(struct VpTracker *tracker);

/*
 Optimal track-to-vehicle assignment on a row-major `vehicles × tracks`
 matrix of segment lengths in steps. `out_track` receives the assigned
 column per vehicle or -1; `out_total` the summed assigned length.

 # Safety
 `lengths` must point to `vehicles * tracks` values; `out_track` to
 `vehicles` writable slots; `out_total` must be writable.
 */
enum VpStatus vp_assign_tracks(const int64_t *lengths,
                               size_t vehicles,
                               size_t tracks,
                               int64_t *out_track,
                               int64_t *out_total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VANET_PRIVACY_H */
