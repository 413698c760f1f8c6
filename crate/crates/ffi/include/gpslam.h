#ifndef GPSLAM_H
#define GPSLAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Bits of the failure mask written by [`gpslam_verify_mapline`].
 */
#define GPSLAM_GATE_MIDPOINT 1

#define GPSLAM_GATE_PERPENDICULAR 2

#define GPSLAM_GATE_SENSITIVITY 4

#define GPSLAM_GATE_OVERLAP 8

/**
 * Result codes shared by all entry points.
 */
typedef enum GpslamStatus {
  GPSLAM_STATUS_OK = 0,
  GPSLAM_STATUS_NULL_POINTER = 1,
  GPSLAM_STATUS_INVALID_UTF8 = 2,
  GPSLAM_STATUS_INVALID_ARGUMENT = 3,
  GPSLAM_STATUS_PARSE = 4,
  GPSLAM_STATUS_GEOMETRY = 5,
  GPSLAM_STATUS_OPTIMIZATION = 6,
  GPSLAM_STATUS_IO = 7,
  GPSLAM_STATUS_PANIC = 8,
} GpslamStatus;

typedef enum GpslamMode {
  GPSLAM_MODE_LP = 0,
  GPSLAM_MODE_GP = 1,
} GpslamMode;

typedef enum GpslamAlignment {
  GPSLAM_ALIGNMENT_NONE = 0,
  GPSLAM_ALIGNMENT_RIGID = 1,
  GPSLAM_ALIGNMENT_SIMILARITY = 2,
} GpslamAlignment;

/**
 * A registry of fused vanishing directions.
 */
typedef struct GpslamRegistry GpslamRegistry;

/**
 * Result of one pipeline run.
 */
typedef struct GpslamRun GpslamRun;

/**
 * An image segment from `(x1, y1)` to `(x2, y2)`, pixels.
 */
typedef struct GpslamSegment {
  uint64_t id;
  double x1;
  double y1;
  double x2;
  double y2;
} GpslamSegment;

typedef struct GpslamGateThresholds {
  double tau_s;
  double theta_thre;
  double d_thre;
  double alpha_thre;
  double r_thre;
} GpslamGateThresholds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *gpslam_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void gpslam_string_free(char *s);

/**
 * Simulates and optimizes the scenario described by a JSON run configuration.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GpslamStatus gpslam_run_from_json(const char *config_json,
                                       enum GpslamMode mode,
                                       struct GpslamRun **out);

/**
 * Metrics of a run as a JSON object.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum GpslamStatus gpslam_run_metrics_json(const struct GpslamRun *run, char **out);

/**
 * Aligned ATE RMSE of the run in meters.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum GpslamStatus gpslam_run_ate(const struct GpslamRun *run, double *out);

/**
 * Number of poses in the estimated trajectory; 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t gpslam_run_pose_count(const struct GpslamRun *run);

/**
 * Estimated camera center of pose `index`, written to `xyz[0..3]`.
 *
 * # Safety
 * `run` must be a live handle and `xyz` must point to three writable doubles.
 */
enum GpslamStatus gpslam_run_camera_center(const struct GpslamRun *run, size_t index, double *xyz);

/**
 * Trajectory in TUM text format.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum GpslamStatus gpslam_run_trajectory_tum(const struct GpslamRun *run, char **out);

/**
 * Releases a run. Null is ignored.
 *
 * # Safety
 * `run` must come from [`gpslam_run_from_json`] and not have been freed.
 */
void gpslam_run_free(struct GpslamRun *run);

/**
 * Detects vanishing points; the result is a JSON array of
 * `{vp, member_segment_ids, residual_rms}` objects.
 *
 * # Safety
 * `segments` must point to `n` segments and `out` must be a valid pointer.
 */
enum GpslamStatus gpslam_detect_vanishing_points(const struct GpslamSegment *segments,
                                                 size_t n,
                                                 size_t hypotheses,
                                                 double consensus_deg,
                                                 size_t min_cluster_size,
                                                 uint64_t seed,
                                                 char **out);

/**
 * Runs the three mapline gates. `failures` receives a `GPSLAM_GATE_*` bitmask.
 *
 * # Safety
 * `observed` and `projected` must be valid; `passed` and `failures` must be valid or null.
 */
enum GpslamStatus gpslam_verify_mapline(const struct GpslamSegment *observed,
                                        const struct GpslamSegment *projected,
                                        struct GpslamGateThresholds thresholds,
                                        bool *passed,
                                        uint32_t *failures);

/**
 * Support-weighted fusion of two parallel directions into `out[0..3]`.
 *
 * # Safety
 * `d_i` and `d_j` must point to three doubles and `out` to three writable doubles.
 */
enum GpslamStatus gpslam_fuse_directions(const double *d_i,
                                         double n_i,
                                         const double *d_j,
                                         double n_j,
                                         double n_l,
                                         double tol_deg,
                                         double *out);

struct GpslamRegistry *gpslam_registry_new(void);

/**
 * Associates the `n` lifted directions of one frame (`directions` holds `3n`
 * doubles, `support` the segment count of each) and writes the primitive id
 * of each direction to `out_ids[0..n]`.
 *
 * # Safety
 * `registry` must be live; the arrays must have the stated lengths.
 */
enum GpslamStatus gpslam_registry_associate(struct GpslamRegistry *registry,
                                            uint64_t frame_id,
                                            const double *directions,
                                            const uint64_t *support,
                                            size_t n,
                                            size_t n_l,
                                            double tol_deg,
                                            uint64_t *out_ids);

/**
 * Number of primitives; 0 for a null handle.
 *
 * # Safety
 * `registry` must be null or live.
 */
size_t gpslam_registry_len(const struct GpslamRegistry *registry);

/**
 * Direction and support weight of the primitive at `index`.
 *
 * # Safety
 * `registry` must be live, `xyz` must point to three writable doubles and
 * `support` must be valid or null.
 */
enum GpslamStatus gpslam_registry_get(const struct GpslamRegistry *registry,
                                      size_t index,
                                      double *xyz,
                                      double *support);

/**
 * Releases a registry. Null is ignored.
 *
 * # Safety
 * `registry` must come from [`gpslam_registry_new`] and not have been freed.
 */
void gpslam_registry_free(struct GpslamRegistry *registry);

/**
 * ATE RMSE between two trajectories given as TUM text.
 *
 * # Safety
 * Both strings must be NUL-terminated and `out` valid.
 */
enum GpslamStatus gpslam_ate_rmse_tum(const char *est_tum,
                                      const char *ref_tum,
                                      enum GpslamAlignment alignment,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GPSLAM_H */
