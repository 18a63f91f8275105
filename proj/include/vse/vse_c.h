#ifndef VSE_C_H
#define VSE_C_H

/* C interface to the vehicle state estimator.
 *
 * All objects are opaque handles created and destroyed through this API.
 * Functions return vse_status; on any failure vse_last_error() carries a
 * human-readable message for the calling thread. Strings returned by
 * accessor functions stay owned by the handle they came from and remain
 * valid until that handle is destroyed or mutated.
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vse_status {
  VSE_OK = 0,
  VSE_ERROR_INVALID_ARGUMENT = 1,
  VSE_ERROR_CONFIG = 2,
  VSE_ERROR_DEGENERATE = 3,
  VSE_ERROR_RUNTIME = 4
} vse_status;

/* Library version string, e.g. "1.0.0". */
const char* vse_version(void);

/* Message describing the most recent failure on this thread ("" if none). */
const char* vse_last_error(void);

/* ---------------------------------------------------------------- config */

/* Text key-value configuration: `key = value` lines under `[section]`
 * headers. The same format drives simulation, estimation, and evaluation. */
typedef struct vse_config vse_config;

vse_status vse_config_create(vse_config** out);
vse_status vse_config_load(const char* path, vse_config** out);
vse_status vse_config_parse(const char* text, vse_config** out);
vse_status vse_config_set(vse_config* cfg, const char* section, const char* key,
                          const char* value);
/* Copies the value (or fallback when the key is absent) into buffer,
 * NUL-terminated. Fails with VSE_ERROR_INVALID_ARGUMENT when the buffer is
 * too small. */
vse_status vse_config_get(const vse_config* cfg, const char* section, const char* key,
                          const char* fallback, char* buffer, size_t buffer_size);
void vse_config_destroy(vse_config* cfg);

/* ------------------------------------------------------------ simulation */

/* Synthesize the sensor log described by the config (trajectory, sensor
 * suite, noise, scenario) and write it to log_path. Deterministic for a
 * fixed config and seed. */
vse_status vse_simulate(const vse_config* cfg, const char* log_path);

/* -------------------------------------------------------- batch pipeline */

/* Result of one full replay: metrics report, timing report, trajectory CSV. */
typedef struct vse_result vse_result;

/* Replays the configured log (or simulates one) through the sliding-window
 * estimator and the EKF baseline, computes metrics, and renders the report
 * artifacts. Returns VSE_OK even when the final estimate is degenerate;
 * inspect vse_result_exit_code for the process-level code (0 ok,
 * 3 degenerate). */
vse_status vse_run_pipeline(const vse_config* cfg, vse_result** out);

/* Deterministic metrics report (JSON-like text). */
const char* vse_result_report(const vse_result* result);
/* Wall-clock timing artifact; varies run to run by design. */
const char* vse_result_timing(const vse_result* result);
/* Trajectory CSV, one row per IMU sample after initialization. */
const char* vse_result_csv(const vse_result* result);
/* 0 ok, 3 degenerate final estimate. */
int vse_result_exit_code(const vse_result* result);
/* Factor-graph RMSE: out[0]=x m, out[1]=y m, out[2]=yaw rad, out[3]=v m/s. */
vse_status vse_result_fg_rmse(const vse_result* result, double out[4]);
void vse_result_destroy(vse_result* result);

/* --------------------------------------------------- streaming estimator */

typedef struct vse_estimator vse_estimator;

typedef struct vse_state_estimate {
  double t;
  double position[3];       /* world frame, meters */
  double yaw;               /* radians */
  double velocity_body[3];  /* body frame, m/s */
  double sigma_position[3]; /* 1-sigma, meters */
  double sigma_yaw;         /* 1-sigma, radians */
  int valid;                /* 0 until the estimator has initialized */
} vse_state_estimate;

/* The estimator reads the [estimator], [imu], and [extrinsics] config
 * sections; cfg may be NULL for defaults. */
vse_status vse_estimator_create(const vse_config* cfg, vse_estimator** out);

/* Feed one IMU sample (gyro rad/s, accel specific force m/s^2, body frame).
 * On return *out_estimate holds the IMU-rate prediction; out_estimate may be
 * NULL, and valid stays 0 before initialization. Events must be fed in
 * timestamp order. */
vse_status vse_estimator_on_imu(vse_estimator* est, double t, const double gyro[3],
                                const double accel[3], vse_state_estimate* out_estimate);
/* sensor is "front", "rear", or "center"; covariance is row-major 3x3. */
vse_status vse_estimator_on_gnss(vse_estimator* est, double t, const char* sensor,
                                 const double position[3], const double covariance[9]);
vse_status vse_estimator_on_encoder(vse_estimator* est, double t, double v_x, double steer);
/* Relative pose between two lidar frames in the sensor frame: rotation as a
 * quaternion (w, x, y, z), translation in meters, covariance row-major 6x6
 * ordered [rotation, translation]. */
vse_status vse_estimator_on_lidar_odom(vse_estimator* est, double t_prev, double t_curr,
                                       const double quat_wxyz[4], const double translation[3],
                                       const double covariance[36]);
/* Latest estimate (prediction or optimized state). Fails with
 * VSE_ERROR_RUNTIME before initialization. */
vse_status vse_estimator_latest(const vse_estimator* est, vse_state_estimate* out_estimate);
/* 1 when the most recent solve was rank-deficient. */
int vse_estimator_degenerate(const vse_estimator* est);
void vse_estimator_destroy(vse_estimator* est);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* VSE_C_H */
