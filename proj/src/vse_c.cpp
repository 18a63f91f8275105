#include "vse/vse_c.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <stdexcept>
#include <string>

#include "vse/config.hpp"
#include "vse/evaluation.hpp"
#include "vse/sensor_log.hpp"
#include "vse/simulation.hpp"
#include "vse/sliding_window.hpp"

namespace {

thread_local std::string g_last_error;

vse_status fail(vse_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

/// Runs the body, translating exceptions into status codes.
template <typename Fn>
vse_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    return fail(VSE_ERROR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(VSE_ERROR_RUNTIME, e.what());
  } catch (...) {
    return fail(VSE_ERROR_RUNTIME, "unknown error");
  }
}

}  // namespace

struct vse_config {
  vse::Config cfg;
};

struct vse_result {
  vse::PipelineResult result;
};

struct vse_estimator {
  explicit vse_estimator(vse::EstimatorConfig config) : est(std::move(config)) {}
  vse::SlidingWindowEstimator est;
};

namespace {

void fill_estimate(const vse::StateWithCovariance& s, vse_state_estimate* out) {
  out->t = s.state.t;
  for (int i = 0; i < 3; ++i) {
    out->position[i] = s.state.pose.translation(i);
    out->velocity_body[i] = s.state.velocity_body(i);
    // Tangent layout: [rotation, velocity, position, biases].
    out->sigma_position[i] = std::sqrt(std::max(0.0, s.covariance(6 + i, 6 + i)));
  }
  out->yaw = s.state.yaw();
  out->sigma_yaw = std::sqrt(std::max(0.0, s.covariance(2, 2)));
  out->valid = 1;
}

}  // namespace

extern "C" {

const char* vse_version(void) { return "1.0.0"; }

const char* vse_last_error(void) { return g_last_error.c_str(); }

vse_status vse_config_create(vse_config** out) {
  if (!out) return fail(VSE_ERROR_INVALID_ARGUMENT, "out is null");
  return guarded([&] {
    *out = new vse_config{};
    return VSE_OK;
  });
}

vse_status vse_config_load(const char* path, vse_config** out) {
  if (!path || !out) return fail(VSE_ERROR_INVALID_ARGUMENT, "path/out is null");
  try {
    *out = new vse_config{vse::Config::from_file(path)};
    return VSE_OK;
  } catch (const std::exception& e) {
    return fail(VSE_ERROR_CONFIG, e.what());
  }
}

vse_status vse_config_parse(const char* text, vse_config** out) {
  if (!text || !out) return fail(VSE_ERROR_INVALID_ARGUMENT, "text/out is null");
  try {
    *out = new vse_config{vse::Config::from_string(text)};
    return VSE_OK;
  } catch (const std::exception& e) {
    return fail(VSE_ERROR_CONFIG, e.what());
  }
}

vse_status vse_config_set(vse_config* cfg, const char* section, const char* key,
                          const char* value) {
  if (!cfg || !section || !key || !value) {
    return fail(VSE_ERROR_INVALID_ARGUMENT, "null argument");
  }
  return guarded([&] {
    cfg->cfg.set(section, key, value);
    return VSE_OK;
  });
}

vse_status vse_config_get(const vse_config* cfg, const char* section, const char* key,
                          const char* fallback, char* buffer, size_t buffer_size) {
  if (!cfg || !section || !key || !fallback || !buffer) {
    return fail(VSE_ERROR_INVALID_ARGUMENT, "null argument");
  }
  return guarded([&] {
    const std::string value = cfg->cfg.get_string(section, key, fallback);
    if (value.size() + 1 > buffer_size) {
      return fail(VSE_ERROR_INVALID_ARGUMENT, "buffer too small");
    }
    std::memcpy(buffer, value.c_str(), value.size() + 1);
    return VSE_OK;
  });
}

void vse_config_destroy(vse_config* cfg) { delete cfg; }

vse_status vse_simulate(const vse_config* cfg, const char* log_path) {
  if (!cfg || !log_path) return fail(VSE_ERROR_INVALID_ARGUMENT, "cfg/log_path is null");
  try {
    const vse::EventStream events = vse::build_events(cfg->cfg);
    vse::serialize_log(events, log_path);
    return VSE_OK;
  } catch (const std::invalid_argument& e) {
    return fail(VSE_ERROR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(VSE_ERROR_RUNTIME, e.what());
  }
}

vse_status vse_run_pipeline(const vse_config* cfg, vse_result** out) {
  if (!cfg || !out) return fail(VSE_ERROR_INVALID_ARGUMENT, "cfg/out is null");
  try {
    *out = new vse_result{vse::run_pipeline(cfg->cfg)};
    return VSE_OK;
  } catch (const std::invalid_argument& e) {
    return fail(VSE_ERROR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(VSE_ERROR_RUNTIME, e.what());
  }
}

const char* vse_result_report(const vse_result* result) {
  return result ? result->result.report_text.c_str() : "";
}

const char* vse_result_timing(const vse_result* result) {
  return result ? result->result.timing_text.c_str() : "";
}

const char* vse_result_csv(const vse_result* result) {
  return result ? result->result.csv_text.c_str() : "";
}

int vse_result_exit_code(const vse_result* result) {
  return result ? result->result.exit_code : 2;
}

vse_status vse_result_fg_rmse(const vse_result* result, double out[4]) {
  if (!result || !out) return fail(VSE_ERROR_INVALID_ARGUMENT, "result/out is null");
  out[0] = result->result.metrics.fg.x;
  out[1] = result->result.metrics.fg.y;
  out[2] = result->result.metrics.fg.yaw;
  out[3] = result->result.metrics.fg.v;
  return VSE_OK;
}

void vse_result_destroy(vse_result* result) { delete result; }

vse_status vse_estimator_create(const vse_config* cfg, vse_estimator** out) {
  if (!out) return fail(VSE_ERROR_INVALID_ARGUMENT, "out is null");
  try {
    const vse::Config empty;
    const vse::Config& source = cfg ? cfg->cfg : empty;
    *out = new vse_estimator(vse::estimator_config_from_config(source));
    return VSE_OK;
  } catch (const std::exception& e) {
    return fail(VSE_ERROR_CONFIG, e.what());
  }
}

vse_status vse_estimator_on_imu(vse_estimator* est, double t, const double gyro[3],
                                const double accel[3], vse_state_estimate* out_estimate) {
  if (!est || !gyro || !accel) return fail(VSE_ERROR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    vse::ImuSample sample;
    sample.t = t;
    sample.gyro = vse::Vec3(gyro[0], gyro[1], gyro[2]);
    sample.accel = vse::Vec3(accel[0], accel[1], accel[2]);
    const auto prediction = est->est.on_imu(sample);
    if (out_estimate) {
      std::memset(out_estimate, 0, sizeof(*out_estimate));
      if (prediction) fill_estimate(*prediction, out_estimate);
    }
    return VSE_OK;
  });
}

vse_status vse_estimator_on_gnss(vse_estimator* est, double t, const char* sensor,
                                 const double position[3], const double covariance[9]) {
  if (!est || !sensor || !position || !covariance) {
    return fail(VSE_ERROR_INVALID_ARGUMENT, "null argument");
  }
  return guarded([&] {
    vse::GnssFix fix;
    fix.t = t;
    fix.sensor_id = vse::gnss_id_from_name(sensor);
    fix.position = vse::Vec3(position[0], position[1], position[2]);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) fix.position_cov(r, c) = covariance[3 * r + c];
    }
    est->est.on_gnss(fix);
    return VSE_OK;
  });
}

vse_status vse_estimator_on_encoder(vse_estimator* est, double t, double v_x, double steer) {
  if (!est) return fail(VSE_ERROR_INVALID_ARGUMENT, "est is null");
  return guarded([&] {
    est->est.on_encoder(vse::EncoderSample{t, v_x, steer});
    return VSE_OK;
  });
}

vse_status vse_estimator_on_lidar_odom(vse_estimator* est, double t_prev, double t_curr,
                                       const double quat_wxyz[4], const double translation[3],
                                       const double covariance[36]) {
  if (!est || !quat_wxyz || !translation || !covariance) {
    return fail(VSE_ERROR_INVALID_ARGUMENT, "null argument");
  }
  return guarded([&] {
    vse::LidarOdom odom;
    odom.t_prev = t_prev;
    odom.t_curr = t_curr;
    odom.delta.rotation = vse::Rot3(
        Eigen::Quaterniond(quat_wxyz[0], quat_wxyz[1], quat_wxyz[2], quat_wxyz[3]).normalized());
    odom.delta.translation = vse::Vec3(translation[0], translation[1], translation[2]);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) odom.covariance(r, c) = covariance[6 * r + c];
    }
    est->est.on_lidar_odom(odom);
    return VSE_OK;
  });
}

vse_status vse_estimator_latest(const vse_estimator* est, vse_state_estimate* out_estimate) {
  if (!est || !out_estimate) return fail(VSE_ERROR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    fill_estimate(est->est.latest(), out_estimate);
    return VSE_OK;
  });
}

int vse_estimator_degenerate(const vse_estimator* est) {
  return est && est->est.degenerate() ? 1 : 0;
}

void vse_estimator_destroy(vse_estimator* est) { delete est; }

}  // extern "C"
