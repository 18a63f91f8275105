#pragma once

#include "vse/factors.hpp"
#include "vse/sensor_log.hpp"

namespace vse {

using Mat5 = Eigen::Matrix<double, 5, 5>;
using Vec5 = Eigen::Matrix<double, 5, 1>;

/// Planar unicycle EKF state: position, heading, forward speed, and a
/// gyro yaw-rate bias. Heading stays wrapped to (-pi, pi].
struct EkfState {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double v = 0.0;
  double yaw_rate_bias = 0.0;
  Mat5 covariance = Mat5::Identity();
};

struct EkfConfig {
  // Continuous-time process noise, applied as Q * dt.
  Vec5 process_noise = (Vec5() << 1e-4, 1e-4, 1e-5, 1e-2, 1e-8).finished();
  double gate_threshold = 25.0;        // m^2, same covariance gate as the graph
  double mahalanobis_gate = 13.8;      // chi-squared, 2 dof, 0.999
  double initial_yaw = 0.0;
  double prior_sigma_pos = 1.0;        // m
  double prior_sigma_yaw = 0.5;        // rad
  double prior_sigma_vel = 1.0;        // m/s
  double prior_sigma_bias = 0.01;      // rad/s
  Extrinsics extrinsics;
};

/// Unicycle propagation: x += v cos(yaw) dt, y += v sin(yaw) dt,
/// yaw += (gyro_z - bias) dt, v <- enc.v_x. Covariance through the analytic
/// Jacobian plus Q dt.
EkfState ekf_predict(const EkfState& state, const EncoderSample& enc, double gyro_z, double dt,
                     const Vec5& process_noise);

/// Kalman update on (x, y) with Joseph-form covariance. Fixes whose
/// innovation Mahalanobis distance exceeds the gate are skipped.
EkfState ekf_update_gnss(const EkfState& state, const Vec3& position, const Mat3& position_cov,
                         double mahalanobis_gate, bool* accepted = nullptr);

/// Event-driven wrapper with the same sensor interface as the graph
/// estimator: gyro supplies the yaw rate, the encoder supplies speed, GNSS
/// fixes are lever-arm corrected and gated.
class EkfEstimator {
 public:
  explicit EkfEstimator(EkfConfig config);

  bool initialized() const { return initialized_; }
  void on_imu(const ImuSample& sample);
  void on_encoder(const EncoderSample& sample) { last_encoder_ = sample; }
  void on_gnss(const GnssFix& fix);
  const EkfState& state() const { return state_; }

 private:
  EkfConfig config_;
  bool initialized_ = false;
  EkfState state_;
  EncoderSample last_encoder_;
};

}  // namespace vse
