#pragma once

#include "vse/nav_state.hpp"
#include "vse/sensor_log.hpp"

namespace vse {

struct ImuNoiseModel {
  double gyro_noise_density = 1e-3;   // rad/s/sqrt(Hz)
  double accel_noise_density = 1e-2;  // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 1e-5;       // rad/s^2/sqrt(Hz)
  double accel_bias_walk = 1e-4;      // m/s^3/sqrt(Hz)
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
};

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

/// Accumulated IMU delta between two graph values (on-manifold forward
/// Euler). Gravity is not applied during integration; it enters the
/// residual and the prediction.
class PreintegratedImu {
 public:
  PreintegratedImu() = default;
  PreintegratedImu(const ImuNoiseModel& noise, const ImuBias& linearization_bias)
      : noise_(noise), lin_bias_(linearization_bias) {}

  void integrate(const ImuSample& sample, double dt);

  /// Propagate state_i across the accumulated delta (applies gravity).
  NavState predict(const NavState& state_i) const;

  double dt_total() const { return dt_total_; }
  const Rot3& delta_rotation() const { return delta_r_; }
  const Vec3& delta_velocity() const { return delta_v_; }
  const Vec3& delta_position() const { return delta_p_; }
  /// 9x9 covariance in [rotation, velocity, position] order.
  const Mat9& covariance() const { return cov_; }
  const ImuBias& linearization_bias() const { return lin_bias_; }
  const ImuNoiseModel& noise_model() const { return noise_; }

  const Mat3& d_rotation_d_gyro_bias() const { return j_r_bg_; }
  const Mat3& d_velocity_d_gyro_bias() const { return j_v_bg_; }
  const Mat3& d_velocity_d_accel_bias() const { return j_v_ba_; }
  const Mat3& d_position_d_gyro_bias() const { return j_p_bg_; }
  const Mat3& d_position_d_accel_bias() const { return j_p_ba_; }

  /// Delta corrected to first order for a bias differing from the
  /// linearization point.
  Rot3 corrected_delta_rotation(const ImuBias& bias) const;
  Vec3 corrected_delta_velocity(const ImuBias& bias) const;
  Vec3 corrected_delta_position(const ImuBias& bias) const;

 private:
  ImuNoiseModel noise_;
  ImuBias lin_bias_;
  double dt_total_ = 0.0;
  Rot3 delta_r_;
  Vec3 delta_v_ = Vec3::Zero();
  Vec3 delta_p_ = Vec3::Zero();
  Mat9 cov_ = Mat9::Zero();
  Mat3 j_r_bg_ = Mat3::Zero();
  Mat3 j_v_bg_ = Mat3::Zero();
  Mat3 j_v_ba_ = Mat3::Zero();
  Mat3 j_p_bg_ = Mat3::Zero();
  Mat3 j_p_ba_ = Mat3::Zero();
};

struct ImuResidual {
  Vec15 value = Vec15::Zero();  // [r_R, r_v, r_p, r_bg, r_ba]
  Mat15 d_state_i = Mat15::Zero();
  Mat15 d_state_j = Mat15::Zero();
  Mat15 sqrt_information = Mat15::Zero();  // whitening matrix for the factor
};

/// Preintegrated IMU factor residual between two states, first-order
/// bias-corrected, with analytic Jacobians in the NavState tangent
/// convention. States must be preint.dt_total() apart within 1e-6 s.
ImuResidual imu_residual(const NavState& state_i, const NavState& state_j,
                         const PreintegratedImu& preint);

}  // namespace vse
