#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "vse/imu_preintegration.hpp"
#include "vse/least_squares.hpp"
#include "vse/nav_state.hpp"
#include "vse/sensor_log.hpp"

namespace vse {

/// Lever-arm transform of a GNSS measurement to the IMU origin:
/// p_imu = p_gnss + R * lever (lever is the IMU origin expressed in the
/// antenna-centered frame, i.e. minus the antenna position in the IMU frame).
Vec3 gnss_to_imu_position(const Vec3& gnss_position, const Rot3& r, const Vec3& lever);
Vec3 gnss_to_imu_position(const GnssFix& fix, const Rot3& r, const Extrinsics& extrinsics);

/// Covariance gate: reject when any diagonal entry exceeds the threshold (m^2).
bool gate_gnss(const GnssFix& fix, double threshold);

struct AttitudeMeasurement {
  double yaw = 0.0;    // rad, about ENU up
  double pitch = 0.0;  // rad, positive front-up
};

/// Yaw/pitch from a front/rear fix pair, corrected for the extrinsic
/// baseline azimuth and elevation. Returns nullopt when the pair is not
/// usable (timestamps too far apart or baseline too short).
std::optional<AttitudeMeasurement> dual_gnss_attitude(const GnssFix& front, const GnssFix& rear,
                                                      const Extrinsics& extrinsics);

struct KinematicDelta {
  double dx = 0.0;       // m, rear-axle frame
  double dy = 0.0;       // m
  double dyaw = 0.0;     // rad
  double yaw_rate = 0.0; // rad/s
};

/// Planar arc integration of encoder speed and steering over dt using the
/// bicycle relation yaw_rate = v_x tan(steer) / wheelbase.
KinematicDelta kinematic_delta(const EncoderSample& enc, double dt, double wheelbase);

/// Residual term in the graph. evaluate() returns the whitened residual and
/// Jacobians w.r.t. the 15-dim NavState tangent of each referenced value;
/// `blocks` carries the factor's keys and is remapped by the graph.
class Factor {
 public:
  virtual ~Factor() = default;
  virtual const std::vector<int>& keys() const = 0;
  virtual LinearizedFactor evaluate(const std::vector<const NavState*>& states) const = 0;
};

class PriorFactor : public Factor {
 public:
  PriorFactor(int key, const NavState& prior, const Mat15& covariance);
  const std::vector<int>& keys() const override { return keys_; }
  LinearizedFactor evaluate(const std::vector<const NavState*>& states) const override;
  const NavState& prior() const { return prior_; }
  const Mat15& covariance() const { return covariance_; }

 private:
  std::vector<int> keys_;
  NavState prior_;
  Mat15 covariance_;
  Mat15 sqrt_info_;
};

class GnssUnaryFactor : public Factor {
 public:
  GnssUnaryFactor(int key, const Vec3& measured_imu_position, const Mat3& covariance);
  const std::vector<int>& keys() const override { return keys_; }
  LinearizedFactor evaluate(const std::vector<const NavState*>& states) const override;

 private:
  std::vector<int> keys_;
  Vec3 measured_;
  Mat3 sqrt_info_;
};

class GnssAttitudeFactor : public Factor {
 public:
  GnssAttitudeFactor(int key, const AttitudeMeasurement& measured, const Eigen::Matrix2d& covariance);
  const std::vector<int>& keys() const override { return keys_; }
  LinearizedFactor evaluate(const std::vector<const NavState*>& states) const override;

 private:
  std::vector<int> keys_;
  AttitudeMeasurement measured_;
  Eigen::Matrix2d sqrt_info_;
};

class BetweenPoseFactor : public Factor {
 public:
  /// measured_delta in the IMU frame; covariance order [rotation, translation].
  BetweenPoseFactor(int key_i, int key_j, const Pose3& measured_delta, const Mat6& covariance);
  const std::vector<int>& keys() const override { return keys_; }
  LinearizedFactor evaluate(const std::vector<const NavState*>& states) const override;

 private:
  std::vector<int> keys_;
  Pose3 measured_;
  Mat6 sqrt_info_;
};

class KinematicBetweenFactor : public Factor {
 public:
  /// delta in the rear-axle frame; residual order [dx, dy, dyaw, v_x].
  KinematicBetweenFactor(int key_i, int key_j, const KinematicDelta& delta, double measured_vx,
                         const Eigen::Matrix4d& covariance, const Pose3& imu_from_rear_axle);
  const std::vector<int>& keys() const override { return keys_; }
  LinearizedFactor evaluate(const std::vector<const NavState*>& states) const override;

 private:
  std::vector<int> keys_;
  KinematicDelta delta_;
  double measured_vx_;
  Eigen::Matrix4d sqrt_info_;
  Pose3 axle_;  // imu_from_rear_axle
};

class ImuFactor : public Factor {
 public:
  ImuFactor(int key_i, int key_j, PreintegratedImu preint);
  const std::vector<int>& keys() const override { return keys_; }
  LinearizedFactor evaluate(const std::vector<const NavState*>& states) const override;
  const PreintegratedImu& preintegrated() const { return preint_; }

 private:
  std::vector<int> keys_;
  PreintegratedImu preint_;
};

}  // namespace vse
