#pragma once

#include "vse/se3.hpp"

namespace vse {

struct ImuBias {
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2

  Vec6 vector() const {
    Vec6 v;
    v << gyro, accel;
    return v;
  }
};

/// Full navigation state at one timestamp. Velocity is stored in the IMU
/// (body) frame; propagation converts to world internally.
struct NavState {
  double t = 0.0;
  Pose3 pose;                       // world_from_body
  Vec3 velocity_body = Vec3::Zero();
  ImuBias bias;

  Vec3 velocity_world() const { return pose.rotation * velocity_body; }
  double yaw() const { return yaw_of(pose.rotation); }
};

using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat15 = Eigen::Matrix<double, 15, 15>;

// Tangent ordering used everywhere a 15-dim NavState increment appears:
// [d_theta (3), d_v_body (3), d_p_world (3), d_bias_gyro (3), d_bias_accel (3)]
inline NavState retract(const NavState& x, const Vec15& delta) {
  NavState out = x;
  out.pose.rotation = x.pose.rotation * Rot3::exp(delta.segment<3>(0));
  out.velocity_body += delta.segment<3>(3);
  out.pose.translation += delta.segment<3>(6);
  out.bias.gyro += delta.segment<3>(9);
  out.bias.accel += delta.segment<3>(12);
  return out;
}

inline Vec15 local_coordinates(const NavState& base, const NavState& x) {
  Vec15 d;
  d.segment<3>(0) = (base.pose.rotation.inverse() * x.pose.rotation).log();
  d.segment<3>(3) = x.velocity_body - base.velocity_body;
  d.segment<3>(6) = x.pose.translation - base.pose.translation;
  d.segment<3>(9) = x.bias.gyro - base.bias.gyro;
  d.segment<3>(12) = x.bias.accel - base.bias.accel;
  return d;
}

struct StateWithCovariance {
  NavState state;
  Mat15 covariance = Mat15::Zero();
};

}  // namespace vse
