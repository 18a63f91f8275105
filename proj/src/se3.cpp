#include "vse/se3.hpp"

namespace vse {

Mat3 so3_right_jacobian(const Vec3& omega) {
  if (!omega.allFinite()) throw std::invalid_argument("so3_right_jacobian: non-finite input");
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * w + (1.0 / 6.0) * w * w;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() - a * w + b * w * w;
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  return so3_right_jacobian(-omega).transpose();
}

Mat3 so3_right_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * w + (1.0 / 12.0) * w * w;
  }
  const double t2 = theta * theta;
  const double c = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * w + c * w * w;
}

Pose3 pose_compose(const Pose3& a, const Pose3& b) {
  return Pose3(a.rotation * b.rotation, a.rotation * b.translation + a.translation);
}

Pose3 pose_inverse(const Pose3& a) {
  const Rot3 rinv = a.rotation.inverse();
  return Pose3(rinv, -(rinv * a.translation));
}

Pose3 pose_between(const Pose3& a, const Pose3& b) {
  return pose_compose(pose_inverse(a), b);
}

Pose3 se3_exp(const Vec6& twist) {
  const Vec3 omega = twist.head<3>();
  const Vec3 v = twist.tail<3>();
  return Pose3(Rot3::exp(omega), so3_left_jacobian(omega) * v);
}

Vec6 se3_log(const Pose3& pose) {
  const Vec3 omega = pose.rotation.log();
  Vec6 out;
  out.head<3>() = omega;
  out.tail<3>() = so3_left_jacobian(omega).inverse() * pose.translation;
  return out;
}

}  // namespace vse
