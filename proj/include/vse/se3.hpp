#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>

namespace vse {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Angle below which exp/log/Jacobians switch to their Taylor expansions.
inline constexpr double kSmallAngle = 1e-8;

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return s;
}

/// Rotation on SO(3), stored as a unit quaternion (world_from_body
/// convention throughout: R maps body vectors into the world frame).
class Rot3 {
 public:
  Rot3() : q_(Eigen::Quaterniond::Identity()) {}
  explicit Rot3(const Eigen::Quaterniond& q) : q_(q.normalized()) {}
  explicit Rot3(const Mat3& m) : q_(Eigen::Quaterniond(m).normalized()) {}

  static Rot3 identity() { return Rot3(); }
  static Rot3 from_yaw(double yaw) {
    return Rot3(Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ())));
  }

  /// Exponential map; Taylor fallback below kSmallAngle.
  static Rot3 exp(const Vec3& omega) {
    if (!omega.allFinite()) throw std::invalid_argument("Rot3::exp: non-finite tangent");
    const double theta = omega.norm();
    Eigen::Quaterniond q;
    if (theta < kSmallAngle) {
      q = Eigen::Quaterniond(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    } else {
      const double half = 0.5 * theta;
      const Vec3 axis = omega / theta;
      const double s = std::sin(half);
      q = Eigen::Quaterniond(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
    }
    return Rot3(q);
  }

  /// Principal axis-angle, |result| <= pi.
  Vec3 log() const {
    Eigen::Quaterniond q = q_;
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vec3 v(q.x(), q.y(), q.z());
    const double sin_half = v.norm();
    if (sin_half < kSmallAngle) return 2.0 * v;
    const double angle = 2.0 * std::atan2(sin_half, q.w());
    return (angle / sin_half) * v;
  }

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }

  Rot3 inverse() const { return Rot3(q_.conjugate()); }
  Rot3 operator*(const Rot3& other) const { return Rot3(q_ * other.q_); }
  Vec3 operator*(const Vec3& v) const { return q_ * v; }
  Vec3 rotate(const Vec3& v) const { return q_ * v; }
  Vec3 unrotate(const Vec3& v) const { return q_.conjugate() * v; }

  bool is_approx(const Rot3& other, double tol = 1e-9) const {
    return (*this * other.inverse()).log().norm() <= tol;
  }

 private:
  Eigen::Quaterniond q_;  // renormalized on construction
};

/// Right Jacobian of SO(3): exp(w + d) ~= exp(w) * exp(Jr(w) d).
Mat3 so3_right_jacobian(const Vec3& omega);

/// Left Jacobian: Jl(w) = Jr(-w)^T.
Mat3 so3_left_jacobian(const Vec3& omega);

/// Inverse of the right Jacobian.
Mat3 so3_right_jacobian_inverse(const Vec3& omega);

inline Rot3 so3_exp(const Vec3& omega) { return Rot3::exp(omega); }
inline Vec3 so3_log(const Rot3& r) { return r.log(); }

/// Rigid transform on SE(3).
struct Pose3 {
  Rot3 rotation;
  Vec3 translation{Vec3::Zero()};

  Pose3() = default;
  Pose3(const Rot3& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose3 identity() { return Pose3(); }
  static Pose3 from_translation(const Vec3& t) { return Pose3(Rot3(), t); }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
};

Pose3 pose_compose(const Pose3& a, const Pose3& b);
Pose3 pose_inverse(const Pose3& a);
/// between(a, b) = compose(inverse(a), b).
Pose3 pose_between(const Pose3& a, const Pose3& b);

/// SE(3) exponential of a twist [omega; v] (rotation first).
Pose3 se3_exp(const Vec6& twist);
Vec6 se3_log(const Pose3& pose);

/// ZYX yaw of a rotation (heading of the rotated x axis).
inline double yaw_of(const Rot3& r) {
  const Mat3 m = r.matrix();
  return std::atan2(m(1, 0), m(0, 0));
}

inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * M_PI);
  if (r <= -M_PI) r += 2.0 * M_PI;
  return r;
}

}  // namespace vse
