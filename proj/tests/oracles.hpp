// Test-only reference implementations, independent of the library's
// production code paths.
#pragma once

#include <functional>
#include <random>

#include "vse/imu_preintegration.hpp"
#include "vse/nav_state.hpp"
#include "vse/se3.hpp"

namespace vse::oracle {

/// Truncated matrix-exponential series of skew(omega), 30 terms.
inline Mat3 rotation_series(const Vec3& omega, int terms = 30) {
  const Mat3 w = skew(omega);
  Mat3 sum = Mat3::Identity();
  Mat3 power = Mat3::Identity();
  double factorial = 1.0;
  for (int k = 1; k <= terms; ++k) {
    power = power * w;
    factorial *= k;
    sum += power / factorial;
  }
  return sum;
}

/// Central finite-difference Jacobian of f around zero perturbation.
inline Eigen::MatrixXd finite_difference(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                         int input_dim, double step = 1e-6) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(input_dim);
  const int out_dim = static_cast<int>(f(zero).size());
  Eigen::MatrixXd j(out_dim, input_dim);
  for (int k = 0; k < input_dim; ++k) {
    Eigen::VectorXd d = zero;
    d(k) = step;
    const Eigen::VectorXd plus = f(d);
    d(k) = -step;
    const Eigen::VectorXd minus = f(d);
    j.col(k) = (plus - minus) / (2.0 * step);
  }
  return j;
}

/// Relative error between an analytic Jacobian and its FD counterpart.
inline double jacobian_relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd) {
  const double scale = std::max(1.0, fd.norm());
  return (analytic - fd).norm() / scale;
}

/// Reference IMU delta: integrate a continuous signal at a very fine step.
/// Returns the noise-free, zero-bias preintegrated delta (no gravity).
struct ImuDelta {
  Rot3 rotation;
  Vec3 velocity = Vec3::Zero();
  Vec3 position = Vec3::Zero();
};

inline ImuDelta integrate_reference(const std::function<Vec3(double)>& gyro,
                                    const std::function<Vec3(double)>& accel, double duration,
                                    double dt) {
  ImuDelta d;
  for (double t = 0.0; t < duration - 0.5 * dt; t += dt) {
    const Mat3 a = d.rotation.matrix();
    const Vec3 acc = accel(t);
    d.position += d.velocity * dt + 0.5 * a * acc * dt * dt;
    d.velocity += a * acc * dt;
    d.rotation = d.rotation * Rot3::exp(gyro(t) * dt);
  }
  return d;
}

inline NavState random_state(std::mt19937& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  NavState x;
  x.pose.rotation = Rot3::exp(Vec3(n(gen), n(gen), n(gen)) * 0.5);
  x.pose.translation = Vec3(n(gen), n(gen), n(gen)) * 10.0;
  x.velocity_body = Vec3(n(gen), n(gen), n(gen)) * 3.0;
  x.bias.gyro = Vec3(n(gen), n(gen), n(gen)) * 0.01;
  x.bias.accel = Vec3(n(gen), n(gen), n(gen)) * 0.05;
  return x;
}

}  // namespace vse::oracle
