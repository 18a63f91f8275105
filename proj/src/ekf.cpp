#include "vse/ekf.hpp"

#include <stdexcept>

namespace vse {

EkfState ekf_predict(const EkfState& state, const EncoderSample& enc, double gyro_z, double dt,
                     const Vec5& process_noise) {
  if (!(dt > 0.0)) throw std::invalid_argument("ekf_predict: dt must be positive");

  // Midpoint-heading discretization: second-order accurate on arcs, exact
  // on straight lines.
  const double dyaw = (gyro_z - state.yaw_rate_bias) * dt;
  const double mid = state.yaw + 0.5 * dyaw;

  EkfState out = state;
  out.t = state.t + dt;
  out.x = state.x + state.v * std::cos(mid) * dt;
  out.y = state.y + state.v * std::sin(mid) * dt;
  out.yaw = wrap_angle(state.yaw + dyaw);
  out.v = enc.v_x;  // speed is measurement-driven

  Mat5 f = Mat5::Identity();
  f(0, 2) = -state.v * std::sin(mid) * dt;
  f(0, 3) = std::cos(mid) * dt;
  f(0, 4) = 0.5 * state.v * std::sin(mid) * dt * dt;  // d(mid)/d(bias) = -dt/2
  f(1, 2) = state.v * std::cos(mid) * dt;
  f(1, 3) = std::sin(mid) * dt;
  f(1, 4) = -0.5 * state.v * std::cos(mid) * dt * dt;
  f(2, 4) = -dt;
  f(3, 3) = 0.0;  // v is reset from the encoder, not propagated

  out.covariance = f * state.covariance * f.transpose();
  out.covariance += (process_noise * dt).asDiagonal();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

EkfState ekf_update_gnss(const EkfState& state, const Vec3& position, const Mat3& position_cov,
                         double mahalanobis_gate, bool* accepted) {
  if (accepted) *accepted = false;

  Eigen::Matrix<double, 2, 5> h = Eigen::Matrix<double, 2, 5>::Zero();
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;
  const Eigen::Matrix2d r = position_cov.topLeftCorner<2, 2>();
  const Eigen::Vector2d innovation(position.x() - state.x, position.y() - state.y);
  const Eigen::Matrix2d s = h * state.covariance * h.transpose() + r;
  const Eigen::Vector2d weighted = s.ldlt().solve(innovation);
  if (innovation.dot(weighted) > mahalanobis_gate) return state;

  const Eigen::Matrix<double, 5, 2> k = state.covariance * h.transpose() * s.inverse();
  EkfState out = state;
  const Vec5 dx = k * innovation;
  out.x += dx(0);
  out.y += dx(1);
  out.yaw = wrap_angle(out.yaw + dx(2));
  out.v += dx(3);
  out.yaw_rate_bias += dx(4);

  const Mat5 ikh = Mat5::Identity() - k * h;
  out.covariance = ikh * state.covariance * ikh.transpose() + k * r * k.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  if (accepted) *accepted = true;
  return out;
}

EkfEstimator::EkfEstimator(EkfConfig config) : config_(std::move(config)) {}

void EkfEstimator::on_imu(const ImuSample& sample) {
  if (!initialized_) return;
  const double dt = sample.t - state_.t;
  if (dt <= 0.0) return;
  state_ = ekf_predict(state_, last_encoder_, sample.gyro.z(), dt, config_.process_noise);
}

void EkfEstimator::on_gnss(const GnssFix& fix) {
  if (!gate_gnss(fix, config_.gate_threshold)) return;
  const Rot3 heading = Rot3::from_yaw(initialized_ ? state_.yaw : config_.initial_yaw);
  const Vec3 position = gnss_to_imu_position(fix, heading, config_.extrinsics);

  if (!initialized_) {
    state_.t = fix.t;
    state_.x = position.x();
    state_.y = position.y();
    state_.yaw = wrap_angle(config_.initial_yaw);
    state_.v = 0.0;
    state_.yaw_rate_bias = 0.0;
    Vec5 sig;
    sig << config_.prior_sigma_pos, config_.prior_sigma_pos, config_.prior_sigma_yaw,
        config_.prior_sigma_vel, config_.prior_sigma_bias;
    state_.covariance = sig.cwiseProduct(sig).asDiagonal();
    initialized_ = true;
    return;
  }
  state_ = ekf_update_gnss(state_, position, fix.position_cov, config_.mahalanobis_gate);
}

}  // namespace vse
