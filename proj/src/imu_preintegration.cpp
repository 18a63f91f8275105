#include "vse/imu_preintegration.hpp"

#include <stdexcept>

#include <Eigen/Cholesky>

namespace vse {

void PreintegratedImu::integrate(const ImuSample& sample, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("PreintegratedImu::integrate: dt must be > 0");
  if (!(dt < 0.1)) throw std::invalid_argument("PreintegratedImu::integrate: dt too large");

  const Vec3 w = sample.gyro - lin_bias_.gyro;
  const Vec3 a = sample.accel - lin_bias_.accel;
  const Mat3 A = delta_r_.matrix();
  const Rot3 dR = Rot3::exp(w * dt);
  const Mat3 jr = so3_right_jacobian(w * dt);

  // Covariance, order [rotation, velocity, position].
  Mat9 F = Mat9::Identity();
  F.block<3, 3>(0, 0) = dR.matrix().transpose();
  F.block<3, 3>(3, 0) = -A * skew(a) * dt;
  F.block<3, 3>(6, 0) = -0.5 * A * skew(a) * dt * dt;
  F.block<3, 3>(6, 3) = Mat3::Identity() * dt;

  Eigen::Matrix<double, 9, 6> G = Eigen::Matrix<double, 9, 6>::Zero();
  G.block<3, 3>(0, 0) = jr * dt;
  G.block<3, 3>(3, 3) = A * dt;
  G.block<3, 3>(6, 3) = 0.5 * A * dt * dt;

  Vec6 q_diag;
  const double sg2 = noise_.gyro_noise_density * noise_.gyro_noise_density / dt;
  const double sa2 = noise_.accel_noise_density * noise_.accel_noise_density / dt;
  q_diag << sg2, sg2, sg2, sa2, sa2, sa2;
  cov_ = F * cov_ * F.transpose() + G * q_diag.asDiagonal() * G.transpose();

  // Bias Jacobians: position uses the pre-update velocity terms.
  j_p_bg_ += j_v_bg_ * dt - 0.5 * A * skew(a) * j_r_bg_ * dt * dt;
  j_p_ba_ += j_v_ba_ * dt - 0.5 * A * dt * dt;
  j_v_bg_ += -A * skew(a) * j_r_bg_ * dt;
  j_v_ba_ += -A * dt;
  j_r_bg_ = dR.matrix().transpose() * j_r_bg_ - jr * dt;

  delta_p_ += delta_v_ * dt + 0.5 * A * a * dt * dt;
  delta_v_ += A * a * dt;
  delta_r_ = delta_r_ * dR;
  dt_total_ += dt;
}

Rot3 PreintegratedImu::corrected_delta_rotation(const ImuBias& bias) const {
  return delta_r_ * Rot3::exp(j_r_bg_ * (bias.gyro - lin_bias_.gyro));
}

Vec3 PreintegratedImu::corrected_delta_velocity(const ImuBias& bias) const {
  return delta_v_ + j_v_bg_ * (bias.gyro - lin_bias_.gyro) +
         j_v_ba_ * (bias.accel - lin_bias_.accel);
}

Vec3 PreintegratedImu::corrected_delta_position(const ImuBias& bias) const {
  return delta_p_ + j_p_bg_ * (bias.gyro - lin_bias_.gyro) +
         j_p_ba_ * (bias.accel - lin_bias_.accel);
}

NavState PreintegratedImu::predict(const NavState& state_i) const {
  const double dt = dt_total_;
  const Vec3 g = noise_.gravity;
  const Rot3& r_i = state_i.pose.rotation;
  const Vec3 v_i_world = state_i.velocity_world();

  NavState out;
  out.t = state_i.t + dt;
  out.pose.rotation = r_i * corrected_delta_rotation(state_i.bias);
  const Vec3 v_j_world = v_i_world + g * dt + r_i * corrected_delta_velocity(state_i.bias);
  out.pose.translation = state_i.pose.translation + v_i_world * dt + 0.5 * g * dt * dt +
                         r_i * corrected_delta_position(state_i.bias);
  out.velocity_body = out.pose.rotation.unrotate(v_j_world);
  out.bias = state_i.bias;
  return out;
}

ImuResidual imu_residual(const NavState& state_i, const NavState& state_j,
                         const PreintegratedImu& preint) {
  const double dt = preint.dt_total();
  if (std::abs((state_j.t - state_i.t) - dt) > 1e-6) {
    throw std::invalid_argument("imu_residual: state timestamps do not span the preintegration");
  }
  const Vec3 g = preint.noise_model().gravity;
  const Mat3 r_i = state_i.pose.rotation.matrix();
  const Mat3 r_j = state_j.pose.rotation.matrix();
  const Mat3 r_i_t = r_i.transpose();
  const Vec3 dbg = state_i.bias.gyro - preint.linearization_bias().gyro;

  const Rot3 delta_r_corr = preint.corrected_delta_rotation(state_i.bias);
  const Vec3 delta_v_corr = preint.corrected_delta_velocity(state_i.bias);
  const Vec3 delta_p_corr = preint.corrected_delta_position(state_i.bias);

  ImuResidual res;

  // Rotation residual.
  const Rot3 err_rot = delta_r_corr.inverse() * state_i.pose.rotation.inverse() * state_j.pose.rotation;
  const Vec3 r_rot = err_rot.log();
  const Mat3 jr_inv = so3_right_jacobian_inverse(r_rot);
  res.value.segment<3>(0) = r_rot;

  // Velocity residual: R_i^T (R_j v_j - g dt) - v_i - dv_corr.
  const Vec3 u_v = r_i_t * (r_j * state_j.velocity_body - g * dt);
  res.value.segment<3>(3) = u_v - state_i.velocity_body - delta_v_corr;

  // Position residual: R_i^T (p_j - p_i - 0.5 g dt^2) - v_i dt - dp_corr.
  const Vec3 u_p = r_i_t * (state_j.pose.translation - state_i.pose.translation - 0.5 * g * dt * dt);
  res.value.segment<3>(6) = u_p - state_i.velocity_body * dt - delta_p_corr;

  // Bias random walk residual.
  res.value.segment<3>(9) = state_j.bias.gyro - state_i.bias.gyro;
  res.value.segment<3>(12) = state_j.bias.accel - state_i.bias.accel;

  Mat15& ji = res.d_state_i;
  Mat15& jj = res.d_state_j;

  // Rotation block.
  ji.block<3, 3>(0, 0) = -jr_inv * r_j.transpose() * r_i;
  jj.block<3, 3>(0, 0) = jr_inv;
  ji.block<3, 3>(0, 9) = -jr_inv * err_rot.matrix().transpose() *
                         so3_right_jacobian(preint.d_rotation_d_gyro_bias() * dbg) *
                         preint.d_rotation_d_gyro_bias();

  // Velocity block.
  ji.block<3, 3>(3, 0) = skew(u_v);
  ji.block<3, 3>(3, 3) = -Mat3::Identity();
  ji.block<3, 3>(3, 9) = -preint.d_velocity_d_gyro_bias();
  ji.block<3, 3>(3, 12) = -preint.d_velocity_d_accel_bias();
  jj.block<3, 3>(3, 0) = -r_i_t * r_j * skew(state_j.velocity_body);
  jj.block<3, 3>(3, 3) = r_i_t * r_j;

  // Position block.
  ji.block<3, 3>(6, 0) = skew(u_p);
  ji.block<3, 3>(6, 3) = -Mat3::Identity() * dt;
  ji.block<3, 3>(6, 6) = -r_i_t;
  ji.block<3, 3>(6, 9) = -preint.d_position_d_gyro_bias();
  ji.block<3, 3>(6, 12) = -preint.d_position_d_accel_bias();
  jj.block<3, 3>(6, 6) = r_i_t;

  // Bias blocks.
  ji.block<6, 6>(9, 9) = -Mat6::Identity();
  jj.block<6, 6>(9, 9) = Mat6::Identity();

  // Whitening: preintegration covariance plus bias walk over dt.
  Mat15 cov = Mat15::Zero();
  cov.topLeftCorner<9, 9>() = preint.covariance();
  const double wg = preint.noise_model().gyro_bias_walk;
  const double wa = preint.noise_model().accel_bias_walk;
  cov.block<3, 3>(9, 9) = wg * wg * dt * Mat3::Identity();
  cov.block<3, 3>(12, 12) = wa * wa * dt * Mat3::Identity();
  // Variance floor: a sigma of 1e-5 per step is far below every sensor
  // noise here, but it caps the whitened information at 1e10 so the normal
  // equations stay solvable in double precision at 100 Hz factor rates.
  cov.diagonal() = cov.diagonal().cwiseMax(1e-10);
  const Eigen::LLT<Mat15> llt(cov);
  res.sqrt_information = llt.matrixL().solve(Mat15::Identity());
  return res;
}

}  // namespace vse
