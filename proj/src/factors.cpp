#include "vse/factors.hpp"

#include <stdexcept>

#include <Eigen/Cholesky>

namespace vse {
namespace {

template <int N>
Eigen::Matrix<double, N, N> sqrt_information(const Eigen::Matrix<double, N, N>& covariance) {
  const Eigen::LLT<Eigen::Matrix<double, N, N>> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("factor covariance is not positive definite");
  }
  return llt.matrixL().solve(Eigen::Matrix<double, N, N>::Identity());
}

// State tangent column offsets: [theta, v_body, p_world, b_gyro, b_accel].
constexpr int kTheta = 0;
constexpr int kVel = 3;
constexpr int kPos = 6;

// d yaw(M exp(eps e_k)) / d eps for the three generators, as a row vector.
Eigen::RowVector3d yaw_generator_row(const Mat3& m) {
  Eigen::RowVector3d row;
  const double denom = m(0, 0) * m(0, 0) + m(1, 0) * m(1, 0);
  for (int k = 0; k < 3; ++k) {
    const Mat3 dm = m * skew(Vec3::Unit(k));
    row(k) = (m(0, 0) * dm(1, 0) - m(1, 0) * dm(0, 0)) / denom;
  }
  return row;
}

}  // namespace

Vec3 gnss_to_imu_position(const Vec3& gnss_position, const Rot3& r, const Vec3& lever) {
  return gnss_position + r * lever;
}

Vec3 gnss_to_imu_position(const GnssFix& fix, const Rot3& r, const Extrinsics& extrinsics) {
  const Vec3 antenna_in_imu = extrinsics.imu_from_gnss(fix.sensor_id).translation;
  return gnss_to_imu_position(fix.position, r, -antenna_in_imu);
}

bool gate_gnss(const GnssFix& fix, double threshold) {
  return fix.position_cov.diagonal().maxCoeff() <= threshold;
}

std::optional<AttitudeMeasurement> dual_gnss_attitude(const GnssFix& front, const GnssFix& rear,
                                                      const Extrinsics& extrinsics) {
  if (std::abs(front.t - rear.t) >= 0.05) return std::nullopt;
  const Vec3 d = front.position - rear.position;
  const double horizontal = d.head<2>().norm();
  if (horizontal <= 0.5) return std::nullopt;

  const Vec3 baseline = extrinsics.imu_from_gnss_front.translation -
                        extrinsics.imu_from_gnss_rear.translation;
  AttitudeMeasurement att;
  att.yaw = wrap_angle(std::atan2(d.y(), d.x()) - std::atan2(baseline.y(), baseline.x()));
  att.pitch = std::atan2(d.z(), horizontal) -
              std::atan2(baseline.z(), baseline.head<2>().norm());
  return att;
}

KinematicDelta kinematic_delta(const EncoderSample& enc, double dt, double wheelbase) {
  if (!(dt > 0.0)) throw std::invalid_argument("kinematic_delta: dt must be > 0");
  if (!(wheelbase > 0.0)) throw std::invalid_argument("kinematic_delta: wheelbase must be > 0");
  KinematicDelta out;
  out.yaw_rate = enc.v_x * std::tan(enc.steer) / wheelbase;
  out.dyaw = out.yaw_rate * dt;
  if (std::abs(out.dyaw) < 1e-9) {
    out.dx = enc.v_x * dt;
    out.dy = 0.0;
  } else {
    const double radius = enc.v_x / out.yaw_rate;
    out.dx = radius * std::sin(out.dyaw);
    out.dy = radius * (1.0 - std::cos(out.dyaw));
  }
  return out;
}

PriorFactor::PriorFactor(int key, const NavState& prior, const Mat15& covariance)
    : keys_{key}, prior_(prior), covariance_(covariance),
      sqrt_info_(sqrt_information<15>(covariance)) {}

LinearizedFactor PriorFactor::evaluate(const std::vector<const NavState*>& states) const {
  const NavState& x = *states[0];
  const Vec15 r = local_coordinates(prior_, x);
  Mat15 j = Mat15::Identity();
  j.block<3, 3>(0, 0) = so3_right_jacobian_inverse(r.segment<3>(0));

  LinearizedFactor out;
  out.blocks = keys_;
  out.residual = sqrt_info_ * r;
  out.jacobians = {sqrt_info_ * j};
  return out;
}

GnssUnaryFactor::GnssUnaryFactor(int key, const Vec3& measured_imu_position, const Mat3& covariance)
    : keys_{key}, measured_(measured_imu_position), sqrt_info_(sqrt_information<3>(covariance)) {}

LinearizedFactor GnssUnaryFactor::evaluate(const std::vector<const NavState*>& states) const {
  const NavState& x = *states[0];
  Eigen::Matrix<double, 3, 15> j = Eigen::Matrix<double, 3, 15>::Zero();
  j.block<3, 3>(0, kPos) = Mat3::Identity();

  LinearizedFactor out;
  out.blocks = keys_;
  out.residual = sqrt_info_ * (x.pose.translation - measured_);
  out.jacobians = {sqrt_info_ * j};
  return out;
}

GnssAttitudeFactor::GnssAttitudeFactor(int key, const AttitudeMeasurement& measured,
                                       const Eigen::Matrix2d& covariance)
    : keys_{key}, measured_(measured), sqrt_info_(sqrt_information<2>(covariance)) {}

LinearizedFactor GnssAttitudeFactor::evaluate(const std::vector<const NavState*>& states) const {
  const NavState& x = *states[0];
  const Mat3 r = x.pose.rotation.matrix();
  const Vec3 u = r.col(0);  // heading axis in the world frame
  const double h2 = u.x() * u.x() + u.y() * u.y();
  const double h = std::sqrt(h2);
  const double rho2 = h2 + u.z() * u.z();

  Eigen::Vector2d residual;
  residual(0) = wrap_angle(std::atan2(u.y(), u.x()) - measured_.yaw);
  residual(1) = wrap_angle(std::atan2(u.z(), h) - measured_.pitch);

  // du = -R [e_x]x dtheta.
  const Mat3 du = -r * skew(Vec3::UnitX());
  Eigen::RowVector3d dyaw_du(-u.y() / h2, u.x() / h2, 0.0);
  Eigen::RowVector3d dpitch_du(-u.z() * u.x() / (h * rho2), -u.z() * u.y() / (h * rho2), h / rho2);

  Eigen::Matrix<double, 2, 15> j = Eigen::Matrix<double, 2, 15>::Zero();
  j.block<1, 3>(0, kTheta) = dyaw_du * du;
  j.block<1, 3>(1, kTheta) = dpitch_du * du;

  LinearizedFactor out;
  out.blocks = keys_;
  out.residual = sqrt_info_ * residual;
  out.jacobians = {sqrt_info_ * j};
  return out;
}

BetweenPoseFactor::BetweenPoseFactor(int key_i, int key_j, const Pose3& measured_delta,
                                     const Mat6& covariance)
    : keys_{key_i, key_j}, measured_(measured_delta),
      sqrt_info_(sqrt_information<6>(covariance)) {}

LinearizedFactor BetweenPoseFactor::evaluate(const std::vector<const NavState*>& states) const {
  const NavState& xi = *states[0];
  const NavState& xj = *states[1];
  const Mat3 ri = xi.pose.rotation.matrix();
  const Mat3 rj = xj.pose.rotation.matrix();
  const Vec3 dp = ri.transpose() * (xj.pose.translation - xi.pose.translation);

  const Rot3 err_rot = measured_.rotation.inverse() * xi.pose.rotation.inverse() * xj.pose.rotation;
  const Vec3 r_rot = err_rot.log();
  const Mat3 jr_inv = so3_right_jacobian_inverse(r_rot);

  Vec6 residual;
  residual << r_rot, dp - measured_.translation;

  Eigen::Matrix<double, 6, 15> ji = Eigen::Matrix<double, 6, 15>::Zero();
  Eigen::Matrix<double, 6, 15> jj = Eigen::Matrix<double, 6, 15>::Zero();
  ji.block<3, 3>(0, kTheta) = -jr_inv * rj.transpose() * ri;
  jj.block<3, 3>(0, kTheta) = jr_inv;
  ji.block<3, 3>(3, kTheta) = skew(dp);
  ji.block<3, 3>(3, kPos) = -ri.transpose();
  jj.block<3, 3>(3, kPos) = ri.transpose();

  LinearizedFactor out;
  out.blocks = keys_;
  out.residual = sqrt_info_ * residual;
  out.jacobians = {sqrt_info_ * ji, sqrt_info_ * jj};
  return out;
}

KinematicBetweenFactor::KinematicBetweenFactor(int key_i, int key_j, const KinematicDelta& delta,
                                               double measured_vx, const Eigen::Matrix4d& covariance,
                                               const Pose3& imu_from_rear_axle)
    : keys_{key_i, key_j}, delta_(delta), measured_vx_(measured_vx),
      sqrt_info_(sqrt_information<4>(covariance)), axle_(imu_from_rear_axle) {}

LinearizedFactor KinematicBetweenFactor::evaluate(const std::vector<const NavState*>& states) const {
  const NavState& xi = *states[0];
  const NavState& xj = *states[1];
  const Mat3 ri = xi.pose.rotation.matrix();
  const Mat3 rb = axle_.rotation.matrix();
  const Vec3 tb = axle_.translation;

  // Relative motion of the rear-axle frame: rel = B^-1 (T_i^-1 T_j) B.
  const Mat3 delta_r = (xi.pose.rotation.inverse() * xj.pose.rotation).matrix();
  const Vec3 delta_t = ri.transpose() * (xj.pose.translation - xi.pose.translation);
  const Vec3 u = delta_r * tb + delta_t;
  const Vec3 rel_t = rb.transpose() * (u - tb);
  const Mat3 rel_r = rb.transpose() * delta_r * rb;

  Eigen::Vector4d residual;
  residual(0) = rel_t.x() - delta_.dx;
  residual(1) = rel_t.y() - delta_.dy;
  residual(2) = wrap_angle(std::atan2(rel_r(1, 0), rel_r(0, 0)) - delta_.dyaw);
  residual(3) = xi.velocity_body.x() - measured_vx_;

  Eigen::Matrix<double, 4, 15> ji = Eigen::Matrix<double, 4, 15>::Zero();
  Eigen::Matrix<double, 4, 15> jj = Eigen::Matrix<double, 4, 15>::Zero();

  // Translation rows.
  const Mat3 dt_dtheta_i = rb.transpose() * skew(u);
  const Mat3 dt_dp_i = -rb.transpose() * ri.transpose();
  const Mat3 dt_dtheta_j = -rb.transpose() * delta_r * skew(tb);
  const Mat3 dt_dp_j = rb.transpose() * ri.transpose();
  ji.block<2, 3>(0, kTheta) = dt_dtheta_i.topRows<2>();
  ji.block<2, 3>(0, kPos) = dt_dp_i.topRows<2>();
  jj.block<2, 3>(0, kTheta) = dt_dtheta_j.topRows<2>();
  jj.block<2, 3>(0, kPos) = dt_dp_j.topRows<2>();

  // Yaw row: right tangent of rel_r is rb^T dtheta_j and -rel_r^T rb^T dtheta_i.
  const Eigen::RowVector3d yaw_row = yaw_generator_row(rel_r);
  ji.block<1, 3>(2, kTheta) = -yaw_row * rel_r.transpose() * rb.transpose();
  jj.block<1, 3>(2, kTheta) = yaw_row * rb.transpose();

  // Forward speed row.
  ji(3, kVel) = 1.0;

  LinearizedFactor out;
  out.blocks = keys_;
  out.residual = sqrt_info_ * residual;
  out.jacobians = {sqrt_info_ * ji, sqrt_info_ * jj};
  return out;
}

ImuFactor::ImuFactor(int key_i, int key_j, PreintegratedImu preint)
    : keys_{key_i, key_j}, preint_(std::move(preint)) {}

LinearizedFactor ImuFactor::evaluate(const std::vector<const NavState*>& states) const {
  const ImuResidual r = imu_residual(*states[0], *states[1], preint_);
  LinearizedFactor out;
  out.blocks = keys_;
  out.residual = r.sqrt_information * r.value;
  out.jacobians = {r.sqrt_information * r.d_state_i, r.sqrt_information * r.d_state_j};
  return out;
}

}  // namespace vse
