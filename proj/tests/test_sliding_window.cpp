#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "vse/sliding_window.hpp"

using namespace vse;

namespace {

EstimatorConfig test_config() {
  EstimatorConfig c;
  c.window_length = 1.0;
  c.use_attitude = false;
  c.use_kinematic = false;
  // Zero levers keep the closed-form truth simple; lever-arm handling is
  // covered by the factor tests and the dual-antenna cases below.
  c.extrinsics.imu_from_gnss_center.translation = Vec3::Zero();
  return c;
}

GnssFix center_fix(double t, const Vec3& p, double sigma = 0.1) {
  GnssFix f;
  f.t = t;
  f.position = p;
  f.position_cov = sigma * sigma * Mat3::Identity();
  f.sensor_id = GnssId::kCenter;
  return f;
}

// Constant-rate planar circle: yaw = omega t, speed v forward. Exact IMU
// signal is constant in the body frame.
struct CircleTruth {
  double v = 2.0;
  double omega = 0.5;

  NavState at(double t) const {
    NavState x;
    x.t = t;
    const double r = v / omega;
    x.pose.translation = Vec3(r * std::sin(omega * t), r * (1.0 - std::cos(omega * t)), 0.0);
    x.pose.rotation = Rot3::from_yaw(omega * t);
    x.velocity_body = Vec3(v, 0.0, 0.0);
    return x;
  }
  ImuSample imu(double t) const { return {t, Vec3(0, 0, omega), Vec3(0, omega * v, 9.81)}; }
};

}  // namespace

TEST_CASE("initialization from a single fix") {
  auto cfg = test_config();
  SlidingWindowEstimator est(cfg);
  CHECK(!est.initialized());

  est.on_gnss(center_fix(0.0, Vec3(3, 4, 0)));
  REQUIRE(est.initialized());
  CHECK((est.latest().state.pose.translation - Vec3(3, 4, 0)).norm() < 1e-12);
  CHECK(est.latest().state.velocity_body.norm() == 0.0);
  CHECK(est.latest().state.bias.vector().norm() == 0.0);

  // Prior covariance diagonal matches the configured sigmas.
  const Mat15 cov = est.latest().covariance;
  CHECK(std::abs(cov(0, 0) - cfg.prior_sigma_rot * cfg.prior_sigma_rot) < 1e-9);
  CHECK(std::abs(cov(3, 3) - cfg.prior_sigma_vel * cfg.prior_sigma_vel) < 1e-9);
  CHECK(std::abs(cov(6, 6) - cfg.prior_sigma_pos * cfg.prior_sigma_pos) < 1e-9);
  CHECK(std::abs(cov(9, 9) - cfg.prior_sigma_bg * cfg.prior_sigma_bg) < 1e-9);
  CHECK(std::abs(cov(12, 12) - cfg.prior_sigma_ba * cfg.prior_sigma_ba) < 1e-9);
}

TEST_CASE("initialization from a dual-antenna pair") {
  auto cfg = test_config();
  cfg.use_attitude = true;
  cfg.extrinsics.imu_from_gnss_front.translation = Vec3(1, 0, 0.5);
  cfg.extrinsics.imu_from_gnss_rear.translation = Vec3(-1, 0, 0.5);
  SlidingWindowEstimator est(cfg);

  // Pair aligned east: yaw = 0.
  {
    GnssFix front = center_fix(0.0, Vec3(1, 0, 0.5));
    front.sensor_id = GnssId::kFront;
    GnssFix rear = center_fix(0.0, Vec3(-1, 0, 0.5));
    rear.sensor_id = GnssId::kRear;
    est.on_gnss(front);
    CHECK(!est.initialized());
    est.on_gnss(rear);
    REQUIRE(est.initialized());
    CHECK(std::abs(est.latest().state.yaw()) < 1e-12);
    CHECK(est.latest().state.pose.translation.norm() < 1e-12);
  }

  // Pair rotated by pi/4 around an offset IMU origin.
  {
    SlidingWindowEstimator est2(cfg);
    const Rot3 r = Rot3::from_yaw(M_PI / 4);
    const Vec3 p(10, -3, 1);
    GnssFix front = center_fix(0.0, p + r * Vec3(1, 0, 0.5));
    front.sensor_id = GnssId::kFront;
    GnssFix rear = center_fix(0.0, p + r * Vec3(-1, 0, 0.5));
    rear.sensor_id = GnssId::kRear;
    est2.on_gnss(front);
    est2.on_gnss(rear);
    REQUIRE(est2.initialized());
    CHECK(std::abs(est2.latest().state.yaw() - M_PI / 4) < 1e-9);
    CHECK((est2.latest().state.pose.translation - p).norm() < 1e-9);
  }
}

TEST_CASE("initialization times out without a usable fix") {
  SlidingWindowEstimator est(test_config());
  bool threw = false;
  for (int i = 0; i <= 600; ++i) {
    try {
      est.on_imu({i * 0.01, Vec3::Zero(), Vec3(0, 0, 9.81)});
    } catch (const std::runtime_error&) {
      threw = true;
      break;
    }
  }
  CHECK(threw);

  // An ungated fix does not initialize either.
  SlidingWindowEstimator est2(test_config());
  GnssFix bad = center_fix(0.0, Vec3::Zero(), 100.0);
  est2.on_gnss(bad);
  CHECK(!est2.initialized());
}

TEST_CASE("stationary run drifts below 1e-6 m") {
  SlidingWindowEstimator est(test_config());
  est.on_gnss(center_fix(0.0, Vec3::Zero()));
  for (int i = 1; i <= 100; ++i) {
    const auto out = est.on_imu({i * 0.01, Vec3::Zero(), Vec3(0, 0, 9.81)});
    REQUIRE(out.has_value());
    CHECK(out->state.pose.translation.norm() < 1e-6);
  }
  CHECK(est.latest().state.pose.translation.norm() < 1e-6);
}

TEST_CASE("covariance trace strictly increases between GNSS updates") {
  auto cfg = test_config();
  cfg.solve_every_n_imu = 1000000;  // no solves: pure prediction
  SlidingWindowEstimator est(cfg);
  est.on_gnss(center_fix(0.0, Vec3::Zero()));
  double last = est.latest().covariance.trace();
  for (int i = 1; i <= 80; ++i) {
    const auto out = est.on_imu({i * 0.01, Vec3::Zero(), Vec3(0, 0, 9.81)});
    REQUIRE(out.has_value());
    const double tr = out->covariance.trace();
    CHECK(tr > last);
    last = tr;
    Eigen::SelfAdjointEigenSolver<Mat15> es(out->covariance);
    CHECK(es.eigenvalues().minCoeff() > -1e-12);
  }
}

TEST_CASE("propagated covariance matches a Monte Carlo oracle") {
  // Deterministic inputs, randomized initial-state perturbations: with tiny
  // IMU noise, P_out ~= F P0 F^T and the sample covariance estimates it.
  CircleTruth truth;
  ImuNoiseModel quiet;
  quiet.gyro_noise_density = 1e-9;
  quiet.accel_noise_density = 1e-9;
  quiet.gyro_bias_walk = 1e-12;
  quiet.accel_bias_walk = 1e-12;

  NavState x0 = truth.at(0.0);
  x0.bias.gyro = Vec3(0.002, -0.001, 0.003);
  x0.bias.accel = Vec3(0.01, 0.02, -0.01);

  PreintegratedImu preint(quiet, x0.bias);
  for (int k = 0; k < 10; ++k) preint.integrate(truth.imu(k * 0.01), 0.01);
  const NavState x1 = preint.predict(x0);

  const double s = 0.01;
  Mat15 p0 = (s * s) * Mat15::Identity();
  const Mat15 p1 = propagate_covariance(x0, x1, preint, p0);

  std::mt19937 gen(71);
  std::normal_distribution<double> n(0.0, s);
  const int trials = 20000;
  Mat15 sample = Mat15::Zero();
  for (int trial = 0; trial < trials; ++trial) {
    Vec15 d;
    for (int i = 0; i < 15; ++i) d(i) = n(gen);
    const NavState xj = preint.predict(retract(x0, d));
    const Vec15 e = local_coordinates(x1, xj);
    sample += e * e.transpose();
  }
  sample /= trials;
  CHECK((sample - p1).norm() / p1.norm() < 0.05);
}

TEST_CASE("association: nearest value, ties to earlier, fallback newest") {
  auto cfg = test_config();
  cfg.solve_every_n_imu = 1000000;
  SlidingWindowEstimator est(cfg);
  est.on_gnss(center_fix(0.0, Vec3::Zero()));
  for (int i = 1; i <= 10; ++i) est.on_imu({i * 0.01, Vec3::Zero(), Vec3(0, 0, 9.81)});

  CHECK(est.associated_time(0.04) == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(est.associated_time(0.005) == doctest::Approx(0.0).epsilon(1e-12));  // tie -> earlier
  CHECK(est.associated_time(0.044) == doctest::Approx(0.04));
  CHECK(est.associated_time(0.046) == doctest::Approx(0.05));
  // Beyond the 2x-period tolerance: attach to the newest value.
  CHECK(est.associated_time(0.5) == doctest::Approx(0.10));
}

TEST_CASE("noise-free circle is tracked tightly") {
  auto cfg = test_config();
  SlidingWindowEstimator est(cfg);
  CircleTruth truth;

  est.on_gnss(center_fix(0.0, truth.at(0.0).pose.translation, 0.02));
  double pos_err = 0.0, yaw_err = 0.0, transient_err = 0.0;
  int count = 0;
  for (int i = 1; i <= 1000; ++i) {
    const double t = i * 0.01;
    const auto out = est.on_imu(truth.imu(t));
    REQUIRE(out.has_value());
    if (i % 10 == 0) est.on_gnss(center_fix(t, truth.at(t).pose.translation, 0.02));
    const NavState ref = truth.at(t);
    const double pe = (est.latest().state.pose.translation - ref.pose.translation).norm();
    if (t <= 1.0) {
      // Startup transient: velocity and yaw begin at the prior mean.
      transient_err = std::max(transient_err, pe);
    } else {
      pos_err = std::max(pos_err, pe);
      yaw_err = std::max(yaw_err, std::abs(wrap_angle(est.latest().state.yaw() - ref.yaw())));
    }
    ++count;
  }
  CHECK(count == 1000);
  CHECK(transient_err < 0.5);
  CHECK(pos_err < 0.05);
  CHECK(yaw_err < 0.01);
  CHECK((est.latest().state.velocity_body - Vec3(truth.v, 0, 0)).norm() < 0.05);
  CHECK(!est.degenerate());

  // Window stays bounded: ~1 s of values at 100 Hz.
  CHECK(est.window_states().size() <= 110);
  CHECK(est.latest().state.t - est.window_start_time() <= cfg.window_length + 0.011);

  // Solver discipline over the whole run.
  CHECK(!est.solve_log().empty());
  for (const auto& s : est.solve_log()) {
    CHECK(s.summary.final_cost <= s.summary.initial_cost);
  }
}

TEST_CASE("short window agrees with a near-batch window") {
  CircleTruth truth;
  auto cfg_short = test_config();
  cfg_short.window_length = 0.5;
  auto cfg_long = test_config();
  cfg_long.window_length = 100.0;  // never slides over this run

  SlidingWindowEstimator a(cfg_short), b(cfg_long);
  a.on_gnss(center_fix(0.0, truth.at(0.0).pose.translation, 0.02));
  b.on_gnss(center_fix(0.0, truth.at(0.0).pose.translation, 0.02));
  for (int i = 1; i <= 500; ++i) {
    const double t = i * 0.01;
    const ImuSample s = truth.imu(t);
    a.on_imu(s);
    b.on_imu(s);
    if (i % 10 == 0) {
      const GnssFix f = center_fix(t, truth.at(t).pose.translation, 0.02);
      a.on_gnss(f);
      b.on_gnss(f);
    }
  }
  CHECK((a.latest().state.pose.translation - b.latest().state.pose.translation).norm() < 1e-3);
  CHECK(a.window_states().size() < b.window_states().size());
}

TEST_CASE("stale measurements are dropped with a counter") {
  auto cfg = test_config();
  cfg.window_length = 0.5;
  SlidingWindowEstimator est(cfg);
  CircleTruth truth;
  est.on_gnss(center_fix(0.0, truth.at(0.0).pose.translation, 0.02));
  for (int i = 1; i <= 200; ++i) est.on_imu(truth.imu(i * 0.01));

  CHECK(est.dropped_measurements() == 0);
  est.on_gnss(center_fix(0.1, truth.at(0.1).pose.translation, 0.02));  // window starts ~1.5
  CHECK(est.dropped_measurements() == 1);

  // Gated fix also counts as dropped.
  est.on_gnss(center_fix(2.0, truth.at(2.0).pose.translation, 100.0));
  CHECK(est.dropped_measurements() == 2);
}

TEST_CASE("rebase continuity: latest equals the newest window value") {
  SlidingWindowEstimator est(test_config());
  CircleTruth truth;
  est.on_gnss(center_fix(0.0, truth.at(0.0).pose.translation, 0.02));
  for (int i = 1; i <= 100; ++i) {
    est.on_imu(truth.imu(i * 0.01));
    if (i % 10 == 0) est.on_gnss(center_fix(i * 0.01, truth.at(i * 0.01).pose.translation, 0.02));
    const auto states = est.window_states();
    CHECK(states.back().t == est.latest().state.t);
    CHECK((states.back().pose.translation - est.latest().state.pose.translation).norm() == 0.0);
  }
}

TEST_CASE("values stay strictly time-ordered and reject out-of-order input") {
  SlidingWindowEstimator est(test_config());
  est.on_gnss(center_fix(0.0, Vec3::Zero()));
  est.on_imu({0.01, Vec3::Zero(), Vec3(0, 0, 9.81)});
  CHECK_THROWS(est.on_imu({0.01, Vec3::Zero(), Vec3(0, 0, 9.81)}));
  CHECK_THROWS(est.on_imu({0.005, Vec3::Zero(), Vec3(0, 0, 9.81)}));

  const auto states = est.window_states();
  for (size_t i = 1; i < states.size(); ++i) CHECK(states[i].t > states[i - 1].t);
}

TEST_CASE("kinematic and lidar odometry factors are accepted") {
  auto cfg = test_config();
  cfg.use_kinematic = true;
  // Rear axle at the IMU origin so the circular truth satisfies the
  // non-holonomic constraint exactly.
  cfg.extrinsics.imu_from_rear_axle.translation = Vec3::Zero();
  cfg.extrinsics.wheelbase = 2.0;
  cfg.extrinsics.imu_from_lidar.translation = Vec3(0.5, 0, 1.0);
  SlidingWindowEstimator est(cfg);
  CircleTruth truth;
  est.on_gnss(center_fix(0.0, truth.at(0.0).pose.translation, 0.02));

  // Steering angle consistent with the circle at the rear axle.
  const double steer = std::atan(truth.omega * cfg.extrinsics.wheelbase / truth.v);
  NavState prev_truth = truth.at(0.0);
  for (int i = 1; i <= 300; ++i) {
    const double t = i * 0.01;
    est.on_imu(truth.imu(t));
    if (i % 10 == 0) {
      est.on_gnss(center_fix(t, truth.at(t).pose.translation, 0.02));
      est.on_encoder({t, truth.v, steer});
    }
    if (i % 20 == 0) {
      const NavState cur = truth.at(t);
      const Pose3 imu_from_lidar = cfg.extrinsics.imu_from_lidar;
      const Pose3 delta_imu = pose_between(prev_truth.pose, cur.pose);
      LidarOdom odo;
      odo.t_prev = prev_truth.t;
      odo.t_curr = t;
      odo.delta = pose_compose(pose_compose(pose_inverse(imu_from_lidar), delta_imu), imu_from_lidar);
      odo.covariance = 1e-4 * Mat6::Identity();
      est.on_lidar_odom(odo);
      prev_truth = cur;
    }
  }
  const NavState ref = truth.at(3.0);
  CHECK((est.latest().state.pose.translation - ref.pose.translation).norm() < 0.05);
  CHECK(std::abs(wrap_angle(est.latest().state.yaw() - ref.yaw())) < 0.01);
  CHECK(!est.degenerate());
}
