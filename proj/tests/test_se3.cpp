#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "vse/se3.hpp"

using namespace vse;

TEST_CASE("so3_exp of zero is identity") {
  CHECK(Rot3::exp(Vec3::Zero()).matrix().isApprox(Mat3::Identity(), 1e-15));
}

TEST_CASE("so3_exp matches the matrix-exponential series") {
  const Vec3 v(0.0, 0.0, M_PI / 2.0);
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((Rot3::exp(v).matrix() - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((Rot3::exp(v).matrix() - oracle::rotation_series(v)).cwiseAbs().maxCoeff() < 1e-12);

  std::mt19937 gen(7);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 w = Vec3(n(gen), n(gen), n(gen)).normalized() * std::abs(n(gen));
    CHECK((Rot3::exp(w).matrix() - oracle::rotation_series(w)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("so3_exp rejects non-finite input") {
  CHECK_THROWS(Rot3::exp(Vec3(std::nan(""), 0.0, 0.0)));
}

TEST_CASE("exp/log round trip") {
  CHECK(Rot3::identity().log().norm() == 0.0);
  const Vec3 v(0.1, 0.2, 0.3);
  CHECK((Rot3::exp(v).log() - v).norm() < 1e-10);

  std::mt19937 gen(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w = Vec3(n(gen), n(gen), n(gen)).normalized() * 0.3;
    CHECK((Rot3::exp(w).log() - w).norm() < 1e-10);
  }
  // Across the full angle range.
  std::uniform_real_distribution<double> angle(1e-12, M_PI - 1e-6);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 w = Vec3(n(gen), n(gen), n(gen)).normalized() * angle(gen);
    CHECK((Rot3::exp(w).log() - w).norm() < 1e-10);
  }
}

TEST_CASE("so3_log of a pi rotation") {
  Mat3 m;
  m << -1, 0, 0, 0, -1, 0, 0, 0, 1;
  const Vec3 l = Rot3(m).log();
  CHECK((l.cwiseAbs() - Vec3(0, 0, M_PI)).norm() < 1e-9);
  CHECK(l.norm() <= M_PI + 1e-12);
}

TEST_CASE("right Jacobian") {
  CHECK(so3_right_jacobian(Vec3::Zero()).isApprox(Mat3::Identity(), 1e-15));

  // Defining relation exp(w + d) ~ exp(w) exp(Jr d).
  const Vec3 w(0.0, 0.0, 0.5);
  const Mat3 jr = so3_right_jacobian(w);
  std::mt19937 gen(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const Vec3 d = Vec3(n(gen), n(gen), n(gen)) * 1e-6;
    const Rot3 lhs = Rot3::exp(w + d);
    const Rot3 rhs = Rot3::exp(w) * Rot3::exp(jr * d);
    CHECK((lhs.inverse() * rhs).log().norm() < 1e-9);
  }

  // Left/right duality.
  for (int i = 0; i < 20; ++i) {
    const Vec3 v = Vec3(n(gen), n(gen), n(gen));
    CHECK((so3_right_jacobian(v) - so3_left_jacobian(-v).transpose()).norm() < 1e-12);
  }

  // Jr inverse really inverts.
  for (int i = 0; i < 20; ++i) {
    const Vec3 v = Vec3(n(gen), n(gen), n(gen));
    CHECK((so3_right_jacobian(v) * so3_right_jacobian_inverse(v) - Mat3::Identity()).norm() < 1e-10);
  }
}

TEST_CASE("rotation matrices stay orthogonal and quaternions normalized") {
  std::mt19937 gen(5);
  std::normal_distribution<double> n(0.0, 1.0);
  Rot3 r;
  for (int i = 0; i < 1000000; ++i) {
    r = r * Rot3::exp(Vec3(n(gen), n(gen), n(gen)) * 0.01);
  }
  CHECK(std::abs(r.quaternion().norm() - 1.0) <= 1e-9);
  const Mat3 m = r.matrix();
  CHECK((m * m.transpose() - Mat3::Identity()).norm() < 1e-9);
  CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pose compose/inverse/between") {
  std::mt19937 gen(13);
  std::normal_distribution<double> n(0.0, 1.0);

  const Pose3 a = Pose3::from_translation(Vec3(1, 0, 0));
  const Pose3 b = Pose3::from_translation(Vec3(1, 2, 0));
  CHECK((pose_between(a, b).translation - Vec3(0, 2, 0)).norm() < 1e-15);

  for (int i = 0; i < 1000; ++i) {
    const Pose3 x(Rot3::exp(Vec3(n(gen), n(gen), n(gen))), Vec3(n(gen), n(gen), n(gen)) * 5.0);
    const Pose3 y(Rot3::exp(Vec3(n(gen), n(gen), n(gen))), Vec3(n(gen), n(gen), n(gen)) * 5.0);

    const Pose3 ident = pose_compose(pose_inverse(x), x);
    CHECK(ident.rotation.log().norm() < 1e-9);
    CHECK(ident.translation.norm() < 1e-9);

    const Pose3 betw = pose_between(x, x);
    CHECK(betw.rotation.log().norm() < 1e-12);
    CHECK(betw.translation.norm() < 1e-12);

    const Pose3 recomposed = pose_compose(x, pose_between(x, y));
    CHECK((recomposed.translation - y.translation).norm() < 1e-10);
    CHECK((recomposed.rotation.inverse() * y.rotation).log().norm() < 1e-10);
  }
}

TEST_CASE("se3 exp/log round trip") {
  std::mt19937 gen(17);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    Vec6 tw;
    tw << Vec3(n(gen), n(gen), n(gen)).normalized() * std::abs(n(gen)),
        Vec3(n(gen), n(gen), n(gen));
    CHECK((se3_log(se3_exp(tw)) - tw).norm() < 1e-9);
  }
}

TEST_CASE("wrap_angle") {
  CHECK(wrap_angle(3.13 - (-3.13)) == doctest::Approx(6.26 - 2 * M_PI));
  CHECK(wrap_angle(0.1) == doctest::Approx(0.1));
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));  // (-pi, pi]
}
