#pragma once

#include "vse/imu_preintegration.hpp"
#include "vse/sensor_log.hpp"

namespace vse {

/// Planar ground-truth trajectory generator. Circle and figure-eight are
/// closed-form; polyline headings blend through raised-cosine fillets so
/// curvature (and hence acceleration) stays continuous.
struct TrajectorySpec {
  enum class Kind { kCircle, kFigureEight, kPolyline };
  Kind kind = Kind::kCircle;
  double speed = 5.0;     // m/s; circle/polyline constant, figure-eight nominal
  double duration = 120.0;  // s
  double radius = 25.0;   // circle radius / polyline fillet radius, m
  double scale = 40.0;    // figure-eight half-width, m
  std::vector<Eigen::Vector2d> waypoints;  // polyline vertices, m

  double imu_rate = 100.0;
  double gnss_rate = 10.0;
  double encoder_rate = 50.0;
  double lidar_rate = 10.0;
};

TrajectorySpec trajectory_spec_from_config(const class Config& cfg);

struct TruthState {
  double t = 0.0;
  Vec3 position = Vec3::Zero();  // world, IMU origin
  double yaw = 0.0;
  Vec3 velocity_world = Vec3::Zero();
  Vec3 accel_world = Vec3::Zero();  // coordinate acceleration, gravity excluded
  double yaw_rate = 0.0;

  Pose3 pose() const { return Pose3(Rot3::from_yaw(yaw), position); }
};

/// Dense truth at 1 kHz with analytic velocity, acceleration, and yaw rate.
std::vector<TruthState> generate_truth(const TrajectorySpec& spec);

/// Axis-aligned boxes plus the lidar scan pattern.
struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

struct WorldModel {
  std::vector<Box> boxes;
  int azimuth_rays = 360;
  std::vector<double> elevations = {-0.1, 0.0, 0.1};  // rad
  double max_range = 80.0;
};

/// Perimeter walls around the trajectory bounding box plus a pillar grid
/// kept clear of the path.
WorldModel make_world(const std::vector<TruthState>& truth, double margin = 15.0,
                      double pillar_spacing = 12.0);

/// First box hit along origin+dir (dir unit length), or nullopt within
/// max_range.
std::optional<double> ray_world_distance(const WorldModel& world, const Vec3& origin,
                                         const Vec3& dir, double max_range);

struct SensorSuite {
  std::vector<GnssId> gnss = {GnssId::kCenter};
  bool encoder = true;
  bool lidar = false;
  bool ground_truth = true;  // GT records at IMU rate
};

struct SensorNoiseConfig {
  ImuNoiseModel imu;  // white noise sigma = density * sqrt(rate)
  Vec3 initial_gyro_bias = Vec3::Zero();
  Vec3 initial_accel_bias = Vec3::Zero();
  double gnss_sigma = 0.0;  // m per axis; reported covariance max(sigma, 1e-3)^2 I
  uint64_t seed = 1;
};

/// Sample every sensor in the suite off the dense truth. Deterministic per
/// seed. A world model is required when the suite includes lidar frames.
EventStream synthesize_sensors(const std::vector<TruthState>& truth, const TrajectorySpec& spec,
                               const SensorSuite& suite, const SensorNoiseConfig& noise,
                               const Extrinsics& extrinsics, const WorldModel* world = nullptr);

}  // namespace vse
