#pragma once

#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "vse/se3.hpp"

namespace vse {

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s, body frame
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force, body frame
};

enum class GnssId { kFront, kRear, kCenter };

const char* gnss_id_name(GnssId id);
GnssId gnss_id_from_name(const std::string& name);

struct GnssFix {
  double t = 0.0;
  Vec3 position = Vec3::Zero();  // local ENU, meters
  Mat3 position_cov = Mat3::Identity();
  GnssId sensor_id = GnssId::kCenter;
};

struct EncoderSample {
  double t = 0.0;
  double v_x = 0.0;   // m/s
  double steer = 0.0; // rad, |steer| < pi/2
};

struct LidarFrame {
  double t = 0.0;
  std::vector<Vec3> points;  // sensor frame, meters
};

struct LidarOdom {
  double t_prev = 0.0;
  double t_curr = 0.0;
  Pose3 delta;          // sensor frame
  Mat6 covariance = Mat6::Identity();  // [rotation, translation] order
};

struct GroundTruth {
  double t = 0.0;
  Pose3 pose;                // world_from_body (IMU)
  Vec3 velocity_body = Vec3::Zero();
};

// Tie-break priority for equal timestamps follows enum order.
struct SensorEvent {
  double t = 0.0;
  std::variant<ImuSample, GnssFix, EncoderSample, LidarOdom, LidarFrame, GroundTruth> payload;

  template <typename T>
  bool is() const { return std::holds_alternative<T>(payload); }
  template <typename T>
  const T& as() const { return std::get<T>(payload); }
};

using EventStream = std::vector<SensorEvent>;

struct Extrinsics {
  // imu_from_sensor: sensor origin expressed in the IMU frame.
  Pose3 imu_from_gnss_front;
  Pose3 imu_from_gnss_rear;
  Pose3 imu_from_gnss_center;
  Pose3 imu_from_lidar;
  Pose3 imu_from_rear_axle;
  double wheelbase = 2.0;  // meters

  const Pose3& imu_from_gnss(GnssId id) const;
};

struct Scenario {
  double gnss_noise_sigma = 0.0;  // meters per axis, 0 = off
  std::optional<std::pair<double, double>> gnss_outage;  // [t_start, t_end] seconds
  std::set<std::string> disabled_sensors;  // gnss_front, gnss_rear, gnss_center, lidar, encoder
  uint64_t rng_seed = 0;
};

/// Rayleigh relation: CEP = 1.1774 sigma per horizontal axis.
inline double cep_to_sigma(double cep) { return cep / 1.1774; }

/// Parse a sensor log file. Events come out strictly time-ordered with
/// ties broken by sensor priority IMU < GNSS < ENC < LIDAR. Point-cloud
/// sidecar paths are resolved relative to the log's directory.
EventStream parse_log(const std::string& path);

/// Write a stream back to the `TAG t fields...` text format. Point clouds
/// go to a single sidecar binary (little-endian float32 xyz) next to the log.
void serialize_log(const EventStream& events, const std::string& path);

/// Drop GNSS inside the outage window, drop disabled sensors, perturb the
/// remaining GNSS fixes with zero-mean Gaussian noise (covariance rewritten
/// to the injected sigma^2 I). Deterministic under a fixed seed.
EventStream apply_scenario(const EventStream& events, const Scenario& scenario);

Scenario scenario_from_config(const class Config& cfg);
Extrinsics extrinsics_from_config(const class Config& cfg);

}  // namespace vse
