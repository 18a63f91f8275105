#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <vector>

#include "vse/config.hpp"
#include "vse/factors.hpp"
#include "vse/least_squares.hpp"
#include "vse/nav_state.hpp"

namespace vse {

struct EstimatorConfig {
  double window_length = 1.0;      // seconds
  int solve_every_n_imu = 10;
  double gate_threshold = 25.0;    // m^2 on GNSS covariance diagonal
  double imu_period = 0.01;        // nominal, association tolerance = 2x
  double init_timeout = 5.0;       // seconds without a usable fix -> error

  ImuNoiseModel imu_noise;
  Extrinsics extrinsics;

  bool use_kinematic = true;
  bool use_attitude = true;

  // Initial heading when no dual-GNSS pair is available (the known
  // initialization transform for single-GNSS setups).
  double initial_yaw = 0.0;

  // Prior sigmas for the initial state.
  double prior_sigma_rot = 0.1;    // rad
  double prior_sigma_vel = 0.5;    // m/s
  double prior_sigma_pos = 1.0;    // m
  double prior_sigma_bg = 0.01;    // rad/s
  double prior_sigma_ba = 0.1;     // m/s^2

  // Kinematic factor noise per measurement interval.
  double kinematic_sigma_pos = 0.01;   // m
  double kinematic_sigma_yaw = 0.005;  // rad
  double kinematic_sigma_vel = 0.05;   // m/s

  // Window solves are warm-started from the previous optimum, so the
  // damping starts essentially at the Gauss-Newton step; rejected steps
  // still raise it geometrically.
  LmOptions lm{.initial_lambda = 1e-10};
};

EstimatorConfig estimator_config_from_config(const Config& cfg);

struct SolveStats {
  double t = 0.0;          // newest value timestamp at solve time
  int window_size = 0;
  LmSummary summary;
  double duration_s = 0.0; // wall time of the solve
};

/// Sliding-window MAP estimator. One value per IMU sample; asynchronous
/// measurements attach to the nearest value; a marginal prior anchors the
/// window head. on_imu returns a filtered prediction immediately, the
/// optimizer runs on its trigger schedule and rebases the predictor.
class SlidingWindowEstimator {
 public:
  explicit SlidingWindowEstimator(EstimatorConfig config);

  bool initialized() const { return initialized_; }

  /// Returns the predicted state at the sample time (IMU-rate output).
  /// Before initialization returns nullopt; throws once the init timeout
  /// has elapsed without a usable fix.
  std::optional<StateWithCovariance> on_imu(const ImuSample& sample);
  void on_gnss(const GnssFix& fix);
  void on_encoder(const EncoderSample& sample);
  void on_lidar_odom(const LidarOdom& odom);

  /// Force a solve of the current window (normally driven by the trigger
  /// schedule inside the event handlers).
  void optimize();

  StateWithCovariance latest() const;
  /// Current window contents, oldest first.
  std::vector<NavState> window_states() const;
  double window_start_time() const;

  /// Timestamp of the value a measurement at t would attach to (nearest,
  /// ties to the earlier value, out-of-tolerance falls back to the newest).
  double associated_time(double t) const;

  uint64_t dropped_measurements() const { return dropped_; }
  /// True when the most recent solve was rank-deficient.
  bool degenerate() const { return degenerate_; }
  const std::vector<SolveStats>& solve_log() const { return solve_log_; }

 private:
  struct Value {
    int key;
    NavState state;
  };

  void try_initialize();
  void initialize_at(const GnssFix& fix, double yaw);
  void slide_window(LmSolver& solver);
  /// Index of the value whose timestamp is nearest t (ties to the earlier
  /// value); nullopt when outside the association tolerance and the
  /// out-of-tolerance fallback is the newest value.
  int associate(double t) const;
  bool in_window(double t) const;
  void maybe_solve(bool force);

  EstimatorConfig config_;
  bool initialized_ = false;
  bool degenerate_ = false;
  std::optional<double> first_event_t_;
  std::optional<GnssFix> pending_front_;
  std::optional<GnssFix> pending_rear_;
  std::optional<GnssFix> pending_any_;
  std::optional<double> pending_speed_;  // latest pre-init encoder speed
  bool velocity_seeded_ = false;

  std::deque<Value> values_;
  std::vector<std::unique_ptr<Factor>> factors_;
  std::unique_ptr<PriorFactor> anchor_;
  int next_key_ = 0;

  Mat15 predictor_cov_ = Mat15::Zero();
  std::optional<EncoderSample> last_encoder_;
  std::optional<GnssFix> last_front_fix_;
  std::optional<GnssFix> last_rear_fix_;

  int imu_since_solve_ = 0;
  bool dirty_ = false;
  uint64_t dropped_ = 0;
  std::vector<SolveStats> solve_log_;
};

/// Single-step covariance propagation used by the IMU-rate predictor:
/// transports P_i across the preintegrated delta in the NavState tangent
/// convention and injects the preintegration noise.
Mat15 propagate_covariance(const NavState& state_i, const NavState& state_j,
                           const PreintegratedImu& preint, const Mat15& cov_i);

}  // namespace vse
