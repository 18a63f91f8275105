#pragma once

#include <string>
#include <vector>

#include "vse/config.hpp"
#include "vse/sensor_log.hpp"
#include "vse/simulation.hpp"

namespace vse {

/// Timestamped scalar series; rmse matches samples to truth by nearest
/// timestamp within 1 ms.
struct Sample {
  double t = 0.0;
  double value = 0.0;
};

/// Root-mean-square error between an estimate series and a truth series.
/// Angular series are compared through wrap_angle. Throws when no estimate
/// sample has a truth match within 1 ms.
double rmse(const std::vector<Sample>& estimate, const std::vector<Sample>& truth, bool angular);

struct RmseRow {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double v = 0.0;
};

struct TimingStats {
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
  int count = 0;
};

struct MetricsReport {
  RmseRow fg;
  bool has_ekf = false;
  RmseRow ekf;

  bool has_outage = false;
  RmseRow fg_outage;               // inside [t_start, t_end] only
  Vec3 outage_end_drift = Vec3::Zero();  // |estimate - truth| per axis at outage end
  double outage_travel_m = 0.0;

  uint64_t dropped_measurements = 0;
  int solves = 0;
  int degenerate_solves = 0;
  bool final_degenerate = false;
  int max_window_values = 0;

  // Runtime stats live in the timing artifact, not the metrics report, so
  // identical config+seed reproduce the report byte for byte.
  TimingStats predict;  // per-IMU latency, solve time excluded
  TimingStats solve;
  double replay_wall_s = 0.0;
  double log_duration_s = 0.0;
};

/// One row per IMU sample after initialization.
struct TrajectoryRecord {
  double t = 0.0;
  bool has_truth = false;
  Vec3 truth_pos = Vec3::Zero();
  double truth_yaw = 0.0;
  double truth_v = 0.0;
  Vec3 fg_pos = Vec3::Zero();
  double fg_yaw = 0.0;
  double fg_v = 0.0;
  Vec3 fg_sigma_pos = Vec3::Zero();
  double fg_sigma_yaw = 0.0;
  bool has_ekf = false;
  double ekf_x = 0.0, ekf_y = 0.0, ekf_yaw = 0.0, ekf_v = 0.0;
};

struct PipelineResult {
  EventStream events;  // post-scenario stream that was replayed
  std::vector<TrajectoryRecord> records;
  MetricsReport metrics;
  std::string report_text;  // deterministic metrics report
  std::string timing_text;  // wall-clock stats, varies run to run
  std::string csv_text;     // trajectory CSV
  int exit_code = 0;        // 0 ok, 3 degenerate estimate
};

/// Simulate (or load `[run] log`) and apply the scenario transforms.
EventStream build_events(const Config& cfg);

/// Full protocol: build events, replay through the sliding-window estimator
/// (and the EKF baseline unless `[run] ekf = false`), score against the GT
/// records, and render the report artifacts. Config errors throw.
PipelineResult run_pipeline(const Config& cfg);

std::string format_metrics_report(const MetricsReport& m);
std::string format_timing_report(const MetricsReport& m);
std::string format_trajectory_csv(const std::vector<TrajectoryRecord>& records);

}  // namespace vse
