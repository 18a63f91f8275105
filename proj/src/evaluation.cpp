#include "vse/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "vse/ekf.hpp"
#include "vse/lidar_icp.hpp"
#include "vse/sliding_window.hpp"

namespace vse {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

TimingStats timing_stats(std::vector<double>& samples_ms) {
  TimingStats s;
  s.count = static_cast<int>(samples_ms.size());
  if (samples_ms.empty()) return s;
  std::sort(samples_ms.begin(), samples_ms.end());
  s.p50_ms = samples_ms[samples_ms.size() / 2];
  s.p99_ms = samples_ms[static_cast<size_t>(0.99 * (samples_ms.size() - 1))];
  s.max_ms = samples_ms.back();
  return s;
}

SensorSuite suite_from_config(const Config& cfg) {
  SensorSuite suite;
  if (cfg.has("sensors", "gnss")) {
    suite.gnss.clear();
    for (const std::string& name : cfg.get_list("sensors", "gnss")) {
      suite.gnss.push_back(gnss_id_from_name(name));
    }
  }
  suite.encoder = cfg.get_bool("sensors", "encoder", suite.encoder);
  suite.lidar = cfg.get_bool("sensors", "lidar", suite.lidar);
  return suite;
}

SensorNoiseConfig noise_from_config(const Config& cfg) {
  SensorNoiseConfig n;
  n.imu.gyro_noise_density = cfg.get_double("imu", "gyro_noise_density", n.imu.gyro_noise_density);
  n.imu.accel_noise_density =
      cfg.get_double("imu", "accel_noise_density", n.imu.accel_noise_density);
  n.imu.gyro_bias_walk = cfg.get_double("imu", "gyro_bias_walk", n.imu.gyro_bias_walk);
  n.imu.accel_bias_walk = cfg.get_double("imu", "accel_bias_walk", n.imu.accel_bias_walk);
  n.imu.gravity = cfg.get_vec3("imu", "gravity", n.imu.gravity);
  n.initial_gyro_bias = cfg.get_vec3("noise", "initial_gyro_bias", n.initial_gyro_bias);
  n.initial_accel_bias = cfg.get_vec3("noise", "initial_accel_bias", n.initial_accel_bias);
  n.gnss_sigma = cfg.get_double("noise", "gnss_sigma", n.gnss_sigma);
  n.seed = static_cast<uint64_t>(cfg.get_int("noise", "seed", static_cast<int>(n.seed)));
  return n;
}

struct Series {
  std::vector<Sample> x, y, yaw, v;
};

RmseRow rmse_row(const Series& est, const Series& truth) {
  RmseRow r;
  r.x = rmse(est.x, truth.x, false);
  r.y = rmse(est.y, truth.y, false);
  r.yaw = rmse(est.yaw, truth.yaw, true);
  r.v = rmse(est.v, truth.v, false);
  return r;
}

Series slice(const Series& s, double t0, double t1) {
  Series out;
  const auto keep = [&](const std::vector<Sample>& in, std::vector<Sample>& to) {
    for (const Sample& p : in) {
      if (p.t >= t0 && p.t <= t1) to.push_back(p);
    }
  };
  keep(s.x, out.x);
  keep(s.y, out.y);
  keep(s.yaw, out.yaw);
  keep(s.v, out.v);
  return out;
}

}  // namespace

double rmse(const std::vector<Sample>& estimate, const std::vector<Sample>& truth, bool angular) {
  if (truth.empty()) throw std::runtime_error("rmse: empty truth series");
  double sum = 0.0;
  size_t n = 0;
  for (const Sample& e : estimate) {
    const auto it = std::lower_bound(truth.begin(), truth.end(), e.t,
                                     [](const Sample& s, double t) { return s.t < t; });
    const Sample* best = nullptr;
    if (it != truth.end()) best = &*it;
    if (it != truth.begin() &&
        (best == nullptr || e.t - std::prev(it)->t < best->t - e.t)) {
      best = &*std::prev(it);
    }
    if (best == nullptr || std::abs(best->t - e.t) > 1e-3) continue;
    const double err = angular ? wrap_angle(e.value - best->value) : e.value - best->value;
    sum += err * err;
    ++n;
  }
  if (n == 0) throw std::runtime_error("rmse: no estimate sample matches truth within 1 ms");
  return std::sqrt(sum / static_cast<double>(n));
}

EventStream build_events(const Config& cfg) {
  EventStream events;
  if (cfg.has("run", "log")) {
    events = parse_log(cfg.get_string("run", "log", ""));
  } else {
    const TrajectorySpec spec = trajectory_spec_from_config(cfg);
    const std::vector<TruthState> truth = generate_truth(spec);
    const SensorSuite suite = suite_from_config(cfg);
    const SensorNoiseConfig noise = noise_from_config(cfg);
    if (suite.lidar) {
      const WorldModel world = make_world(truth);
      events = synthesize_sensors(truth, spec, suite, noise, extrinsics_from_config(cfg), &world);
    } else {
      events = synthesize_sensors(truth, spec, suite, noise, extrinsics_from_config(cfg));
    }
  }
  return apply_scenario(events, scenario_from_config(cfg));
}

PipelineResult run_pipeline(const Config& cfg) {
  PipelineResult result;
  result.events = build_events(cfg);
  const EventStream& events = result.events;

  const EstimatorConfig ec = estimator_config_from_config(cfg);
  SlidingWindowEstimator fg(ec);

  const bool run_ekf = cfg.get_bool("run", "ekf", true);
  EkfConfig ekf_cfg;
  ekf_cfg.gate_threshold = ec.gate_threshold;
  ekf_cfg.initial_yaw = ec.initial_yaw;
  ekf_cfg.extrinsics = ec.extrinsics;
  EkfEstimator ekf(ekf_cfg);

  LidarOdometry lidar_odo(cfg.get_double("run", "lidar_voxel", 0.1));

  std::vector<double> predict_ms;
  Series fg_series, ekf_series, truth_series;

  const auto wall_start = Clock::now();
  for (const SensorEvent& ev : events) {
    if (ev.is<ImuSample>()) {
      const auto& s = ev.as<ImuSample>();
      const size_t solves_before = fg.solve_log().size();
      const auto t0 = Clock::now();
      const auto predicted = fg.on_imu(s);
      double ms = 1e3 * seconds_since(t0);
      if (fg.solve_log().size() > solves_before) {
        ms -= 1e3 * fg.solve_log().back().duration_s;  // predict latency excludes the solve
      }
      predict_ms.push_back(std::max(ms, 0.0));
      if (run_ekf) ekf.on_imu(s);

      if (predicted) {
        TrajectoryRecord rec;
        rec.t = s.t;
        const NavState& x = predicted->state;
        rec.fg_pos = x.pose.translation;
        rec.fg_yaw = x.yaw();
        rec.fg_v = x.velocity_body.x();
        rec.fg_sigma_pos = predicted->covariance.diagonal().segment<3>(6).cwiseMax(0.0).cwiseSqrt();
        rec.fg_sigma_yaw = std::sqrt(std::max(predicted->covariance(2, 2), 0.0));
        if (run_ekf && ekf.initialized()) {
          rec.has_ekf = true;
          rec.ekf_x = ekf.state().x;
          rec.ekf_y = ekf.state().y;
          rec.ekf_yaw = ekf.state().yaw;
          rec.ekf_v = ekf.state().v;
          ekf_series.x.push_back({s.t, rec.ekf_x});
          ekf_series.y.push_back({s.t, rec.ekf_y});
          ekf_series.yaw.push_back({s.t, rec.ekf_yaw});
          ekf_series.v.push_back({s.t, rec.ekf_v});
        }
        fg_series.x.push_back({s.t, rec.fg_pos.x()});
        fg_series.y.push_back({s.t, rec.fg_pos.y()});
        fg_series.yaw.push_back({s.t, rec.fg_yaw});
        fg_series.v.push_back({s.t, rec.fg_v});
        result.records.push_back(rec);
      }
    } else if (ev.is<GnssFix>()) {
      fg.on_gnss(ev.as<GnssFix>());
      if (run_ekf) ekf.on_gnss(ev.as<GnssFix>());
    } else if (ev.is<EncoderSample>()) {
      fg.on_encoder(ev.as<EncoderSample>());
      if (run_ekf) ekf.on_encoder(ev.as<EncoderSample>());
    } else if (ev.is<LidarOdom>()) {
      fg.on_lidar_odom(ev.as<LidarOdom>());
    } else if (ev.is<LidarFrame>()) {
      const auto odom = lidar_odo.on_frame(ev.as<LidarFrame>());
      if (odom) fg.on_lidar_odom(*odom);
    } else if (ev.is<GroundTruth>()) {
      const auto& g = ev.as<GroundTruth>();
      truth_series.x.push_back({g.t, g.pose.translation.x()});
      truth_series.y.push_back({g.t, g.pose.translation.y()});
      truth_series.yaw.push_back({g.t, yaw_of(g.pose.rotation)});
      truth_series.v.push_back({g.t, g.velocity_body.x()});
    }
  }

  MetricsReport& m = result.metrics;
  m.replay_wall_s = seconds_since(wall_start);
  m.log_duration_s = events.empty() ? 0.0 : events.back().t - events.front().t;
  m.predict = timing_stats(predict_ms);
  std::vector<double> solve_ms;
  for (const SolveStats& s : fg.solve_log()) {
    solve_ms.push_back(1e3 * s.duration_s);
    if (s.summary.degenerate) ++m.degenerate_solves;
    m.max_window_values = std::max(m.max_window_values, s.window_size);
  }
  m.solve = timing_stats(solve_ms);
  m.solves = static_cast<int>(fg.solve_log().size());
  m.dropped_measurements = fg.dropped_measurements();
  m.final_degenerate = fg.degenerate();

  if (truth_series.x.empty()) throw std::runtime_error("pipeline: log carries no GT records");
  if (result.records.empty()) throw std::runtime_error("pipeline: estimator produced no output");
  m.fg = rmse_row(fg_series, truth_series);
  m.has_ekf = run_ekf && !ekf_series.x.empty();
  if (m.has_ekf) m.ekf = rmse_row(ekf_series, truth_series);

  // Attach truth to the records for the CSV.
  {
    size_t k = 0;
    for (TrajectoryRecord& rec : result.records) {
      while (k + 1 < truth_series.x.size() && truth_series.x[k].t < rec.t - 1e-9) ++k;
      if (std::abs(truth_series.x[k].t - rec.t) <= 1e-3) {
        rec.has_truth = true;
        rec.truth_pos = Vec3(truth_series.x[k].value, truth_series.y[k].value, 0.0);
        rec.truth_yaw = truth_series.yaw[k].value;
        rec.truth_v = truth_series.v[k].value;
      }
    }
  }

  const Scenario scenario = scenario_from_config(cfg);
  if (scenario.gnss_outage) {
    const double t0 = scenario.gnss_outage->first;
    const double t1 = std::min(scenario.gnss_outage->second, m.log_duration_s + 1.0);
    m.has_outage = true;
    m.fg_outage = rmse_row(slice(fg_series, t0, t1), truth_series);

    const TrajectoryRecord* last = nullptr;
    for (const TrajectoryRecord& rec : result.records) {
      if (rec.t >= t0 && rec.t <= t1 && rec.has_truth) last = &rec;
    }
    if (last) m.outage_end_drift = (last->fg_pos - last->truth_pos).cwiseAbs();

    double travel = 0.0;
    for (size_t i = 1; i < truth_series.x.size(); ++i) {
      if (truth_series.x[i].t < t0 || truth_series.x[i].t > t1) continue;
      travel += std::hypot(truth_series.x[i].value - truth_series.x[i - 1].value,
                           truth_series.y[i].value - truth_series.y[i - 1].value);
    }
    m.outage_travel_m = travel;
  }

  result.report_text = format_metrics_report(m);
  result.timing_text = format_timing_report(m);
  result.csv_text = format_trajectory_csv(result.records);
  result.exit_code = m.final_degenerate ? 3 : 0;
  return result;
}

std::string format_metrics_report(const MetricsReport& m) {
  std::ostringstream out;
  const auto row = [&](const char* name, const RmseRow& r) {
    out << "  \"" << name << "\": {\"x\": " << num(r.x) << ", \"y\": " << num(r.y)
        << ", \"yaw\": " << num(r.yaw) << ", \"v\": " << num(r.v) << "},\n";
  };
  out << "{\n";
  row("fg_rmse", m.fg);
  if (m.has_ekf) {
    row("ekf_rmse", m.ekf);
  } else {
    out << "  \"ekf_rmse\": null,\n";
  }
  if (m.has_outage) {
    row("outage_rmse", m.fg_outage);
    out << "  \"outage_end_drift\": [" << num(m.outage_end_drift.x()) << ", "
        << num(m.outage_end_drift.y()) << ", " << num(m.outage_end_drift.z()) << "],\n";
    out << "  \"outage_travel_m\": " << num(m.outage_travel_m) << ",\n";
  } else {
    out << "  \"outage_rmse\": null,\n";
  }
  out << "  \"dropped_measurements\": " << m.dropped_measurements << ",\n";
  out << "  \"solves\": " << m.solves << ",\n";
  out << "  \"degenerate_solves\": " << m.degenerate_solves << ",\n";
  out << "  \"max_window_values\": " << m.max_window_values << "\n";
  out << "}\n";
  return out.str();
}

std::string format_timing_report(const MetricsReport& m) {
  std::ostringstream out;
  const auto stats = [&](const char* name, const TimingStats& s) {
    out << "  \"" << name << "\": {\"p50_ms\": " << num(s.p50_ms) << ", \"p99_ms\": "
        << num(s.p99_ms) << ", \"max_ms\": " << num(s.max_ms) << ", \"count\": " << s.count
        << "},\n";
  };
  out << "{\n";
  stats("predict", m.predict);
  stats("solve", m.solve);
  out << "  \"replay_wall_s\": " << num(m.replay_wall_s) << ",\n";
  out << "  \"log_duration_s\": " << num(m.log_duration_s) << ",\n";
  out << "  \"realtime_factor\": "
      << num(m.replay_wall_s > 0.0 ? m.log_duration_s / m.replay_wall_s : 0.0) << "\n";
  out << "}\n";
  return out.str();
}

std::string format_trajectory_csv(const std::vector<TrajectoryRecord>& records) {
  std::ostringstream out;
  out << "t,truth_x,truth_y,truth_yaw,truth_v,fg_x,fg_y,fg_yaw,fg_v,"
         "fg_sigma_x,fg_sigma_y,fg_sigma_yaw,ekf_x,ekf_y,ekf_yaw,ekf_v\n";
  for (const TrajectoryRecord& r : records) {
    out << num(r.t) << ',';
    if (r.has_truth) {
      out << num(r.truth_pos.x()) << ',' << num(r.truth_pos.y()) << ',' << num(r.truth_yaw)
          << ',' << num(r.truth_v) << ',';
    } else {
      out << ",,,,";
    }
    out << num(r.fg_pos.x()) << ',' << num(r.fg_pos.y()) << ',' << num(r.fg_yaw) << ','
        << num(r.fg_v) << ',' << num(r.fg_sigma_pos.x()) << ',' << num(r.fg_sigma_pos.y()) << ','
        << num(r.fg_sigma_yaw) << ',';
    if (r.has_ekf) {
      out << num(r.ekf_x) << ',' << num(r.ekf_y) << ',' << num(r.ekf_yaw) << ',' << num(r.ekf_v);
    } else {
      out << ",,,";
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace vse
