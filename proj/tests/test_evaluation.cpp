#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "vse/evaluation.hpp"

using namespace vse;

namespace {

Config setup1_config(const std::string& extra = "") {
  return Config::from_string(
      "[trajectory]\n"
      "kind = figure_eight\n"
      "speed = 5\n"
      "scale = 40\n"
      "duration = 30\n"
      "[sensors]\n"
      "gnss = front, rear\n"
      "[noise]\n"
      "gnss_sigma = 0.02\n"
      "seed = 11\n"
      "[imu]\n"
      "gyro_noise_density = 1e-4\n"
      "accel_noise_density = 1e-3\n"
      "gyro_bias_walk = 1e-6\n"
      "accel_bias_walk = 1e-5\n"
      "[estimator]\n"
      "window_length = 1.0\n" +
      extra);
}

}  // namespace

TEST_CASE("rmse arithmetic") {
  const std::vector<Sample> truth = {{0.0, 1.0}, {1.0, 2.0}, {2.0, 3.0}};
  CHECK(rmse(truth, truth, false) == 0.0);

  const std::vector<Sample> est = {{0.0, 4.0}, {1.0, 6.0}};  // errors 3 and 4
  CHECK(rmse(est, truth, false) == doctest::Approx(std::sqrt(12.5)));

  // Yaw pair across the wrap: error is 2*pi - 6.26, not 6.26.
  const std::vector<Sample> ty = {{0.0, -3.13}};
  const std::vector<Sample> ey = {{0.0, 3.13}};
  CHECK(rmse(ey, ty, true) == doctest::Approx(2.0 * M_PI - 6.26));
  CHECK(rmse(ey, ty, false) == doctest::Approx(6.26));

  // Matching tolerance: 1 ms.
  CHECK(rmse({{1.0004, 2.0}}, truth, false) == 0.0);
  CHECK_THROWS(rmse({{0.5, 2.0}}, truth, false));
  CHECK_THROWS(rmse({{0.0, 0.0}}, {}, false));
}

TEST_CASE("pipeline: accurate setup-1 style run, full report schema") {
  const PipelineResult res = run_pipeline(setup1_config());
  CHECK(res.exit_code == 0);
  REQUIRE(!res.records.empty());

  // Tracks to centimeters with dual RTK-grade antennas.
  CHECK(res.metrics.fg.x < 0.05);
  CHECK(res.metrics.fg.y < 0.05);
  CHECK(res.metrics.fg.yaw < 0.01);
  CHECK(res.metrics.fg.v < 0.1);
  CHECK(res.metrics.has_ekf);
  CHECK(res.metrics.ekf.x < 2.0);  // baseline present, looser

  for (const char* key : {"fg_rmse", "ekf_rmse", "\"x\"", "\"y\"", "\"yaw\"", "\"v\"",
                          "outage_rmse", "solves"}) {
    CHECK(res.report_text.find(key) != std::string::npos);
  }
  CHECK(res.report_text.find("\"outage_rmse\": null") != std::string::npos);
  CHECK(res.csv_text.rfind("t,truth_x", 0) == 0);
  CHECK(res.timing_text.find("replay_wall_s") != std::string::npos);
  // Timing never leaks into the deterministic report.
  CHECK(res.report_text.find("p50_ms") == std::string::npos);
  CHECK(res.report_text.find("replay_wall_s") == std::string::npos);
  CHECK(res.metrics.predict.count > 2000);
  CHECK(res.metrics.solves > 100);
}

TEST_CASE("pipeline: byte-identical reports for identical config and seed") {
  const PipelineResult a = run_pipeline(setup1_config());
  const PipelineResult b = run_pipeline(setup1_config());
  CHECK(a.report_text == b.report_text);
  CHECK(a.csv_text == b.csv_text);

  const PipelineResult c = run_pipeline(setup1_config("[scenario]\nseed = 99\ngnss_noise_sigma = 0.02\n"));
  CHECK(c.report_text != a.report_text);
}

TEST_CASE("pipeline: outage metrics computed strictly inside the window") {
  const PipelineResult res = run_pipeline(setup1_config(
      "[scenario]\noutage_start = 15\noutage_end = 25\n"));
  CHECK(res.metrics.has_outage);
  CHECK(res.metrics.outage_travel_m > 30.0);
  CHECK(res.metrics.fg_outage.x >= 0.0);
  CHECK(res.metrics.outage_end_drift.norm() < 1.0);
  CHECK(res.report_text.find("outage_travel_m") != std::string::npos);

  // No GNSS event inside the outage window survived the scenario.
  for (const SensorEvent& ev : res.events) {
    if (ev.is<GnssFix>()) CHECK((ev.t < 15.0 || ev.t > 25.0));
  }
}

TEST_CASE("pipeline: events loadable from a serialized log") {
  namespace fs = std::filesystem;
  const Config sim_cfg = setup1_config();
  const EventStream ev = build_events(sim_cfg);
  const fs::path log = fs::temp_directory_path() / "vse_eval_roundtrip.log";
  serialize_log(ev, log.string());

  Config run_cfg = setup1_config();
  run_cfg.set("run", "log", log.string());
  const PipelineResult res = run_pipeline(run_cfg);
  CHECK(res.exit_code == 0);
  CHECK(res.metrics.fg.x < 0.05);
  fs::remove(log);

  Config bad = setup1_config();
  bad.set("run", "log", "/nonexistent/file.log");
  CHECK_THROWS(run_pipeline(bad));
}

TEST_CASE("pipeline: ekf can be disabled") {
  const PipelineResult res = run_pipeline(setup1_config("[run]\nekf = false\n"));
  CHECK(!res.metrics.has_ekf);
  CHECK(res.report_text.find("\"ekf_rmse\": null") != std::string::npos);
  for (const TrajectoryRecord& r : res.records) CHECK(!r.has_ekf);
}
