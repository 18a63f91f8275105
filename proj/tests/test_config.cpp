#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "vse/config.hpp"

using namespace vse;

TEST_CASE("sections, types, and fallbacks") {
  const Config cfg = Config::from_string(
      "top = 1\n"
      "[solver]\n"
      "max_iterations = 25   # inline comment\n"
      "lambda = 1e-4\n"
      "verbose = true\n"
      "name = lm\n"
      "gravity = 0 0 -9.81\n"
      "sensors = gnss_front , lidar,encoder\n"
      "\n"
      "# full-line comment\n"
      "[empty_section]\n");

  CHECK(cfg.get_int("", "top", 0) == 1);
  CHECK(cfg.get_int("solver", "max_iterations", 0) == 25);
  CHECK(cfg.get_double("solver", "lambda", 0.0) == doctest::Approx(1e-4));
  CHECK(cfg.get_bool("solver", "verbose", false));
  CHECK(cfg.get_string("solver", "name", "") == "lm");
  CHECK((cfg.get_vec3("solver", "gravity", Vec3::Zero()) - Vec3(0, 0, -9.81)).norm() == 0.0);

  const auto list = cfg.get_list("solver", "sensors");
  REQUIRE(list.size() == 3);
  CHECK(list[0] == "gnss_front");
  CHECK(list[1] == "lidar");
  CHECK(list[2] == "encoder");

  CHECK(cfg.has("solver", "lambda"));
  CHECK(!cfg.has("solver", "missing"));
  CHECK(cfg.get_double("solver", "missing", 3.5) == 3.5);
  CHECK(cfg.get_string("nowhere", "missing", "dflt") == "dflt");
}

TEST_CASE("set overrides and later keys win") {
  Config cfg = Config::from_string("[a]\nk = 1\nk = 2\n");
  CHECK(cfg.get_int("a", "k", 0) == 2);
  cfg.set("a", "k", "7");
  CHECK(cfg.get_int("a", "k", 0) == 7);
  cfg.set("b", "fresh", "hello");
  CHECK(cfg.get_string("b", "fresh", "") == "hello");
}

TEST_CASE("file round trip") {
  const std::string path = "/tmp/vse_test_config.cfg";
  {
    std::ofstream out(path);
    out << "[imu]\nrate = 100\n";
  }
  const Config cfg = Config::from_file(path);
  CHECK(cfg.get_int("imu", "rate", 0) == 100);
  std::remove(path.c_str());
  CHECK_THROWS(Config::from_file("/nonexistent/vse.cfg"));
}

TEST_CASE("malformed input rejected") {
  CHECK_THROWS(Config::from_string("[unclosed\nk = 1\n"));
  CHECK_THROWS(Config::from_string("just a bare line\n"));
  const Config cfg = Config::from_string("[a]\nk = not_a_number\n");
  CHECK_THROWS(cfg.get_double("a", "k", 0.0));
  CHECK_THROWS(cfg.get_vec3("a", "k", Vec3::Zero()));
}
