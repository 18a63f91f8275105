#include "vse/sensor_log.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "vse/config.hpp"
#include "vse/random.hpp"

namespace vse {
namespace fs = std::filesystem;

const char* gnss_id_name(GnssId id) {
  switch (id) {
    case GnssId::kFront: return "front";
    case GnssId::kRear: return "rear";
    case GnssId::kCenter: return "center";
  }
  return "center";
}

GnssId gnss_id_from_name(const std::string& name) {
  if (name == "front") return GnssId::kFront;
  if (name == "rear") return GnssId::kRear;
  if (name == "center") return GnssId::kCenter;
  throw std::runtime_error("unknown GNSS sensor id '" + name + "'");
}

const Pose3& Extrinsics::imu_from_gnss(GnssId id) const {
  switch (id) {
    case GnssId::kFront: return imu_from_gnss_front;
    case GnssId::kRear: return imu_from_gnss_rear;
    case GnssId::kCenter: return imu_from_gnss_center;
  }
  return imu_from_gnss_center;
}

namespace {

[[noreturn]] void fail(const std::string& path, int lineno, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + what);
}

void check_monotone(std::map<std::string, double>& last, const std::string& stream, double t,
                    const std::string& path, int lineno) {
  auto it = last.find(stream);
  if (it != last.end() && t < it->second) {
    fail(path, lineno, "non-monotone timestamp in stream " + stream);
  }
  last[stream] = t;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_spd_ish(const Mat3& c, const std::string& path, int lineno) {
  if ((c - c.transpose()).norm() > 1e-9 * (1.0 + c.norm())) {
    fail(path, lineno, "GNSS covariance not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(c);
  if (es.eigenvalues().minCoeff() < -1e-9 * (1.0 + c.norm())) {
    fail(path, lineno, "GNSS covariance not positive semidefinite");
  }
}

}  // namespace

EventStream parse_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log file " + path);
  const fs::path dir = fs::path(path).parent_path();

  EventStream events;
  std::map<std::string, double> last_t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;

    if (tag == "IMU") {
      ImuSample s;
      if (!(ss >> s.t >> s.gyro.x() >> s.gyro.y() >> s.gyro.z() >> s.accel.x() >> s.accel.y() >>
            s.accel.z())) {
        fail(path, lineno, "malformed IMU record");
      }
      if (!s.gyro.allFinite() || !s.accel.allFinite() || s.accel.norm() >= 200.0 ||
          s.gyro.norm() >= 50.0) {
        fail(path, lineno, "IMU sample outside sanity bounds");
      }
      check_monotone(last_t, "IMU", s.t, path, lineno);
      events.push_back({s.t, s});
    } else if (tag == "GNSS") {
      GnssFix f;
      std::string id;
      double c00, c01, c02, c11, c12, c22;
      if (!(ss >> f.t >> id >> f.position.x() >> f.position.y() >> f.position.z() >> c00 >> c01 >>
            c02 >> c11 >> c12 >> c22)) {
        fail(path, lineno, "malformed GNSS record");
      }
      f.sensor_id = gnss_id_from_name(id);
      f.position_cov << c00, c01, c02, c01, c11, c12, c02, c12, c22;
      check_spd_ish(f.position_cov, path, lineno);
      check_monotone(last_t, std::string("GNSS:") + id, f.t, path, lineno);
      events.push_back({f.t, f});
    } else if (tag == "ENC") {
      EncoderSample s;
      if (!(ss >> s.t >> s.v_x >> s.steer)) fail(path, lineno, "malformed ENC record");
      if (!(std::abs(s.steer) < M_PI / 2.0)) fail(path, lineno, "steer angle out of range");
      check_monotone(last_t, "ENC", s.t, path, lineno);
      events.push_back({s.t, s});
    } else if (tag == "LIDARODO") {
      LidarOdom o;
      double qw, qx, qy, qz;
      Vec6 sig;
      if (!(ss >> o.t_prev >> o.t_curr >> o.delta.translation.x() >> o.delta.translation.y() >>
            o.delta.translation.z() >> qw >> qx >> qy >> qz >> sig(0) >> sig(1) >> sig(2) >>
            sig(3) >> sig(4) >> sig(5))) {
        fail(path, lineno, "malformed LIDARODO record");
      }
      if (!(o.t_curr > o.t_prev)) fail(path, lineno, "LIDARODO requires t_curr > t_prev");
      o.delta.rotation = Rot3(Eigen::Quaterniond(qw, qx, qy, qz));
      o.covariance = sig.cwiseProduct(sig).asDiagonal();
      check_monotone(last_t, "LIDARODO", o.t_curr, path, lineno);
      events.push_back({o.t_curr, o});
    } else if (tag == "LIDARPCD") {
      double t;
      size_t count, offset;
      std::string rel;
      if (!(ss >> t >> count >> offset >> rel)) fail(path, lineno, "malformed LIDARPCD record");
      const fs::path pcd_path = rel[0] == '/' ? fs::path(rel) : dir / rel;
      std::ifstream pcd(pcd_path, std::ios::binary);
      if (!pcd) fail(path, lineno, "cannot open point cloud sidecar " + pcd_path.string());
      pcd.seekg(static_cast<std::streamoff>(offset));
      std::vector<float> raw(count * 3);
      pcd.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size() * sizeof(float)));
      if (!pcd) fail(path, lineno, "short read from point cloud sidecar");
      LidarFrame frame;
      frame.t = t;
      frame.points.reserve(count);
      for (size_t i = 0; i < count; ++i) {
        frame.points.emplace_back(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]);
      }
      check_monotone(last_t, "LIDARPCD", t, path, lineno);
      events.push_back({t, std::move(frame)});
    } else if (tag == "GT") {
      GroundTruth g;
      double qw, qx, qy, qz;
      if (!(ss >> g.t >> g.pose.translation.x() >> g.pose.translation.y() >>
            g.pose.translation.z() >> qw >> qx >> qy >> qz >> g.velocity_body.x() >>
            g.velocity_body.y() >> g.velocity_body.z())) {
        fail(path, lineno, "malformed GT record");
      }
      g.pose.rotation = Rot3(Eigen::Quaterniond(qw, qx, qy, qz));
      check_monotone(last_t, "GT", g.t, path, lineno);
      events.push_back({g.t, g});
    } else {
      fail(path, lineno, "unknown record tag '" + tag + "'");
    }
  }

  std::stable_sort(events.begin(), events.end(), [](const SensorEvent& a, const SensorEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.payload.index() < b.payload.index();
  });
  return events;
}

void serialize_log(const EventStream& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write log file " + path);
  const std::string pcd_name = fs::path(path).filename().string() + ".pcd";
  std::ofstream pcd;
  size_t pcd_offset = 0;

  for (const SensorEvent& ev : events) {
    if (ev.is<ImuSample>()) {
      const auto& s = ev.as<ImuSample>();
      out << "IMU " << fmt(s.t) << ' ' << fmt(s.gyro.x()) << ' ' << fmt(s.gyro.y()) << ' '
          << fmt(s.gyro.z()) << ' ' << fmt(s.accel.x()) << ' ' << fmt(s.accel.y()) << ' '
          << fmt(s.accel.z()) << '\n';
    } else if (ev.is<GnssFix>()) {
      const auto& f = ev.as<GnssFix>();
      const Mat3& c = f.position_cov;
      out << "GNSS " << fmt(f.t) << ' ' << gnss_id_name(f.sensor_id) << ' ' << fmt(f.position.x())
          << ' ' << fmt(f.position.y()) << ' ' << fmt(f.position.z()) << ' ' << fmt(c(0, 0)) << ' '
          << fmt(c(0, 1)) << ' ' << fmt(c(0, 2)) << ' ' << fmt(c(1, 1)) << ' ' << fmt(c(1, 2))
          << ' ' << fmt(c(2, 2)) << '\n';
    } else if (ev.is<EncoderSample>()) {
      const auto& s = ev.as<EncoderSample>();
      out << "ENC " << fmt(s.t) << ' ' << fmt(s.v_x) << ' ' << fmt(s.steer) << '\n';
    } else if (ev.is<LidarOdom>()) {
      const auto& o = ev.as<LidarOdom>();
      const auto& q = o.delta.rotation.quaternion();
      out << "LIDARODO " << fmt(o.t_prev) << ' ' << fmt(o.t_curr) << ' '
          << fmt(o.delta.translation.x()) << ' ' << fmt(o.delta.translation.y()) << ' '
          << fmt(o.delta.translation.z()) << ' ' << fmt(q.w()) << ' ' << fmt(q.x()) << ' '
          << fmt(q.y()) << ' ' << fmt(q.z());
      for (int i = 0; i < 6; ++i) out << ' ' << fmt(std::sqrt(o.covariance(i, i)));
      out << '\n';
    } else if (ev.is<LidarFrame>()) {
      const auto& f = ev.as<LidarFrame>();
      if (!pcd.is_open()) {
        pcd.open(fs::path(path).parent_path() / pcd_name, std::ios::binary);
        if (!pcd) throw std::runtime_error("cannot write point cloud sidecar for " + path);
      }
      std::vector<float> raw;
      raw.reserve(f.points.size() * 3);
      for (const Vec3& p : f.points) {
        raw.push_back(static_cast<float>(p.x()));
        raw.push_back(static_cast<float>(p.y()));
        raw.push_back(static_cast<float>(p.z()));
      }
      pcd.write(reinterpret_cast<const char*>(raw.data()),
                static_cast<std::streamsize>(raw.size() * sizeof(float)));
      out << "LIDARPCD " << fmt(f.t) << ' ' << f.points.size() << ' ' << pcd_offset << ' '
          << pcd_name << '\n';
      pcd_offset += raw.size() * sizeof(float);
    } else if (ev.is<GroundTruth>()) {
      const auto& g = ev.as<GroundTruth>();
      const auto& q = g.pose.rotation.quaternion();
      out << "GT " << fmt(g.t) << ' ' << fmt(g.pose.translation.x()) << ' '
          << fmt(g.pose.translation.y()) << ' ' << fmt(g.pose.translation.z()) << ' ' << fmt(q.w())
          << ' ' << fmt(q.x()) << ' ' << fmt(q.y()) << ' ' << fmt(q.z()) << ' '
          << fmt(g.velocity_body.x()) << ' ' << fmt(g.velocity_body.y()) << ' '
          << fmt(g.velocity_body.z()) << '\n';
    }
  }
}

EventStream apply_scenario(const EventStream& events, const Scenario& scenario) {
  Rng rng(scenario.rng_seed);
  EventStream out;
  out.reserve(events.size());
  const auto disabled = [&](const std::string& name) {
    return scenario.disabled_sensors.count(name) > 0;
  };

  for (const SensorEvent& ev : events) {
    if (ev.is<GnssFix>()) {
      GnssFix f = ev.as<GnssFix>();
      if (disabled(std::string("gnss_") + gnss_id_name(f.sensor_id))) continue;
      if (scenario.gnss_outage && f.t >= scenario.gnss_outage->first &&
          f.t <= scenario.gnss_outage->second) {
        continue;
      }
      if (scenario.gnss_noise_sigma > 0.0) {
        const double s = scenario.gnss_noise_sigma;
        f.position += Vec3(rng.gaussian(s), rng.gaussian(s), rng.gaussian(s));
        f.position_cov = s * s * Mat3::Identity();
      }
      out.push_back({f.t, f});
    } else if (ev.is<EncoderSample>()) {
      if (!disabled("encoder")) out.push_back(ev);
    } else if (ev.is<LidarFrame>() || ev.is<LidarOdom>()) {
      if (!disabled("lidar")) out.push_back(ev);
    } else {
      out.push_back(ev);
    }
  }
  return out;
}

Scenario scenario_from_config(const Config& cfg) {
  Scenario sc;
  if (cfg.has("scenario", "gnss_cep")) {
    sc.gnss_noise_sigma = cep_to_sigma(cfg.get_double("scenario", "gnss_cep", 0.0));
  }
  sc.gnss_noise_sigma = cfg.get_double("scenario", "gnss_noise_sigma", sc.gnss_noise_sigma);
  if (cfg.has("scenario", "outage_start")) {
    const double start = cfg.get_double("scenario", "outage_start", 0.0);
    const double end = cfg.get_double("scenario", "outage_end", 1e300);
    if (!(end > start)) throw std::runtime_error("scenario: outage_end must exceed outage_start");
    sc.gnss_outage = {start, end};
  }
  for (const auto& name : cfg.get_list("scenario", "disable")) sc.disabled_sensors.insert(name);
  sc.rng_seed = static_cast<uint64_t>(cfg.get_int("scenario", "seed", 0));
  return sc;
}

Extrinsics extrinsics_from_config(const Config& cfg) {
  Extrinsics ex;
  ex.imu_from_gnss_front.translation = cfg.get_vec3("extrinsics", "gnss_front", Vec3(1.0, 0.0, 0.5));
  ex.imu_from_gnss_rear.translation = cfg.get_vec3("extrinsics", "gnss_rear", Vec3(-1.0, 0.0, 0.5));
  ex.imu_from_gnss_center.translation = cfg.get_vec3("extrinsics", "gnss_center", Vec3(0.0, 0.0, 0.5));
  ex.imu_from_lidar.translation = cfg.get_vec3("extrinsics", "lidar", Vec3(0.5, 0.0, 1.0));
  ex.imu_from_rear_axle.translation = cfg.get_vec3("extrinsics", "rear_axle", Vec3(-1.0, 0.0, -0.5));
  ex.wheelbase = cfg.get_double("extrinsics", "wheelbase", 2.0);
  if (!(ex.wheelbase > 0.0)) throw std::runtime_error("extrinsics: wheelbase must be positive");
  return ex;
}

}  // namespace vse
