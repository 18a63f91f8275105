#include "vse/simulation.hpp"

#include <cmath>
#include <stdexcept>

#include "vse/config.hpp"
#include "vse/random.hpp"

namespace vse {
namespace {

constexpr double kTruthRate = 1000.0;
constexpr double kTruthDt = 1.0 / kTruthRate;

TruthState circle_state(const TrajectorySpec& spec, double t) {
  TruthState s;
  s.t = t;
  if (spec.speed == 0.0) return s;  // stationary
  const double r = spec.radius;
  const double om = spec.speed / r;
  const double th = om * t;
  s.position = Vec3(r * std::sin(th), r * (1.0 - std::cos(th)), 0.0);
  s.velocity_world = Vec3(spec.speed * std::cos(th), spec.speed * std::sin(th), 0.0);
  s.accel_world = Vec3(-spec.speed * om * std::sin(th), spec.speed * om * std::cos(th), 0.0);
  s.yaw = wrap_angle(th);
  s.yaw_rate = om;
  return s;
}

TruthState eight_state(const TrajectorySpec& spec, double t) {
  // Lissajous x = A sin(wt), y = (A/2) sin(2wt); speed stays within
  // [0.66, 1.42] * spec.speed, never zero, so yaw is well defined.
  const double a = spec.scale;
  const double om = spec.speed / a;
  const double th = om * t;
  TruthState s;
  s.t = t;
  s.position = Vec3(a * std::sin(th), 0.5 * a * std::sin(2.0 * th), 0.0);
  const double vx = a * om * std::cos(th);
  const double vy = a * om * std::cos(2.0 * th);
  const double ax = -a * om * om * std::sin(th);
  const double ay = -2.0 * a * om * om * std::sin(2.0 * th);
  s.velocity_world = Vec3(vx, vy, 0.0);
  s.accel_world = Vec3(ax, ay, 0.0);
  s.yaw = std::atan2(vy, vx);
  s.yaw_rate = (vx * ay - vy * ax) / (vx * vx + vy * vy);
  return s;
}

// Piecewise heading-vs-arclength elements: straights (zero curvature) and
// raised-cosine turns whose curvature vanishes at both ends, keeping the
// path C2.
struct PathElement {
  bool turn = false;
  double length = 0.0;
  double psi0 = 0.0;
  double dpsi = 0.0;  // total heading change (turn only)

  double psi(double s) const {
    if (!turn) return psi0;
    const double u = s / length;
    return psi0 + dpsi * (u - std::sin(2.0 * M_PI * u) / (2.0 * M_PI));
  }
  double curvature(double s) const {
    if (!turn) return 0.0;
    const double u = s / length;
    return dpsi / length * (1.0 - std::cos(2.0 * M_PI * u));
  }
};

struct PolylinePath {
  std::vector<PathElement> elements;
  std::vector<double> cumulative;  // end arclength of each element
  double final_psi = 0.0;

  void eval(double s, double* psi, double* kappa) const {
    double base = 0.0;
    for (size_t i = 0; i < elements.size(); ++i) {
      if (s <= cumulative[i]) {
        *psi = elements[i].psi(s - base);
        *kappa = elements[i].curvature(s - base);
        return;
      }
      base = cumulative[i];
    }
    *psi = final_psi;  // past the last waypoint: continue straight
    *kappa = 0.0;
  }
};

PolylinePath build_polyline(const TrajectorySpec& spec) {
  const auto& w = spec.waypoints;
  if (w.size() < 2) throw std::invalid_argument("polyline needs at least 2 waypoints");

  std::vector<double> heading(w.size() - 1), seg_len(w.size() - 1);
  for (size_t i = 0; i + 1 < w.size(); ++i) {
    const Eigen::Vector2d d = w[i + 1] - w[i];
    seg_len[i] = d.norm();
    if (seg_len[i] < 1e-9) throw std::invalid_argument("polyline has a zero-length segment");
    heading[i] = std::atan2(d.y(), d.x());
  }

  std::vector<double> cut(w.size(), 0.0);  // shortening at each interior vertex
  for (size_t i = 1; i + 1 < w.size(); ++i) {
    const double dpsi = wrap_angle(heading[i] - heading[i - 1]);
    cut[i] = spec.radius * std::tan(0.5 * std::abs(dpsi));
  }

  PolylinePath path;
  double running = 0.0;
  auto push = [&](PathElement e) {
    if (e.length <= 1e-12) return;
    running += e.length;
    path.elements.push_back(e);
    path.cumulative.push_back(running);
  };

  for (size_t i = 0; i + 1 < w.size(); ++i) {
    const double straight = seg_len[i] - cut[i] - cut[i + 1];
    if (straight < -1e-9) {
      throw std::invalid_argument("polyline fillet radius too large for segment");
    }
    push({false, std::max(straight, 0.0), heading[i], 0.0});
    if (i + 2 < w.size()) {
      const double dpsi = wrap_angle(heading[i + 1] - heading[i]);
      if (std::abs(dpsi) > 1e-9) {
        push({true, spec.radius * std::abs(dpsi), heading[i], dpsi});
      }
    }
  }
  path.final_psi = heading.back();
  return path;
}

std::vector<TruthState> polyline_truth(const TrajectorySpec& spec, int n) {
  if (!(spec.speed > 0.0)) throw std::invalid_argument("polyline requires positive speed");
  const PolylinePath path = build_polyline(spec);
  const double v = spec.speed;

  std::vector<TruthState> out(n);
  Eigen::Vector2d p = spec.waypoints.front();
  double psi = 0.0, kappa = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = i * kTruthDt;
    const double s = v * t;
    path.eval(s, &psi, &kappa);
    TruthState& st = out[i];
    st.t = t;
    st.position = Vec3(p.x(), p.y(), 0.0);
    st.yaw = wrap_angle(psi);
    st.velocity_world = v * Vec3(std::cos(psi), std::sin(psi), 0.0);
    st.accel_world = v * v * kappa * Vec3(-std::sin(psi), std::cos(psi), 0.0);
    st.yaw_rate = v * kappa;

    // Advance position by Simpson quadrature of the analytic heading.
    const double ds = v * kTruthDt;
    double psi_m, psi_e, unused;
    path.eval(s + 0.5 * ds, &psi_m, &unused);
    path.eval(s + ds, &psi_e, &unused);
    p.x() += ds / 6.0 * (std::cos(psi) + 4.0 * std::cos(psi_m) + std::cos(psi_e));
    p.y() += ds / 6.0 * (std::sin(psi) + 4.0 * std::sin(psi_m) + std::sin(psi_e));
  }
  return out;
}

}  // namespace

std::vector<TruthState> generate_truth(const TrajectorySpec& spec) {
  if (!(spec.duration > 0.0)) throw std::invalid_argument("duration must be positive");
  if (!(spec.imu_rate > 0.0) || !(spec.gnss_rate > 0.0) || !(spec.encoder_rate > 0.0) ||
      !(spec.lidar_rate > 0.0)) {
    throw std::invalid_argument("sensor rates must be positive");
  }
  const int n = static_cast<int>(std::llround(spec.duration * kTruthRate)) + 1;

  if (spec.kind == TrajectorySpec::Kind::kPolyline) return polyline_truth(spec, n);

  std::vector<TruthState> out(n);
  for (int i = 0; i < n; ++i) {
    const double t = i * kTruthDt;
    out[i] = spec.kind == TrajectorySpec::Kind::kCircle ? circle_state(spec, t)
                                                        : eight_state(spec, t);
  }
  return out;
}

WorldModel make_world(const std::vector<TruthState>& truth, double margin,
                      double pillar_spacing) {
  if (truth.empty()) throw std::invalid_argument("make_world: empty truth");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const TruthState& s : truth) {
    xmin = std::min(xmin, s.position.x());
    xmax = std::max(xmax, s.position.x());
    ymin = std::min(ymin, s.position.y());
    ymax = std::max(ymax, s.position.y());
  }
  xmin -= margin;
  xmax += margin;
  ymin -= margin;
  ymax += margin;

  WorldModel world;
  const double wall = 0.5, zlo = 0.0, zhi = 4.0, seg = 3.0;
  // Crenellated perimeter: alternating outward offsets give every wall
  // faces perpendicular to the travel direction, which point-to-point ICP
  // needs (smooth walls are translation-invariant along themselves).
  const auto offset = [](double s) { return std::fmod(s + 1e4, 2.0 * 3.0) < 3.0 ? 0.0 : 0.7; };
  for (double x = xmin; x < xmax; x += seg) {
    const double e = std::min(x + seg, xmax), o0 = offset(x), o1 = offset(x);
    world.boxes.push_back({Vec3(x, ymin - wall - o0, zlo), Vec3(e, ymin - o0, zhi)});
    world.boxes.push_back({Vec3(x, ymax + o1, zlo), Vec3(e, ymax + wall + o1, zhi)});
  }
  for (double y = ymin; y < ymax; y += seg) {
    const double e = std::min(y + seg, ymax), o = offset(y);
    world.boxes.push_back({Vec3(xmin - wall - o, y, zlo), Vec3(xmin - o, e, zhi)});
    world.boxes.push_back({Vec3(xmax + o, y, zlo), Vec3(xmax + wall + o, e, zhi)});
  }

  // Pillars off the driven path so frames contain nearby structure.
  for (double x = xmin + 0.5 * pillar_spacing; x < xmax; x += pillar_spacing) {
    for (double y = ymin + 0.5 * pillar_spacing; y < ymax; y += pillar_spacing) {
      bool clear = true;
      for (size_t i = 0; i < truth.size(); i += 100) {
        const Vec3& p = truth[i].position;
        if (std::hypot(p.x() - x, p.y() - y) < 4.0) {
          clear = false;
          break;
        }
      }
      if (clear) world.boxes.push_back({Vec3(x - 0.2, y - 0.2, zlo), Vec3(x + 0.2, y + 0.2, 3.0)});
    }
  }
  return world;
}

std::optional<double> ray_world_distance(const WorldModel& world, const Vec3& origin,
                                         const Vec3& dir, double max_range) {
  double best = max_range;
  bool hit = false;
  for (const Box& b : world.boxes) {
    // Slab method.
    double t0 = 1e-6, t1 = best;
    bool ok = true;
    for (int a = 0; a < 3 && ok; ++a) {
      if (std::abs(dir(a)) < 1e-12) {
        ok = origin(a) >= b.min(a) && origin(a) <= b.max(a);
        continue;
      }
      double lo = (b.min(a) - origin(a)) / dir(a);
      double hi = (b.max(a) - origin(a)) / dir(a);
      if (lo > hi) std::swap(lo, hi);
      t0 = std::max(t0, lo);
      t1 = std::min(t1, hi);
      ok = t0 <= t1;
    }
    if (ok) {
      best = t0;
      hit = true;
    }
  }
  if (!hit) return std::nullopt;
  return best;
}

EventStream synthesize_sensors(const std::vector<TruthState>& truth, const TrajectorySpec& spec,
                               const SensorSuite& suite, const SensorNoiseConfig& noise,
                               const Extrinsics& extrinsics, const WorldModel* world) {
  if (truth.empty()) throw std::invalid_argument("synthesize_sensors: empty truth");
  if (suite.lidar && (world == nullptr || world->boxes.empty())) {
    throw std::invalid_argument("synthesize_sensors: lidar requires a non-empty world");
  }

  const auto step_of = [](double rate) {
    return std::max<long>(1, std::lround(kTruthRate / rate));
  };
  const long imu_step = step_of(spec.imu_rate);
  const long gnss_step = step_of(spec.gnss_rate);
  const long enc_step = step_of(spec.encoder_rate);
  const long lidar_step = step_of(spec.lidar_rate);
  const double imu_dt = imu_step * kTruthDt;

  Rng rng(noise.seed);
  auto gauss3 = [&](double sigma) {
    return Vec3(rng.gaussian(sigma), rng.gaussian(sigma), rng.gaussian(sigma));
  };

  Vec3 bg = noise.initial_gyro_bias;
  Vec3 ba = noise.initial_accel_bias;
  const double gyro_white = noise.imu.gyro_noise_density * std::sqrt(spec.imu_rate);
  const double accel_white = noise.imu.accel_noise_density * std::sqrt(spec.imu_rate);
  const double gyro_walk = noise.imu.gyro_bias_walk * std::sqrt(imu_dt);
  const double accel_walk = noise.imu.accel_bias_walk * std::sqrt(imu_dt);
  const double gnss_rep_sigma = std::max(noise.gnss_sigma, 1e-3);

  EventStream out;
  for (long i = 0; i < static_cast<long>(truth.size()); ++i) {
    const TruthState& s = truth[i];
    const Rot3 r = Rot3::from_yaw(s.yaw);

    if (i % imu_step == 0) {
      bg += gauss3(gyro_walk);
      ba += gauss3(accel_walk);
      ImuSample imu;
      imu.t = s.t;
      imu.gyro = Vec3(0.0, 0.0, s.yaw_rate) + bg + gauss3(gyro_white);
      imu.accel =
          r.inverse() * (s.accel_world - noise.imu.gravity) + ba + gauss3(accel_white);
      out.push_back({imu.t, imu});

      if (suite.ground_truth) {
        GroundTruth gt;
        gt.t = s.t;
        gt.pose = s.pose();
        gt.velocity_body = r.inverse() * s.velocity_world;
        out.push_back({gt.t, gt});
      }
    }

    if (i % gnss_step == 0) {
      for (GnssId id : suite.gnss) {
        GnssFix fix;
        fix.t = s.t;
        fix.sensor_id = id;
        fix.position = s.position + r * extrinsics.imu_from_gnss(id).translation +
                       gauss3(noise.gnss_sigma);
        fix.position_cov = gnss_rep_sigma * gnss_rep_sigma * Mat3::Identity();
        out.push_back({fix.t, fix});
      }
    }

    if (suite.encoder && i % enc_step == 0) {
      EncoderSample enc;
      enc.t = s.t;
      enc.v_x = (r.inverse() * s.velocity_world).x();
      if (std::abs(enc.v_x) < 1e-9) {
        if (std::abs(s.yaw_rate) > 1e-9) {
          throw std::runtime_error("synthesize_sensors: yaw rate with zero speed is infeasible");
        }
        enc.steer = 0.0;
      } else {
        enc.steer = std::atan(extrinsics.wheelbase * s.yaw_rate / enc.v_x);
      }
      out.push_back({enc.t, enc});
    }

    if (suite.lidar && i % lidar_step == 0) {
      const Pose3 world_from_lidar = pose_compose(s.pose(), extrinsics.imu_from_lidar);
      LidarFrame frame;
      frame.t = s.t;
      for (int k = 0; k < world->azimuth_rays; ++k) {
        // Per-ray azimuth jitter: without it the scan pattern is rigid in
        // the sensor frame and smooth surfaces alias to a false identity
        // match between consecutive frames.
        const double az = 2.0 * M_PI * (k + rng.uniform()) / world->azimuth_rays;
        for (double el : world->elevations) {
          const Vec3 dir_sensor(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                std::sin(el));
          const auto dist = ray_world_distance(*world, world_from_lidar.translation,
                                               world_from_lidar.rotation * dir_sensor,
                                               world->max_range);
          if (dist) frame.points.push_back(*dist * dir_sensor);
        }
      }
      out.push_back({frame.t, std::move(frame)});
    }
  }

  std::stable_sort(out.begin(), out.end(), [](const SensorEvent& a, const SensorEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.payload.index() < b.payload.index();
  });
  return out;
}

TrajectorySpec trajectory_spec_from_config(const Config& cfg) {
  TrajectorySpec spec;
  const std::string kind = cfg.get_string("trajectory", "kind", "circle");
  if (kind == "circle") {
    spec.kind = TrajectorySpec::Kind::kCircle;
  } else if (kind == "figure_eight" || kind == "figure-eight") {
    spec.kind = TrajectorySpec::Kind::kFigureEight;
  } else if (kind == "polyline") {
    spec.kind = TrajectorySpec::Kind::kPolyline;
  } else {
    throw std::invalid_argument("trajectory: unknown kind '" + kind + "'");
  }
  spec.speed = cfg.get_double("trajectory", "speed", spec.speed);
  spec.duration = cfg.get_double("trajectory", "duration", spec.duration);
  spec.radius = cfg.get_double("trajectory", "radius", spec.radius);
  spec.scale = cfg.get_double("trajectory", "scale", spec.scale);
  for (const std::string& item : cfg.get_list("trajectory", "waypoints")) {
    std::istringstream ss(item);
    Eigen::Vector2d w;
    if (!(ss >> w.x() >> w.y())) {
      throw std::invalid_argument("trajectory: waypoints need 'x y' pairs");
    }
    spec.waypoints.push_back(w);
  }
  spec.imu_rate = cfg.get_double("trajectory", "imu_rate", spec.imu_rate);
  spec.gnss_rate = cfg.get_double("trajectory", "gnss_rate", spec.gnss_rate);
  spec.encoder_rate = cfg.get_double("trajectory", "encoder_rate", spec.encoder_rate);
  spec.lidar_rate = cfg.get_double("trajectory", "lidar_rate", spec.lidar_rate);
  return spec;
}

}  // namespace vse
