#include "vse/sliding_window.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace vse {
namespace {

using Clock = std::chrono::steady_clock;

/// Adapter presenting the current window to the LM solver. Block b is the
/// b-th value in the window; factor keys are remapped by the window base key.
class WindowProblem : public LeastSquaresProblem {
 public:
  WindowProblem(std::deque<NavState>& states, int base_key,
                const std::vector<const Factor*>& factors)
      : states_(states), base_key_(base_key), factors_(factors) {}

  int num_blocks() const override { return static_cast<int>(states_.size()); }
  int block_dim(int) const override { return 15; }

  std::vector<LinearizedFactor> linearize() const override {
    std::vector<LinearizedFactor> out;
    out.reserve(factors_.size());
    std::vector<const NavState*> ptrs;
    for (const Factor* f : factors_) {
      ptrs.clear();
      for (int key : f->keys()) ptrs.push_back(&states_[key - base_key_]);
      LinearizedFactor lf = f->evaluate(ptrs);
      for (size_t k = 0; k < lf.blocks.size(); ++k) {
        lf.blocks[k] = f->keys()[k] - base_key_;
      }
      out.push_back(std::move(lf));
    }
    return out;
  }

  void apply_step(const Eigen::VectorXd& dx) override {
    for (size_t b = 0; b < states_.size(); ++b) {
      states_[b] = retract(states_[b], dx.segment<15>(15 * b));
    }
  }

  void push_state() override { saved_.assign(states_.begin(), states_.end()); }
  void pop_state() override { std::copy(saved_.begin(), saved_.end(), states_.begin()); }

 private:
  std::deque<NavState>& states_;
  int base_key_;
  std::vector<const Factor*> factors_;
  std::vector<NavState> saved_;
};

Mat6 conjugate_covariance(const Mat6& cov, const Rot3& r) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = r.matrix();
  ad.bottomRightCorner<3, 3>() = r.matrix();
  return ad * cov * ad.transpose();
}

}  // namespace

Mat15 propagate_covariance(const NavState& state_i, const NavState& state_j,
                           const PreintegratedImu& preint, const Mat15& cov_i) {
  const double dt = preint.dt_total();
  const Mat3 ri = state_i.pose.rotation.matrix();
  const Mat3 rj_t_ri = state_j.pose.rotation.matrix().transpose() * ri;
  const Mat3 dr_t = preint.corrected_delta_rotation(state_i.bias).matrix().transpose();
  const Vec3 dv = preint.corrected_delta_velocity(state_i.bias);
  const Vec3 dp = preint.corrected_delta_position(state_i.bias);
  const Mat3 v_j_skew = skew(state_j.velocity_body);

  Mat15 f = Mat15::Zero();
  f.block<3, 3>(0, 0) = dr_t;
  f.block<3, 3>(0, 9) = preint.d_rotation_d_gyro_bias();
  f.block<3, 3>(3, 0) = v_j_skew * dr_t - rj_t_ri * skew(state_i.velocity_body + dv);
  f.block<3, 3>(3, 3) = rj_t_ri;
  f.block<3, 3>(3, 9) = v_j_skew * preint.d_rotation_d_gyro_bias() +
                        rj_t_ri * preint.d_velocity_d_gyro_bias();
  f.block<3, 3>(3, 12) = rj_t_ri * preint.d_velocity_d_accel_bias();
  f.block<3, 3>(6, 0) = -ri * (skew(state_i.velocity_body) * dt + skew(dp));
  f.block<3, 3>(6, 3) = ri * dt;
  f.block<3, 3>(6, 6) = Mat3::Identity();
  f.block<3, 3>(6, 9) = ri * preint.d_position_d_gyro_bias();
  f.block<3, 3>(6, 12) = ri * preint.d_position_d_accel_bias();
  f.block<6, 6>(9, 9) = Mat6::Identity();

  Eigen::Matrix<double, 15, 9> g = Eigen::Matrix<double, 15, 9>::Zero();
  g.block<3, 3>(0, 0) = Mat3::Identity();
  g.block<3, 3>(3, 0) = v_j_skew;
  g.block<3, 3>(3, 3) = rj_t_ri;
  g.block<3, 3>(6, 6) = ri;

  Mat15 out = f * cov_i * f.transpose() + g * preint.covariance() * g.transpose();
  const auto& noise = preint.noise_model();
  out.block<3, 3>(9, 9) += noise.gyro_bias_walk * noise.gyro_bias_walk * dt * Mat3::Identity();
  out.block<3, 3>(12, 12) += noise.accel_bias_walk * noise.accel_bias_walk * dt * Mat3::Identity();
  return 0.5 * (out + out.transpose());
}

EstimatorConfig estimator_config_from_config(const Config& cfg) {
  EstimatorConfig ec;
  ec.window_length = cfg.get_double("estimator", "window_length", ec.window_length);
  ec.solve_every_n_imu = cfg.get_int("estimator", "solve_every_n_imu", ec.solve_every_n_imu);
  ec.gate_threshold = cfg.get_double("estimator", "gate_threshold", ec.gate_threshold);
  ec.imu_period = cfg.get_double("estimator", "imu_period", ec.imu_period);
  ec.init_timeout = cfg.get_double("estimator", "init_timeout", ec.init_timeout);
  ec.use_kinematic = cfg.get_bool("estimator", "use_kinematic", ec.use_kinematic);
  ec.use_attitude = cfg.get_bool("estimator", "use_attitude", ec.use_attitude);
  ec.initial_yaw = cfg.get_double("estimator", "initial_yaw", ec.initial_yaw);
  ec.prior_sigma_rot = cfg.get_double("estimator", "prior_sigma_rot", ec.prior_sigma_rot);
  ec.prior_sigma_vel = cfg.get_double("estimator", "prior_sigma_vel", ec.prior_sigma_vel);
  ec.prior_sigma_pos = cfg.get_double("estimator", "prior_sigma_pos", ec.prior_sigma_pos);
  ec.prior_sigma_bg = cfg.get_double("estimator", "prior_sigma_bg", ec.prior_sigma_bg);
  ec.prior_sigma_ba = cfg.get_double("estimator", "prior_sigma_ba", ec.prior_sigma_ba);
  ec.kinematic_sigma_pos = cfg.get_double("estimator", "kinematic_sigma_pos", ec.kinematic_sigma_pos);
  ec.kinematic_sigma_yaw = cfg.get_double("estimator", "kinematic_sigma_yaw", ec.kinematic_sigma_yaw);
  ec.kinematic_sigma_vel = cfg.get_double("estimator", "kinematic_sigma_vel", ec.kinematic_sigma_vel);

  ec.imu_noise.gyro_noise_density = cfg.get_double("imu", "gyro_noise_density", ec.imu_noise.gyro_noise_density);
  ec.imu_noise.accel_noise_density = cfg.get_double("imu", "accel_noise_density", ec.imu_noise.accel_noise_density);
  ec.imu_noise.gyro_bias_walk = cfg.get_double("imu", "gyro_bias_walk", ec.imu_noise.gyro_bias_walk);
  ec.imu_noise.accel_bias_walk = cfg.get_double("imu", "accel_bias_walk", ec.imu_noise.accel_bias_walk);
  ec.imu_noise.gravity = cfg.get_vec3("imu", "gravity", ec.imu_noise.gravity);

  ec.extrinsics = extrinsics_from_config(cfg);
  return ec;
}

SlidingWindowEstimator::SlidingWindowEstimator(EstimatorConfig config)
    : config_(std::move(config)) {}

void SlidingWindowEstimator::initialize_at(const GnssFix& fix, double yaw) {
  NavState x0;
  x0.t = fix.t;
  x0.pose.rotation = Rot3::from_yaw(yaw);
  x0.pose.translation = gnss_to_imu_position(fix, x0.pose.rotation, config_.extrinsics);
  // Bootstrapping the velocity from the wheel encoder removes the long
  // convergence transient a zero-velocity start would cost a moving vehicle.
  if (pending_speed_) {
    x0.velocity_body = Vec3(*pending_speed_, 0.0, 0.0);
    velocity_seeded_ = true;
  }

  Vec15 sigmas;
  sigmas << Vec3::Constant(config_.prior_sigma_rot), Vec3::Constant(config_.prior_sigma_vel),
      Vec3::Constant(config_.prior_sigma_pos), Vec3::Constant(config_.prior_sigma_bg),
      Vec3::Constant(config_.prior_sigma_ba);
  const Mat15 prior_cov = sigmas.cwiseProduct(sigmas).asDiagonal();

  const int key = next_key_++;
  values_.push_back({key, x0});
  anchor_ = std::make_unique<PriorFactor>(key, x0, prior_cov);
  predictor_cov_ = prior_cov;
  initialized_ = true;
}

void SlidingWindowEstimator::try_initialize() {
  if (pending_front_ && pending_rear_ &&
      std::abs(pending_front_->t - pending_rear_->t) < 0.05) {
    const auto att = dual_gnss_attitude(*pending_front_, *pending_rear_, config_.extrinsics);
    if (att) {
      initialize_at(*pending_front_, att->yaw);
      return;
    }
  }
  if (pending_any_ &&
      (!config_.use_attitude || pending_any_->sensor_id == GnssId::kCenter)) {
    initialize_at(*pending_any_, config_.initial_yaw);
  }
}

std::optional<StateWithCovariance> SlidingWindowEstimator::on_imu(const ImuSample& sample) {
  if (!initialized_) {
    if (!first_event_t_) first_event_t_ = sample.t;
    if (sample.t - *first_event_t_ > config_.init_timeout) {
      throw std::runtime_error("estimator: no usable GNSS fix within the initialization timeout");
    }
    return std::nullopt;
  }
  const NavState& prev = values_.back().state;
  if (!(sample.t > prev.t)) {
    throw std::runtime_error("estimator: out-of-order IMU sample");
  }

  const double dt = sample.t - prev.t;
  PreintegratedImu preint(config_.imu_noise, prev.bias);
  // Large gaps are integrated in substeps to respect the dt bound.
  const int substeps = std::max(1, static_cast<int>(std::ceil(dt / 0.05)));
  for (int k = 0; k < substeps; ++k) preint.integrate(sample, dt / substeps);

  const NavState next = preint.predict(prev);
  predictor_cov_ = propagate_covariance(prev, next, preint, predictor_cov_);

  const int prev_key = values_.back().key;
  values_.push_back({next_key_++, next});
  factors_.push_back(std::make_unique<ImuFactor>(prev_key, prev_key + 1, std::move(preint)));
  dirty_ = true;
  ++imu_since_solve_;

  StateWithCovariance out{next, predictor_cov_};
  maybe_solve(imu_since_solve_ >= config_.solve_every_n_imu);
  return out;
}

int SlidingWindowEstimator::associate(double t) const {
  // Values are time-ordered; nearest with ties toward the earlier value,
  // falling back to the newest outside the association tolerance.
  const auto cmp = [](const Value& v, double tt) { return v.state.t < tt; };
  const auto it = std::lower_bound(values_.begin(), values_.end(), t, cmp);
  int idx;
  if (it == values_.begin()) {
    idx = 0;
  } else if (it == values_.end()) {
    idx = static_cast<int>(values_.size()) - 1;
  } else {
    const int hi = static_cast<int>(it - values_.begin());
    const int lo = hi - 1;
    idx = (t - values_[lo].state.t <= values_[hi].state.t - t) ? lo : hi;
  }
  if (std::abs(values_[idx].state.t - t) > 2.0 * config_.imu_period) {
    idx = static_cast<int>(values_.size()) - 1;
  }
  return idx;
}

double SlidingWindowEstimator::associated_time(double t) const {
  if (values_.empty()) throw std::runtime_error("estimator: not initialized");
  return values_[associate(t)].state.t;
}

bool SlidingWindowEstimator::in_window(double t) const {
  return !values_.empty() && t >= values_.front().state.t - 2.0 * config_.imu_period;
}

void SlidingWindowEstimator::on_gnss(const GnssFix& fix) {
  if (!initialized_) {
    if (!first_event_t_) first_event_t_ = fix.t;
    if (!gate_gnss(fix, config_.gate_threshold)) return;
    if (fix.sensor_id == GnssId::kFront) pending_front_ = fix;
    if (fix.sensor_id == GnssId::kRear) pending_rear_ = fix;
    pending_any_ = fix;
    try_initialize();
    return;
  }
  if (!gate_gnss(fix, config_.gate_threshold)) {
    ++dropped_;
    return;
  }
  if (!in_window(fix.t)) {
    ++dropped_;
    return;
  }

  const Value& target = values_[associate(fix.t)];
  const Vec3 measured = gnss_to_imu_position(fix, target.state.pose.rotation, config_.extrinsics);
  factors_.push_back(std::make_unique<GnssUnaryFactor>(target.key, measured, fix.position_cov));

  if (config_.use_attitude) {
    if (fix.sensor_id == GnssId::kFront) last_front_fix_ = fix;
    if (fix.sensor_id == GnssId::kRear) last_rear_fix_ = fix;
    if (last_front_fix_ && last_rear_fix_ &&
        std::abs(last_front_fix_->t - last_rear_fix_->t) < 0.05) {
      const auto att = dual_gnss_attitude(*last_front_fix_, *last_rear_fix_, config_.extrinsics);
      if (att) {
        const double sigma_pos = std::sqrt(std::max(
            last_front_fix_->position_cov.diagonal().maxCoeff(), 1e-8));
        const double baseline = (config_.extrinsics.imu_from_gnss_front.translation -
                                 config_.extrinsics.imu_from_gnss_rear.translation)
                                    .norm();
        const double sigma_ang = std::atan(2.0 * sigma_pos / baseline);
        const Eigen::Matrix2d cov = sigma_ang * sigma_ang * Eigen::Matrix2d::Identity();
        const Value& att_target = values_[associate(last_front_fix_->t)];
        factors_.push_back(std::make_unique<GnssAttitudeFactor>(att_target.key, *att, cov));
      }
      last_front_fix_.reset();
      last_rear_fix_.reset();
    }
  }

  dirty_ = true;
  maybe_solve(true);
}

void SlidingWindowEstimator::on_encoder(const EncoderSample& sample) {
  if (!initialized_) {
    pending_speed_ = sample.v_x;
    return;
  }
  if (!velocity_seeded_ && values_.size() == 1) {
    // First encoder sample after a same-timestamp GNSS initialization: no
    // IMU has been integrated yet, so the initial value (and its prior
    // anchor) can still be re-seeded with the measured speed.
    values_[0].state.velocity_body = Vec3(sample.v_x, 0.0, 0.0);
    anchor_ = std::make_unique<PriorFactor>(values_[0].key, values_[0].state, predictor_cov_);
    velocity_seeded_ = true;
  }
  if (!config_.use_kinematic) return;
  if (last_encoder_ && sample.t > last_encoder_->t) {
    const double dt = sample.t - last_encoder_->t;
    if (!in_window(last_encoder_->t)) {
      ++dropped_;
    } else {
      const int i = associate(last_encoder_->t);
      const int j = associate(sample.t);
      if (i < j) {
        const KinematicDelta delta =
            kinematic_delta(*last_encoder_, dt, config_.extrinsics.wheelbase);
        Eigen::Vector4d sig(config_.kinematic_sigma_pos, config_.kinematic_sigma_pos,
                            config_.kinematic_sigma_yaw, config_.kinematic_sigma_vel);
        factors_.push_back(std::make_unique<KinematicBetweenFactor>(
            values_[i].key, values_[j].key, delta, last_encoder_->v_x,
            Eigen::Matrix4d(sig.cwiseProduct(sig).asDiagonal()),
            config_.extrinsics.imu_from_rear_axle));
        dirty_ = true;
      }
    }
  }
  last_encoder_ = sample;
  // Encoder factors are weak relative constraints arriving at a rate
  // comparable to the IMU; solving on each insertion would dominate the
  // compute budget for no accuracy gain, so they wait for the next
  // scheduled solve.
}

void SlidingWindowEstimator::on_lidar_odom(const LidarOdom& odom) {
  if (!initialized_) return;
  if (!in_window(odom.t_prev)) {
    ++dropped_;
    return;
  }
  const int i = associate(odom.t_prev);
  const int j = associate(odom.t_curr);
  if (i >= j) {
    ++dropped_;
    return;
  }
  const Pose3& imu_from_lidar = config_.extrinsics.imu_from_lidar;
  const Pose3 delta_imu =
      pose_compose(pose_compose(imu_from_lidar, odom.delta), pose_inverse(imu_from_lidar));
  const Mat6 cov_imu = conjugate_covariance(odom.covariance, imu_from_lidar.rotation);
  factors_.push_back(std::make_unique<BetweenPoseFactor>(values_[i].key, values_[j].key,
                                                         delta_imu, cov_imu));
  dirty_ = true;
  maybe_solve(true);
}

void SlidingWindowEstimator::maybe_solve(bool trigger) {
  if (trigger && dirty_ && values_.size() >= 2) optimize();
}

void SlidingWindowEstimator::optimize() {
  if (!dirty_ || values_.size() < 2) return;

  // Repackage window states for the solver; timestamps ride along.
  std::deque<NavState> states;
  for (const Value& v : values_) states.push_back(v.state);

  std::vector<const Factor*> factor_ptrs;
  factor_ptrs.reserve(factors_.size() + 1);
  factor_ptrs.push_back(anchor_.get());
  for (const auto& f : factors_) factor_ptrs.push_back(f.get());

  WindowProblem problem(states, values_.front().key, factor_ptrs);
  LmSolver solver;

  const auto t0 = Clock::now();
  const LmSummary summary = solver.solve(problem, config_.lm);
  Mat15 newest_cov = solver.marginal_covariance(static_cast<int>(values_.size()) - 1);

  for (size_t b = 0; b < values_.size(); ++b) values_[b].state = states[b];
  degenerate_ = summary.degenerate;
  if (summary.degenerate) newest_cov += 1e6 * Mat15::Identity();

  // Rebase the IMU-rate predictor onto the newest optimized state.
  predictor_cov_ = newest_cov;

  SolveStats stats;
  stats.t = values_.back().state.t;
  stats.window_size = static_cast<int>(values_.size());
  stats.summary = summary;

  slide_window(solver);
  // The slide (marginal extraction included) is part of the solve budget.
  stats.duration_s = std::chrono::duration<double>(Clock::now() - t0).count();
  solve_log_.push_back(stats);

  dirty_ = false;
  imu_since_solve_ = 0;
}

void SlidingWindowEstimator::slide_window(LmSolver& solver) {
  const double newest_t = values_.back().state.t;
  if (newest_t - values_.front().state.t <= config_.window_length + config_.imu_period) return;

  size_t head = 0;
  while (head < values_.size() && newest_t - values_[head].state.t >
                                      config_.window_length + config_.imu_period * 0.5) {
    ++head;
  }
  if (head == 0 || head >= values_.size()) return;

  // Marginal prior replaces everything older than the new head.
  Eigen::MatrixXd marginal = solver.marginal_covariance(static_cast<int>(head));
  Mat15 prior_cov = 0.5 * (marginal + marginal.transpose());
  prior_cov.diagonal().array() += 1e-12;
  anchor_ = std::make_unique<PriorFactor>(values_[head].key, values_[head].state, prior_cov);

  const int head_key = values_[head].key;
  values_.erase(values_.begin(), values_.begin() + head);
  std::erase_if(factors_, [head_key](const std::unique_ptr<Factor>& f) {
    for (int k : f->keys()) {
      if (k < head_key) return true;
    }
    return false;
  });
}

StateWithCovariance SlidingWindowEstimator::latest() const {
  if (values_.empty()) throw std::runtime_error("estimator: not initialized");
  return {values_.back().state, predictor_cov_};
}

std::vector<NavState> SlidingWindowEstimator::window_states() const {
  std::vector<NavState> out;
  out.reserve(values_.size());
  for (const Value& v : values_) out.push_back(v.state);
  return out;
}

double SlidingWindowEstimator::window_start_time() const {
  return values_.empty() ? 0.0 : values_.front().state.t;
}

}  // namespace vse
