#pragma once

#include <limits>
#include <optional>

#include "vse/sensor_log.hpp"

namespace vse {

/// Voxel-grid downsampling keeping the first point seen per voxel; output
/// order follows input order, so the result is deterministic.
LidarFrame downsample(const LidarFrame& frame, double voxel);

struct IcpResult {
  Pose3 delta;              // p_source ~= delta * p_target
  int iterations = 0;
  double final_rmse = std::numeric_limits<double>::infinity();
  bool converged = false;
  int matched = 0;          // correspondences at the accepted transform
  /// Unwhitened Gauss-Newton Hessian of the point-to-point objective at the
  /// accepted transform, tangent order [rotation, translation]. Scaled by
  /// the residual variance it yields a geometry-aware pose covariance.
  Mat6 hessian = Mat6::Zero();
};

/// Point-to-point ICP: nearest-neighbor correspondences (k-d tree on the
/// target) and closed-form Horn/SVD alignment, iterated until the motion
/// increment drops below 1e-6 or 50 iterations. Correspondences farther
/// than max_corr_dist are rejected; fewer than 20 inliers (or fewer than
/// 100 points in either cloud) yields a non-converged result.
IcpResult icp_register(const LidarFrame& source, const LidarFrame& target,
                       const Pose3& initial_guess, double max_corr_dist);

/// Frame-to-frame odometry tracker: constant-velocity initial guess and an
/// adaptive correspondence threshold. Emits deltas in the sensor frame
/// (delta = previous_from_current); the consumer conjugates to the IMU
/// frame via the extrinsics.
class LidarOdometry {
 public:
  explicit LidarOdometry(double voxel = 0.5) : voxel_(voxel) {}

  /// Returns the relative transform to the previous frame, or nullopt for
  /// the first frame and for non-converged registrations. The frame always
  /// becomes the new reference.
  std::optional<LidarOdom> on_frame(const LidarFrame& frame);

  double correspondence_distance() const { return max_corr_dist_; }

 private:
  double voxel_;
  double max_corr_dist_ = 1.0;  // adapted within [0.3, 3.0] m
  std::optional<LidarFrame> prev_;
  Pose3 last_delta_;
};

}  // namespace vse
