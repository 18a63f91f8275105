#include "vse/lidar_icp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <Eigen/SVD>

namespace vse {
namespace {

int64_t voxel_key(const Vec3& p, double voxel) {
  const auto cell = [voxel](double x) {
    return static_cast<int64_t>(std::floor(x / voxel)) & 0x1fffff;  // 21 bits per axis
  };
  return (cell(p.x()) << 42) | (cell(p.y()) << 21) | cell(p.z());
}

/// Static 3-d tree over an immutable point set, median split by the widest
/// axis, radius-limited nearest-neighbor query.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& points) : points_(points) {
    index_.resize(points.size());
    std::iota(index_.begin(), index_.end(), 0);
    nodes_.reserve(2 * points.size() + 1);
    root_ = build(0, static_cast<int>(points.size()));
  }

  /// Index of the nearest point within max_dist, or -1.
  int nearest(const Vec3& q, double max_dist) const {
    int best = -1;
    double best_sq = max_dist * max_dist;
    search(root_, q, best, best_sq);
    return best;
  }

 private:
  struct Node {
    int axis = 0;
    double split = 0.0;
    int point = -1;      // leaf payload start in index_
    int count = 0;       // leaf payload length; 0 for interior nodes
    int left = -1, right = -1;
  };

  int build(int begin, int end) {
    if (begin >= end) return -1;
    Node node;
    if (end - begin <= 8) {
      node.point = begin;
      node.count = end - begin;
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    Vec3 lo = points_[index_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[index_[i]]);
      hi = hi.cwiseMax(points_[index_[i]]);
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    node.axis = axis;
    node.split = points_[index_[mid]][axis];
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void search(int id, const Vec3& q, int& best, double& best_sq) const {
    if (id < 0) return;
    const Node& node = nodes_[id];
    if (node.count > 0) {
      for (int i = 0; i < node.count; ++i) {
        const int idx = index_[node.point + i];
        const double d = (points_[idx] - q).squaredNorm();
        if (d < best_sq) {
          best_sq = d;
          best = idx;
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    search(diff < 0.0 ? node.left : node.right, q, best, best_sq);
    if (diff * diff < best_sq) search(diff < 0.0 ? node.right : node.left, q, best, best_sq);
  }

  const std::vector<Vec3>& points_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Closed-form least-squares alignment: returns T minimizing
/// sum ||R q_k + t - p_k||^2 over the paired points.
Pose3 horn_alignment(const std::vector<Vec3>& q, const std::vector<Vec3>& p) {
  const double n = static_cast<double>(q.size());
  Vec3 q_bar = Vec3::Zero(), p_bar = Vec3::Zero();
  for (size_t k = 0; k < q.size(); ++k) {
    q_bar += q[k];
    p_bar += p[k];
  }
  q_bar /= n;
  p_bar /= n;
  Mat3 w = Mat3::Zero();
  for (size_t k = 0; k < q.size(); ++k) {
    w += (q[k] - q_bar) * (p[k] - p_bar).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return Pose3(Rot3(r), p_bar - r * q_bar);
}

}  // namespace

LidarFrame downsample(const LidarFrame& frame, double voxel) {
  if (!(voxel > 0.0)) throw std::invalid_argument("downsample: voxel size must be positive");
  LidarFrame out;
  out.t = frame.t;
  out.points.reserve(frame.points.size());
  std::unordered_set<int64_t> seen;
  seen.reserve(frame.points.size());
  for (const Vec3& p : frame.points) {
    if (seen.insert(voxel_key(p, voxel)).second) out.points.push_back(p);
  }
  return out;
}

IcpResult icp_register(const LidarFrame& source, const LidarFrame& target,
                       const Pose3& initial_guess, double max_corr_dist) {
  IcpResult res;
  res.delta = initial_guess;
  if (source.points.size() < 100 || target.points.size() < 100) return res;

  const KdTree tree(target.points);
  std::vector<Vec3> matched_q, matched_p;
  matched_q.reserve(source.points.size());
  matched_p.reserve(source.points.size());

  for (int iter = 0; iter < 50; ++iter) {
    res.iterations = iter + 1;
    // p_source ~= delta * p_target, so source points are pulled into the
    // target frame for matching.
    const Pose3 target_from_source = pose_inverse(res.delta);
    matched_q.clear();
    matched_p.clear();
    double sq_sum = 0.0;
    for (const Vec3& p : source.points) {
      const Vec3 in_target = target_from_source * p;
      const int nn = tree.nearest(in_target, max_corr_dist);
      if (nn < 0) continue;
      matched_q.push_back(target.points[nn]);
      matched_p.push_back(p);
      sq_sum += (res.delta * target.points[nn] - p).squaredNorm();
    }
    if (matched_q.size() < 20) {
      res.converged = false;
      return res;
    }
    res.final_rmse = std::sqrt(sq_sum / static_cast<double>(matched_q.size()));

    const Pose3 updated = horn_alignment(matched_q, matched_p);
    const Vec6 increment = se3_log(pose_between(res.delta, updated));
    res.delta = updated;
    if (increment.norm() < 1e-6) {
      res.converged = true;
      // Refresh the error and accumulate the Gauss-Newton Hessian at the
      // accepted transform. Residual r_k = R q_k + t - p_k, so the Jacobian
      // against a right rotation perturbation is -R [q_k]x and against the
      // translation is the identity.
      const Mat3 r_mat = res.delta.rotation.matrix();
      double final_sq = 0.0;
      for (size_t k = 0; k < matched_q.size(); ++k) {
        final_sq += (res.delta * matched_q[k] - matched_p[k]).squaredNorm();
        Eigen::Matrix<double, 3, 6> j;
        j.leftCols<3>() = -r_mat * skew(matched_q[k]);
        j.rightCols<3>() = Mat3::Identity();
        res.hessian += j.transpose() * j;
      }
      res.matched = static_cast<int>(matched_q.size());
      res.final_rmse = std::sqrt(final_sq / static_cast<double>(matched_q.size()));
      return res;
    }
  }
  res.converged = false;
  return res;
}

std::optional<LidarOdom> LidarOdometry::on_frame(const LidarFrame& frame) {
  LidarFrame down = downsample(frame, voxel_);
  if (!prev_) {
    prev_ = std::move(down);
    return std::nullopt;
  }

  IcpResult res = icp_register(*prev_, down, last_delta_, max_corr_dist_);
  if (res.converged) {
    // Coarse-to-fine: a second pass with the correspondence radius pulled
    // down to the achieved residual scale prunes the cross-surface matches
    // that bias point-to-point alignment on resampled scans.
    const double refine = std::min(max_corr_dist_, std::max(3.0 * res.final_rmse, 3.0 * voxel_));
    const IcpResult fine = icp_register(*prev_, down, res.delta, refine);
    if (fine.converged) res = fine;
  }
  const double t_prev = prev_->t;
  prev_ = std::move(down);

  if (!res.converged) {
    max_corr_dist_ = std::min(max_corr_dist_ * 1.5, 3.0);
    return std::nullopt;
  }
  if (res.final_rmse < 0.1 * max_corr_dist_) {
    max_corr_dist_ = std::max(max_corr_dist_ * 0.5, 0.3);
  }
  last_delta_ = res.delta;

  LidarOdom odom;
  odom.t_prev = t_prev;
  odom.t_curr = prev_->t;
  odom.delta = res.delta;
  // Pose covariance from the registration geometry: residual variance times
  // the inverse Gauss-Newton Hessian. Voxelized scans have spatially
  // correlated residuals, so the raw estimate is optimistic; the inflation
  // factor and the floors keep it conservative.
  const double variance = 16.0 * std::pow(std::max(res.final_rmse, 0.01), 2);
  const Eigen::LDLT<Mat6> ldlt(res.hessian);
  Mat6 cov = Mat6::Identity();
  if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 1e-9) {
    cov = variance * ldlt.solve(Mat6::Identity());
  } else {
    // Degenerate geometry: fall back to a pessimistic isotropic model.
    cov *= std::pow(std::max(res.final_rmse, 0.1), 2);
  }
  const double rot_floor = 1e-4, trans_floor = 1e-3;  // 1-sigma floors
  for (int i = 0; i < 3; ++i) {
    cov(i, i) = std::max(cov(i, i), rot_floor * rot_floor);
    cov(i + 3, i + 3) = std::max(cov(i + 3, i + 3), trans_floor * trans_floor);
  }
  odom.covariance = cov;
  return odom;
}

}  // namespace vse
