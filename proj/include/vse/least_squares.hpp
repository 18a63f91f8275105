#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace vse {

/// One factor, already whitened, linearized at the current state.
struct LinearizedFactor {
  Eigen::VectorXd residual;
  std::vector<int> blocks;
  std::vector<Eigen::MatrixXd> jacobians;  // same order as blocks
};

/// Problem interface for the sparse LM solver. Blocks are manifold
/// variables; apply_step retracts the stacked increment.
class LeastSquaresProblem {
 public:
  virtual ~LeastSquaresProblem() = default;
  virtual int num_blocks() const = 0;
  virtual int block_dim(int block) const = 0;
  virtual std::vector<LinearizedFactor> linearize() const = 0;
  virtual void apply_step(const Eigen::VectorXd& dx) = 0;
  virtual void push_state() = 0;
  virtual void pop_state() = 0;
};

struct LmOptions {
  int max_iterations = 50;
  double relative_cost_tol = 1e-9;
  double gradient_tol = 1e-10;
  // A tiny cost decrease only counts as convergence once the (equilibrated)
  // gradient is at least this small; otherwise iteration continues.
  double gradient_target = 1e-9;
  double initial_lambda = 1e-6;
  double max_lambda = 1e10;
  // Accepted steps shrink the damping aggressively: near the optimum the
  // Gauss-Newton step is the right one, and residual damping is what limits
  // the achievable gradient norm per iteration.
  double lambda_decrease = 0.01;
};

struct LmSummary {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  bool degenerate = false;
};

/// Damped Gauss-Newton over the normal equations with sparse Cholesky.
/// Cost is 0.5 * sum of squared whitened residuals; accepted steps never
/// increase it.
class LmSolver {
 public:
  LmSummary solve(LeastSquaresProblem& problem, const LmOptions& options = {});

  /// Marginal covariance of one block at the solution (information-matrix
  /// inverse restricted to the block). Valid after solve().
  Eigen::MatrixXd marginal_covariance(int block);

 private:
  std::vector<int> offsets_;
  int total_dim_ = 0;
  Eigen::SparseMatrix<double> hessian_;  // undamped, at the final state
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> cov_factorization_;
  Eigen::VectorXd cov_scale_;  // Jacobi equilibration of the factorized system
  bool cov_ready_ = false;
  bool have_solution_ = false;
  bool rank_deficient_ = false;
};

}  // namespace vse
