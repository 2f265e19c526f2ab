#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace fwlab {

struct LbfgsOptions {
  int max_iterations = 5000;
  int memory = 10;  // 0 = preconditioned gradient descent
  /// Converged when the infinity norm of the gradient is below this value.
  double gradient_tolerance = 1e-10;
  double armijo = 1e-4;
  /// Try doubling accepted steps while the objective keeps decreasing.
  bool expand_steps = true;
  /// Optional escape test; when it fires the run stops with `escaped` set.
  std::function<bool(const Eigen::VectorXd&, double)> escaped;
  bool record_trace = false;
  /// Optional initial inverse-Hessian approximation, applied in place.
  std::function<void(Eigen::VectorXd&)> precondition;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool escaped = false;
  std::vector<double> trace;  // objective after every accepted step
};

/// value = objective(x, gradient_out)
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Limited-memory BFGS with a monotone backtracking (Armijo) line search.
/// Curvature pairs with s.y <= 0 are skipped, so the search direction stays
/// a descent direction on nonconvex objectives.
LbfgsResult minimize_lbfgs(const Objective& objective, Eigen::VectorXd x0, const LbfgsOptions& options);

}  // namespace fwlab
