#pragma once

#include <functional>

#include <Eigen/Core>

namespace cabo {

// Objective returning f(x) and writing its gradient into the second argument.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct BoxMinimizerOptions {
  int max_iterations = 200;
  int memory = 6;
  double projected_gradient_tolerance = 1e-7;
  double relative_function_tolerance = 1e-11;
  int max_backtracks = 30;
};

struct BoxMinimizerResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  // The first line search made no progress at all.
  bool line_search_failed = false;
};

// Projected limited-memory BFGS for box constraints: two-loop recursion on the
// free variables, Armijo backtracking along the projected path. Non-finite
// objective values are treated as infeasible and backtracked away from.
BoxMinimizerResult minimize_box(const Objective& f, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                const BoxMinimizerOptions& options = {});

}  // namespace cabo
