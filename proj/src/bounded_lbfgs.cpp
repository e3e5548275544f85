#include "cabo/bounded_lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

namespace cabo {

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

struct Pair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
};

}  // namespace

BoxMinimizerResult minimize_box(const Objective& f, const Eigen::VectorXd& x0,
                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                const BoxMinimizerOptions& options) {
  const Eigen::Index n = x0.size();
  BoxMinimizerResult result;
  result.x = project(x0, lower, upper);
  Eigen::VectorXd g(n);
  result.value = f(result.x, g);
  result.evaluations = 1;
  if (!std::isfinite(result.value) || !g.allFinite()) {
    result.line_search_failed = true;
    return result;
  }

  std::deque<Pair> memory;
  Eigen::VectorXd x_new(n), g_new(n), d(n);
  Eigen::Array<bool, Eigen::Dynamic, 1> free(n);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd pg = project(result.x - g, lower, upper) - result.x;
    if (pg.lpNorm<Eigen::Infinity>() <= options.projected_gradient_tolerance) {
      result.converged = true;
      break;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool pinned_low = result.x[i] <= lower[i] && g[i] > 0.0;
      const bool pinned_high = result.x[i] >= upper[i] && g[i] < 0.0;
      free[i] = !(pinned_low || pinned_high);
    }
    const Eigen::VectorXd mask = free.cast<double>().matrix();

    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      // Two-loop recursion restricted to free coordinates.
      Eigen::VectorXd q = g.cwiseProduct(mask);
      std::vector<double> alpha(memory.size());
      for (std::size_t k = memory.size(); k-- > 0;) {
        const Eigen::VectorXd s = memory[k].s.cwiseProduct(mask);
        const Eigen::VectorXd y = memory[k].y.cwiseProduct(mask);
        const double sy = s.dot(y);
        if (sy <= 0.0) {
          alpha[k] = 0.0;
          continue;
        }
        alpha[k] = s.dot(q) / sy;
        q -= alpha[k] * y;
      }
      if (!memory.empty()) {
        const Eigen::VectorXd s = memory.back().s.cwiseProduct(mask);
        const Eigen::VectorXd y = memory.back().y.cwiseProduct(mask);
        const double yy = y.squaredNorm();
        if (yy > 0.0 && s.dot(y) > 0.0) q *= s.dot(y) / yy;
      }
      for (std::size_t k = 0; k < memory.size(); ++k) {
        const Eigen::VectorXd s = memory[k].s.cwiseProduct(mask);
        const Eigen::VectorXd y = memory[k].y.cwiseProduct(mask);
        const double sy = s.dot(y);
        if (sy <= 0.0) continue;
        const double beta = y.dot(q) / sy;
        q += s * (alpha[k] - beta);
      }
      d = -q.cwiseProduct(mask);

      double slope = g.dot(d);
      if (!(slope < 0.0) || !d.allFinite()) {
        memory.clear();
        d = -g.cwiseProduct(mask);
        slope = g.dot(d);
        if (!(slope < 0.0)) break;
      }

      double step = 1.0;
      if (memory.empty()) step = std::min(1.0, 1.0 / std::max(d.lpNorm<Eigen::Infinity>(), 1e-300));

      for (int bt = 0; bt < options.max_backtracks; ++bt) {
        x_new = project(result.x + step * d, lower, upper);
        const double f_new = f(x_new, g_new);
        ++result.evaluations;
        const double decrease = g.dot(x_new - result.x);
        if (std::isfinite(f_new) && g_new.allFinite() &&
            f_new <= result.value + 1e-4 * decrease && (x_new - result.x).squaredNorm() > 0.0) {
          const Eigen::VectorXd s = x_new - result.x;
          const Eigen::VectorXd y = g_new - g;
          if (s.dot(y) > 1e-12 * y.squaredNorm()) {
            memory.push_back({s, y});
            if (static_cast<int>(memory.size()) > options.memory) memory.pop_front();
          }
          const double f_old = result.value;
          result.x = x_new;
          result.value = f_new;
          g = g_new;
          accepted = true;
          if (std::abs(f_old - f_new) <=
              options.relative_function_tolerance * std::max(std::abs(f_old), std::abs(f_new))) {
            result.converged = true;
          }
          break;
        }
        step *= 0.5;
      }
      if (!accepted) memory.clear();
    }

    result.iterations = iter + 1;
    if (!accepted) {
      if (iter == 0) result.line_search_failed = true;
      break;
    }
    if (result.converged) break;
  }
  return result;
}

}  // namespace cabo
