#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cabo/design_space.hpp"

namespace cabo {

enum class GroundTruthKind { rosenbrock, rosenbrock_nd, ackley, goldstein_price, levy };

std::string_view to_string(GroundTruthKind k);
GroundTruthKind ground_truth_kind_from_string(std::string_view s);

// Test functions in minimization form, on their conventional boxes.
struct GroundTruth {
  GroundTruthKind kind = GroundTruthKind::rosenbrock;
  int dimension = 2;
  double optimum_value = 0.0;
  std::vector<double> optimizer_point;
  double lower = -2.0;
  double upper = 2.0;
  // Rosenbrock only: use 100(x2 - x1^2)^2 instead of 100(x1 - x2^2)^2.
  bool canonical = false;

  static GroundTruth make(GroundTruthKind kind, int dimension = 2, bool canonical = false);
  static GroundTruth make(std::string_view name, int dimension = 2, bool canonical = false);

  double operator()(std::span<const double> x) const;
  double operator()(const Configuration& x) const { return (*this)(std::span<const double>(x.values())); }
  std::string name() const { return std::string(to_string(kind)); }
};

double rosenbrock(std::span<const double> x, bool canonical = false);
double ackley(std::span<const double> x);
double goldstein_price(std::span<const double> x);
double levy(std::span<const double> x);

struct NoiseModel {
  double additive_sd = 0.1;
  double multiplicative_sd = 0.1;

  void validate() const;
};

// f(x)·eps_m + eps_a with eps_m ~ N(1, sd_m^2), eps_a ~ N(0, sd_a^2).
double noisy_observe(const GroundTruth& gt, const NoiseModel& noise, std::span<const double> x,
                     std::mt19937_64& rng);

// Benchmark design space: parameters x1..xn on the function's box with a
// 1% snap grid, split into `groups` contiguous groups. A 2-D space with two
// groups uses hardware for x1 and software for x2; otherwise all groups are
// hardware.
DesignSpace benchmark_space(const GroundTruth& gt, int groups);
DesignSpace benchmark_space(const GroundTruth& gt, int groups, double lower, double upper);

}  // namespace cabo
