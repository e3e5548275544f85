#include "cabo/benchmark.hpp"

#include <cmath>
#include <numbers>

#include "cabo/errors.hpp"

namespace cabo {

std::string_view to_string(GroundTruthKind k) {
  switch (k) {
    case GroundTruthKind::rosenbrock:
      return "rosenbrock";
    case GroundTruthKind::rosenbrock_nd:
      return "rosenbrock_nd";
    case GroundTruthKind::ackley:
      return "ackley";
    case GroundTruthKind::goldstein_price:
      return "goldstein_price";
    case GroundTruthKind::levy:
      return "levy";
  }
  return "rosenbrock";
}

GroundTruthKind ground_truth_kind_from_string(std::string_view s) {
  for (auto k : {GroundTruthKind::rosenbrock, GroundTruthKind::rosenbrock_nd, GroundTruthKind::ackley,
                 GroundTruthKind::goldstein_price, GroundTruthKind::levy})
    if (to_string(k) == s) return k;
  throw ConfigurationError("unknown ground truth '" + std::string(s) + "'");
}

double rosenbrock(std::span<const double> x, bool canonical) {
  if (x.empty()) throw BoundsError("x", "rosenbrock needs at least one coordinate");
  if (x.size() == 1) return (1.0 - x[0]) * (1.0 - x[0]);
  double f = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double a = 1.0 - x[i];
    const double b = canonical ? x[i + 1] - x[i] * x[i] : x[i] - x[i + 1] * x[i + 1];
    f += a * a + 100.0 * b * b;
  }
  return f;
}

double ackley(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  double sq = 0.0, cs = 0.0;
  for (double v : x) {
    sq += v * v;
    cs += std::cos(2.0 * std::numbers::pi * v);
  }
  return -20.0 * std::exp(-0.2 * std::sqrt(sq / n)) - std::exp(cs / n) + 20.0 + std::numbers::e;
}

double goldstein_price(std::span<const double> x) {
  const double a = x[0], b = x[1];
  const double s = a + b + 1.0;
  const double t = 2.0 * a - 3.0 * b;
  const double p = 1.0 + s * s * (19.0 - 14.0 * a + 3.0 * a * a - 14.0 * b + 6.0 * a * b + 3.0 * b * b);
  const double q = 30.0 + t * t * (18.0 - 32.0 * a + 12.0 * a * a + 48.0 * b - 36.0 * a * b + 27.0 * b * b);
  return p * q;
}

double levy(std::span<const double> x) {
  const auto w = [&](std::size_t i) { return 1.0 + (x[i] - 1.0) / 4.0; };
  const std::size_t n = x.size();
  const double pi = std::numbers::pi;
  const double w0 = w(0);
  double f = std::pow(std::sin(pi * w0), 2);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double wi = w(i);
    f += (wi - 1.0) * (wi - 1.0) * (1.0 + 10.0 * std::pow(std::sin(pi * wi + 1.0), 2));
  }
  const double wn = w(n - 1);
  f += (wn - 1.0) * (wn - 1.0) * (1.0 + std::pow(std::sin(2.0 * pi * wn), 2));
  return f;
}

GroundTruth GroundTruth::make(GroundTruthKind kind, int dimension, bool canonical) {
  GroundTruth gt;
  gt.kind = kind;
  gt.canonical = canonical;
  switch (kind) {
    case GroundTruthKind::rosenbrock:
      if (dimension != 2) throw ConfigurationError("rosenbrock is two-dimensional; use rosenbrock_nd");
      gt.lower = -2.0, gt.upper = 2.0, gt.optimum_value = 0.0;
      gt.optimizer_point.assign(2, 1.0);
      break;
    case GroundTruthKind::rosenbrock_nd:
      if (dimension < 1) throw ConfigurationError("rosenbrock_nd needs dimension >= 1");
      gt.lower = -2.0, gt.upper = 2.0, gt.optimum_value = 0.0;
      gt.optimizer_point.assign(static_cast<std::size_t>(dimension), 1.0);
      break;
    case GroundTruthKind::ackley:
      if (dimension != 2) throw ConfigurationError("ackley is two-dimensional here");
      gt.lower = -5.0, gt.upper = 5.0, gt.optimum_value = 0.0;
      gt.optimizer_point.assign(2, 0.0);
      break;
    case GroundTruthKind::goldstein_price:
      if (dimension != 2) throw ConfigurationError("goldstein_price is two-dimensional");
      gt.lower = -2.0, gt.upper = 2.0, gt.optimum_value = 3.0;
      gt.optimizer_point = {0.0, -1.0};
      break;
    case GroundTruthKind::levy:
      if (dimension != 2) throw ConfigurationError("levy is two-dimensional here");
      gt.lower = -10.0, gt.upper = 10.0, gt.optimum_value = 0.0;
      gt.optimizer_point.assign(2, 1.0);
      break;
  }
  gt.dimension = dimension;
  return gt;
}

GroundTruth GroundTruth::make(std::string_view name, int dimension, bool canonical) {
  return make(ground_truth_kind_from_string(name), dimension, canonical);
}

double GroundTruth::operator()(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dimension)
    throw BoundsError("x", name() + " expects " + std::to_string(dimension) + " coordinates, got " +
                               std::to_string(x.size()));
  switch (kind) {
    case GroundTruthKind::rosenbrock:
    case GroundTruthKind::rosenbrock_nd:
      return rosenbrock(x, canonical);
    case GroundTruthKind::ackley:
      return ackley(x);
    case GroundTruthKind::goldstein_price:
      return goldstein_price(x);
    case GroundTruthKind::levy:
      return levy(x);
  }
  return 0.0;
}

void NoiseModel::validate() const {
  if (!(additive_sd >= 0.0) || !(multiplicative_sd >= 0.0))
    throw ConfigurationError("noise standard deviations must be non-negative");
}

double noisy_observe(const GroundTruth& gt, const NoiseModel& noise, std::span<const double> x,
                     std::mt19937_64& rng) {
  const double f = gt(x);
  double em = 1.0, ea = 0.0;
  if (noise.multiplicative_sd > 0.0) em = std::normal_distribution<double>(1.0, noise.multiplicative_sd)(rng);
  if (noise.additive_sd > 0.0) ea = std::normal_distribution<double>(0.0, noise.additive_sd)(rng);
  return f * em + ea;
}

DesignSpace benchmark_space(const GroundTruth& gt, int groups) {
  return benchmark_space(gt, groups, gt.lower, gt.upper);
}

DesignSpace benchmark_space(const GroundTruth& gt, int groups, double lower, double upper) {
  const int n = gt.dimension;
  if (groups < 1 || groups > n || n % groups != 0)
    throw ConfigurationError("cannot split " + std::to_string(n) + " parameters into " +
                             std::to_string(groups) + " equal groups");
  if (!(upper > lower)) throw ConfigurationError("benchmark box needs lower < upper");
  std::vector<Parameter> params;
  for (int i = 0; i < n; ++i)
    params.push_back(Parameter{"x" + std::to_string(i + 1), lower, upper, (upper - lower) / 100.0});

  std::vector<ComponentGroup> gs;
  const int per = n / groups;
  const bool hw_sw = n == 2 && groups == 2;
  for (int g = 0; g < groups; ++g) {
    ComponentGroup grp;
    grp.kind = hw_sw && g == 1 ? ComponentKind::software : ComponentKind::hardware;
    grp.name = hw_sw ? (g == 0 ? "hardware" : "software") : (groups == 1 ? "hardware" : "hardware" + std::to_string(g + 1));
    for (int i = g * per; i < (g + 1) * per; ++i) grp.parameter_names.push_back(params[static_cast<std::size_t>(i)].name);
    gs.push_back(std::move(grp));
  }
  return DesignSpace(std::move(params), std::move(gs));
}

}  // namespace cabo
