#include "cabo/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "cabo/bounded_lbfgs.hpp"
#include "cabo/errors.hpp"
#include "cabo/sampling.hpp"

namespace cabo {

namespace {

constexpr double kMinStd = 1e-12;

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

std::string_view to_string(AcquisitionMode mode) {
  return mode == AcquisitionMode::standard_ei ? "standard_ei" : "cost_aware";
}

AcquisitionMode acquisition_mode_from_string(std::string_view s) {
  if (s == "standard_ei" || s == "baseline") return AcquisitionMode::standard_ei;
  if (s == "cost_aware") return AcquisitionMode::cost_aware;
  throw ConfigurationError("unknown acquisition mode '" + std::string(s) + "'");
}

double expected_improvement(const GPModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                            double best, double xi) {
  const Prediction p = model.predict(x);
  const double improvement = p.mean - best - xi;
  if (p.std < kMinStd) return std::max(improvement, 0.0);
  const double z = improvement / p.std;
  return std::max(improvement * normal_cdf(z) + p.std * normal_pdf(z), 0.0);
}

double expected_improvement_with_gradient(const GPModel& model,
                                          const Eigen::Ref<const Eigen::VectorXd>& x, double best,
                                          double xi, Eigen::VectorXd& grad) {
  const PredictionGradient p = model.predict_gradient(x);
  const double improvement = p.mean - best - xi;
  if (p.std < kMinStd) {
    if (improvement > 0.0) {
      grad = p.dmean;
      return improvement;
    }
    grad.setZero(x.size());
    return 0.0;
  }
  const double z = improvement / p.std;
  const double cdf = normal_cdf(z);
  const double pdf = normal_pdf(z);
  const double ei = improvement * cdf + p.std * pdf;
  if (ei <= 0.0) {
    grad.setZero(x.size());
    return 0.0;
  }
  grad = cdf * p.dmean + pdf * p.dstd;
  return ei;
}

double cost_aware_value(const GPModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                        double best, const SmoothCostModel& cost, double xi) {
  const double c = cost.evaluate(x).total;
  if (!(c > 0.0)) throw ConfigurationError("smooth cost is not positive; cost-aware EI undefined");
  return expected_improvement(model, x, best, xi) / c;
}

double cost_aware_value(const GPModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                        double best, const DesignSpace& space, const PrototypeRecord& record,
                        const CostLevels& levels, const RelaxationParams& relax, double xi) {
  return cost_aware_value(model, x, best, SmoothCostModel(space, record, levels, relax), xi);
}

void check_cost_aware_levels(const DesignSpace& space, const CostLevels& levels) {
  check_levels_cover(space, levels);
  for (const auto& g : space.groups()) {
    if (levels.at(g.name).max() <= 0.0)
      throw ConfigurationError("group '" + g.name +
                               "' has all-zero cost levels; cost-aware acquisition would divide by zero");
  }
}

AcquisitionResult maximize(const AcquisitionSpec& spec, const GPModel& model, double best,
                           const PrototypeRecord& record, const CostLevels& levels,
                           const RelaxationParams& relax, const DesignSpace& space,
                           const std::optional<Eigen::VectorXd>& incumbent) {
  if (spec.n_starts < 1) throw ConfigurationError("n_starts must be at least 1");
  const auto d = static_cast<Eigen::Index>(space.dimension());

  std::optional<SmoothCostModel> cost;
  if (spec.mode == AcquisitionMode::cost_aware) {
    check_cost_aware_levels(space, levels);
    cost.emplace(space, record, levels, relax);
  }

  // Acquisition value and gradient (ascent direction).
  auto acquisition = [&](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    Eigen::VectorXd dei;
    const double ei = expected_improvement_with_gradient(model, u, best, spec.xi, dei);
    if (!cost) {
      grad = dei;
      return ei;
    }
    Eigen::VectorXd dc;
    const double c = cost->evaluate_with_gradient(u, dc);
    if (!(c > 0.0)) throw ConfigurationError("smooth cost is not positive; cost-aware EI undefined");
    const double a = ei / c;
    grad = (dei - a * dc) / c;
    return a;
  };

  // Start points.
  std::vector<Eigen::VectorXd> starts;
  const int n_sobol = std::min(8, spec.n_starts);
  const Eigen::MatrixXd sobol =
      ScrambledSobol(space.dimension(), derive_seed({spec.seed, 0x1ULL})).points(static_cast<std::size_t>(n_sobol));
  for (int i = 0; i < n_sobol; ++i) starts.emplace_back(sobol.row(i).transpose());
  if (incumbent && static_cast<int>(starts.size()) < spec.n_starts) starts.push_back(*incumbent);
  std::mt19937_64 rng(derive_seed({spec.seed, 0x2ULL}));
  while (static_cast<int>(starts.size()) < spec.n_starts) {
    Eigen::VectorXd u(d);
    for (Eigen::Index k = 0; k < d; ++k) u[k] = uniform01(rng);
    starts.push_back(std::move(u));
  }

  std::vector<double> start_values(starts.size());
  double scale = 0.0;
  Eigen::VectorXd scratch;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    start_values[i] = acquisition(starts[i], scratch);
    scale = std::max(scale, std::abs(start_values[i]));
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;

  const Objective objective = [&](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    Eigen::VectorXd g;
    const double a = acquisition(u, g);
    grad = -g / scale;
    return -a / scale;
  };

  const Eigen::VectorXd lower = Eigen::VectorXd::Zero(d);
  const Eigen::VectorXd upper = Eigen::VectorXd::Ones(d);
  BoxMinimizerOptions options;
  options.max_iterations = 100;
  options.projected_gradient_tolerance = 1e-8;
  options.relative_function_tolerance = 1e-10;

  AcquisitionResult out;
  out.value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < starts.size(); ++i) {
    Eigen::VectorXd u = starts[i];
    double value = start_values[i];
    const BoxMinimizerResult res = minimize_box(objective, starts[i], lower, upper, options);
    if (std::isfinite(res.value) && -res.value * scale > value) {
      u = res.x;
      value = acquisition(u, scratch);
    }
    if (value > out.value) {
      out.value = value;
      out.unit = u;
      out.start_index = static_cast<int>(i);
    }
  }
  out.x_star = space.denormalize(out.unit);
  return out;
}

Configuration realize(const DesignSpace& space, const Configuration& x_star) {
  return space.snap(x_star);
}

nlohmann::json to_json(const AcquisitionSpec& spec) {
  return {{"mode", to_string(spec.mode)}, {"xi", spec.xi}, {"n_starts", spec.n_starts}, {"seed", spec.seed}};
}

AcquisitionSpec acquisition_spec_from_json(const nlohmann::json& j, const std::string& path) {
  AcquisitionSpec spec;
  if (j.is_null()) return spec;
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  if (auto it = j.find("mode"); it != j.end()) {
    try {
      spec.mode = acquisition_mode_from_string(it->get<std::string>());
    } catch (const std::exception& e) {
      throw ValidationError(path + ".mode", e.what());
    }
  }
  if (auto it = j.find("xi"); it != j.end()) {
    if (!it->is_number() || !(it->get<double>() >= 0.0))
      throw ValidationError(path + ".xi", "must be a non-negative number");
    spec.xi = it->get<double>();
  }
  if (auto it = j.find("n_starts"); it != j.end()) {
    if (!it->is_number_integer() || it->get<int>() < 1)
      throw ValidationError(path + ".n_starts", "must be a positive integer");
    spec.n_starts = it->get<int>();
  }
  if (auto it = j.find("seed"); it != j.end()) {
    if (!it->is_number_integer()) throw ValidationError(path + ".seed", "expected an integer");
    spec.seed = it->get<std::uint64_t>();
  }
  return spec;
}

}  // namespace cabo
