#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "cabo/cost_model.hpp"
#include "cabo/design_space.hpp"
#include "cabo/gaussian_process.hpp"
#include "cabo/prototype_record.hpp"

namespace cabo {

enum class AcquisitionMode { standard_ei, cost_aware };

std::string_view to_string(AcquisitionMode mode);
AcquisitionMode acquisition_mode_from_string(std::string_view s);

struct AcquisitionSpec {
  AcquisitionMode mode = AcquisitionMode::cost_aware;
  double xi = 0.0;
  int n_starts = 16;
  std::uint64_t seed = 0;
};

// Closed-form EI for maximization, with y+ = `best`.
double expected_improvement(const GPModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                            double best, double xi = 0.0);

// EI and its gradient over unit coordinates.
double expected_improvement_with_gradient(const GPModel& model,
                                          const Eigen::Ref<const Eigen::VectorXd>& x, double best,
                                          double xi, Eigen::VectorXd& grad);

// EI(x) / c~(x).
double cost_aware_value(const GPModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                        double best, const SmoothCostModel& cost, double xi = 0.0);
double cost_aware_value(const GPModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                        double best, const DesignSpace& space, const PrototypeRecord& record,
                        const CostLevels& levels, const RelaxationParams& relax, double xi = 0.0);

// Rejects cost-aware planning against a group whose levels are all zero.
void check_cost_aware_levels(const DesignSpace& space, const CostLevels& levels);

struct AcquisitionResult {
  Configuration x_star;  // native units, not snapped
  Eigen::VectorXd unit;
  double value = 0.0;
  int start_index = -1;
};

// Multi-start bounded quasi-Newton ascent of the acquisition over the unit
// cube. Starts are min(8, n_starts) Sobol points, then `incumbent` (when
// given and room remains), then uniform random points; all seeded by
// spec.seed. Ties between starts go to the lowest start index.
AcquisitionResult maximize(const AcquisitionSpec& spec, const GPModel& model, double best,
                           const PrototypeRecord& record, const CostLevels& levels,
                           const RelaxationParams& relax, const DesignSpace& space,
                           const std::optional<Eigen::VectorXd>& incumbent = std::nullopt);

// Snaps every parameter to its grid (ties toward the lower value).
Configuration realize(const DesignSpace& space, const Configuration& x_star);

nlohmann::json to_json(const AcquisitionSpec& spec);
AcquisitionSpec acquisition_spec_from_json(const nlohmann::json& j,
                                           const std::string& path = "acquisition");

}  // namespace cabo
