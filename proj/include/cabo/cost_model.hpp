#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "cabo/design_space.hpp"
#include "cabo/prototype_record.hpp"

namespace cabo {

// Reuse class of one component relative to the prototype record.
enum class CostClass { tweak = 0, swap = 1, create = 2 };

std::string_view to_string(CostClass c);
CostClass cost_class_from_string(std::string_view s);

struct GroupLevels {
  double tweak = 1.0;
  double swap = 10.0;
  double create = 100.0;

  double operator[](CostClass c) const;
  double& operator[](CostClass c);
  double min() const;
  double max() const;
  bool operator==(const GroupLevels&) const = default;
};

// Per-group {tweak, swap, create} levels. The ordering tweak <= swap <= create
// is conventional but not required.
struct CostLevels {
  std::map<std::string, GroupLevels> per_group;

  // Same levels for every group of `space`.
  static CostLevels uniform(const DesignSpace& space, GroupLevels levels);

  // Throws ConfigurationError when `group` has no entry.
  const GroupLevels& at(const std::string& group) const;
  CostLevels scaled(double k) const;
  bool operator==(const CostLevels&) const = default;
};

struct RelaxationParams {
  static constexpr double kDefaultSigma = 0.05;

  // Kernel bandwidth per group in normalized units; groups without an entry
  // use default_sigma.
  std::map<std::string, double> sigma;
  double default_sigma = kDefaultSigma;
  double w_create = 1.0;

  double sigma_for(const std::string& group) const;
  void validate() const;
};

struct LevelOverride {
  int from_iteration = 0;
  CostLevels levels;
};

// Time-indexed true cost levels plus the planner's multiplicative bias.
struct CostSchedule {
  CostLevels base;
  // Strictly increasing from_iteration.
  std::vector<LevelOverride> overrides;
  double believed_bias_alpha = 1.0;
  std::array<bool, 3> biased_classes{true, true, true};
  std::string units = "units";

  void validate() const;
  // Adds an override, replacing one with the same from_iteration.
  void add_override(int from_iteration, CostLevels levels);
};

enum class CostRole { believed, truth };

CostLevels effective_levels(const CostSchedule& schedule, int iteration, CostRole role);

struct CostBreakdown {
  std::vector<CostClass> per_group_class;  // by group index
  std::vector<double> per_group_cost;      // by group index
  double total = 0.0;
};

CostClass classify_group(const DesignSpace& space, const GroupValues& values,
                         const PrototypeRecord& record, std::size_t g);

CostBreakdown discrete_cost(const DesignSpace& space, const Configuration& x,
                            const PrototypeRecord& record, const CostLevels& levels);

// exp(-|a-b|^2 / (2 sigma^2)) on normalized coordinates.
double rbf_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                      const Eigen::Ref<const Eigen::VectorXd>& b, double sigma);

struct SmoothCost {
  double total = 0.0;
  std::vector<double> per_group;  // by group index
};

// Kernel-weighted interpolation of the discrete levels, evaluated on the unit
// cube. Reference points (current prototype and record entries) are
// normalized once at construction.
class SmoothCostModel {
 public:
  SmoothCostModel(const DesignSpace& space, const PrototypeRecord& record,
                  const CostLevels& levels, const RelaxationParams& relax);

  SmoothCost evaluate(const Eigen::Ref<const Eigen::VectorXd>& unit) const;
  // Total smooth cost; writes d(total)/d(unit) into `grad` (resized).
  double evaluate_with_gradient(const Eigen::Ref<const Eigen::VectorXd>& unit,
                                Eigen::VectorXd& grad) const;

 private:
  struct Group {
    std::vector<Eigen::Index> coords;
    GroupLevels levels;
    double inv_two_sigma_sq = 0.0;
    double inv_sigma_sq = 0.0;
    std::optional<Eigen::VectorXd> current;
    std::vector<Eigen::VectorXd> swap_points;  // history minus the current entry
  };

  double group_cost(const Group& group, const Eigen::Ref<const Eigen::VectorXd>& unit,
                    Eigen::VectorXd* grad) const;

  std::vector<Group> groups_;
  double w_create_;
  Eigen::Index dim_;
};

SmoothCost smooth_cost(const DesignSpace& space, const Configuration& x,
                       const PrototypeRecord& record, const CostLevels& levels,
                       const RelaxationParams& relax);

// Gradient over normalized coordinates.
Eigen::VectorXd smooth_cost_gradient(const DesignSpace& space, const Configuration& x,
                                     const PrototypeRecord& record, const CostLevels& levels,
                                     const RelaxationParams& relax);

// JSON: levels are {"<group>": {"tweak":..,"swap":..,"create":..}}.
nlohmann::json to_json(const CostLevels& levels);
CostLevels cost_levels_from_json(const nlohmann::json& j, const std::string& path = "levels");
nlohmann::json to_json(const CostSchedule& schedule);
CostSchedule cost_schedule_from_json(const nlohmann::json& j, const std::string& path = "schedule");
nlohmann::json to_json(const RelaxationParams& relax);
RelaxationParams relaxation_from_json(const nlohmann::json& j,
                                      const std::string& path = "relaxation");

// Every group of `space` has levels in `levels`; negative levels are rejected.
void check_levels_cover(const DesignSpace& space, const CostLevels& levels);

}  // namespace cabo
