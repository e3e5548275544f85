#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace cabo {

// Two group values are the same buildable artifact when their snapped values
// differ by at most this much.
inline constexpr double kMatchTolerance = 1e-9;

enum class ComponentKind { hardware, software, other };

std::string_view to_string(ComponentKind kind);
ComponentKind component_kind_from_string(std::string_view s);

struct Parameter {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  // Absent means continuous.
  std::optional<double> snap_step;

  double span() const { return upper - lower; }
  bool continuous() const { return !snap_step.has_value(); }
  // Nearest grid point lower + k*step, ties toward the lower value, clamped
  // into [lower, upper].
  double snap(double value) const;

  bool operator==(const Parameter&) const = default;
};

struct ComponentGroup {
  std::string name;
  std::vector<std::string> parameter_names;
  ComponentKind kind = ComponentKind::other;

  bool operator==(const ComponentGroup&) const = default;
};

// Values of one group's parameters, in the group's parameter order
// (native units).
using GroupValues = std::vector<double>;

class Configuration;

// Named, bounded parameters partitioned into disjoint component groups.
// Immutable after construction; the constructor enforces every invariant.
class DesignSpace {
 public:
  DesignSpace(std::vector<Parameter> parameters, std::vector<ComponentGroup> groups);

  const std::vector<Parameter>& parameters() const { return parameters_; }
  const std::vector<ComponentGroup>& groups() const { return groups_; }
  std::size_t dimension() const { return parameters_.size(); }
  std::size_t group_count() const { return groups_.size(); }

  std::size_t parameter_index(std::string_view name) const;
  std::size_t group_index(std::string_view name) const;
  const ComponentGroup& group(std::string_view name) const;

  // Parameter indices (into parameters()) of group `g`, in group order.
  const std::vector<std::size_t>& group_members(std::size_t g) const { return members_[g]; }

  // Unit-cube point of `x`; throws BoundsError naming the offending parameter.
  Eigen::VectorXd normalize(const Configuration& x) const;
  Configuration denormalize(const Eigen::Ref<const Eigen::VectorXd>& unit) const;

  GroupValues project(const Configuration& x, std::string_view group_name) const;
  GroupValues project(const Configuration& x, std::size_t g) const;

  // Snapped-value equality of two group configurations of group `g`.
  bool same_group_values(std::size_t g, const GroupValues& a, const GroupValues& b) const;

  // Normalized coordinates of a group configuration (group order).
  Eigen::VectorXd normalize_group(std::size_t g, const GroupValues& values) const;

  // Every parameter snapped to its grid.
  Configuration snap(const Configuration& x) const;

  Configuration make_configuration(std::vector<double> values) const;

  bool operator==(const DesignSpace&) const = default;

 private:
  std::vector<Parameter> parameters_;
  std::vector<ComponentGroup> groups_;
  std::vector<std::vector<std::size_t>> members_;
};

// One full assignment of values to every parameter, in the space's parameter
// order.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::vector<double> values) : values_(std::move(values)) {}

  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }
  double at(const DesignSpace& space, std::string_view name) const;

  bool operator==(const Configuration&) const = default;

 private:
  std::vector<double> values_;
};

// JSON schema shared by CLI, service and UI:
// {"schema_version":1,
//  "parameters":[{"name":..,"lower":..,"upper":..,"snap_step":<number>|"continuous"}],
//  "groups":[{"name":..,"parameters":[..],"kind":"hardware"|"software"|"other"}]}
nlohmann::json to_json(const DesignSpace& space);
DesignSpace design_space_from_json(const nlohmann::json& j, const std::string& path = "space");

nlohmann::json to_json(const DesignSpace& space, const Configuration& x);
Configuration configuration_from_json(const DesignSpace& space, const nlohmann::json& j,
                                      const std::string& path = "configuration");

}  // namespace cabo
