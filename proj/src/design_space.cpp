#include "cabo/design_space.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "cabo/errors.hpp"

namespace cabo {

std::string_view to_string(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::hardware:
      return "hardware";
    case ComponentKind::software:
      return "software";
    case ComponentKind::other:
      return "other";
  }
  return "other";
}

ComponentKind component_kind_from_string(std::string_view s) {
  if (s == "hardware") return ComponentKind::hardware;
  if (s == "software") return ComponentKind::software;
  if (s == "other") return ComponentKind::other;
  throw ConfigurationError("unknown component kind '" + std::string(s) + "'");
}

double Parameter::snap(double value) const {
  if (!snap_step) return std::clamp(value, lower, upper);
  const double step = *snap_step;
  const double steps = (value - lower) / step;
  const double max_k = std::floor(span() / step + 1e-9);
  double k = std::floor(steps);
  const double frac = steps - k;
  if (frac > 0.5 + 1e-9) k += 1.0;
  k = std::clamp(k, 0.0, max_k);
  return std::min(lower + k * step, upper);
}

DesignSpace::DesignSpace(std::vector<Parameter> parameters, std::vector<ComponentGroup> groups)
    : parameters_(std::move(parameters)), groups_(std::move(groups)) {
  if (parameters_.empty()) throw ConfigurationError("design space has no parameters");
  if (groups_.empty()) throw ConfigurationError("design space has no groups");

  std::set<std::string> names;
  for (const auto& p : parameters_) {
    if (p.name.empty()) throw ConfigurationError("parameter with empty name");
    if (!names.insert(p.name).second)
      throw ConfigurationError("duplicate parameter name '" + p.name + "'");
    if (!(std::isfinite(p.lower) && std::isfinite(p.upper)) || !(p.lower < p.upper))
      throw ConfigurationError("parameter '" + p.name + "' needs lower < upper");
    if (p.snap_step) {
      if (!(*p.snap_step > 0.0) || !std::isfinite(*p.snap_step))
        throw ConfigurationError("parameter '" + p.name + "' snap_step must be positive");
      if (*p.snap_step > p.span() * (1.0 + 1e-12))
        throw ConfigurationError("parameter '" + p.name + "' snap_step exceeds its range");
    }
  }

  std::set<std::string> group_names;
  std::vector<int> owner(parameters_.size(), -1);
  members_.resize(groups_.size());
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto& group = groups_[g];
    if (group.name.empty()) throw ConfigurationError("group with empty name");
    if (!group_names.insert(group.name).second)
      throw ConfigurationError("duplicate group name '" + group.name + "'");
    if (group.parameter_names.empty())
      throw ConfigurationError("group '" + group.name + "' has no parameters");
    for (const auto& pname : group.parameter_names) {
      const std::size_t i = parameter_index(pname);
      if (owner[i] >= 0)
        throw ConfigurationError("parameter '" + pname + "' belongs to more than one group");
      owner[i] = static_cast<int>(g);
      members_[g].push_back(i);
    }
  }
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    if (owner[i] < 0)
      throw ConfigurationError("parameter '" + parameters_[i].name + "' is in no group");
  }
}

std::size_t DesignSpace::parameter_index(std::string_view name) const {
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    if (parameters_[i].name == name) return i;
  }
  throw LookupError("unknown parameter '" + std::string(name) + "'");
}

std::size_t DesignSpace::group_index(std::string_view name) const {
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (groups_[g].name == name) return g;
  }
  throw LookupError("unknown group '" + std::string(name) + "'");
}

const ComponentGroup& DesignSpace::group(std::string_view name) const {
  return groups_[group_index(name)];
}

Eigen::VectorXd DesignSpace::normalize(const Configuration& x) const {
  if (x.size() != parameters_.size())
    throw ConfigurationError("configuration size does not match design space");
  Eigen::VectorXd unit(parameters_.size());
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    const auto& p = parameters_[i];
    const double v = x[i];
    if (!(v >= p.lower && v <= p.upper)) {
      std::ostringstream os;
      os << "value " << v << " of parameter '" << p.name << "' outside [" << p.lower << ", "
         << p.upper << "]";
      throw BoundsError(p.name, os.str());
    }
    unit[static_cast<Eigen::Index>(i)] = (v - p.lower) / p.span();
  }
  return unit;
}

Configuration DesignSpace::denormalize(const Eigen::Ref<const Eigen::VectorXd>& unit) const {
  if (static_cast<std::size_t>(unit.size()) != parameters_.size())
    throw ConfigurationError("unit point size does not match design space");
  std::vector<double> values(parameters_.size());
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    const auto& p = parameters_[i];
    const double u = std::clamp(unit[static_cast<Eigen::Index>(i)], 0.0, 1.0);
    values[i] = std::clamp(p.lower + u * p.span(), p.lower, p.upper);
  }
  return Configuration(std::move(values));
}

GroupValues DesignSpace::project(const Configuration& x, std::string_view group_name) const {
  return project(x, group_index(group_name));
}

GroupValues DesignSpace::project(const Configuration& x, std::size_t g) const {
  GroupValues out;
  out.reserve(members_[g].size());
  for (std::size_t i : members_[g]) out.push_back(x[i]);
  return out;
}

bool DesignSpace::same_group_values(std::size_t g, const GroupValues& a,
                                    const GroupValues& b) const {
  const auto& idx = members_[g];
  if (a.size() != idx.size() || b.size() != idx.size()) return false;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& p = parameters_[idx[k]];
    if (std::abs(p.snap(a[k]) - p.snap(b[k])) > kMatchTolerance) return false;
  }
  return true;
}

Eigen::VectorXd DesignSpace::normalize_group(std::size_t g, const GroupValues& values) const {
  const auto& idx = members_[g];
  Eigen::VectorXd z(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& p = parameters_[idx[k]];
    z[static_cast<Eigen::Index>(k)] = (values[k] - p.lower) / p.span();
  }
  return z;
}

Configuration DesignSpace::snap(const Configuration& x) const {
  std::vector<double> values(parameters_.size());
  for (std::size_t i = 0; i < parameters_.size(); ++i) values[i] = parameters_[i].snap(x[i]);
  return Configuration(std::move(values));
}

Configuration DesignSpace::make_configuration(std::vector<double> values) const {
  Configuration x(std::move(values));
  normalize(x);  // validates size and bounds
  return x;
}

double Configuration::at(const DesignSpace& space, std::string_view name) const {
  return values_.at(space.parameter_index(name));
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(path + "." + key, "missing field");
  return *it;
}

double require_number(const nlohmann::json& j, const char* key, const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_number()) throw ValidationError(path + "." + key, "expected a number");
  return v.get<double>();
}

std::string require_string(const nlohmann::json& j, const char* key, const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_string()) throw ValidationError(path + "." + key, "expected a string");
  return v.get<std::string>();
}

}  // namespace

nlohmann::json to_json(const DesignSpace& space) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : space.parameters()) {
    nlohmann::json jp = {{"name", p.name}, {"lower", p.lower}, {"upper", p.upper}};
    if (p.snap_step)
      jp["snap_step"] = *p.snap_step;
    else
      jp["snap_step"] = "continuous";
    params.push_back(std::move(jp));
  }
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : space.groups()) {
    groups.push_back(
        {{"name", g.name}, {"parameters", g.parameter_names}, {"kind", to_string(g.kind)}});
  }
  return {{"schema_version", 1}, {"parameters", params}, {"groups", groups}};
}

DesignSpace design_space_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  if (auto it = j.find("schema_version"); it != j.end() && *it != 1)
    throw ValidationError(path + ".schema_version", "unsupported schema version");

  const auto& jparams = require(j, "parameters", path);
  if (!jparams.is_array() || jparams.empty())
    throw ValidationError(path + ".parameters", "expected a non-empty array");
  std::vector<Parameter> params;
  for (std::size_t i = 0; i < jparams.size(); ++i) {
    const std::string ppath = path + ".parameters[" + std::to_string(i) + "]";
    Parameter p;
    p.name = require_string(jparams[i], "name", ppath);
    p.lower = require_number(jparams[i], "lower", ppath);
    p.upper = require_number(jparams[i], "upper", ppath);
    if (!(p.lower < p.upper)) throw ValidationError(ppath + ".upper", "must exceed lower");
    if (auto it = jparams[i].find("snap_step"); it != jparams[i].end()) {
      if (it->is_string()) {
        if (*it != "continuous")
          throw ValidationError(ppath + ".snap_step", "expected a number or \"continuous\"");
      } else if (it->is_number()) {
        const double step = it->get<double>();
        if (!(step > 0.0)) throw ValidationError(ppath + ".snap_step", "must be positive");
        if (step > p.span() * (1.0 + 1e-12))
          throw ValidationError(ppath + ".snap_step", "exceeds the parameter range");
        p.snap_step = step;
      } else {
        throw ValidationError(ppath + ".snap_step", "expected a number or \"continuous\"");
      }
    }
    params.push_back(std::move(p));
  }

  const auto& jgroups = require(j, "groups", path);
  if (!jgroups.is_array() || jgroups.empty())
    throw ValidationError(path + ".groups", "expected a non-empty array");
  std::vector<ComponentGroup> groups;
  for (std::size_t g = 0; g < jgroups.size(); ++g) {
    const std::string gpath = path + ".groups[" + std::to_string(g) + "]";
    ComponentGroup group;
    group.name = require_string(jgroups[g], "name", gpath);
    if (group.name.empty()) throw ValidationError(gpath + ".name", "must not be empty");
    const auto& names = require(jgroups[g], "parameters", gpath);
    if (!names.is_array() || names.empty())
      throw ValidationError(gpath + ".parameters", "expected a non-empty array");
    for (const auto& n : names) {
      if (!n.is_string()) throw ValidationError(gpath + ".parameters", "expected strings");
      group.parameter_names.push_back(n.get<std::string>());
    }
    if (auto it = jgroups[g].find("kind"); it != jgroups[g].end()) {
      try {
        group.kind = component_kind_from_string(it->get<std::string>());
      } catch (const std::exception& e) {
        throw ValidationError(gpath + ".kind", e.what());
      }
    }
    groups.push_back(std::move(group));
  }

  try {
    return DesignSpace(std::move(params), std::move(groups));
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(path, e.what());
  }
}

nlohmann::json to_json(const DesignSpace& space, const Configuration& x) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t i = 0; i < space.dimension(); ++i) out[space.parameters()[i].name] = x[i];
  return out;
}

Configuration configuration_from_json(const DesignSpace& space, const nlohmann::json& j,
                                      const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  std::vector<double> values(space.dimension());
  for (std::size_t i = 0; i < space.dimension(); ++i) {
    const auto& p = space.parameters()[i];
    values[i] = require_number(j, p.name.c_str(), path);
    if (!(values[i] >= p.lower && values[i] <= p.upper))
      throw ValidationError(path + "." + p.name, "value outside bounds");
  }
  if (j.size() != space.dimension()) throw ValidationError(path, "unknown parameter names");
  return Configuration(std::move(values));
}

}  // namespace cabo
