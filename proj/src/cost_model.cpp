#include "cabo/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cabo/errors.hpp"

namespace cabo {

std::string_view to_string(CostClass c) {
  switch (c) {
    case CostClass::tweak:
      return "tweak";
    case CostClass::swap:
      return "swap";
    case CostClass::create:
      return "create";
  }
  return "create";
}

CostClass cost_class_from_string(std::string_view s) {
  if (s == "tweak") return CostClass::tweak;
  if (s == "swap") return CostClass::swap;
  if (s == "create") return CostClass::create;
  throw ConfigurationError("unknown cost class '" + std::string(s) + "'");
}

double GroupLevels::operator[](CostClass c) const {
  switch (c) {
    case CostClass::tweak:
      return tweak;
    case CostClass::swap:
      return swap;
    case CostClass::create:
      return create;
  }
  return create;
}

double& GroupLevels::operator[](CostClass c) {
  switch (c) {
    case CostClass::tweak:
      return tweak;
    case CostClass::swap:
      return swap;
    case CostClass::create:
      break;
  }
  return create;
}

double GroupLevels::min() const { return std::min({tweak, swap, create}); }
double GroupLevels::max() const { return std::max({tweak, swap, create}); }

CostLevels CostLevels::uniform(const DesignSpace& space, GroupLevels levels) {
  CostLevels out;
  for (const auto& g : space.groups()) out.per_group[g.name] = levels;
  return out;
}

const GroupLevels& CostLevels::at(const std::string& group) const {
  auto it = per_group.find(group);
  if (it == per_group.end())
    throw ConfigurationError("no cost levels for group '" + group + "'");
  return it->second;
}

CostLevels CostLevels::scaled(double k) const {
  CostLevels out = *this;
  for (auto& [name, l] : out.per_group) {
    l.tweak *= k;
    l.swap *= k;
    l.create *= k;
  }
  return out;
}

double RelaxationParams::sigma_for(const std::string& group) const {
  auto it = sigma.find(group);
  return it == sigma.end() ? default_sigma : it->second;
}

void RelaxationParams::validate() const {
  if (!(default_sigma > 0.0)) throw ConfigurationError("relaxation sigma must be positive");
  for (const auto& [name, s] : sigma) {
    if (!(s > 0.0))
      throw ConfigurationError("relaxation sigma for group '" + name + "' must be positive");
  }
  if (!(w_create >= 0.0)) throw ConfigurationError("w_create must be non-negative");
}

void CostSchedule::validate() const {
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    if (overrides[i].from_iteration < 0)
      throw ConfigurationError("override iteration must be non-negative");
    if (i > 0 && overrides[i].from_iteration <= overrides[i - 1].from_iteration)
      throw ConfigurationError("override iterations must be strictly increasing");
  }
  if (!(believed_bias_alpha > 0.0)) throw ConfigurationError("bias alpha must be positive");
}

void CostSchedule::add_override(int from_iteration, CostLevels levels) {
  auto it = std::find_if(overrides.begin(), overrides.end(), [&](const LevelOverride& o) {
    return o.from_iteration >= from_iteration;
  });
  if (it != overrides.end() && it->from_iteration == from_iteration) {
    it->levels = std::move(levels);
    return;
  }
  overrides.insert(it, LevelOverride{from_iteration, std::move(levels)});
}

CostLevels effective_levels(const CostSchedule& schedule, int iteration, CostRole role) {
  const CostLevels* selected = &schedule.base;
  for (const auto& o : schedule.overrides) {
    if (o.from_iteration <= iteration) selected = &o.levels;
  }
  CostLevels out = *selected;
  if (role == CostRole::believed && schedule.believed_bias_alpha != 1.0) {
    for (auto& [name, l] : out.per_group) {
      for (CostClass c : {CostClass::tweak, CostClass::swap, CostClass::create}) {
        if (schedule.biased_classes[static_cast<std::size_t>(c)])
          l[c] *= schedule.believed_bias_alpha;
      }
    }
  }
  return out;
}

CostClass classify_group(const DesignSpace& space, const GroupValues& values,
                         const PrototypeRecord& record, std::size_t g) {
  if (record.current() &&
      space.same_group_values(g, values, space.project(*record.current(), g))) {
    return CostClass::tweak;
  }
  if (g < record.group_count() && record.find(space, g, values)) return CostClass::swap;
  return CostClass::create;
}

CostBreakdown discrete_cost(const DesignSpace& space, const Configuration& x,
                            const PrototypeRecord& record, const CostLevels& levels) {
  CostBreakdown out;
  out.per_group_class.reserve(space.group_count());
  out.per_group_cost.reserve(space.group_count());
  for (std::size_t g = 0; g < space.group_count(); ++g) {
    const GroupLevels& l = levels.at(space.groups()[g].name);
    const CostClass c = classify_group(space, space.project(x, g), record, g);
    out.per_group_class.push_back(c);
    out.per_group_cost.push_back(l[c]);
    out.total += l[c];
  }
  return out;
}

double rbf_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                      const Eigen::Ref<const Eigen::VectorXd>& b, double sigma) {
  if (!(sigma > 0.0)) throw ConfigurationError("rbf sigma must be positive");
  return std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
}

SmoothCostModel::SmoothCostModel(const DesignSpace& space, const PrototypeRecord& record,
                                 const CostLevels& levels, const RelaxationParams& relax)
    : w_create_(relax.w_create), dim_(static_cast<Eigen::Index>(space.dimension())) {
  relax.validate();
  groups_.reserve(space.group_count());
  for (std::size_t g = 0; g < space.group_count(); ++g) {
    const auto& spec = space.groups()[g];
    Group group;
    for (std::size_t i : space.group_members(g)) group.coords.push_back(static_cast<Eigen::Index>(i));
    group.levels = levels.at(spec.name);
    const double sigma = relax.sigma_for(spec.name);
    group.inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    group.inv_sigma_sq = 1.0 / (sigma * sigma);

    std::optional<GroupValues> current_values;
    if (record.current()) {
      current_values = space.project(*record.current(), g);
      group.current = space.normalize_group(g, *current_values);
    }
    if (g < record.group_count()) {
      for (const auto& h : record.history(g)) {
        if (current_values && space.same_group_values(g, h, *current_values)) continue;
        group.swap_points.push_back(space.normalize_group(g, h));
      }
    }
    groups_.push_back(std::move(group));
  }
}

double SmoothCostModel::group_cost(const Group& group,
                                   const Eigen::Ref<const Eigen::VectorXd>& unit,
                                   Eigen::VectorXd* grad) const {
  const auto n = static_cast<Eigen::Index>(group.coords.size());
  Eigen::VectorXd z(n);
  for (Eigen::Index k = 0; k < n; ++k) z[k] = unit[group.coords[static_cast<std::size_t>(k)]];

  double w_tweak = 0.0;
  double w_swap = 0.0;
  Eigen::VectorXd dw_tweak = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd dw_swap = Eigen::VectorXd::Zero(n);

  if (group.current) {
    const Eigen::VectorXd diff = z - *group.current;
    w_tweak = std::exp(-diff.squaredNorm() * group.inv_two_sigma_sq);
    if (grad) dw_tweak = -w_tweak * group.inv_sigma_sq * diff;
  }
  for (const auto& h : group.swap_points) {
    const Eigen::VectorXd diff = z - h;
    const double k = std::exp(-diff.squaredNorm() * group.inv_two_sigma_sq);
    w_swap += k;
    if (grad) dw_swap -= k * group.inv_sigma_sq * diff;
  }

  const double total_weight = w_tweak + w_swap + w_create_;
  if (!(total_weight >= std::numeric_limits<double>::min())) {
    throw DegenerateWeightsError(
        "smooth cost weights are all zero; use w_create > 0 so unseen designs keep a weight");
  }
  const auto& l = group.levels;
  const double cost =
      (w_tweak * l.tweak + w_swap * l.swap + w_create_ * l.create) / total_weight;

  if (grad) {
    const Eigen::VectorXd dc =
        (dw_tweak * (l.tweak - cost) + dw_swap * (l.swap - cost)) / total_weight;
    for (Eigen::Index k = 0; k < n; ++k) (*grad)[group.coords[static_cast<std::size_t>(k)]] += dc[k];
  }
  return cost;
}

SmoothCost SmoothCostModel::evaluate(const Eigen::Ref<const Eigen::VectorXd>& unit) const {
  SmoothCost out;
  out.per_group.reserve(groups_.size());
  for (const auto& g : groups_) {
    const double c = group_cost(g, unit, nullptr);
    out.per_group.push_back(c);
    out.total += c;
  }
  return out;
}

double SmoothCostModel::evaluate_with_gradient(const Eigen::Ref<const Eigen::VectorXd>& unit,
                                               Eigen::VectorXd& grad) const {
  grad.setZero(dim_);
  double total = 0.0;
  for (const auto& g : groups_) total += group_cost(g, unit, &grad);
  return total;
}

SmoothCost smooth_cost(const DesignSpace& space, const Configuration& x,
                       const PrototypeRecord& record, const CostLevels& levels,
                       const RelaxationParams& relax) {
  return SmoothCostModel(space, record, levels, relax).evaluate(space.normalize(x));
}

Eigen::VectorXd smooth_cost_gradient(const DesignSpace& space, const Configuration& x,
                                     const PrototypeRecord& record, const CostLevels& levels,
                                     const RelaxationParams& relax) {
  Eigen::VectorXd grad;
  SmoothCostModel(space, record, levels, relax).evaluate_with_gradient(space.normalize(x), grad);
  return grad;
}

void check_levels_cover(const DesignSpace& space, const CostLevels& levels) {
  for (const auto& g : space.groups()) {
    const GroupLevels& l = levels.at(g.name);
    for (double v : {l.tweak, l.swap, l.create}) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw ConfigurationError("cost levels of group '" + g.name + "' must be non-negative");
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const CostLevels& levels) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, l] : levels.per_group)
    out[name] = {{"tweak", l.tweak}, {"swap", l.swap}, {"create", l.create}};
  return out;
}

CostLevels cost_levels_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "expected an object keyed by group name");
  CostLevels out;
  for (const auto& [name, jl] : j.items()) {
    const std::string gpath = path + "." + name;
    if (!jl.is_object()) throw ValidationError(gpath, "expected {tweak, swap, create}");
    GroupLevels l;
    for (CostClass c : {CostClass::tweak, CostClass::swap, CostClass::create}) {
      const std::string key(to_string(c));
      auto it = jl.find(key);
      if (it == jl.end()) throw ValidationError(gpath + "." + key, "missing field");
      if (!it->is_number()) throw ValidationError(gpath + "." + key, "expected a number");
      const double v = it->get<double>();
      if (!(v >= 0.0)) throw ValidationError(gpath + "." + key, "must be non-negative");
      l[c] = v;
    }
    out.per_group[name] = l;
  }
  return out;
}

nlohmann::json to_json(const CostSchedule& schedule) {
  nlohmann::json overrides = nlohmann::json::array();
  for (const auto& o : schedule.overrides)
    overrides.push_back({{"from_iteration", o.from_iteration}, {"levels", to_json(o.levels)}});
  nlohmann::json categories = nlohmann::json::array();
  for (CostClass c : {CostClass::tweak, CostClass::swap, CostClass::create}) {
    if (schedule.biased_classes[static_cast<std::size_t>(c)]) categories.push_back(to_string(c));
  }
  return {{"schema_version", 1},
          {"units", schedule.units},
          {"base", to_json(schedule.base)},
          {"overrides", overrides},
          {"believed_bias", {{"alpha", schedule.believed_bias_alpha}, {"categories", categories}}}};
}

CostSchedule cost_schedule_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  CostSchedule out;
  auto base = j.find("base");
  if (base == j.end()) throw ValidationError(path + ".base", "missing field");
  out.base = cost_levels_from_json(*base, path + ".base");
  if (auto it = j.find("units"); it != j.end()) {
    if (!it->is_string()) throw ValidationError(path + ".units", "expected a string");
    out.units = it->get<std::string>();
  }
  if (auto it = j.find("overrides"); it != j.end()) {
    if (!it->is_array()) throw ValidationError(path + ".overrides", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string opath = path + ".overrides[" + std::to_string(i) + "]";
      const auto& jo = (*it)[i];
      if (!jo.is_object() || !jo.contains("from_iteration") || !jo["from_iteration"].is_number_integer())
        throw ValidationError(opath + ".from_iteration", "expected an integer");
      if (!jo.contains("levels")) throw ValidationError(opath + ".levels", "missing field");
      LevelOverride o{jo["from_iteration"].get<int>(),
                      cost_levels_from_json(jo["levels"], opath + ".levels")};
      if (o.from_iteration < 0) throw ValidationError(opath + ".from_iteration", "must be >= 0");
      if (!out.overrides.empty() && o.from_iteration <= out.overrides.back().from_iteration)
        throw ValidationError(opath + ".from_iteration", "must be strictly increasing");
      out.overrides.push_back(std::move(o));
    }
  }
  if (auto it = j.find("believed_bias"); it != j.end()) {
    const std::string bpath = path + ".believed_bias";
    if (!it->is_object()) throw ValidationError(bpath, "expected an object");
    if (auto a = it->find("alpha"); a != it->end()) {
      if (!a->is_number() || !(a->get<double>() > 0.0))
        throw ValidationError(bpath + ".alpha", "must be a positive number");
      out.believed_bias_alpha = a->get<double>();
    }
    if (auto cats = it->find("categories"); cats != it->end()) {
      if (!cats->is_array()) throw ValidationError(bpath + ".categories", "expected an array");
      out.biased_classes = {false, false, false};
      for (const auto& c : *cats) {
        try {
          out.biased_classes[static_cast<std::size_t>(cost_class_from_string(c.get<std::string>()))] = true;
        } catch (const std::exception& e) {
          throw ValidationError(bpath + ".categories", e.what());
        }
      }
    }
  }
  return out;
}

nlohmann::json to_json(const RelaxationParams& relax) {
  return {{"sigma", relax.sigma}, {"default_sigma", relax.default_sigma}, {"w_create", relax.w_create}};
}

RelaxationParams relaxation_from_json(const nlohmann::json& j, const std::string& path) {
  RelaxationParams out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  if (auto it = j.find("sigma"); it != j.end()) {
    if (it->is_number()) {
      out.default_sigma = it->get<double>();
      if (!(out.default_sigma > 0.0)) throw ValidationError(path + ".sigma", "must be positive");
    } else if (it->is_object()) {
      for (const auto& [name, v] : it->items()) {
        if (!v.is_number() || !(v.get<double>() > 0.0))
          throw ValidationError(path + ".sigma." + name, "must be a positive number");
        out.sigma[name] = v.get<double>();
      }
    } else {
      throw ValidationError(path + ".sigma", "expected a number or an object");
    }
  }
  if (auto it = j.find("default_sigma"); it != j.end()) {
    if (!it->is_number() || !(it->get<double>() > 0.0))
      throw ValidationError(path + ".default_sigma", "must be a positive number");
    out.default_sigma = it->get<double>();
  }
  if (auto it = j.find("w_create"); it != j.end()) {
    if (!it->is_number() || !(it->get<double>() >= 0.0))
      throw ValidationError(path + ".w_create", "must be a non-negative number");
    out.w_create = it->get<double>();
  }
  return out;
}

}  // namespace cabo
