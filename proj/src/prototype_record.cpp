#include "cabo/prototype_record.hpp"

namespace cabo {

std::optional<std::size_t> PrototypeRecord::find(const DesignSpace& space, std::size_t g,
                                                 const GroupValues& values) const {
  const auto& h = history_[g];
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (space.same_group_values(g, h[k], values)) return k;
  }
  return std::nullopt;
}

PrototypeRecord PrototypeRecord::updated(const DesignSpace& space,
                                         const Configuration& realized) const {
  PrototypeRecord next = *this;
  if (next.history_.size() != space.group_count()) next.history_.resize(space.group_count());
  for (std::size_t g = 0; g < space.group_count(); ++g) {
    GroupValues values = space.project(realized, g);
    if (!find(space, g, values)) next.history_[g].push_back(std::move(values));
  }
  next.current_ = realized;
  return next;
}

PrototypeRecord update_record(const DesignSpace& space, const PrototypeRecord& record,
                              const Configuration& realized) {
  return record.updated(space, realized);
}

nlohmann::json to_json(const DesignSpace& space, const PrototypeRecord& record) {
  nlohmann::json histories = nlohmann::json::object();
  for (std::size_t g = 0; g < space.group_count(); ++g) {
    const auto& group = space.groups()[g];
    nlohmann::json entries = nlohmann::json::array();
    if (g < record.group_count()) {
      for (const auto& values : record.history(g)) {
        nlohmann::json e = nlohmann::json::object();
        for (std::size_t k = 0; k < values.size(); ++k) e[group.parameter_names[k]] = values[k];
        entries.push_back(std::move(e));
      }
    }
    histories[group.name] = std::move(entries);
  }
  nlohmann::json out = {{"histories", histories}};
  out["current"] = record.current() ? to_json(space, *record.current()) : nlohmann::json(nullptr);
  return out;
}

}  // namespace cabo
