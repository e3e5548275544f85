#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "cabo/design_space.hpp"

namespace cabo {

// Per-group history of every realized component configuration, plus the
// configuration currently built. Histories only grow, and hold no two entries
// that match at snap resolution.
class PrototypeRecord {
 public:
  PrototypeRecord() = default;
  explicit PrototypeRecord(const DesignSpace& space) : history_(space.group_count()) {}

  const std::vector<GroupValues>& history(std::size_t g) const { return history_[g]; }
  std::size_t group_count() const { return history_.size(); }
  const std::optional<Configuration>& current() const { return current_; }

  // Index of the history entry of group `g` matching `values`, if any.
  std::optional<std::size_t> find(const DesignSpace& space, std::size_t g,
                                  const GroupValues& values) const;

  // Appends each group of `realized` not yet in its history and makes
  // `realized` the current prototype.
  [[nodiscard]] PrototypeRecord updated(const DesignSpace& space,
                                        const Configuration& realized) const;

  bool operator==(const PrototypeRecord&) const = default;

 private:
  std::vector<std::vector<GroupValues>> history_;
  std::optional<Configuration> current_;
};

PrototypeRecord update_record(const DesignSpace& space, const PrototypeRecord& record,
                              const Configuration& realized);

nlohmann::json to_json(const DesignSpace& space, const PrototypeRecord& record);

}  // namespace cabo
