#pragma once

#include <random>
#include <string>
#include <vector>

#include "cabo/design_space.hpp"
#include "cabo/prototype_record.hpp"

namespace testing {

inline cabo::DesignSpace joystick_space() {
  using cabo::ComponentKind;
  return cabo::DesignSpace(
      {{"shaft_length", 3, 21, 3.0},
       {"topper_convexity", -0.66, 0.66, 0.165},
       {"topper_width", 10, 30, 2.0},
       {"sensitivity", 0, 1, 0.05},
       {"reactivity", 0, 1, 0.05}},
      {{"shaft", {"shaft_length"}, ComponentKind::hardware},
       {"topper", {"topper_convexity", "topper_width"}, ComponentKind::hardware},
       {"sensitivity", {"sensitivity"}, ComponentKind::software},
       {"reactivity", {"reactivity"}, ComponentKind::software}});
}

// Unit-box space with `dims` continuous-or-snapped parameters split into
// contiguous groups of random sizes.
inline cabo::DesignSpace random_space(std::mt19937_64& rng, int max_dims = 5, bool snapped = false) {
  std::uniform_int_distribution<int> nd(1, max_dims);
  const int d = nd(rng);
  std::vector<cabo::Parameter> params;
  std::uniform_real_distribution<double> lo(-5, 5), width(0.5, 10);
  for (int i = 0; i < d; ++i) {
    const double l = lo(rng), w = width(rng);
    cabo::Parameter p{"p" + std::to_string(i), l, l + w};
    if (snapped) p.snap_step = w / 20;
    params.push_back(p);
  }
  std::vector<cabo::ComponentGroup> groups;
  int i = 0, g = 0;
  while (i < d) {
    std::uniform_int_distribution<int> take(1, d - i);
    const int n = take(rng);
    cabo::ComponentGroup grp{"g" + std::to_string(g++), {}, cabo::ComponentKind::hardware};
    for (int k = 0; k < n; ++k) grp.parameter_names.push_back("p" + std::to_string(i++));
    groups.push_back(grp);
  }
  return cabo::DesignSpace(params, groups);
}

inline cabo::Configuration random_configuration(const cabo::DesignSpace& space, std::mt19937_64& rng) {
  std::vector<double> v;
  for (const auto& p : space.parameters()) v.push_back(std::uniform_real_distribution<double>(p.lower, p.upper)(rng));
  return cabo::Configuration(v);
}

}  // namespace testing
