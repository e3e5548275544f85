#include <doctest.h>

#include <cmath>
#include <random>

#include "cabo/cost_model.hpp"
#include "cabo/errors.hpp"
#include "cabo/study.hpp"
#include "helpers.hpp"

using namespace cabo;

namespace {

CostLevels joystick_levels(const DesignSpace& space) {
  CostLevels l = CostLevels::uniform(space, {1, 10, 10});
  l.per_group["shaft"] = {1, 10, 100};
  l.per_group["topper"] = {1, 10, 1000};
  return l;
}

DesignSpace unit_line() {
  return DesignSpace({{"x", 0, 1}}, {{"g", {"x"}, ComponentKind::hardware}});
}

PrototypeRecord build(const DesignSpace& space, const std::vector<Configuration>& xs) {
  PrototypeRecord r(space);
  for (const auto& x : xs) r = update_record(space, r, x);
  return r;
}

// Record with a few random prototypes, plus a probe that sits near one of
// them so kernels are not all negligible.
struct Triple {
  DesignSpace space;
  PrototypeRecord record;
  Configuration x;
  CostLevels levels;
  RelaxationParams relax;
};

Triple random_triple(std::mt19937_64& rng) {
  auto space = testing::random_space(rng, 5);
  std::uniform_int_distribution<int> n(0, 4);
  std::vector<Configuration> protos;
  const int k = n(rng);
  for (int i = 0; i < k; ++i) protos.push_back(testing::random_configuration(space, rng));
  auto record = build(space, protos);
  RelaxationParams relax;
  relax.default_sigma = std::uniform_real_distribution<double>(0.05, 0.4)(rng);
  relax.w_create = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
  CostLevels levels;
  std::uniform_real_distribution<double> lv(0.5, 200);
  for (const auto& g : space.groups()) levels.per_group[g.name] = {lv(rng), lv(rng), lv(rng)};
  Eigen::VectorXd u;
  if (!protos.empty()) {
    u = space.normalize(protos[std::uniform_int_distribution<std::size_t>(0, protos.size() - 1)(rng)]);
    std::normal_distribution<double> jitter(0.0, relax.default_sigma);
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = std::clamp(u[i] + jitter(rng), 0.01, 0.99);
  } else {
    u = Eigen::VectorXd::Constant(space.dimension(), 0.5);
  }
  return {space, record, space.denormalize(u), levels, relax};
}

}  // namespace

TEST_CASE("classify_group cases") {
  const auto space = unit_line();
  const auto record = build(space, {Configuration({0.2}), Configuration({0.7})});
  CHECK(classify_group(space, {0.7}, record, 0) == CostClass::tweak);
  CHECK(classify_group(space, {0.2}, record, 0) == CostClass::swap);
  CHECK(classify_group(space, {0.4}, record, 0) == CostClass::create);
  CHECK(classify_group(space, {0.4}, PrototypeRecord(space), 0) == CostClass::create);
}

TEST_CASE("classification agrees with its definition on random records") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 300; ++rep) {
    auto space = testing::random_space(rng, 4, true);
    std::vector<Configuration> protos;
    for (int i = 0; i < 3; ++i) protos.push_back(space.snap(testing::random_configuration(space, rng)));
    const auto record = build(space, protos);
    const auto x = rep % 2 ? protos[rep % 3] : space.snap(testing::random_configuration(space, rng));
    for (std::size_t g = 0; g < space.group_count(); ++g) {
      const auto v = space.project(x, g);
      const bool at_current = space.same_group_values(g, v, space.project(*record.current(), g));
      const bool in_history = record.find(space, g, v).has_value();
      const auto c = classify_group(space, v, record, g);
      if (at_current) CHECK(c == CostClass::tweak);
      else if (in_history) CHECK(c == CostClass::swap);
      else CHECK(c == CostClass::create);
    }
  }
}

TEST_CASE("discrete_cost on the joystick table") {
  const auto space = testing::joystick_space();
  const auto levels = joystick_levels(space);
  const Configuration a({9, 0.0, 20, 0.5, 0.3});
  const Configuration b({15, 0.165, 20, 0.5, 0.6});
  const Configuration current({6, 0.33, 24, 0.5, 0.6});
  const auto record = build(space, {a, b, current});
  // shaft from history, topper new, sensitivity unchanged, reactivity from history
  const Configuration x({9, -0.33, 12, 0.5, 0.3});
  const auto c = discrete_cost(space, x, record, levels);
  CHECK(c.per_group_class == std::vector<CostClass>{CostClass::swap, CostClass::create, CostClass::tweak,
                                                    CostClass::swap});
  CHECK(c.total == 1021.0);
  CHECK(discrete_cost(space, current, record, levels).total == 4.0);

  const DesignSpace sim({{"x1", 0, 1}, {"x2", 0, 1}},
                        {{"hardware", {"x1"}, ComponentKind::hardware}, {"software", {"x2"}, ComponentKind::software}});
  CHECK(discrete_cost(sim, Configuration({0.3, 0.4}), PrototypeRecord(sim), CostLevels::uniform(sim, {})).total ==
        200.0);

  CostLevels missing = levels;
  missing.per_group.erase("topper");
  CHECK_THROWS_AS((void)discrete_cost(space, x, record, missing), ConfigurationError);
}

TEST_CASE("rbf_similarity values") {
  Eigen::VectorXd a(2), b(2);
  a << 0.1, 0.2;
  CHECK(rbf_similarity(a, a, 0.05) == 1.0);
  b << 0.1 + 0.05, 0.2;
  CHECK(rbf_similarity(a, b, 0.05) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(std::exp(-0.5) == doctest::Approx(0.60653).epsilon(1e-5));
  b << 0.1, 0.2 + 0.5;
  CHECK(rbf_similarity(a, b, 0.05) == doctest::Approx(std::exp(-50.0)).epsilon(1e-9));
  CHECK_THROWS_AS((void)rbf_similarity(a, b, 0.0), ConfigurationError);
}

TEST_CASE("smooth cost hand-evaluated cases") {
  const auto space = unit_line();
  const auto levels = CostLevels::uniform(space, {1, 10, 100});
  RelaxationParams relax;
  relax.default_sigma = 0.05;

  // at the only prototype: tweak weight 1, no swap entries
  const auto one = build(space, {Configuration({0.4})});
  CHECK(smooth_cost(space, Configuration({0.4}), one, levels, relax).total == doctest::Approx(50.5).epsilon(1e-12));

  // two history entries at similarity 0.5, current far away
  const double d = 0.05 * std::sqrt(2.0 * std::log(2.0));
  const auto two = build(space, {Configuration({0.5 - d}), Configuration({0.5 + d}), Configuration({0.0})});
  CHECK(smooth_cost(space, Configuration({0.5}), two, levels, relax).total == doctest::Approx(55.0).epsilon(1e-9));

  // nothing nearby: collapses onto create
  CHECK(std::abs(smooth_cost(space, Configuration({1.0}), one, levels, relax).total - 100.0) <= 1e-9);
}

TEST_CASE("smooth cost with no create weight and nothing nearby is degenerate") {
  const auto space = unit_line();
  RelaxationParams relax;
  relax.w_create = 0.0;
  relax.default_sigma = 0.01;
  const auto one = build(space, {Configuration({0.0})});
  CHECK_THROWS_AS((void)smooth_cost(space, Configuration({1.0}), one, CostLevels::uniform(space, {}), relax),
                  DegenerateWeightsError);
}

TEST_CASE("smooth cost stays within the level range") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 500; ++rep) {
    const auto t = random_triple(rng);
    const auto c = smooth_cost(t.space, t.x, t.record, t.levels, t.relax);
    double lo = 0, hi = 0;
    for (std::size_t g = 0; g < t.space.group_count(); ++g) {
      const auto& l = t.levels.at(t.space.groups()[g].name);
      CHECK(c.per_group[g] >= l.min() - 1e-9 * l.max());
      CHECK(c.per_group[g] <= l.max() + 1e-9 * l.max());
      lo += l.min();
      hi += l.max();
    }
    CHECK(c.total >= lo - 1e-9 * hi);
    CHECK(c.total <= hi + 1e-9 * hi);
  }
}

TEST_CASE("smooth cost tends to create far from the record") {
  std::mt19937_64 rng(23);
  const auto space = DesignSpace({{"a", 0, 1}, {"b", 0, 1}}, {{"g", {"a", "b"}, ComponentKind::hardware}});
  for (int rep = 0; rep < 200; ++rep) {
    RelaxationParams relax;
    relax.default_sigma = std::uniform_real_distribution<double>(0.005, 0.05)(rng);
    relax.w_create = rep % 2 ? 1e-3 : 1.0;
    const auto record = build(space, {Configuration({0.0, 0.0}), Configuration({0.0, 0.1})});
    // distance to both entries > 10 sigma
    const double off = 10.0 * relax.default_sigma + 0.11;
    const Configuration x({std::min(off, 1.0), 0.0});
    const double create = std::uniform_real_distribution<double>(1, 1000)(rng);
    const auto c = smooth_cost(space, x, record, CostLevels::uniform(space, {1, 10, create}), relax);
    CHECK(std::abs(c.total - create) <= 1e-6 * create);
    const auto grad = smooth_cost_gradient(space, x, record, CostLevels::uniform(space, {1, 10, create}), relax);
    CHECK(grad.norm() <= 1e-9 * create);
  }
}

TEST_CASE("smooth cost gradient matches central differences") {
  std::mt19937_64 rng(29);
  int checked = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto t = random_triple(rng);
    const Eigen::VectorXd u = t.space.normalize(t.x);
    const auto grad = smooth_cost_gradient(t.space, t.x, t.record, t.levels, t.relax);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      Eigen::VectorXd up = u, dn = u;
      up[i] += h;
      dn[i] -= h;
      const double fd = (smooth_cost(t.space, t.space.denormalize(up), t.record, t.levels, t.relax).total -
                         smooth_cost(t.space, t.space.denormalize(dn), t.record, t.levels, t.relax).total) /
                        (2 * h);
      CHECK(std::abs(grad[i] - fd) <= std::max(1e-5, 1e-3 * std::abs(fd)));
      ++checked;
    }
  }
  CHECK(checked >= 200);
}

TEST_CASE("cost totals scale with the levels") {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 200; ++rep) {
    const auto t = random_triple(rng);
    const double k = std::uniform_real_distribution<double>(0.1, 50)(rng);
    const auto scaled = t.levels.scaled(k);
    const auto d0 = discrete_cost(t.space, t.x, t.record, t.levels).total;
    const auto d1 = discrete_cost(t.space, t.x, t.record, scaled).total;
    CHECK(d1 == doctest::Approx(k * d0).epsilon(1e-12));
    const auto s0 = smooth_cost(t.space, t.x, t.record, t.levels, t.relax).total;
    const auto s1 = smooth_cost(t.space, t.x, t.record, scaled, t.relax).total;
    CHECK(s1 == doctest::Approx(k * s0).epsilon(1e-12));
    // powers of two scale without rounding
    CHECK(discrete_cost(t.space, t.x, t.record, t.levels.scaled(4.0)).total == 4.0 * d0);
  }
}

TEST_CASE("update_record appends fresh values and keeps earlier history as prefix") {
  const auto space = testing::joystick_space();
  const Configuration a({9, 0.0, 20, 0.5, 0.3});
  auto r1 = update_record(space, PrototypeRecord(space), a);
  auto r2 = update_record(space, r1, a);
  CHECK(r2 == r1);
  CHECK(update_record(space, r1, a) == r2);
  const Configuration b({9, 0.165, 20, 0.5, 0.3});
  auto r3 = update_record(space, r2, b);
  CHECK(r3.history(1).size() == 2);
  CHECK(r3.history(0).size() == 1);
  CHECK(*r3.current() == b);

  std::mt19937_64 rng(37);
  for (int rep = 0; rep < 50; ++rep) {
    auto sp = testing::random_space(rng, 4, true);
    PrototypeRecord rec(sp);
    std::vector<Configuration> pool;
    for (int i = 0; i < 4; ++i) pool.push_back(sp.snap(testing::random_configuration(sp, rng)));
    for (int step = 0; step < 20; ++step) {
      const auto next = update_record(sp, rec, pool[std::uniform_int_distribution<int>(0, 3)(rng)]);
      for (std::size_t g = 0; g < sp.group_count(); ++g) {
        REQUIRE(next.history(g).size() >= rec.history(g).size());
        for (std::size_t i = 0; i < rec.history(g).size(); ++i) CHECK(next.history(g)[i] == rec.history(g)[i]);
      }
      rec = next;
    }
  }
}

TEST_CASE("effective_levels follows overrides and bias") {
  const DesignSpace space({{"x1", 0, 1}, {"x2", 0, 1}},
                          {{"hardware", {"x1"}, ComponentKind::hardware}, {"software", {"x2"}, ComponentKind::software}});
  CostSchedule s;
  s.base = CostLevels::uniform(space, {1, 10, 100});
  for (int i : {0, 5, 30}) CHECK(effective_levels(s, i, CostRole::truth) == s.base);
  CHECK(effective_levels(s, 4, CostRole::believed) == s.base);

  CostLevels high = s.base, low = s.base;
  high.per_group["hardware"].create = 1000;
  low.per_group["hardware"].create = 10;
  s.add_override(10, high);
  s.add_override(17, low);
  CHECK(effective_levels(s, 9, CostRole::truth).at("hardware").create == 100);
  CHECK(effective_levels(s, 10, CostRole::truth).at("hardware").create == 1000);
  CHECK(effective_levels(s, 16, CostRole::truth).at("hardware").create == 1000);
  CHECK(effective_levels(s, 17, CostRole::truth).at("hardware").create == 10);
  CHECK(effective_levels(s, 17, CostRole::truth).at("software").create == 100);

  CostSchedule b;
  b.base = s.base;
  b.believed_bias_alpha = 10;
  b.biased_classes = {false, false, true};
  const auto believed = effective_levels(b, 3, CostRole::believed);
  const auto truth = effective_levels(b, 3, CostRole::truth);
  CHECK(believed.at("hardware").create == 10 * truth.at("hardware").create);
  CHECK(believed.at("hardware").swap == truth.at("hardware").swap);
  CHECK(believed.at("software").tweak == truth.at("software").tweak);
}

TEST_CASE("dynamic study schedule multiplies hardware create") {
  const auto spec = StudySpec::preset(5);
  for (const auto& c : expand_conditions(spec)) {
    const auto& sched = c.config.schedule;
    const double at3 = effective_levels(sched, 3, CostRole::truth).at("hardware").create;
    const double at12 = effective_levels(sched, 12, CostRole::truth).at("hardware").create;
    const double at20 = effective_levels(sched, 20, CostRole::truth).at("hardware").create;
    if (c.schedule_kind == "dynamic") {
      CHECK(at3 == 100);
      CHECK(at12 == 1000);
      CHECK(at20 == 10);
    } else {
      CHECK(at3 == 100);
      CHECK(at12 == 100);
      CHECK(at20 == 100);
    }
    CHECK(effective_levels(sched, 12, CostRole::truth).at("software").create == 100);
  }
}

TEST_CASE("cost levels and schedule JSON round-trip") {
  const auto space = testing::joystick_space();
  CostSchedule s;
  s.base = joystick_levels(space);
  s.add_override(4, s.base.scaled(2));
  s.units = "minutes";
  const auto back = cost_schedule_from_json(to_json(s));
  CHECK(back.base == s.base);
  REQUIRE(back.overrides.size() == 1);
  CHECK(back.overrides[0].from_iteration == 4);
  CHECK(back.units == "minutes");

  auto j = to_json(s.base);
  j["topper"]["create"] = -1;
  CHECK_THROWS_AS((void)cost_levels_from_json(j), ValidationError);
}
