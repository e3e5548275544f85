#include <doctest.h>

#include <random>
#include <sstream>

#include "cabo/benchmark.hpp"
#include "cabo/errors.hpp"
#include "cabo/optimizer.hpp"
#include "cabo/sampling.hpp"

using namespace cabo;

namespace {

const GroundTruth kRosen = GroundTruth::make("rosenbrock");

RunConfig rosen_config(std::uint64_t seed, AcquisitionMode mode, GroupLevels levels = {}) {
  RunConfig cfg{.space = benchmark_space(kRosen, 2)};
  cfg.schedule.base = CostLevels::uniform(cfg.space, levels);
  cfg.relax = RelaxationParams{.default_sigma = 0.01};
  cfg.acquisition.mode = mode;
  cfg.acquisition.n_starts = 8;
  cfg.gp.restarts = 3;
  cfg.seed = seed;
  return cfg;
}

// Deterministic noisy evaluator in maximization form.
Evaluator noisy(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng](const Configuration& x) { return -noisy_observe(kRosen, NoiseModel{}, x.values(), *rng); };
}

double noiseless(const Configuration& x) { return kRosen(x); }

std::string csv(const RunConfig& cfg, const OptimizationTrace& t) {
  std::ostringstream out;
  write_trace_csv(out, cfg.space, t);
  return out.str();
}

}  // namespace

TEST_CASE("iteration limit gives init plus loop steps") {
  auto cfg = rosen_config(1, AcquisitionMode::cost_aware);
  cfg.stop.max_iterations = 25;
  const auto t = run(cfg, noisy(1));
  CHECK(t.status == RunStatus::completed);
  REQUIRE(t.steps.size() == 28);
  for (int i = 0; i < 28; ++i) {
    CHECK(t.steps[i].iteration == i);
    CHECK(t.steps[i].initial == (i < 3));
  }
  for (auto c : t.steps[0].class_per_group) CHECK(c == CostClass::create);
  CHECK(t.steps[0].true_cost_paid == 200.0);
}

TEST_CASE("initial samples come from the seeded Sobol sequence") {
  auto cfg = rosen_config(3, AcquisitionMode::cost_aware);
  cfg.stop.max_iterations = 0;
  const auto a = run(cfg, noisy(0));
  const auto b = run(cfg, noisy(0));
  REQUIRE(a.steps.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(a.steps[i].proposed == b.steps[i].proposed);
  cfg.seed = 4;
  CHECK(run(cfg, noisy(0)).steps[0].proposed != a.steps[0].proposed);
  // distinct, in-box points
  CHECK(a.steps[0].realized != a.steps[1].realized);
  for (const auto& s : a.steps)
    for (double v : s.realized.values()) CHECK((v >= -2.0 && v <= 2.0));
}

TEST_CASE("runs are deterministic") {
  for (auto mode : {AcquisitionMode::standard_ei, AcquisitionMode::cost_aware}) {
    auto cfg = rosen_config(11, mode);
    cfg.stop.max_iterations = 8;
    const auto a = run(cfg, noisy(5));
    const auto b = run(cfg, noisy(5));
    CHECK(csv(cfg, a) == csv(cfg, b));
  }
}

TEST_CASE("budget limit is never exceeded") {
  auto cfg = rosen_config(2, AcquisitionMode::cost_aware);
  cfg.stop.max_budget = 600;
  const auto t = run(cfg, noisy(2));
  CHECK(t.status == RunStatus::budget_exhausted);
  CHECK(t.cumulative_cost() <= 600.0);
  CHECK(t.steps.size() >= 3);
}

TEST_CASE("budget below the first sample leaves an empty trace and a warning") {
  auto cfg = rosen_config(2, AcquisitionMode::cost_aware);
  cfg.stop.max_budget = 150;
  const auto t = run(cfg, noisy(2));
  CHECK(t.steps.empty());
  CHECK(t.status == RunStatus::budget_exhausted);
  REQUIRE(t.warnings.size() == 1);
}

TEST_CASE("budget safety over random budgets") {
  std::mt19937_64 rng(101);
  for (int rep = 0; rep < 200; ++rep) {
    auto cfg = rosen_config(static_cast<std::uint64_t>(rep),
                            rep % 2 ? AcquisitionMode::cost_aware : AcquisitionMode::standard_ei,
                            {std::uniform_real_distribution<double>(0.5, 3)(rng),
                             std::uniform_real_distribution<double>(3, 30)(rng),
                             std::uniform_real_distribution<double>(30, 300)(rng)});
    cfg.gp.restarts = 1;
    cfg.acquisition.n_starts = 2;
    const double budget = std::uniform_real_distribution<double>(10, 900)(rng);
    cfg.stop.max_budget = budget;
    cfg.stop.max_iterations = 12;
    const auto t = run(cfg, noisy(rep));
    double sum = 0.0;
    for (const auto& s : t.steps) sum += s.true_cost_paid;
    CHECK(sum <= budget);
    CHECK(t.cumulative_cost() == sum);
  }
}

TEST_CASE("trace costs replay from the record and every realized value is recorded") {
  for (auto mode : {AcquisitionMode::standard_ei, AcquisitionMode::cost_aware}) {
    auto cfg = rosen_config(21, mode);
    cfg.stop.max_iterations = 15;
    CostLevels doubled = cfg.schedule.base.scaled(2.0);
    cfg.schedule.add_override(9, doubled);
    Optimizer opt(cfg);
    auto eval = noisy(3);
    initialize(opt, eval);
    while (step(opt, eval)) {
    }
    const auto& t = opt.trace();
    PrototypeRecord rec(cfg.space);
    double cumulative = 0.0;
    for (const auto& s : t.steps) {
      const auto truth = discrete_cost(cfg.space, s.realized, rec,
                                       effective_levels(cfg.schedule, s.iteration, CostRole::truth));
      CHECK(truth.total == s.true_cost_paid);
      CHECK(truth.per_group_class == s.class_per_group);
      cumulative += s.true_cost_paid;
      CHECK(s.cumulative_true_cost == doctest::Approx(cumulative).epsilon(1e-15));
      rec = update_record(cfg.space, rec, s.realized);
    }
    CHECK(rec == opt.record());
    for (const auto& s : t.steps)
      for (std::size_t g = 0; g < cfg.space.group_count(); ++g)
        CHECK(opt.record().find(cfg.space, g, cfg.space.project(s.realized, g)).has_value());
  }
}

TEST_CASE("re-proposing the current prototype costs one tweak per group") {
  auto cfg = rosen_config(1, AcquisitionMode::cost_aware, {2, 20, 200});
  cfg.stop.max_iterations = 3;
  const auto t = run(cfg, noisy(1));
  PrototypeRecord rec(cfg.space);
  for (const auto& s : t.steps) rec = update_record(cfg.space, rec, s.realized);
  CHECK(discrete_cost(cfg.space, *rec.current(), rec, cfg.schedule.base).total == 4.0);
}

TEST_CASE("believed bias changes planning costs but not payments") {
  auto cfg = rosen_config(8, AcquisitionMode::cost_aware);
  cfg.schedule.believed_bias_alpha = 10.0;
  cfg.schedule.biased_classes = {false, false, true};
  cfg.stop.max_iterations = 10;
  const auto t = run(cfg, noisy(8));
  for (const auto& s : t.steps) {
    int creates = 0;
    for (auto c : s.class_per_group) creates += c == CostClass::create;
    CHECK(s.believed_cost == doctest::Approx(s.true_cost_paid + 9.0 * 100.0 * creates));
  }
}

TEST_CASE("baseline proposals ignore the cost scale") {
  auto a = rosen_config(13, AcquisitionMode::standard_ei, {1, 10, 100});
  auto b = rosen_config(13, AcquisitionMode::standard_ei, {7, 70, 700});
  a.stop.max_iterations = b.stop.max_iterations = 10;
  const auto ta = run(a, noisy(13));
  const auto tb = run(b, noisy(13));
  REQUIRE(ta.steps.size() == tb.steps.size());
  for (std::size_t i = 0; i < ta.steps.size(); ++i) {
    CHECK(ta.steps[i].proposed == tb.steps[i].proposed);
    CHECK(ta.steps[i].observed_y == tb.steps[i].observed_y);
    CHECK(tb.steps[i].true_cost_paid == 7.0 * ta.steps[i].true_cost_paid);
  }
}

TEST_CASE("evaluator failure aborts and keeps the partial trace") {
  auto cfg = rosen_config(1, AcquisitionMode::cost_aware);
  cfg.stop.max_iterations = 10;
  int calls = 0;
  const auto t = run(cfg, [&](const Configuration& x) {
    if (++calls == 6) throw std::runtime_error("rig offline");
    return -kRosen(x);
  });
  CHECK(t.status == RunStatus::aborted);
  CHECK(t.steps.size() == 5);
  CHECK(t.message.find("rig offline") != std::string::npos);

  calls = 0;
  const auto nan = run(cfg, [&](const Configuration& x) { return ++calls == 2 ? std::nan("") : -kRosen(x); });
  CHECK(nan.status == RunStatus::aborted);
  CHECK(nan.steps.size() == 1);
}

TEST_CASE("commit enforces the iteration order") {
  auto cfg = rosen_config(1, AcquisitionMode::cost_aware);
  cfg.stop.max_iterations = 5;
  Optimizer opt(cfg);
  const auto p = opt.propose();
  opt.commit(p, -1.0);
  CHECK_THROWS_AS(opt.commit(p, -1.0), StateConflictError);
  CHECK_THROWS_AS(opt.commit(opt.propose(), std::nan("")), EvaluationError);
}

TEST_CASE("run configuration is validated") {
  auto cfg = rosen_config(1, AcquisitionMode::cost_aware);
  CHECK_THROWS_AS(cfg.validate(), ConfigurationError);
  cfg.stop.max_budget = -5;
  CHECK_THROWS_AS(cfg.validate(), ConfigurationError);
  cfg.stop.max_budget = 100;
  cfg.schedule.base.per_group["hardware"] = {0, 0, 0};
  CHECK_THROWS_AS(cfg.validate(), ConfigurationError);
}

TEST_CASE("regret is the best noiseless value so far minus the optimum") {
  OptimizationTrace t;
  for (double v : {4.0, 1.5, 2.0}) {
    TraceStep s;
    s.realized = Configuration({v});
    t.steps.push_back(s);
  }
  const auto r = regret(t, [](const Configuration& x) { return x[0]; }, 0.0);
  CHECK(r == std::vector<double>{4.0, 1.5, 1.5});

  auto cfg = rosen_config(1, AcquisitionMode::cost_aware);
  OptimizationTrace hit;
  for (auto x : {std::vector<double>{0.5, 0.5}, {1.0, 1.0}, {-1.0, 0.3}}) {
    TraceStep s;
    s.realized = Configuration(x);
    hit.steps.push_back(s);
  }
  const auto rh = regret(hit, noiseless, 0.0);
  CHECK(rh[1] == 0.0);
  CHECK(rh[2] == 0.0);
}

TEST_CASE("regret never increases") {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int rep = 0; rep < 100; ++rep) {
    OptimizationTrace t;
    for (int i = 0; i < 30; ++i) {
      TraceStep s;
      s.realized = Configuration({u(rng), u(rng)});
      t.steps.push_back(s);
    }
    const auto r = regret(t, noiseless, 0.0);
    for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i] <= r[i - 1]);
    for (double v : r) CHECK(v >= 0.0);
  }
}

TEST_CASE("trace CSV has one row per step and the documented columns") {
  auto cfg = rosen_config(1, AcquisitionMode::cost_aware);
  cfg.stop.max_iterations = 2;
  const auto t = run(cfg, noisy(1));
  std::ostringstream out;
  write_trace_csv(out, cfg.space, t, {{"trial", "0"}}, {{"regret", regret(t, noiseless, 0.0)}});
  std::istringstream in(out.str());
  std::string header, line;
  std::getline(in, header);
  CHECK(header ==
        "trial,iteration,phase,proposed.x1,proposed.x2,realized.x1,realized.x2,class.hardware,class.software,"
        "believed_cost,true_cost_paid,cumulative_true_cost,observed_y,best_so_far,acquisition_value,gp_amplitude,"
        "gp_noise,gp_lengthscales,regret");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 5);
}
