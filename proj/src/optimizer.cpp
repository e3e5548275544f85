#include "cabo/optimizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

#include "cabo/errors.hpp"
#include "cabo/sampling.hpp"

namespace cabo {

namespace {

constexpr std::uint64_t kInitStream = 0x1417ULL;
constexpr std::uint64_t kGpStream = 0x6770ULL;
constexpr std::uint64_t kAcquisitionStream = 0xac01ULL;

}  // namespace

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::running:
      return "running";
    case RunStatus::completed:
      return "completed";
    case RunStatus::budget_exhausted:
      return "budget_exhausted";
    case RunStatus::aborted:
      return "aborted";
  }
  return "running";
}

void RunConfig::validate() const {
  if (init_samples < 1) throw ConfigurationError("init_samples must be at least 1");
  if (!stop.max_iterations && !stop.max_budget)
    throw ConfigurationError("a stop rule needs max_iterations or max_budget");
  if (stop.max_iterations && *stop.max_iterations < 0)
    throw ConfigurationError("max_iterations must be non-negative");
  if (stop.max_budget && !(*stop.max_budget > 0.0))
    throw ConfigurationError("max_budget must be positive");
  if (acquisition.n_starts < 1) throw ConfigurationError("n_starts must be at least 1");
  schedule.validate();
  relax.validate();
  check_levels_cover(space, schedule.base);
  for (const auto& o : schedule.overrides) check_levels_cover(space, o.levels);
  if (acquisition.mode == AcquisitionMode::cost_aware) {
    check_cost_aware_levels(space, schedule.base);
    for (const auto& o : schedule.overrides) check_cost_aware_levels(space, o.levels);
  }
}

Optimizer::Optimizer(RunConfig config) : config_(std::move(config)), record_(config_.space) {
  config_.validate();
}

int Optimizer::completed_loop_iterations() const {
  return std::max(0, next_iteration() - config_.init_samples);
}

std::optional<double> Optimizer::remaining_budget() const {
  if (!config_.stop.max_budget) return std::nullopt;
  return *config_.stop.max_budget - spent();
}

bool Optimizer::iterations_exhausted() const {
  return config_.stop.max_iterations && !in_initialization() &&
         completed_loop_iterations() >= *config_.stop.max_iterations;
}

bool Optimizer::affordable(const Proposal& p) const {
  const auto remaining = remaining_budget();
  return !remaining || p.truth.total <= *remaining;
}

const GPModel& Optimizer::model() const {
  if (!model_) {
    GPFitOptions options = config_.gp;
    options.seed = derive_seed({config_.seed, kGpStream, static_cast<std::uint64_t>(next_iteration())});
    model_ = GPModel::fit(dataset_, options);
  }
  return *model_;
}

Proposal Optimizer::propose() const {
  Proposal p;
  p.iteration = next_iteration();
  const DesignSpace& space = config_.space;

  if (in_initialization()) {
    p.initial = true;
    const ScrambledSobol sobol(space.dimension(), derive_seed({config_.seed, kInitStream}));
    p.proposed = space.denormalize(sobol.point(static_cast<std::size_t>(p.iteration)));
  } else {
    const GPModel& gp = model();
    const CostLevels believed = effective_levels(config_.schedule, p.iteration, CostRole::believed);
    const auto best_it = std::max_element(dataset_.targets.begin(), dataset_.targets.end());
    const auto best_index = static_cast<std::size_t>(best_it - dataset_.targets.begin());

    AcquisitionSpec spec = config_.acquisition;
    spec.seed = derive_seed({config_.acquisition.seed, config_.seed, kAcquisitionStream,
                             static_cast<std::uint64_t>(p.iteration)});
    const AcquisitionResult result = maximize(spec, gp, *best_it, record_, believed, config_.relax,
                                              space, dataset_.points[best_index]);
    p.proposed = result.x_star;
    p.acquisition_value = result.value;
    GPSnapshot snap;
    snap.amplitude = gp.kernel_amplitude();
    snap.noise = gp.noise_variance();
    snap.lengthscales.assign(gp.lengthscales().data(), gp.lengthscales().data() + gp.lengthscales().size());
    p.gp = std::move(snap);
  }

  p.realized = realize(space, p.proposed);
  p.believed = discrete_cost(space, p.realized, record_,
                             effective_levels(config_.schedule, p.iteration, CostRole::believed));
  p.truth = discrete_cost(space, p.realized, record_,
                          effective_levels(config_.schedule, p.iteration, CostRole::truth));
  return p;
}

void Optimizer::commit(const Proposal& p, double observed_y) {
  if (p.iteration != next_iteration())
    throw StateConflictError("proposal is for iteration " + std::to_string(p.iteration) +
                             " but the run is at " + std::to_string(next_iteration()));
  if (!std::isfinite(observed_y)) throw EvaluationError("observation is not finite");

  TraceStep s;
  s.iteration = p.iteration;
  s.initial = p.initial;
  s.proposed = p.proposed;
  s.realized = p.realized;
  s.class_per_group = p.truth.per_group_class;
  s.believed_cost = p.believed.total;
  s.true_cost_paid = p.truth.total;
  s.cumulative_true_cost = spent() + p.truth.total;
  s.observed_y = observed_y;
  s.best_so_far = trace_.steps.empty() ? observed_y : std::max(trace_.steps.back().best_so_far, observed_y);
  s.acquisition_value = p.acquisition_value;
  s.gp = p.gp;

  dataset_.add(config_.space.normalize(p.realized), observed_y);
  record_ = record_.updated(config_.space, p.realized);
  trace_.steps.push_back(std::move(s));
  model_.reset();
}

namespace {

// Returns false when the stop rule fired before evaluating.
bool evaluate_proposal(Optimizer& opt, const Proposal& p, const Evaluator& evaluate) {
  if (!opt.affordable(p)) {
    opt.trace().status = RunStatus::budget_exhausted;
    return false;
  }
  double y = 0.0;
  try {
    y = evaluate(p.realized);
  } catch (const std::exception& e) {
    opt.trace().status = RunStatus::aborted;
    opt.trace().message = std::string("evaluation failed: ") + e.what();
    return false;
  }
  if (!std::isfinite(y)) {
    opt.trace().status = RunStatus::aborted;
    opt.trace().message = "evaluation returned a non-finite value";
    return false;
  }
  opt.commit(p, y);
  return true;
}

}  // namespace

void initialize(Optimizer& opt, const Evaluator& evaluate) {
  while (opt.in_initialization() && opt.trace().status == RunStatus::running) {
    const Proposal p = opt.propose();
    if (!evaluate_proposal(opt, p, evaluate)) {
      if (opt.trace().steps.empty() && opt.trace().status == RunStatus::budget_exhausted)
        opt.trace().warnings.push_back("budget is smaller than the cost of the first initial sample");
      return;
    }
  }
}

bool step(Optimizer& opt, const Evaluator& evaluate) {
  if (opt.trace().status != RunStatus::running) return false;
  if (opt.iterations_exhausted()) {
    opt.trace().status = RunStatus::completed;
    return false;
  }
  Proposal p;
  try {
    p = opt.propose();
  } catch (const std::exception& e) {
    opt.trace().status = RunStatus::aborted;
    opt.trace().message = std::string("proposal failed: ") + e.what();
    return false;
  }
  return evaluate_proposal(opt, p, evaluate);
}

OptimizationTrace run(const RunConfig& config, const Evaluator& evaluate) {
  Optimizer opt(config);
  initialize(opt, evaluate);
  while (step(opt, evaluate)) {
  }
  return opt.trace();
}

std::vector<double> regret(const OptimizationTrace& trace,
                           const std::function<double(const Configuration&)>& ground_truth,
                           double optimum) {
  std::vector<double> out;
  out.reserve(trace.steps.size());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : trace.steps) {
    best = std::min(best, ground_truth(s.realized));
    out.push_back(std::max(best - optimum, 0.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string join_lengthscales(const std::vector<double>& ls) {
  std::string out;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    if (i) out += ';';
    out += format_number(ls[i]);
  }
  return out;
}

}  // namespace

void write_trace_csv(std::ostream& out, const DesignSpace& space, const OptimizationTrace& trace,
                     const Metadata& metadata, const ExtraColumns& extra) {
  std::vector<std::string> header;
  for (const auto& [k, v] : metadata) header.push_back(k);
  header.insert(header.end(), {"iteration", "phase"});
  for (const auto& p : space.parameters()) header.push_back("proposed." + p.name);
  for (const auto& p : space.parameters()) header.push_back("realized." + p.name);
  for (const auto& g : space.groups()) header.push_back("class." + g.name);
  header.insert(header.end(), {"believed_cost", "true_cost_paid", "cumulative_true_cost", "observed_y",
                               "best_so_far", "acquisition_value", "gp_amplitude", "gp_noise",
                               "gp_lengthscales"});
  for (const auto& [name, values] : extra) header.push_back(name);

  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';

  for (std::size_t r = 0; r < trace.steps.size(); ++r) {
    const TraceStep& s = trace.steps[r];
    std::vector<std::string> row;
    for (const auto& [k, v] : metadata) row.push_back(v);
    row.push_back(std::to_string(s.iteration));
    row.emplace_back(s.initial ? "init" : "loop");
    for (double v : s.proposed.values()) row.push_back(format_number(v));
    for (double v : s.realized.values()) row.push_back(format_number(v));
    for (CostClass c : s.class_per_group) row.emplace_back(to_string(c));
    for (double v : {s.believed_cost, s.true_cost_paid, s.cumulative_true_cost, s.observed_y,
                     s.best_so_far, s.acquisition_value})
      row.push_back(format_number(v));
    if (s.gp) {
      row.push_back(format_number(s.gp->amplitude));
      row.push_back(format_number(s.gp->noise));
      row.push_back(join_lengthscales(s.gp->lengthscales));
    } else {
      row.insert(row.end(), {"", "", ""});
    }
    for (const auto& [name, values] : extra)
      row.push_back(r < values.size() ? format_number(values[r]) : "");
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

nlohmann::json to_json(const DesignSpace& space, const CostBreakdown& breakdown) {
  nlohmann::json classes = nlohmann::json::object();
  nlohmann::json costs = nlohmann::json::object();
  for (std::size_t g = 0; g < space.group_count(); ++g) {
    classes[space.groups()[g].name] = to_string(breakdown.per_group_class[g]);
    costs[space.groups()[g].name] = breakdown.per_group_cost[g];
  }
  return {{"classes", classes}, {"costs", costs}, {"total", breakdown.total}};
}

nlohmann::json to_json(const DesignSpace& space, const TraceStep& s) {
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t g = 0; g < space.group_count(); ++g)
    classes[space.groups()[g].name] = to_string(s.class_per_group[g]);
  nlohmann::json j = {{"iteration", s.iteration},
                      {"phase", s.initial ? "init" : "loop"},
                      {"proposed", to_json(space, s.proposed)},
                      {"realized", to_json(space, s.realized)},
                      {"class_per_group", classes},
                      {"believed_cost", s.believed_cost},
                      {"true_cost_paid", s.true_cost_paid},
                      {"cumulative_true_cost", s.cumulative_true_cost},
                      {"observed_y", s.observed_y},
                      {"best_so_far", s.best_so_far},
                      {"acquisition_value", s.acquisition_value}};
  if (s.gp) {
    j["gp"] = {{"amplitude", s.gp->amplitude}, {"noise", s.gp->noise}, {"lengthscales", s.gp->lengthscales}};
  }
  return j;
}

void write_trace_jsonl(std::ostream& out, const DesignSpace& space, const OptimizationTrace& trace,
                       const Metadata& metadata) {
  for (const auto& s : trace.steps) {
    nlohmann::json j = to_json(space, s);
    for (const auto& [k, v] : metadata) j[k] = v;
    out << j.dump() << '\n';
  }
}

}  // namespace cabo
