#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cabo/acquisition.hpp"
#include "cabo/cost_model.hpp"
#include "cabo/design_space.hpp"
#include "cabo/gaussian_process.hpp"
#include "cabo/prototype_record.hpp"

namespace cabo {

// At least one limit must be set. max_iterations counts post-initialization
// iterations; max_budget is in true-cost units and is never overspent.
struct StopRule {
  std::optional<int> max_iterations;
  std::optional<double> max_budget;
};

struct RunConfig {
  DesignSpace space;
  CostSchedule schedule;
  RelaxationParams relax;
  AcquisitionSpec acquisition;
  int init_samples = 3;
  StopRule stop;
  std::uint64_t seed = 0;
  GPFitOptions gp;

  void validate() const;
};

struct GPSnapshot {
  double amplitude = 0.0;
  double noise = 0.0;
  std::vector<double> lengthscales;
};

// One candidate evaluation, fully priced before it is executed.
struct Proposal {
  int iteration = 0;  // 0-based index over all evaluations, init included
  bool initial = false;
  Configuration proposed;
  Configuration realized;
  CostBreakdown believed;
  CostBreakdown truth;
  double acquisition_value = 0.0;
  std::optional<GPSnapshot> gp;
};

struct TraceStep {
  int iteration = 0;
  bool initial = false;
  Configuration proposed;
  Configuration realized;
  std::vector<CostClass> class_per_group;
  double believed_cost = 0.0;
  double true_cost_paid = 0.0;
  double cumulative_true_cost = 0.0;
  double observed_y = 0.0;
  double best_so_far = 0.0;
  double acquisition_value = 0.0;
  std::optional<GPSnapshot> gp;
};

enum class RunStatus { running, completed, budget_exhausted, aborted };
std::string_view to_string(RunStatus s);

struct OptimizationTrace {
  std::vector<TraceStep> steps;
  RunStatus status = RunStatus::running;
  std::string message;
  std::vector<std::string> warnings;

  double cumulative_cost() const { return steps.empty() ? 0.0 : steps.back().cumulative_true_cost; }
};

using Evaluator = std::function<double(const Configuration&)>;

// State of one optimization run. propose() is a pure function of the state
// (GP fit and acquisition seeds derive from the run seed and iteration), so a
// run can be resumed from its committed history.
class Optimizer {
 public:
  explicit Optimizer(RunConfig config);

  const RunConfig& config() const { return config_; }
  const Dataset& dataset() const { return dataset_; }
  const PrototypeRecord& record() const { return record_; }
  const OptimizationTrace& trace() const { return trace_; }
  OptimizationTrace& trace() { return trace_; }
  CostSchedule& schedule() { return config_.schedule; }

  int next_iteration() const { return static_cast<int>(trace_.steps.size()); }
  bool in_initialization() const { return next_iteration() < config_.init_samples; }
  int completed_loop_iterations() const;
  double spent() const { return trace_.cumulative_cost(); }
  std::optional<double> remaining_budget() const;

  Proposal propose() const;
  // True when paying `p.truth.total` keeps the run within budget.
  bool affordable(const Proposal& p) const;
  void commit(const Proposal& p, double observed_y);

  // Iteration limit reached.
  bool iterations_exhausted() const;

  // Fitted model for the current dataset (refit lazily after each commit).
  const GPModel& model() const;

 private:
  RunConfig config_;
  Dataset dataset_;
  PrototypeRecord record_;
  OptimizationTrace trace_;
  mutable std::optional<GPModel> model_;
};

// Draws and evaluates the initialization samples.
void initialize(Optimizer& opt, const Evaluator& evaluate);
// One propose-realize-evaluate-update cycle. Returns false (and sets the
// trace status) when a stop rule fired instead.
bool step(Optimizer& opt, const Evaluator& evaluate);
OptimizationTrace run(const RunConfig& config, const Evaluator& evaluate);

// Per-step regret: best noiseless value among realized configurations up to
// step i, minus `optimum` (minimization form). Non-increasing.
std::vector<double> regret(const OptimizationTrace& trace,
                           const std::function<double(const Configuration&)>& ground_truth,
                           double optimum);

using Metadata = std::vector<std::pair<std::string, std::string>>;
using ExtraColumns = std::vector<std::pair<std::string, std::vector<double>>>;

std::string format_number(double v);

// One row per step. Column order: metadata, iteration, phase, proposed.<p>...,
// realized.<p>..., class.<g>..., cost columns, observations, acquisition
// value, GP hyperparameters, extra columns.
void write_trace_csv(std::ostream& out, const DesignSpace& space, const OptimizationTrace& trace,
                     const Metadata& metadata = {}, const ExtraColumns& extra = {});
void write_trace_jsonl(std::ostream& out, const DesignSpace& space, const OptimizationTrace& trace,
                       const Metadata& metadata = {});

nlohmann::json to_json(const DesignSpace& space, const TraceStep& step);
nlohmann::json to_json(const DesignSpace& space, const CostBreakdown& breakdown);

}  // namespace cabo
