#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cabo/benchmark.hpp"
#include "cabo/cost_model.hpp"
#include "cabo/optimizer.hpp"

namespace cabo {

enum class Method { baseline, cost_aware };
std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

// Inclusive range of 0-based evaluation indices (init samples included).
struct Phase {
  int first = 0;
  int last = 0;
};

struct StudySpec {
  int study_id = 1;
  std::string function = "rosenbrock";
  bool canonical_rosenbrock = false;
  std::optional<double> box_lower;  // override the function's box
  std::optional<double> box_upper;
  int trials = 250;
  int iterations = 25;  // post-initialization iterations
  int init_samples = 3;
  std::uint64_t base_seed = 0;
  NoiseModel noise;
  GroupLevels levels;  // applied to every group unless a study varies them
  RelaxationParams relax = benchmark_relaxation();
  int n_starts = 16;
  double xi = 0.0;
  GPFitOptions gp;
  std::vector<Method> methods{Method::baseline, Method::cost_aware};

  // Study 2 (and optionally 6): true-cost budgets. Budgeted runs also stop
  // after `iteration_cap` post-initialization iterations.
  std::vector<double> budgets;
  int iteration_cap = 100;
  // Study 3: create-cost grid.
  std::vector<double> hardware_create{100, 400, 1600, 6400};
  std::vector<double> software_create{100, 400, 1600, 6400};
  // Study 4.
  std::vector<int> dimensions{1, 2, 4, 8, 16};
  std::vector<int> groupings{1, 2, 4, 8};
  int grouping_dimension = 8;
  // Study 5: hardware create multiplier from a 0-based evaluation index on,
  // and the phases whose create counts are reported.
  std::vector<std::pair<int, double>> dynamic_factors{{10, 10.0}, {17, 0.1}};
  std::vector<Phase> phases{{3, 9}, {10, 16}, {17, 23}};
  // Study 6.
  std::vector<double> alphas{0.1, 0.31622776601683794, 1.0, 3.1622776601683795, 10.0};
  std::vector<CostClass> bias_categories{CostClass::tweak, CostClass::swap, CostClass::create};
  std::optional<double> bias_budget;

  // Preset for a study, with full-scale trial counts.
  static StudySpec preset(int study_id);
  // Relaxation used by benchmark presets: sigma of one 1% grid cell.
  static RelaxationParams benchmark_relaxation();

  void validate() const;
};

nlohmann::json to_json(const StudySpec& spec);
// Missing keys keep the preset of `study_id` (which is required).
StudySpec study_spec_from_json(const nlohmann::json& j, const std::string& path = "study");

struct Condition {
  std::string name;
  GroundTruth truth;
  int groups = 2;
  std::optional<double> budget;
  std::optional<double> hardware_create;
  std::optional<double> software_create;
  std::optional<double> alpha;
  std::optional<CostClass> bias_category;
  std::string schedule_kind;  // Study 5: constant | dynamic
  RunConfig config;           // method-independent; mode and seed set per trial
  std::vector<Phase> phases;
};

std::vector<Condition> expand_conditions(const StudySpec& spec);

struct ClassCounts {
  std::array<int, 3> hardware{};
  std::array<int, 3> software{};
};

struct TrialSummary {
  int study = 0;
  std::string condition;
  Method method = Method::baseline;
  int trial = 0;
  std::uint64_t seed = 0;
  std::string function;
  int dimension = 0;
  int groups = 0;
  std::optional<double> budget;
  std::optional<double> hardware_create;
  std::optional<double> software_create;
  std::optional<double> alpha;
  std::optional<CostClass> bias_category;
  std::string schedule_kind;
  std::string status;
  int evaluations = 0;
  int iterations = 0;
  double final_regret = 0.0;
  double min_regret_cost = 0.0;
  double final_cumulative_cost = 0.0;
  double best_observed = 0.0;
  ClassCounts classes;  // post-initialization steps only
  std::vector<int> phase_hardware_create;
  std::string message;
};

struct TrialResult {
  TrialSummary summary;
  OptimizationTrace trace;
  std::vector<double> noiseless;
  std::vector<double> regret;
};

// Per-step class of a component kind: the most expensive class among that
// kind's groups (create > swap > tweak). Steps without groups of the kind are
// not counted.
ClassCounts count_classes(const DesignSpace& space, const OptimizationTrace& trace);

TrialResult run_trial(const StudySpec& spec, const Condition& condition, Method method, int trial);

struct StudyResult {
  std::vector<TrialSummary> trials;  // condition-major, then method, then trial
};

struct RunOptions {
  int parallelism = 1;
  std::optional<std::filesystem::path> out_dir;  // trace and summary CSVs
  bool write_traces = true;
};

StudyResult run_study(const StudySpec& spec, const RunOptions& options = {});

const std::vector<std::string>& summary_columns();
void write_summary_header(std::ostream& out);
void write_summary_row(std::ostream& out, const TrialSummary& s);

// Aggregation over summary CSV rows.
struct AggregateRow {
  int study = 0;
  std::string condition;
  std::string method;
  int trials = 0;
  int aborted = 0;
  double mean_final_regret = 0, sd_final_regret = 0, median_final_regret = 0;
  double mean_min_regret_cost = 0, sd_min_regret_cost = 0, median_min_regret_cost = 0;
  double mean_final_cost = 0, sd_final_cost = 0, median_final_cost = 0;
  std::map<std::string, long> class_totals;  // e.g. hardware_create -> total
};

using CsvRow = std::map<std::string, std::string>;
std::vector<CsvRow> read_csv(std::istream& in);
std::vector<AggregateRow> summarize(const std::vector<CsvRow>& rows);
std::vector<AggregateRow> summarize_directory(const std::filesystem::path& dir);
void write_aggregate(std::ostream& out, const std::vector<AggregateRow>& rows);

struct Stats {
  double mean = 0, sd = 0, median = 0;
};
// Sample SD (n-1); 0 for n <= 1.
Stats describe(std::vector<double> values);

}  // namespace cabo
