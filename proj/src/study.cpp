#include "cabo/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "cabo/errors.hpp"
#include "cabo/sampling.hpp"

namespace cabo {

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;

std::string compact(double v) {
  // Condition labels: integers without a decimal point.
  if (std::abs(v - std::round(v)) < 1e-9 && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(std::round(v)));
  return format_number(v);
}

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::string_view to_string(Method m) { return m == Method::baseline ? "baseline" : "cost_aware"; }

Method method_from_string(std::string_view s) {
  if (s == "baseline" || s == "standard_ei") return Method::baseline;
  if (s == "cost_aware") return Method::cost_aware;
  throw ConfigurationError("unknown method '" + std::string(s) + "'");
}

RelaxationParams StudySpec::benchmark_relaxation() {
  RelaxationParams r;
  r.default_sigma = 0.01;
  return r;
}

StudySpec StudySpec::preset(int study_id) {
  StudySpec s;
  s.study_id = study_id;
  switch (study_id) {
    case 1:
      s.trials = 250;
      break;
    case 2:
      s.trials = 25;
      s.budgets = {600, 1000, 1600, 2400, 3400, 5000, 7000};
      break;
    case 3:
      s.trials = 50;
      break;
    case 4:
      s.function = "rosenbrock_nd";
      s.trials = 50;
      break;
    case 5:
      s.trials = 50;
      s.iterations = 21;  // 24 evaluations including initialization
      break;
    case 6:
      s.trials = 50;
      break;
    default:
      throw ConfigurationError("study must be 1-6, got " + std::to_string(study_id));
  }
  return s;
}

void StudySpec::validate() const {
  if (study_id < 1 || study_id > 6) throw ConfigurationError("study must be 1-6");
  if (trials < 1) throw ConfigurationError("trials must be positive");
  if (iterations < 0) throw ConfigurationError("iterations must be non-negative");
  if (init_samples < 1) throw ConfigurationError("init_samples must be at least 1");
  if (iteration_cap < 0) throw ConfigurationError("iteration_cap must be non-negative");
  if (methods.empty()) throw ConfigurationError("at least one method is required");
  noise.validate();
  relax.validate();
  if (box_lower.has_value() != box_upper.has_value() || (box_lower && !(*box_upper > *box_lower)))
    throw ConfigurationError("box needs both lower < upper");
  if (study_id == 2 && budgets.empty()) throw ConfigurationError("study 2 needs budgets");
  for (double b : budgets)
    if (!(b > 0)) throw ConfigurationError("budgets must be positive");
  if (study_id == 3 && (hardware_create.empty() || software_create.empty()))
    throw ConfigurationError("study 3 needs create-cost grids");
  if (study_id == 4) {
    for (int d : dimensions)
      if (d < 1) throw ConfigurationError("dimensions must be positive");
    for (int g : groupings)
      if (g < 1 || grouping_dimension % g != 0)
        throw ConfigurationError("grouping " + std::to_string(g) + " does not divide " +
                                 std::to_string(grouping_dimension));
  }
  if (study_id == 6) {
    for (double a : alphas)
      if (!(a > 0)) throw ConfigurationError("alphas must be positive");
    if (bias_budget && !(*bias_budget > 0)) throw ConfigurationError("bias_budget must be positive");
  }
  for (const auto& p : phases)
    if (p.first < 0 || p.last < p.first) throw ConfigurationError("invalid phase range");
}

// ---------------------------------------------------------------------------
// JSON config

nlohmann::json to_json(const StudySpec& s) {
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : s.methods) methods.push_back(to_string(m));
  nlohmann::json factors = nlohmann::json::array();
  for (const auto& [it, f] : s.dynamic_factors) factors.push_back({{"from_iteration", it}, {"factor", f}});
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : s.phases) phases.push_back({p.first, p.last});
  nlohmann::json cats = nlohmann::json::array();
  for (CostClass c : s.bias_categories) cats.push_back(to_string(c));
  nlohmann::json j = {{"schema_version", 1},
                      {"study", s.study_id},
                      {"function", s.function},
                      {"canonical_rosenbrock", s.canonical_rosenbrock},
                      {"trials", s.trials},
                      {"iterations", s.iterations},
                      {"init_samples", s.init_samples},
                      {"seed", s.base_seed},
                      {"noise", {{"additive_sd", s.noise.additive_sd}, {"multiplicative_sd", s.noise.multiplicative_sd}}},
                      {"levels", {{"tweak", s.levels.tweak}, {"swap", s.levels.swap}, {"create", s.levels.create}}},
                      {"relaxation", to_json(s.relax)},
                      {"n_starts", s.n_starts},
                      {"xi", s.xi},
                      {"gp_restarts", s.gp.restarts},
                      {"kernel", s.gp.kernel == KernelFamily::matern52 ? "matern52" : "squared_exponential"},
                      {"methods", methods},
                      {"budgets", s.budgets},
                      {"iteration_cap", s.iteration_cap},
                      {"hardware_create", s.hardware_create},
                      {"software_create", s.software_create},
                      {"dimensions", s.dimensions},
                      {"groupings", s.groupings},
                      {"grouping_dimension", s.grouping_dimension},
                      {"dynamic_factors", factors},
                      {"phases", phases},
                      {"alphas", s.alphas},
                      {"bias_categories", cats}};
  if (s.box_lower) j["box"] = {*s.box_lower, *s.box_upper};
  if (s.bias_budget) j["bias_budget"] = *s.bias_budget;
  return j;
}

namespace {

template <class T>
T get_as(const nlohmann::json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(path + "." + key, "has the wrong type");
  }
}

}  // namespace

StudySpec study_spec_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  if (!j.contains("study")) throw ValidationError(path + ".study", "is required");
  if (j.contains("schema_version") && j["schema_version"] != 1)
    throw ValidationError(path + ".schema_version", "unsupported version");
  StudySpec s;
  try {
    s = StudySpec::preset(get_as<int>(j, "study", path));
  } catch (const ConfigurationError& e) {
    throw ValidationError(path + ".study", e.what());
  }
  auto has = [&](const char* k) { return j.contains(k); };
  if (has("function")) s.function = get_as<std::string>(j, "function", path);
  if (has("canonical_rosenbrock")) s.canonical_rosenbrock = get_as<bool>(j, "canonical_rosenbrock", path);
  if (has("box")) {
    auto box = get_as<std::vector<double>>(j, "box", path);
    if (box.size() != 2) throw ValidationError(path + ".box", "expected [lower, upper]");
    s.box_lower = box[0];
    s.box_upper = box[1];
  }
  if (has("trials")) s.trials = get_as<int>(j, "trials", path);
  if (has("iterations")) s.iterations = get_as<int>(j, "iterations", path);
  if (has("init_samples")) s.init_samples = get_as<int>(j, "init_samples", path);
  if (has("seed")) s.base_seed = get_as<std::uint64_t>(j, "seed", path);
  if (has("noise")) {
    const auto& n = j["noise"];
    if (n.contains("additive_sd")) s.noise.additive_sd = get_as<double>(n, "additive_sd", path + ".noise");
    if (n.contains("multiplicative_sd"))
      s.noise.multiplicative_sd = get_as<double>(n, "multiplicative_sd", path + ".noise");
  }
  if (has("levels")) {
    const auto& l = j["levels"];
    if (l.contains("tweak")) s.levels.tweak = get_as<double>(l, "tweak", path + ".levels");
    if (l.contains("swap")) s.levels.swap = get_as<double>(l, "swap", path + ".levels");
    if (l.contains("create")) s.levels.create = get_as<double>(l, "create", path + ".levels");
  }
  if (has("relaxation")) s.relax = relaxation_from_json(j["relaxation"], path + ".relaxation");
  if (has("n_starts")) s.n_starts = get_as<int>(j, "n_starts", path);
  if (has("xi")) s.xi = get_as<double>(j, "xi", path);
  if (has("gp_restarts")) s.gp.restarts = get_as<int>(j, "gp_restarts", path);
  if (has("kernel")) {
    const auto k = get_as<std::string>(j, "kernel", path);
    if (k == "matern52") s.gp.kernel = KernelFamily::matern52;
    else if (k == "squared_exponential") s.gp.kernel = KernelFamily::squared_exponential;
    else throw ValidationError(path + ".kernel", "unknown kernel '" + k + "'");
  }
  if (has("methods")) {
    s.methods.clear();
    for (const auto& m : get_as<std::vector<std::string>>(j, "methods", path)) {
      try {
        s.methods.push_back(method_from_string(m));
      } catch (const ConfigurationError& e) {
        throw ValidationError(path + ".methods", e.what());
      }
    }
  }
  if (has("budgets")) s.budgets = get_as<std::vector<double>>(j, "budgets", path);
  if (has("iteration_cap")) s.iteration_cap = get_as<int>(j, "iteration_cap", path);
  if (has("hardware_create")) s.hardware_create = get_as<std::vector<double>>(j, "hardware_create", path);
  if (has("software_create")) s.software_create = get_as<std::vector<double>>(j, "software_create", path);
  if (has("dimensions")) s.dimensions = get_as<std::vector<int>>(j, "dimensions", path);
  if (has("groupings")) s.groupings = get_as<std::vector<int>>(j, "groupings", path);
  if (has("grouping_dimension")) s.grouping_dimension = get_as<int>(j, "grouping_dimension", path);
  if (has("dynamic_factors")) {
    s.dynamic_factors.clear();
    for (const auto& f : j["dynamic_factors"])
      s.dynamic_factors.emplace_back(get_as<int>(f, "from_iteration", path + ".dynamic_factors"),
                                     get_as<double>(f, "factor", path + ".dynamic_factors"));
  }
  if (has("phases")) {
    s.phases.clear();
    for (const auto& p : get_as<std::vector<std::vector<int>>>(j, "phases", path)) {
      if (p.size() != 2) throw ValidationError(path + ".phases", "expected [first, last] pairs");
      s.phases.push_back({p[0], p[1]});
    }
  }
  if (has("alphas")) s.alphas = get_as<std::vector<double>>(j, "alphas", path);
  if (has("bias_categories")) {
    s.bias_categories.clear();
    for (const auto& c : get_as<std::vector<std::string>>(j, "bias_categories", path)) {
      try {
        s.bias_categories.push_back(cost_class_from_string(c));
      } catch (const Error& e) {
        throw ValidationError(path + ".bias_categories", e.what());
      }
    }
  }
  if (has("bias_budget")) s.bias_budget = get_as<double>(j, "bias_budget", path);
  try {
    s.validate();
  } catch (const ConfigurationError& e) {
    throw ValidationError(path, e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Conditions

namespace {

Condition make_condition(const StudySpec& spec, std::string name, GroundTruth gt, int groups) {
  DesignSpace space = spec.box_lower ? benchmark_space(gt, groups, *spec.box_lower, *spec.box_upper)
                                     : benchmark_space(gt, groups);
  RunConfig config{.space = space};
  config.schedule.base = CostLevels::uniform(space, spec.levels);
  config.relax = spec.relax;
  config.acquisition.n_starts = spec.n_starts;
  config.acquisition.xi = spec.xi;
  config.init_samples = spec.init_samples;
  config.stop.max_iterations = spec.iterations;
  config.gp = spec.gp;
  return Condition{.name = std::move(name), .truth = std::move(gt), .groups = groups, .config = std::move(config)};
}

}  // namespace

std::vector<Condition> expand_conditions(const StudySpec& spec) {
  spec.validate();
  std::vector<Condition> out;
  auto truth = [&](int dim) {
    return GroundTruth::make(spec.function, dim, spec.canonical_rosenbrock);
  };
  const int base_dim = 2;

  switch (spec.study_id) {
    case 1:
      out.push_back(make_condition(spec, "default", truth(base_dim), 2));
      break;
    case 2:
      for (double b : spec.budgets) {
        Condition c = make_condition(spec, "budget" + compact(b), truth(base_dim), 2);
        c.budget = b;
        c.config.stop.max_budget = b;
        c.config.stop.max_iterations = spec.iteration_cap;
        out.push_back(std::move(c));
      }
      break;
    case 3:
      for (double h : spec.hardware_create) {
        for (double s : spec.software_create) {
          Condition c = make_condition(spec, "hw" + compact(h) + "_sw" + compact(s), truth(base_dim), 2);
          c.hardware_create = h;
          c.software_create = s;
          GroupLevels hw = spec.levels, sw = spec.levels;
          hw.create = h;
          sw.create = s;
          c.config.schedule.base.per_group = {{"hardware", hw}, {"software", sw}};
          out.push_back(std::move(c));
        }
      }
      break;
    case 4: {
      const auto nd = [&](int d) { return GroundTruth::make(GroundTruthKind::rosenbrock_nd, d, spec.canonical_rosenbrock); };
      for (int d : spec.dimensions) out.push_back(make_condition(spec, "params" + std::to_string(d), nd(d), 1));
      for (int g : spec.groupings)
        out.push_back(make_condition(spec, "groups" + std::to_string(g), nd(spec.grouping_dimension), g));
      break;
    }
    case 5: {
      Condition constant = make_condition(spec, "constant", truth(base_dim), 2);
      constant.schedule_kind = "constant";
      constant.phases = spec.phases;
      Condition dynamic = make_condition(spec, "dynamic", truth(base_dim), 2);
      dynamic.schedule_kind = "dynamic";
      dynamic.phases = spec.phases;
      for (const auto& [from, factor] : spec.dynamic_factors) {
        CostLevels levels = dynamic.config.schedule.base;
        for (auto& [name, lv] : levels.per_group)
          if (dynamic.config.space.group(name).kind == ComponentKind::hardware) lv.create *= factor;
        dynamic.config.schedule.add_override(from, levels);
      }
      out.push_back(std::move(constant));
      out.push_back(std::move(dynamic));
      break;
    }
    case 6:
      for (CostClass cat : spec.bias_categories) {
        for (double a : spec.alphas) {
          std::ostringstream name;
          name << to_string(cat) << "_alpha" << format_number(a);
          Condition c = make_condition(spec, name.str(), truth(base_dim), 2);
          c.alpha = a;
          c.bias_category = cat;
          c.config.schedule.believed_bias_alpha = a;
          c.config.schedule.biased_classes = {false, false, false};
          c.config.schedule.biased_classes[static_cast<std::size_t>(cat)] = true;
          if (spec.bias_budget) {
            c.budget = spec.bias_budget;
            c.config.stop.max_budget = spec.bias_budget;
            c.config.stop.max_iterations = spec.iteration_cap;
          }
          out.push_back(std::move(c));
        }
      }
      break;
    default:
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trials

ClassCounts count_classes(const DesignSpace& space, const OptimizationTrace& trace) {
  ClassCounts counts;
  for (const auto& s : trace.steps) {
    if (s.initial) continue;
    int hw = -1, sw = -1;
    for (std::size_t g = 0; g < space.group_count(); ++g) {
      const int c = static_cast<int>(s.class_per_group[g]);
      const ComponentKind kind = space.groups()[g].kind;
      if (kind == ComponentKind::hardware) hw = std::max(hw, c);
      if (kind == ComponentKind::software) sw = std::max(sw, c);
    }
    if (hw >= 0) ++counts.hardware[static_cast<std::size_t>(hw)];
    if (sw >= 0) ++counts.software[static_cast<std::size_t>(sw)];
  }
  return counts;
}

TrialResult run_trial(const StudySpec& spec, const Condition& condition, Method method, int trial) {
  TrialResult result;
  TrialSummary& s = result.summary;
  s.study = spec.study_id;
  s.condition = condition.name;
  s.method = method;
  s.trial = trial;
  s.seed = spec.base_seed + static_cast<std::uint64_t>(trial);
  s.function = condition.truth.name();
  s.dimension = condition.truth.dimension;
  s.groups = condition.groups;
  s.budget = condition.budget;
  s.hardware_create = condition.hardware_create;
  s.software_create = condition.software_create;
  s.alpha = condition.alpha;
  s.bias_category = condition.bias_category;
  s.schedule_kind = condition.schedule_kind;

  RunConfig config = condition.config;
  config.seed = s.seed;
  config.acquisition.mode = method == Method::baseline ? AcquisitionMode::standard_ei : AcquisitionMode::cost_aware;

  const GroundTruth& gt = condition.truth;
  std::mt19937_64 noise_rng(derive_seed({s.seed, kNoiseStream}));
  const NoiseModel noise = spec.noise;
  const Evaluator evaluate = [&](const Configuration& x) {
    return -noisy_observe(gt, noise, x.values(), noise_rng);
  };

  try {
    result.trace = run(config, evaluate);
  } catch (const std::exception& e) {
    result.trace.status = RunStatus::aborted;
    result.trace.message = e.what();
  }
  const OptimizationTrace& trace = result.trace;

  s.status = std::string(to_string(trace.status));
  s.message = trace.message;
  for (const auto& w : trace.warnings) s.message += (s.message.empty() ? "" : "; ") + w;
  s.evaluations = static_cast<int>(trace.steps.size());
  s.iterations = std::max(0, s.evaluations - config.init_samples);
  s.final_cumulative_cost = trace.cumulative_cost();

  for (const auto& step : trace.steps) result.noiseless.push_back(gt(step.realized));
  result.regret = regret(trace, [&](const Configuration& x) { return gt(x); }, gt.optimum_value);
  if (!result.regret.empty()) {
    s.final_regret = result.regret.back();
    const auto first_min = std::find(result.regret.begin(), result.regret.end(), s.final_regret);
    s.min_regret_cost = trace.steps[static_cast<std::size_t>(first_min - result.regret.begin())].cumulative_true_cost;
    s.best_observed = trace.steps.back().best_so_far;
  } else {
    s.final_regret = std::nan("");
    s.min_regret_cost = 0.0;
    s.best_observed = std::nan("");
  }
  s.classes = count_classes(config.space, trace);

  for (const Phase& p : condition.phases) {
    int n = 0;
    for (const auto& step : trace.steps) {
      if (step.iteration < p.first || step.iteration > p.last) continue;
      for (std::size_t g = 0; g < config.space.group_count(); ++g)
        if (config.space.groups()[g].kind == ComponentKind::hardware && step.class_per_group[g] == CostClass::create) {
          ++n;
          break;
        }
    }
    s.phase_hardware_create.push_back(n);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Summary CSV

const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols = {
      "study", "condition", "method", "trial", "seed", "function", "dimension", "groups", "budget",
      "hardware_create_cost", "software_create_cost", "alpha", "bias_category", "schedule", "status",
      "evaluations", "iterations", "final_regret", "min_regret_cost", "final_cumulative_cost",
      "best_observed", "hardware_tweak", "hardware_swap", "hardware_create", "software_tweak",
      "software_swap", "software_create", "phase1_hardware_create", "phase2_hardware_create",
      "phase3_hardware_create", "message"};
  return cols;
}

void write_summary_header(std::ostream& out) {
  const auto& cols = summary_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

void write_summary_row(std::ostream& out, const TrialSummary& s) {
  std::vector<std::string> row = {
      std::to_string(s.study), s.condition, std::string(to_string(s.method)), std::to_string(s.trial),
      std::to_string(s.seed), s.function, std::to_string(s.dimension), std::to_string(s.groups),
      opt_number(s.budget), opt_number(s.hardware_create), opt_number(s.software_create), opt_number(s.alpha),
      s.bias_category ? std::string(to_string(*s.bias_category)) : "", s.schedule_kind, s.status,
      std::to_string(s.evaluations), std::to_string(s.iterations), format_number(s.final_regret),
      format_number(s.min_regret_cost), format_number(s.final_cumulative_cost), format_number(s.best_observed)};
  for (int v : s.classes.hardware) row.push_back(std::to_string(v));
  for (int v : s.classes.software) row.push_back(std::to_string(v));
  for (std::size_t p = 0; p < 3; ++p)
    row.push_back(p < s.phase_hardware_create.size() ? std::to_string(s.phase_hardware_create[p]) : "");
  row.push_back(csv_escape(s.message));
  for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
  out << '\n';
}

StudyResult run_study(const StudySpec& spec, const RunOptions& options) {
  const std::vector<Condition> conditions = expand_conditions(spec);
  struct Job {
    std::size_t condition;
    Method method;
    int trial;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < conditions.size(); ++c)
    for (Method m : spec.methods)
      for (int t = 0; t < spec.trials; ++t) jobs.push_back({c, m, t});

  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);

  StudyResult result;
  result.trials.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex write_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      const Condition& cond = conditions[job.condition];
      TrialResult r = run_trial(spec, cond, job.method, job.trial);
      if (options.out_dir && options.write_traces) {
        const std::string file = "trace_" + std::to_string(spec.study_id) + "_" + cond.name + "_" +
                                 std::string(to_string(job.method)) + "_" + std::to_string(job.trial) + ".csv";
        std::ostringstream buf;
        const Metadata meta = {{"study", std::to_string(spec.study_id)},
                               {"condition", cond.name},
                               {"method", std::string(to_string(job.method))},
                               {"trial", std::to_string(job.trial)},
                               {"seed", std::to_string(r.summary.seed)}};
        write_trace_csv(buf, cond.config.space, r.trace, meta, {{"noiseless_f", r.noiseless}, {"regret", r.regret}});
        std::lock_guard lock(write_mutex);
        std::ofstream(*options.out_dir / file) << buf.str();
      }
      result.trials[i] = std::move(r.summary);
    }
  };

  const int n_threads = std::max(1, std::min<int>(options.parallelism, static_cast<int>(jobs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  if (options.out_dir) {
    std::ofstream out(*options.out_dir / ("summary_" + std::to_string(spec.study_id) + ".csv"));
    write_summary_header(out);
    for (const auto& s : result.trials) write_summary_row(out, s);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Aggregation

Stats describe(std::vector<double> v) {
  Stats st;
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.empty()) return {std::nan(""), std::nan(""), std::nan("")};
  const double n = static_cast<double>(v.size());
  st.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - st.mean) * (x - st.mean);
    st.sd = std::sqrt(ss / (n - 1.0));
  }
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  st.median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  return st;
}

std::vector<CsvRow> read_csv(std::istream& in) {
  auto parse_line = [&](std::string& line, std::vector<std::string>& fields) -> bool {
    fields.clear();
    if (!std::getline(in, line)) return false;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0;; ++i) {
      if (i == line.size()) {
        if (quoted) {  // quoted newline
          std::string more;
          if (!std::getline(in, more)) break;
          field += '\n';
          line += '\n' + more;
          --i;
          continue;
        }
        break;
      }
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          field += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else if (c != '\r') {
        field += c;
      }
    }
    fields.push_back(std::move(field));
    return true;
  };

  std::vector<CsvRow> rows;
  std::string line;
  std::vector<std::string> header, fields;
  if (!parse_line(line, header)) return rows;
  while (parse_line(line, fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) throw DataError("csv row has " + std::to_string(fields.size()) +
                                                        " fields, header has " + std::to_string(header.size()));
    CsvRow row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = fields[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

const std::vector<std::string> kClassColumns = {"hardware_tweak", "hardware_swap", "hardware_create",
                                                "software_tweak", "software_swap", "software_create"};

double to_double(const CsvRow& row, const std::string& key) {
  const auto it = row.find(key);
  if (it == row.end() || it->second.empty()) return std::nan("");
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    return std::nan("");
  }
}

}  // namespace

std::vector<AggregateRow> summarize(const std::vector<CsvRow>& rows) {
  struct Key {
    int study;
    std::string condition, method;
    auto operator<=>(const Key&) const = default;
  };
  std::map<Key, std::vector<const CsvRow*>> groups;
  std::vector<Key> order;
  for (const auto& r : rows) {
    Key k{static_cast<int>(to_double(r, "study")), r.count("condition") ? r.at("condition") : "",
          r.count("method") ? r.at("method") : ""};
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const Key& k : order) {
    const auto& members = groups[k];
    AggregateRow a;
    a.study = k.study;
    a.condition = k.condition;
    a.method = k.method;
    a.trials = static_cast<int>(members.size());
    std::vector<double> regret, mrc, cost;
    for (const CsvRow* r : members) {
      if (r->count("status") && r->at("status") == "aborted") {
        ++a.aborted;
        continue;
      }
      regret.push_back(to_double(*r, "final_regret"));
      mrc.push_back(to_double(*r, "min_regret_cost"));
      cost.push_back(to_double(*r, "final_cumulative_cost"));
      for (const auto& c : kClassColumns) {
        const double v = to_double(*r, c);
        if (!std::isnan(v)) a.class_totals[c] += static_cast<long>(v);
      }
    }
    const Stats sr = describe(regret), sm = describe(mrc), sc = describe(cost);
    a.mean_final_regret = sr.mean, a.sd_final_regret = sr.sd, a.median_final_regret = sr.median;
    a.mean_min_regret_cost = sm.mean, a.sd_min_regret_cost = sm.sd, a.median_min_regret_cost = sm.median;
    a.mean_final_cost = sc.mean, a.sd_final_cost = sc.sd, a.median_final_cost = sc.median;
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<AggregateRow> summarize_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("summary_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<CsvRow> rows;
  for (const auto& f : files) {
    std::ifstream in(f);
    auto part = read_csv(in);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return summarize(rows);
}

void write_aggregate(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "study,condition,method,trials,aborted,mean_final_regret,sd_final_regret,median_final_regret,"
         "mean_min_regret_cost,sd_min_regret_cost,median_min_regret_cost,mean_final_cost,sd_final_cost,"
         "median_final_cost";
  for (const auto& c : kClassColumns) out << ',' << c;
  out << '\n';
  for (const auto& a : rows) {
    out << a.study << ',' << csv_escape(a.condition) << ',' << a.method << ',' << a.trials << ',' << a.aborted;
    for (double v : {a.mean_final_regret, a.sd_final_regret, a.median_final_regret, a.mean_min_regret_cost,
                     a.sd_min_regret_cost, a.median_min_regret_cost, a.mean_final_cost, a.sd_final_cost,
                     a.median_final_cost})
      out << ',' << format_number(v);
    for (const auto& c : kClassColumns) {
      const auto it = a.class_totals.find(c);
      out << ',' << (it == a.class_totals.end() ? 0 : it->second);
    }
    out << '\n';
  }
}

}  // namespace cabo
