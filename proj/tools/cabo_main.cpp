// cabo: benchmark runner, aggregation and session service.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cabo/errors.hpp"
#include "cabo/service.hpp"
#include "cabo/study.hpp"

namespace {

cabo::StudySpec load_spec(int study, const std::string& config_path) {
  if (config_path.empty()) return cabo::StudySpec::preset(study);
  std::ifstream in(config_path);
  if (!in) throw cabo::ConfigurationError("cannot open config '" + config_path + "'");
  nlohmann::json j = nlohmann::json::parse(in);
  if (study > 0) j["study"] = study;
  return cabo::study_spec_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cost-aware Bayesian optimization for prototyping"};
  app.require_subcommand(1);

  // bench run
  auto* bench = app.add_subcommand("bench", "Benchmark studies");
  bench->require_subcommand(1);
  auto* bench_run = bench->add_subcommand("run", "Run a study and write trace/summary CSVs");
  int study = 0;
  std::string function, config_path, out_dir = "results";
  std::optional<int> trials, iterations;
  std::optional<std::uint64_t> seed;
  int parallel = 1;
  bool no_traces = false;
  bench_run->add_option("--study", study, "Study id (1-6)")->check(CLI::Range(1, 6));
  bench_run->add_option("--function", function, "Ground truth (rosenbrock, ackley, goldstein_price, levy, rosenbrock_nd)");
  bench_run->add_option("--trials", trials, "Trials per condition and method");
  bench_run->add_option("--iterations", iterations, "Post-initialization iterations");
  bench_run->add_option("--seed", seed, "Base seed (trial t uses seed + t)");
  bench_run->add_option("--out", out_dir, "Output directory");
  bench_run->add_option("--parallel", parallel, "Concurrent trials")->check(CLI::PositiveNumber);
  bench_run->add_option("--config", config_path, "Study config JSON")->check(CLI::ExistingFile);
  bench_run->add_flag("--no-traces", no_traces, "Only write the summary CSV");

  // summarize
  auto* summarize = app.add_subcommand("summarize", "Aggregate summary CSVs");
  std::string in_dir, summary_out;
  summarize->add_option("--in", in_dir, "Directory with summary_<study>.csv files")->required();
  summarize->add_option("--out", summary_out, "Write the table here instead of stdout");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  int port = 8080;
  std::string host = "127.0.0.1", data_dir, ui_dir;
  serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--data-dir", data_dir, "Session event-log directory (env CABO_DATA_DIR overrides)");
  serve->add_option("--ui-dir", ui_dir, "Serve static files from this directory at /");

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench_run->parsed()) {
      if (study == 0 && config_path.empty()) throw cabo::ConfigurationError("--study or --config is required");
      cabo::StudySpec spec = load_spec(study, config_path);
      if (!function.empty()) spec.function = function;
      if (trials) spec.trials = *trials;
      if (iterations) spec.iterations = *iterations;
      if (seed) spec.base_seed = *seed;
      spec.validate();
      cabo::RunOptions options;
      options.parallelism = parallel;
      options.out_dir = out_dir;
      options.write_traces = !no_traces;
      const auto result = cabo::run_study(spec, options);
      int aborted = 0;
      for (const auto& t : result.trials) aborted += t.status == "aborted";
      std::cout << "study " << spec.study_id << ": " << result.trials.size() << " trials written to " << out_dir
                << (aborted ? " (" + std::to_string(aborted) + " aborted)" : std::string()) << '\n';
      cabo::write_aggregate(std::cout, cabo::summarize_directory(out_dir));
      return 0;
    }
    if (summarize->parsed()) {
      const auto rows = cabo::summarize_directory(in_dir);
      if (summary_out.empty()) {
        cabo::write_aggregate(std::cout, rows);
      } else {
        std::ofstream out(summary_out);
        cabo::write_aggregate(out, rows);
      }
      return 0;
    }
    if (serve->parsed()) {
      if (const char* env = std::getenv("CABO_DATA_DIR"); env && *env) data_dir = env;
      if (data_dir.empty()) data_dir = "cabo-data";
      cabo::ServerOptions options;
      options.host = host;
      options.port = port;
      options.data_dir = data_dir;
      if (!ui_dir.empty()) options.ui_dir = ui_dir;
      return cabo::serve(options);
    }
  } catch (const cabo::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
