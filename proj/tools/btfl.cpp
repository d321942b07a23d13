// btfl command-line runner: train, bench, report, selftest.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "btfl.hpp"

namespace fs = std::filesystem;
using namespace btfl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

ExperimentConfig load_config(const std::optional<std::string>& path) {
  ExperimentConfig cfg;
  if (path) {
    std::string text;
    try {
      text = read_text_file(*path);
    } catch (const IncompleteInput&) {
      throw ConfigError("--config", "cannot read " + *path);
    }
    cfg = parse_config(text);
  }
  apply_env_overrides(cfg);
  validate(cfg);
  return cfg;
}

// Fresh IND draws per client, used only for the training report.
double ind_test_accuracy(const Experiment& ex, const ClientState& client, const HeadModel& head) {
  const Dataset test = generate_client_data(ex.task, client.class_distribution, 500,
                                            derive_seed(ex.seeds.master, "ind_test", client.client_id));
  return accuracy(head, test);
}

int cmd_train(const std::optional<std::string>& config_path, const std::optional<std::string>& out) {
  ExperimentConfig cfg = load_config(config_path);
  if (out) cfg.output_dir = *out;

  Experiment ex;
  try {
    ex = run_experiment(cfg.experiment);
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(e.what()) + " (training.lr = " + detail::format_double(cfg.experiment.training.lr) +
                          ", training.personalize_lr = " +
                          detail::format_double(cfg.experiment.training.personalize_lr) + ")");
  }
  const fs::path state_path = fs::path(cfg.output_dir) / "state.json";
  save_state(state_path, ex);

  std::printf("%-6s  %7s  %9s  %9s  %9s  %9s\n", "client", "n_train", "train_loc", "train_glb", "ind_loc",
              "ind_glb");
  for (const auto& c : ex.clients) {
    std::printf("%-6zu  %7zu  %9.2f  %9.2f  %9.2f  %9.2f\n", c.client_id, c.train.size(),
                100.0 * accuracy(c.personal_head, c.train), 100.0 * accuracy(c.global_head, c.train),
                100.0 * ind_test_accuracy(ex, c, c.personal_head), 100.0 * ind_test_accuracy(ex, c, c.global_head));
  }
  std::printf("state written to %s\n", state_path.string().c_str());
  return kExitOk;
}

int cmd_bench(const std::string& state_path, const std::optional<std::string>& config_path,
              const std::optional<std::string>& out) {
  ExperimentConfig cfg = load_config(config_path);
  if (out) cfg.output_dir = *out;
  const Experiment ex = load_state(state_path);

  MethodContext ctx = cfg.method_context();
  ctx.global_feature_mean = global_feature_mean(ex);
  const BenchResult result = run_benchmark(ex, cfg.bench_params(), ctx);
  write_bench_outputs(cfg.output_dir, result);

  std::cout << summary_table(result.summary);
  std::printf("results written to %s\n", cfg.output_dir.c_str());
  return kExitOk;
}

int cmd_report(const std::string& dir) {
  const auto rows = report(load_accuracy_grid(dir));
  std::cout << summary_table(rows);
  return kExitOk;
}

int cmd_selftest(const std::optional<std::string>& config_path) {
  const ExperimentConfig cfg = load_config(config_path);
  SelftestOptions opt;
  opt.lambda = cfg.adapter.lambda;
  opt.quadrature = cfg.adapter.quadrature;
  opt.seed = cfg.experiment.seed;
  bool all = true;
  for (const auto& r : run_selftest(opt)) {
    std::printf("%-4s  %-18s  %6.2fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                r.detail.c_str());
    all = all && r.passed;
  }
  std::printf("%s\n", all ? "all properties hold" : "property failures detected");
  return all ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-head Bayesian test-time adaptation: simulator, benchmark and self-test"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::string> out_dir;
  std::string state_path;
  std::string in_dir;

  auto* train = app.add_subcommand("train", "run federated training and write state.json");
  train->add_option("--config", config_path, "configuration file (INI or JSON)");
  train->add_option("--out", out_dir, "output directory (overrides output.dir)");

  auto* bench = app.add_subcommand("bench", "evaluate all methods on the five test streams");
  bench->add_option("--state", state_path, "state file written by train")->required();
  bench->add_option("--config", config_path, "configuration file (INI or JSON)");
  bench->add_option("--out", out_dir, "output directory (overrides output.dir)");

  auto* rep = app.add_subcommand("report", "rebuild the summary table from bench traces");
  rep->add_option("--in", in_dir, "bench output directory")->required();

  auto* self = app.add_subcommand("selftest", "run the numerical property battery");
  self->add_option("--config", config_path, "configuration file (INI or JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(config_path, out_dir);
    if (*bench) return cmd_bench(state_path, config_path, out_dir);
    if (*rep) return cmd_report(in_dir);
    if (*self) return cmd_selftest(config_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
