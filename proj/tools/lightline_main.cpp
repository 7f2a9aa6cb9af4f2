#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lightline/cli/cli.hpp"

int main(int argc, char** argv) {
  using namespace lightline::cli;

  CLI::App app{"lightline: disaggregated RL training for tool-using agents"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 ok, 1 runtime or invariant failure, 2 invalid config or input, "
      "3 server unreachable.\n\n" +
      run_config_reference());
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")
      ->capture_default_str();

  std::string config_path;
  auto* serve = app.add_subcommand("serve", "Run the training server for external agent pools");
  serve->add_option("--config", config_path, "Run config JSON")->required();

  std::string server_url;
  std::string scenario;
  int workers = 1;
  double fail_rate = 0.0;
  auto* agents = app.add_subcommand("agents", "Run an agent worker pool against a server");
  agents->add_option("--server-url", server_url, "e.g. http://127.0.0.1:8765")->required();
  agents->add_option("--scenario", scenario, "guess_number | keyword_rag | calculator")->required();
  agents->add_option("--workers", workers, "Concurrent workers")->capture_default_str();
  agents->add_option("--fail-rate", fail_rate, "Fraction of rollouts to sabotage")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  std::optional<double> train_fail_rate;
  auto* train = app.add_subcommand("train", "Server and worker pool in one process over loopback");
  train->add_option("--config", config_path, "Run config JSON")->required();
  train->add_option("--fail-rate", train_fail_rate, "Overrides the config's fail_rate");

  std::string checkpoint;
  std::size_t n = 200;
  std::uint64_t seed = 0;
  auto* eval = app.add_subcommand("eval", "Mean reward of greedy rollouts of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--scenario", scenario, "Scenario name")->required();
  eval->add_option("--n", n, "Number of rollouts")->capture_default_str();
  eval->add_option("--seed", seed, "Master seed; the dataset derives from it")->capture_default_str();

  std::string metrics;
  auto* curves = app.add_subcommand("export-curves", "Per-step reward and loss table");
  curves->add_option("--metrics", metrics, "metrics.csv from a run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  // stdout carries command results; logs go to stderr.
  spdlog::set_default_logger(spdlog::stderr_color_mt("lightline"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  if (*serve) return cmd_serve(config_path);
  if (*agents) return cmd_agents(server_url, scenario, workers, fail_rate);
  if (*train) return cmd_train(config_path, train_fail_rate);
  if (*eval) return cmd_eval(checkpoint, scenario, n, seed);
  if (*curves) return cmd_export_curves(metrics);
  return kExitConfig;
}
