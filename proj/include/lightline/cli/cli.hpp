#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "lightline/agents/scenarios.hpp"
#include "lightline/client/runtime.hpp"
#include "lightline/server/trainer.hpp"

namespace lightline::cli {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitConnectivity = 3,
};

struct RunConfig {
  std::string run_id = "run";
  std::string scenario = "guess_number";
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/run";
  server::ServerConfig server;
  rl::AdvantageConfig advantage;
  rl::LossConfig loss;
  extract::ExtractionConfig extraction;
  agents::ScenarioOptions scenario_options;
  std::size_t context_window = 8;
  // Strength of the copying prior in the initial weights; 0 gives uniform weights.
  double copy_prior = 0.0;
  std::optional<std::filesystem::path> init_checkpoint;
  client::WorkerPoolConfig workers;
  double fail_rate = 0.0;

  // Keys fanned out of the master seed.
  std::uint64_t dataset_seed() const;
  std::uint64_t sampling_key() const;
  std::uint64_t fault_seed() const;

  Json to_json() const;
};

// Every key is optional; unknown keys are rejected. Throws ParseError naming the key path
// and ConfigError for values that parse but violate a constraint.
RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);
// The defaults as a commented reference, shown by --help.
std::string run_config_reference();

// The scenario a config describes, with its dataset drawn from the derived dataset seed.
agents::Scenario build_scenario(const RunConfig& cfg);
// init_checkpoint when set, otherwise the copy-prior initializer (all-zero when copy_prior is 0).
PolicyParams initial_params(const RunConfig& cfg, const policy::Vocab& vocab);

struct TrainOutcome {
  server::TrainingSummary training;
  client::RunSummary workers;
};

// Server plus in-process worker pool over loopback HTTP.
TrainOutcome run_local_training(const RunConfig& cfg);

struct EvalResult {
  double mean_reward = 0.0;
  std::size_t rollouts = 0;
  std::size_t failures = 0;
};
// n greedy rollouts cycling through the scenario's dataset; failed rollouts score 0.
EvalResult evaluate_policy(const PolicyParams& params, const agents::Scenario& scenario,
                           std::size_t n);

// ---- commands; each returns an exit code and reports errors on stderr
int cmd_serve(const std::filesystem::path& config_path);
int cmd_agents(const std::string& server_url, const std::string& scenario, int workers,
               double fail_rate);
int cmd_train(const std::filesystem::path& config_path, std::optional<double> fail_rate);
int cmd_eval(const std::filesystem::path& checkpoint, const std::string& scenario, std::size_t n,
             std::uint64_t seed);
int cmd_export_curves(const std::filesystem::path& metrics_path);

// Rows of step,mean_return,loss,return_ema from a metrics CSV.
std::string export_curves(const std::string& metrics_csv);

}  // namespace lightline::cli
