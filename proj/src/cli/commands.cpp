#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "lightline/cli/cli.hpp"
#include "lightline/core/errors.hpp"
#include "lightline/core/rng.hpp"
#include "lightline/policy/checkpoint.hpp"

namespace lightline::cli {

namespace {

std::pair<std::string, int> split_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) {
    throw ConfigError(fmt::format("server.bind_address: expected host:port, got '{}'", bind));
  }
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    port = -1;
  }
  if (port < 0 || port > 65535) {
    throw ConfigError(fmt::format("server.bind_address: bad port in '{}'", bind));
  }
  return {bind.substr(0, colon), port};
}

server::TrainerConfig trainer_config(const RunConfig& cfg) {
  server::TrainerConfig t;
  t.advantage = cfg.advantage;
  t.loss = cfg.loss;
  t.extraction = cfg.extraction;
  t.output_dir = cfg.output_dir;
  return t;
}

void write_config_copy(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream(cfg.output_dir / "config.json") << cfg.to_json().dump(2) << '\n';
}

Json worker_summary_json(const client::RunSummary& s) {
  return Json{{"tickets", s.tickets},
              {"rollouts_ok", s.rollouts_ok},
              {"rollouts_failed", s.rollouts_failed},
              {"retries", s.retries}};
}

template <typename F>
int with_exit_codes(const F& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const client::ConnectivityError& e) {
    std::cerr << "connectivity error: " << e.what() << '\n';
    return kExitConnectivity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace

TrainOutcome run_local_training(const RunConfig& cfg) {
  auto scenario = build_scenario(cfg);
  auto params = initial_params(cfg, scenario.vocab);
  const auto [host, port] = split_bind(cfg.server.bind_address);
  server::TrainingServer srv(cfg.server, scenario.vocab, std::move(params), cfg.sampling_key());
  srv.start(host, port);
  if (!cfg.output_dir.empty()) write_config_copy(cfg);

  std::atomic<bool> stop{false};
  client::RunSummary workers;
  std::exception_ptr worker_error;
  std::thread pool([&] {
    try {
      workers = client::run_worker_pool(srv.base_url(), scenario.runtime, cfg.workers, &stop);
    } catch (...) {
      worker_error = std::current_exception();
      srv.finish();
    }
  });

  TrainOutcome out;
  std::exception_ptr train_error;
  try {
    out.training = server::run_training_loop(srv, scenario.dataset, trainer_config(cfg));
  } catch (...) {
    train_error = std::current_exception();
    stop = true;
  }
  pool.join();
  srv.stop();
  if (worker_error) std::rethrow_exception(worker_error);
  if (train_error) std::rethrow_exception(train_error);

  out.workers = workers;
  if (workers.rollouts_ok + workers.rollouts_failed != workers.tickets) {
    throw IntegrityError("worker summary does not account for every ticket");
  }
  return out;
}

EvalResult evaluate_policy(const PolicyParams& params, const agents::Scenario& scenario,
                           std::size_t n) {
  if (scenario.dataset.empty()) throw ConfigError("scenario dataset is empty");
  auto llm = std::make_shared<client::LocalPolicyClient>(std::make_shared<const PolicyParams>(params),
                                                         scenario.vocab, true);
  EvalResult r;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& task = scenario.dataset[i % scenario.dataset.size()];
    auto ctx = std::make_shared<client::AgentContext>(task.payload, llm, scenario.runtime.tools,
                                                      std::chrono::seconds(30));
    const auto res = client::guarded_execute(scenario.runtime.harness, ctx, std::chrono::seconds(60));
    ++r.rollouts;
    if (!res.ok()) {
      ++r.failures;
      continue;
    }
    total += scenario.runtime.reward(*res.answer, task.payload);
  }
  r.mean_reward = n ? total / static_cast<double>(n) : 0.0;
  return r;
}

std::string export_curves(const std::string& metrics_csv) {
  std::istringstream in(metrics_csv);
  std::string line;
  if (!std::getline(in, line) || line != server::kMetricsHeader) {
    throw ConfigError(fmt::format("metrics file must start with '{}'", server::kMetricsHeader));
  }
  std::string out = "step,mean_return,loss,return_ema\n";
  std::optional<double> ema;
  for (std::size_t row = 2; std::getline(in, line); ++row) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    if (cols.size() != 7) {
      throw ConfigError(fmt::format("metrics line {}: expected 7 columns, found {}", row, cols.size()));
    }
    double ret = 0.0;
    try {
      ret = std::stod(cols[2]);
      (void)std::stod(cols[3]);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("metrics line {}: non-numeric value", row));
    }
    ema = ema ? 0.9 * *ema + 0.1 * ret : ret;
    out += fmt::format("{},{},{},{}\n", cols[0], cols[2], cols[3], *ema);
  }
  return out;
}

// ------------------------------------------------------------------ commands

int cmd_serve(const std::filesystem::path& config_path) {
  return with_exit_codes([&] {
    const auto cfg = load_run_config(config_path);
    auto scenario = build_scenario(cfg);
    const auto [host, port] = split_bind(cfg.server.bind_address);
    server::TrainingServer srv(cfg.server, scenario.vocab, initial_params(cfg, scenario.vocab),
                               cfg.sampling_key());
    srv.start(host, port);
    write_config_copy(cfg);
    std::cout << fmt::format("serving {} on {}", cfg.scenario, srv.base_url()) << std::endl;
    const auto summary = server::run_training_loop(srv, scenario.dataset, trainer_config(cfg));
    // Give polling workers a chance to observe the finished stage before the socket closes.
    std::this_thread::sleep_for(std::chrono::seconds(2));
    srv.stop();
    std::cout << summary.to_json().dump() << std::endl;
    return kExitOk;
  });
}

int cmd_agents(const std::string& server_url, const std::string& scenario_name, int workers,
               double fail_rate) {
  return with_exit_codes([&] {
    agents::ScenarioOptions opts;
    const auto scenario = agents::make_scenario(scenario_name, opts);
    client::WorkerPoolConfig cfg;
    cfg.num_workers = workers;
    cfg.fail_rate = fail_rate;
    cfg.fault_seed = derive_key(0, "faults");
    const auto summary = client::run_worker_pool(server_url, scenario.runtime, cfg);
    std::cout << worker_summary_json(summary).dump() << std::endl;
    return kExitOk;
  });
}

int cmd_train(const std::filesystem::path& config_path, std::optional<double> fail_rate) {
  return with_exit_codes([&] {
    auto cfg = load_run_config(config_path);
    if (fail_rate) {
      if (!(*fail_rate >= 0.0 && *fail_rate <= 1.0)) throw ConfigError("--fail-rate must lie in [0, 1]");
      cfg.fail_rate = *fail_rate;
      cfg.workers.fail_rate = *fail_rate;
    }
    const auto out = run_local_training(cfg);
    Json j = out.training.to_json();
    j["workers"] = worker_summary_json(out.workers);
    j["output_dir"] = cfg.output_dir.string();
    std::cout << j.dump() << std::endl;
    return kExitOk;
  });
}

int cmd_eval(const std::filesystem::path& checkpoint, const std::string& scenario_name,
             std::size_t n, std::uint64_t seed) {
  return with_exit_codes([&] {
    if (!std::filesystem::is_regular_file(checkpoint)) {
      throw ConfigError(fmt::format("checkpoint '{}' does not exist", checkpoint.string()));
    }
    const auto params = policy::load_checkpoint(checkpoint);
    agents::ScenarioOptions opts;
    RunConfig seeds;
    seeds.seed = seed;
    opts.seed = seeds.dataset_seed();
    const auto scenario = agents::make_scenario(scenario_name, opts);
    if (params.vocab_size != scenario.vocab.size()) {
      throw ConfigError(fmt::format("checkpoint vocab size {} does not match the {} vocab size {}",
                                    params.vocab_size, scenario_name, scenario.vocab.size()));
    }
    const auto r = evaluate_policy(params, scenario, n);
    std::cout << Json{{"scenario", scenario_name},
                      {"policy_version", params.version},
                      {"n", n},
                      {"seed", seed},
                      {"mean_reward", r.mean_reward},
                      {"failures", r.failures}}
                     .dump()
              << std::endl;
    return kExitOk;
  });
}

int cmd_export_curves(const std::filesystem::path& metrics_path) {
  return with_exit_codes([&] {
    std::ifstream in(metrics_path);
    if (!in) throw ConfigError(fmt::format("cannot open metrics file '{}'", metrics_path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    std::cout << export_curves(ss.str());
    return kExitOk;
  });
}

}  // namespace lightline::cli
