#include "lightline/server/trainer.hpp"

#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "lightline/core/errors.hpp"
#include "lightline/core/trace_io.hpp"
#include "lightline/policy/checkpoint.hpp"

namespace lightline::server {

std::string metrics_row(const StepMetrics& m) {
  return fmt::format("{},{},{},{},{},{},{}", m.step, m.policy_version, m.mean_return, m.loss,
                     m.grad_norm, m.transitions, m.tokens);
}

Json TrainingSummary::to_json() const {
  return Json{{"steps_trained", steps_trained},     {"steps_skipped", steps_skipped},
              {"groups_dropped", groups_dropped},   {"slots_total", slots_total},
              {"slots_succeeded", slots_succeeded}, {"slots_abandoned", slots_abandoned},
              {"on_policy_batches", on_policy_batches},
              {"final_version", final_params.version}};
}

namespace {

// Rollouts of one task that survived the generation stage.
using Groups = std::map<std::string, std::vector<const RolloutTrace*>>;

Groups successful_groups(const std::vector<RolloutTrace>& traces) {
  Groups g;
  for (const auto& t : traces) {
    if (t.status == RolloutStatus::success) g[t.task_id].push_back(&t);
  }
  return g;
}

// Drops tasks with fewer than `min_size` rollouts that produced transitions.
std::vector<Transition> prune_small_groups(std::vector<Transition> transitions,
                                           std::size_t min_size) {
  std::map<std::string, std::set<std::string>> rollouts;
  for (const auto& t : transitions) rollouts[t.task_id].insert(t.rollout_id);
  std::erase_if(transitions,
                [&](const Transition& t) { return rollouts[t.task_id].size() < min_size; });
  return transitions;
}

}  // namespace

TrainingSummary run_training_loop(TrainingServer& server, const std::vector<TaskSpec>& dataset,
                                  const TrainerConfig& cfg) {
  struct FinishGuard {
    TrainingServer& s;
    ~FinishGuard() { s.finish(); }
  } guard{server};

  const auto& scfg = server.config();
  cfg.advantage.validate();
  cfg.loss.validate();
  cfg.extraction.validate();
  if (dataset.empty()) throw ConfigError("dataset is empty");
  if (static_cast<std::size_t>(scfg.batch_tasks) > dataset.size()) {
    throw ConfigError(fmt::format("batch_tasks {} exceeds the dataset size {}", scfg.batch_tasks,
                                  dataset.size()));
  }
  const std::size_t min_group =
      std::max<std::size_t>(scfg.min_group_size, cfg.advantage.estimator == rl::Estimator::grpo ? 2 : 1);

  const bool write = !cfg.output_dir.empty();
  std::ofstream metrics;
  const auto traces_path = cfg.output_dir / "traces.jsonl";
  if (write) {
    std::filesystem::create_directories(cfg.output_dir);
    metrics.open(cfg.output_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!metrics) throw Error("cannot write metrics.csv");
    metrics << kMetricsHeader << '\n';
    if (cfg.write_traces) std::filesystem::remove(traces_path);
  }

  TrainingSummary summary;
  PolicyParams params = server.params();
  const std::uint64_t initial_version = params.version;
  if (write) policy::save_checkpoint(params, cfg.output_dir / policy::checkpoint_filename(params.version));

  const auto steps = static_cast<std::size_t>(scfg.total_steps);
  const auto batch = static_cast<std::size_t>(scfg.batch_tasks);
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<TaskSpec> tasks;
    for (std::size_t i = 0; i < batch; ++i) tasks.push_back(dataset[(step * batch + i) % dataset.size()]);

    server.open_generation(step, tasks);
    server.await_generation();
    if (server.stage() == Stage::finished) throw Error("training aborted during generation");
    const auto counts = server.counts();
    const auto traces = server.close_generation();
    summary.slots_total += counts.succeeded + counts.abandoned;
    summary.slots_succeeded += counts.succeeded;
    summary.slots_abandoned += counts.abandoned;
    if (write && cfg.write_traces) append_traces_jsonl(traces_path, traces);

    std::vector<Transition> transitions;
    double return_sum = 0.0;
    std::size_t returns = 0;
    for (const auto& [task, group] : successful_groups(traces)) {
      for (const auto* t : group) {
        return_sum += extract::compute_return(extract::attach_air_rewards(*t, cfg.extraction));
        ++returns;
      }
      if (group.size() < static_cast<std::size_t>(scfg.min_group_size)) {
        spdlog::warn("step {}: dropping task {} with {} successful rollouts (< {})", step, task,
                     group.size(), scfg.min_group_size);
        ++summary.groups_dropped;
        continue;
      }
      for (const auto* t : group) {
        auto ts = extract::trace_to_transitions(*t, cfg.extraction);
        transitions.insert(transitions.end(), std::make_move_iterator(ts.begin()),
                           std::make_move_iterator(ts.end()));
      }
    }
    transitions = prune_small_groups(std::move(transitions), min_group);

    StepMetrics row;
    row.step = step + 1;
    if (transitions.empty()) {
      spdlog::warn("step {}: no usable groups, skipping the update", step);
      ++summary.steps_skipped;
      row.policy_version = params.version;
      row.mean_return = returns ? return_sum / static_cast<double>(returns) : 0.0;
    } else {
      const auto tb = rl::TrainingBatch::from_transitions(std::move(transitions), params.version);
      // train_step re-checks this; the explicit pass keeps the count honest.
      rl::validate_batch(tb, cfg.advantage);
      ++summary.on_policy_batches;
      auto result = rl::train_step(params, tb, cfg.advantage, cfg.loss);
      if (result.params.version != params.version + 1) {
        throw IntegrityError("policy version did not advance by exactly one");
      }
      params = std::move(result.params);
      server.set_params(params);
      ++summary.steps_trained;
      row.policy_version = params.version;
      row.mean_return = result.report.mean_return;
      row.loss = result.report.loss;
      row.grad_norm = result.report.grad_norm;
      row.transitions = result.report.transitions;
      row.tokens = result.report.tokens;
    }
    if (params.version != initial_version + summary.steps_trained) {
      throw IntegrityError(fmt::format("version counter {} disagrees with {} trained steps",
                                       params.version, summary.steps_trained));
    }
    summary.steps.push_back(row);
    if (write) metrics << metrics_row(row) << '\n' << std::flush;
    spdlog::info("step {}/{}: v{} return {:.4f} loss {:.5f} transitions {}", row.step, steps,
                 row.policy_version, row.mean_return, row.loss, row.transitions);
  }

  summary.final_params = params;
  if (write) {
    policy::save_checkpoint(params, cfg.output_dir / policy::checkpoint_filename(params.version));
    policy::save_checkpoint(params, cfg.output_dir / "policy-final.ckpt");
    std::ofstream(cfg.output_dir / "summary.json") << summary.to_json().dump(2) << '\n';
  }
  return summary;
}

}  // namespace lightline::server
