#pragma once

#include <filesystem>
#include <vector>

#include "lightline/extract/extract.hpp"
#include "lightline/rl/lightning_rl.hpp"
#include "lightline/server/server.hpp"

namespace lightline::server {

struct TrainerConfig {
  rl::AdvantageConfig advantage;
  rl::LossConfig loss;
  extract::ExtractionConfig extraction;
  // Empty: write nothing.
  std::filesystem::path output_dir;
  bool write_traces = true;
};

struct StepMetrics {
  std::size_t step = 0;
  std::uint64_t policy_version = 0;
  double mean_return = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t transitions = 0;
  std::size_t tokens = 0;
};

inline constexpr const char* kMetricsHeader =
    "step,policy_version,mean_return,loss,grad_norm,transitions,tokens";
std::string metrics_row(const StepMetrics& m);

struct TrainingSummary {
  std::vector<StepMetrics> steps;
  std::size_t steps_trained = 0;
  std::size_t steps_skipped = 0;
  std::size_t groups_dropped = 0;
  std::size_t slots_total = 0;
  std::size_t slots_succeeded = 0;
  std::size_t slots_abandoned = 0;
  // Batches that passed the single-version check (every batch, or the loop throws).
  std::size_t on_policy_batches = 0;
  PolicyParams final_params;

  Json to_json() const;
};

// Runs config().total_steps generation/training rounds on `server`, whose HTTP side must
// already be serving workers. Step s draws batch_tasks consecutive tasks (cyclically) from
// `dataset`. Writes metrics.csv, traces.jsonl, policy-v0.ckpt, the final checkpoint and
// summary.json under output_dir. Leaves the server in the finished stage, also on error.
// Throws IntegrityError if an on-policy or version-counter invariant breaks.
TrainingSummary run_training_loop(TrainingServer& server, const std::vector<TaskSpec>& dataset,
                                  const TrainerConfig& cfg);

}  // namespace lightline::server
