#pragma once

// Grouped advantage estimation, token-level advantage broadcast, the clipped
// policy-gradient loss with its analytic gradient, and the train-step driver.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lightline/core/types.hpp"

namespace lightline::rl {

enum class Estimator { grpo, reinforce_pp };

std::optional<Estimator> parse_estimator(std::string_view s);
std::string_view to_string(Estimator e);

struct AdvantageConfig {
  Estimator estimator = Estimator::grpo;
  // Added to the group standard deviation before dividing.
  double epsilon_std = 1e-8;

  void validate() const;
};

struct LossConfig {
  double clip_epsilon = 0.2;
  int epochs_per_batch = 1;
  double learning_rate = 0.05;
  // Normalize by total output tokens (true) or by transition count (false).
  bool normalize_by_tokens = true;

  void validate() const;
};

// (task_id, rollout_id)
using RolloutKey = std::pair<std::string, std::string>;
using RolloutValues = std::map<RolloutKey, double>;

struct TrainingBatch {
  std::vector<Transition> transitions;
  // task_id -> rollout_ids present in the batch, sorted.
  std::map<std::string, std::vector<std::string>> grouping;
  std::uint64_t policy_version = 0;

  // Orders transitions by (task_id, rollout_id, turn_index) and derives the grouping.
  static TrainingBatch from_transitions(std::vector<Transition> transitions,
                                        std::uint64_t policy_version);

  std::size_t token_count() const;
};

// Throws IntegrityError on a mixed-version batch, a missing reward, mismatched logprob
// lengths or empty outputs; ConfigError on a GRPO group with fewer than two rollouts.
void validate_batch(const TrainingBatch& batch, const AdvantageConfig& cfg);

// Shared (credit-assigned) reward of each rollout. IntegrityError if a rollout disagrees.
RolloutValues trajectory_returns(const TrainingBatch& batch);

// (R - group mean) / (population std + epsilon), per task. Groups whose returns are all
// identical get exactly 0.
RolloutValues grpo_advantages(const TrainingBatch& batch, const AdvantageConfig& cfg);

// R - mean over every rollout in the batch.
RolloutValues reinforcepp_advantages(const TrainingBatch& batch, const AdvantageConfig& cfg);

RolloutValues estimate_advantages(const TrainingBatch& batch, const AdvantageConfig& cfg);

// One vector per transition, one entry per output token, all equal to the rollout advantage.
std::vector<std::vector<double>> broadcast_token_advantages(const TrainingBatch& batch,
                                                            const RolloutValues& advantages);

struct LossResult {
  double loss = 0.0;
  // d loss / d weights.
  std::vector<double> gradient;
  // Gradient before division by the normalizer, accumulated in transition order.
  std::vector<double> gradient_sum;
  double normalizer = 1.0;
  std::size_t tokens = 0;
};

// loss = -(1/Z) sum_t sum_j min(rho_j A_j, clip(rho_j, 1-eps, 1+eps) A_j),
// rho_j = exp(log pi(y_j | context) - old_logprob_j).
LossResult policy_gradient_loss(const PolicyParams& params, const TrainingBatch& batch,
                                const std::vector<std::vector<double>>& token_advantages,
                                const LossConfig& cfg);

struct StepReport {
  double loss = 0.0;
  double mean_return = 0.0;
  double grad_norm = 0.0;
  std::size_t transitions = 0;
  std::size_t tokens = 0;
};

struct StepResult {
  PolicyParams params;
  StepReport report;
};

// Advantage estimation, broadcast, then epochs_per_batch plain SGD steps. The returned
// params carry version + 1 regardless of the epoch count. Loss and grad norm in the report
// come from the first epoch.
StepResult train_step(const PolicyParams& params, const TrainingBatch& batch,
                      const AdvantageConfig& adv_cfg, const LossConfig& loss_cfg);

// Log-probability of the masked-in tokens of one concatenated sequence: the
// concatenate-and-mask formulation that per-transition training replaces.
double masked_sequence_logprob(const PolicyParams& params, std::span<const TokenId> sequence,
                               const std::vector<bool>& mask);

}  // namespace lightline::rl
