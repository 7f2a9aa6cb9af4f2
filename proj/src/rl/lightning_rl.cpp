#include "lightline/rl/lightning_rl.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "lightline/core/errors.hpp"
#include "lightline/policy/policy.hpp"

namespace lightline::rl {

namespace {

double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 4) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

}  // namespace

std::optional<Estimator> parse_estimator(std::string_view s) {
  if (s == "grpo") return Estimator::grpo;
  if (s == "reinforce_pp") return Estimator::reinforce_pp;
  return std::nullopt;
}

std::string_view to_string(Estimator e) {
  return e == Estimator::grpo ? "grpo" : "reinforce_pp";
}

void AdvantageConfig::validate() const {
  // 0 is safe: zero-variance groups never reach the division.
  if (!(epsilon_std >= 0.0) || !std::isfinite(epsilon_std)) {
    throw ConfigError("epsilon_std must be finite and >= 0");
  }
}

void LossConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon <= 1.0)) {
    throw ConfigError("clip_epsilon must lie in (0, 1]");
  }
  if (epochs_per_batch < 1) throw ConfigError("epochs_per_batch must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
}

TrainingBatch TrainingBatch::from_transitions(std::vector<Transition> transitions,
                                              std::uint64_t policy_version) {
  std::stable_sort(transitions.begin(), transitions.end(),
                   [](const Transition& a, const Transition& b) {
                     return std::tie(a.task_id, a.rollout_id, a.turn_index) <
                            std::tie(b.task_id, b.rollout_id, b.turn_index);
                   });
  TrainingBatch batch;
  batch.policy_version = policy_version;
  for (const auto& t : transitions) {
    auto& ids = batch.grouping[t.task_id];
    if (ids.empty() || ids.back() != t.rollout_id) ids.push_back(t.rollout_id);
  }
  batch.transitions = std::move(transitions);
  return batch;
}

std::size_t TrainingBatch::token_count() const {
  std::size_t n = 0;
  for (const auto& t : transitions) n += t.output_token_ids.size();
  return n;
}

void validate_batch(const TrainingBatch& batch, const AdvantageConfig& cfg) {
  for (const auto& t : batch.transitions) {
    if (t.policy_version != batch.policy_version) {
      throw IntegrityError(fmt::format(
          "off-policy transition {}#{}: version {} in a batch generated by version {}",
          t.rollout_id, t.turn_index, t.policy_version, batch.policy_version));
    }
    if (!t.reward) {
      throw IntegrityError(
          fmt::format("transition {}#{} has no assigned reward", t.rollout_id, t.turn_index));
    }
    if (t.output_token_ids.empty()) {
      throw IntegrityError(fmt::format("transition {}#{} has no output tokens", t.rollout_id,
                                       t.turn_index));
    }
    if (t.output_token_ids.size() != t.old_logprobs.size()) {
      throw IntegrityError(fmt::format("transition {}#{} logprob length mismatch", t.rollout_id,
                                       t.turn_index));
    }
  }
  if (cfg.estimator == Estimator::grpo) {
    for (const auto& [task, ids] : batch.grouping) {
      if (ids.size() < 2) {
        throw ConfigError(
            fmt::format("GRPO needs >= 2 rollouts per task; task {} has {}", task, ids.size()));
      }
    }
  }
}

RolloutValues trajectory_returns(const TrainingBatch& batch) {
  RolloutValues out;
  for (const auto& t : batch.transitions) {
    if (!t.reward) {
      throw IntegrityError(
          fmt::format("transition {}#{} has no assigned reward", t.rollout_id, t.turn_index));
    }
    const RolloutKey key{t.task_id, t.rollout_id};
    auto [it, inserted] = out.emplace(key, *t.reward);
    if (!inserted && it->second != *t.reward) {
      throw IntegrityError(fmt::format("rollout {} has inconsistent transition rewards {} and {}",
                                       t.rollout_id, it->second, *t.reward));
    }
  }
  for (const auto& [task, ids] : batch.grouping) {
    for (const auto& id : ids) {
      if (!out.contains({task, id})) {
        throw IntegrityError(fmt::format("grouped rollout {} has no transitions", id));
      }
    }
  }
  return out;
}

RolloutValues grpo_advantages(const TrainingBatch& batch, const AdvantageConfig& cfg) {
  cfg.validate();
  const auto returns = trajectory_returns(batch);
  RolloutValues out;
  for (const auto& [task, ids] : batch.grouping) {
    if (ids.size() < 2) {
      throw ConfigError(
          fmt::format("GRPO needs >= 2 rollouts per task; task {} has {}", task, ids.size()));
    }
    std::vector<double> rs;
    rs.reserve(ids.size());
    for (const auto& id : ids) rs.push_back(returns.at({task, id}));
    const auto [lo, hi] = std::minmax_element(rs.begin(), rs.end());
    if (*lo == *hi) {
      for (const auto& id : ids) out[{task, id}] = 0.0;
      continue;
    }
    const double n = static_cast<double>(rs.size());
    double mean = 0.0;
    for (double r : rs) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rs) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      out[{task, ids[i]}] = (rs[i] - mean) / (sd + cfg.epsilon_std);
    }
  }
  return out;
}

RolloutValues reinforcepp_advantages(const TrainingBatch& batch, const AdvantageConfig& cfg) {
  cfg.validate();
  const auto returns = trajectory_returns(batch);
  if (returns.empty()) throw ConfigError("REINFORCE++ needs a non-empty batch");
  double mean = 0.0;
  for (const auto& [key, r] : returns) mean += r;
  mean /= static_cast<double>(returns.size());
  RolloutValues out;
  for (const auto& [key, r] : returns) out[key] = r - mean;
  return out;
}

RolloutValues estimate_advantages(const TrainingBatch& batch, const AdvantageConfig& cfg) {
  switch (cfg.estimator) {
    case Estimator::grpo: return grpo_advantages(batch, cfg);
    case Estimator::reinforce_pp: return reinforcepp_advantages(batch, cfg);
  }
  throw ConfigError("unknown advantage estimator");
}

std::vector<std::vector<double>> broadcast_token_advantages(const TrainingBatch& batch,
                                                            const RolloutValues& advantages) {
  std::vector<std::vector<double>> out;
  out.reserve(batch.transitions.size());
  for (const auto& t : batch.transitions) {
    auto it = advantages.find({t.task_id, t.rollout_id});
    if (it == advantages.end()) {
      throw IntegrityError(fmt::format("rollout {} missing from the advantage map", t.rollout_id));
    }
    out.emplace_back(t.output_token_ids.size(), it->second);
  }
  return out;
}

LossResult policy_gradient_loss(const PolicyParams& params, const TrainingBatch& batch,
                                const std::vector<std::vector<double>>& token_advantages,
                                const LossConfig& cfg) {
  if (token_advantages.size() != batch.transitions.size()) {
    throw IntegrityError("token advantages do not align with transitions");
  }
  LossResult result;
  result.gradient_sum.assign(params.weights.size(), 0.0);
  std::vector<double> per_transition;
  per_transition.reserve(batch.transitions.size());
  const double lo = 1.0 - cfg.clip_epsilon;
  const double hi = 1.0 + cfg.clip_epsilon;

  for (std::size_t ti = 0; ti < batch.transitions.size(); ++ti) {
    const auto& t = batch.transitions[ti];
    const auto& adv = token_advantages[ti];
    if (adv.size() != t.output_token_ids.size() || t.old_logprobs.size() != adv.size()) {
      throw IntegrityError(fmt::format("transition {}#{}: token advantage / logprob length mismatch",
                                       t.rollout_id, t.turn_index));
    }
    std::vector<TokenId> sequence = t.input_token_ids;
    sequence.insert(sequence.end(), t.output_token_ids.begin(), t.output_token_ids.end());
    const auto lps = policy::sequence_logprobs(params, sequence, t.input_token_ids.size());

    double surrogate = 0.0;
    for (std::size_t j = 0; j < lps.size(); ++j) {
      const double rho = std::exp(lps[j] - t.old_logprobs[j]);
      const double a = adv[j];
      const double unclipped = rho * a;
      const double clipped = std::clamp(rho, lo, hi) * a;
      double term;
      double dterm;  // d term / d logprob
      if (unclipped <= clipped) {
        term = unclipped;
        dterm = rho * a;
      } else {
        term = clipped;
        dterm = 0.0;
      }
      if (!std::isfinite(term) || !std::isfinite(dterm)) {
        throw NumericError(fmt::format("non-finite surrogate in transition {}#{} token {}",
                                       t.rollout_id, t.turn_index, j));
      }
      surrogate += term;
      if (dterm != 0.0) {
        const std::size_t pos = t.input_token_ids.size() + j;
        const auto window = policy::context_window(params, sequence, pos);
        policy::accumulate_logprob_gradient(params, window, t.output_token_ids[j], -dterm,
                                            result.gradient_sum);
      }
    }
    per_transition.push_back(-surrogate);
    result.tokens += lps.size();
  }

  const double z = cfg.normalize_by_tokens ? static_cast<double>(result.tokens)
                                           : static_cast<double>(batch.transitions.size());
  result.normalizer = z > 0.0 ? z : 1.0;
  result.loss = pairwise_sum(per_transition) / result.normalizer;
  result.gradient.resize(result.gradient_sum.size());
  for (std::size_t i = 0; i < result.gradient.size(); ++i) {
    result.gradient[i] = result.gradient_sum[i] / result.normalizer;
  }
  if (!std::isfinite(result.loss)) throw NumericError("non-finite loss");
  return result;
}

StepResult train_step(const PolicyParams& params, const TrainingBatch& batch,
                      const AdvantageConfig& adv_cfg, const LossConfig& loss_cfg) {
  adv_cfg.validate();
  loss_cfg.validate();
  validate_batch(batch, adv_cfg);

  const auto returns = trajectory_returns(batch);
  const auto advantages = estimate_advantages(batch, adv_cfg);
  const auto token_adv = broadcast_token_advantages(batch, advantages);

  StepResult out{params, {}};
  for (int epoch = 0; epoch < loss_cfg.epochs_per_batch; ++epoch) {
    const auto lr = policy_gradient_loss(out.params, batch, token_adv, loss_cfg);
    if (epoch == 0) {
      out.report.loss = lr.loss;
      double sq = 0.0;
      for (double g : lr.gradient) sq += g * g;
      out.report.grad_norm = std::sqrt(sq);
      out.report.tokens = lr.tokens;
    }
    out.params = policy::apply_gradient(out.params, lr.gradient, loss_cfg.learning_rate);
  }
  out.params.version = params.version + 1;

  double total = 0.0;
  for (const auto& [key, r] : returns) total += r;
  out.report.mean_return = returns.empty() ? 0.0 : total / static_cast<double>(returns.size());
  out.report.transitions = batch.transitions.size();
  return out;
}

double masked_sequence_logprob(const PolicyParams& params, std::span<const TokenId> sequence,
                               const std::vector<bool>& mask) {
  if (mask.size() != sequence.size()) throw ConfigError("mask length must match sequence length");
  const auto lps = policy::sequence_logprobs(params, sequence, 0);
  double total = 0.0;
  for (std::size_t p = 0; p < lps.size(); ++p) {
    if (mask[p]) total += lps[p];
  }
  return total;
}

}  // namespace lightline::rl
