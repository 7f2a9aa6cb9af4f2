#pragma once

// Independent reference computations and instance generators. Nothing here calls the
// code under test except to evaluate it; each oracle recomputes its answer from first
// principles.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lightline/policy/policy.hpp"
#include "lightline/rl/lightning_rl.hpp"
#include "support.hpp"

namespace lightline::testing {

// Two-pass mean / population std in long double, then (r - mean) / (std + eps); zero
// variance gives zeros.
inline std::vector<double> grpo_oracle(const std::vector<double>& returns, double eps) {
  long double mean = 0.0L;
  for (double r : returns) mean += r;
  mean /= static_cast<long double>(returns.size());
  long double ss = 0.0L;
  for (double r : returns) ss += (r - mean) * (r - mean);
  const long double sd = std::sqrt(ss / static_cast<long double>(returns.size()));
  std::vector<double> out;
  for (double r : returns) {
    out.push_back(sd == 0.0L ? 0.0 : static_cast<double>((r - mean) / (sd + eps)));
  }
  return out;
}

inline std::vector<double> mean_baseline_oracle(const std::vector<double>& returns) {
  long double mean = 0.0L;
  for (double r : returns) mean += r;
  mean /= static_cast<long double>(returns.size());
  std::vector<double> out;
  for (double r : returns) out.push_back(static_cast<double>(r - mean));
  return out;
}

inline Transition make_transition(const std::string& task, const std::string& rollout,
                                  std::size_t turn, std::vector<TokenId> in,
                                  std::vector<TokenId> out, double reward,
                                  std::optional<std::string> role = std::nullopt,
                                  std::uint64_t version = 0) {
  Transition t;
  t.task_id = task;
  t.rollout_id = rollout;
  t.turn_index = turn;
  t.role = std::move(role);
  t.input_token_ids = std::move(in);
  t.old_logprobs.assign(out.size(), -1.0);
  t.output_token_ids = std::move(out);
  t.reward = reward;
  t.policy_version = version;
  return t;
}

// One transition per rollout, grouped under the given tasks.
inline rl::TrainingBatch returns_batch(const std::vector<std::pair<std::string, double>>& rollouts) {
  std::vector<Transition> ts;
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    ts.push_back(make_transition(rollouts[i].first, "r" + std::to_string(i), 0, {4}, {5},
                                 rollouts[i].second));
  }
  return rl::TrainingBatch::from_transitions(std::move(ts), 0);
}

inline PolicyParams random_params(Gen& g, std::size_t v, std::size_t w, double scale = 1.0) {
  auto p = make_zero_params(v, w);
  for (auto& x : p.weights) x = g.real(-scale, scale);
  return p;
}

inline std::vector<TokenId> random_ids(Gen& g, std::size_t n, std::size_t v) {
  std::vector<TokenId> ids(n);
  for (auto& x : ids) x = g.range(0, static_cast<int>(v) - 1);
  return ids;
}

struct LossInstance {
  PolicyParams params;
  rl::TrainingBatch batch;
  std::vector<std::vector<double>> token_advantages;
  rl::LossConfig cfg;
};

// A small random loss instance: V <= 16, W <= 4, at most 8 output tokens in total, old
// logprobs perturbed away from the current ones so importance ratios differ from 1 and
// some tokens sit in the clipped region. Ratios are kept at least 1e-3 away from the clip
// boundaries, where the surrogate has a kink.
inline LossInstance random_loss_instance(Gen& g) {
  LossInstance inst;
  const auto v = static_cast<std::size_t>(g.range(4, 16));
  const auto w = static_cast<std::size_t>(g.range(1, 4));
  inst.params = random_params(g, v, w);
  inst.cfg.clip_epsilon = 0.2;
  inst.cfg.normalize_by_tokens = g.coin();
  std::vector<Transition> ts;
  int budget = 8;
  int rollout = 0;
  while (budget > 0) {
    const int len = std::min(budget, g.range(1, 3));
    budget -= len;
    auto in = random_ids(g, static_cast<std::size_t>(g.range(0, 5)), v);
    auto out = random_ids(g, static_cast<std::size_t>(len), v);
    auto t = make_transition("task", "r" + std::to_string(rollout++), 0, in, out, 0.0);
    const auto current = policy::logprobs_of(inst.params, t.input_token_ids, t.output_token_ids);
    for (std::size_t j = 0; j < current.size(); ++j) {
      double old = 0.0;
      for (;;) {
        old = current[j] + g.real(-0.4, 0.4);
        const double rho = std::exp(current[j] - old);
        if (std::abs(rho - 0.8) > 1e-3 && std::abs(rho - 1.2) > 1e-3) break;
      }
      t.old_logprobs[j] = old;
    }
    ts.push_back(std::move(t));
  }
  inst.batch = rl::TrainingBatch::from_transitions(std::move(ts), 0);
  for (const auto& t : inst.batch.transitions) {
    inst.token_advantages.emplace_back(t.output_token_ids.size(), g.real(-2.0, 2.0));
  }
  return inst;
}

// Relative error max|fd - analytic| / max(max|fd|, max|analytic|) of the loss gradient
// against central differences with step h over every weight.
inline double loss_gradient_relative_error(LossInstance inst, double h = 1e-5) {
  const auto analytic = rl::policy_gradient_loss(inst.params, inst.batch, inst.token_advantages, inst.cfg);
  double max_diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < inst.params.weights.size(); ++i) {
    const double orig = inst.params.weights[i];
    inst.params.weights[i] = orig + h;
    const double up = rl::policy_gradient_loss(inst.params, inst.batch, inst.token_advantages, inst.cfg).loss;
    inst.params.weights[i] = orig - h;
    const double down = rl::policy_gradient_loss(inst.params, inst.batch, inst.token_advantages, inst.cfg).loss;
    inst.params.weights[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    max_diff = std::max(max_diff, std::abs(fd - analytic.gradient[i]));
    scale = std::max({scale, std::abs(fd), std::abs(analytic.gradient[i])});
  }
  return scale == 0.0 ? 0.0 : max_diff / scale;
}

// A scripted three-turn agent whose turn-t input is exactly every earlier input and output
// concatenated, plus a fresh observation. Returns the per-turn (input, output) pairs and
// the full concatenated sequence with its output mask.
struct ConcatEpisode {
  std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> turns;
  std::vector<TokenId> sequence;
  std::vector<bool> mask;
};

inline ConcatEpisode concatenation_episode(const PolicyParams& params, std::uint64_t seed) {
  Gen g(seed);
  const auto v = params.vocab_size;
  ConcatEpisode ep;
  std::vector<TokenId> context = random_ids(g, static_cast<std::size_t>(g.range(1, 6)), v);
  ep.sequence = context;
  ep.mask.assign(context.size(), false);
  for (int turn = 0; turn < 3; ++turn) {
    const auto out = policy::sample(params, context,
                                    SamplingParams{1.0, g.range(1, 5), derive_key(seed, static_cast<std::uint64_t>(turn))});
    ep.turns.emplace_back(context, out.token_ids);
    ep.sequence.insert(ep.sequence.end(), out.token_ids.begin(), out.token_ids.end());
    ep.mask.insert(ep.mask.end(), out.token_ids.size(), true);
    const auto obs = random_ids(g, static_cast<std::size_t>(g.range(1, 4)), v);
    ep.sequence.insert(ep.sequence.end(), obs.begin(), obs.end());
    ep.mask.insert(ep.mask.end(), obs.size(), false);
    context = ep.sequence;
  }
  return ep;
}

}  // namespace lightline::testing
