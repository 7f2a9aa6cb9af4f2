#pragma once

// A windowed linear token policy: logits = [onehot(last W tokens); 1]^T * weights.
// Small enough for exact analytic gradients and millisecond training steps.

#include <span>
#include <vector>

#include "lightline/core/types.hpp"

namespace lightline::policy {

enum class FinishReason { eos, length };

std::string_view to_string(FinishReason r);

struct SampledOutput {
  std::vector<TokenId> token_ids;
  // Temperature-1 log-probabilities of each sampled token.
  std::vector<double> logprobs;
  FinishReason finish_reason = FinishReason::length;
};

// The W tokens preceding `position` in `sequence`, left-padded with BOS (oldest first).
std::vector<TokenId> context_window(const PolicyParams& params, std::span<const TokenId> sequence,
                                    std::size_t position);

std::vector<double> next_token_logits(const PolicyParams& params, std::span<const TokenId> context);

// Numerically stable log-softmax.
std::vector<double> log_softmax(std::span<const double> logits);

// Autoregressive sampling from softmax(logits / temperature) with a counter-based RNG keyed
// by `sampling.seed` (0 when absent). Stops after EOS or max_tokens tokens.
SampledOutput sample(const PolicyParams& params, std::span<const TokenId> prompt,
                     const SamplingParams& sampling);

// Argmax decoding; ties resolve to the lowest token id.
SampledOutput decode_greedy(const PolicyParams& params, std::span<const TokenId> prompt,
                            int max_tokens);

std::vector<double> logprobs_of(const PolicyParams& params, std::span<const TokenId> prompt,
                                std::span<const TokenId> output);

// Log-probability of sequence[p] given sequence[<p] for each p in [from, size).
std::vector<double> sequence_logprobs(const PolicyParams& params, std::span<const TokenId> sequence,
                                      std::size_t from);

// Adds scale * d log pi(token | window) / d weights into `gradient` (shaped like weights)
// and returns log pi(token | window). `window` must hold exactly W ids.
double accumulate_logprob_gradient(const PolicyParams& params, std::span<const TokenId> window,
                                   TokenId token, double scale, std::span<double> gradient);

// Zero weights except `strength` on every (window position, t) -> t entry for non-special t:
// each piece already in the window is e^strength times likelier to be emitted again. A generic
// copying prior standing in for pretraining; it carries no task knowledge.
PolicyParams make_copy_prior_params(std::size_t vocab_size, std::size_t context_window,
                                    double strength);

// weights - learning_rate * gradient. Version is left unchanged.
PolicyParams apply_gradient(const PolicyParams& params, std::span<const double> gradient,
                            double learning_rate);

}  // namespace lightline::policy
