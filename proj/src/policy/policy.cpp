#include "lightline/policy/policy.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "lightline/core/errors.hpp"
#include "lightline/core/rng.hpp"
#include "lightline/policy/vocab.hpp"

namespace lightline::policy {

namespace {

void check_token(const PolicyParams& params, TokenId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= params.vocab_size) {
    throw VocabularyError(fmt::format("token id {} outside vocabulary of size {}", id,
                                      params.vocab_size));
  }
}

void logits_into(const PolicyParams& params, std::span<const TokenId> window,
                 std::span<double> logits) {
  const auto bias = params.row(params.bias_row());
  std::copy(bias.begin(), bias.end(), logits.begin());
  for (std::size_t slot = 0; slot < window.size(); ++slot) {
    check_token(params, window[slot]);
    const auto r = params.row(slot * params.vocab_size + static_cast<std::size_t>(window[slot]));
    for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += r[k];
  }
}

double log_sum_exp(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) throw NumericError("non-finite logit");
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

// Slides a W-token window along prompt ++ generated tokens.
class Window {
 public:
  Window(const PolicyParams& params, std::span<const TokenId> prompt)
      : tokens_(params.context_window, kBos) {
    const std::size_t take = std::min(prompt.size(), tokens_.size());
    std::copy(prompt.end() - static_cast<std::ptrdiff_t>(take), prompt.end(),
              tokens_.end() - static_cast<std::ptrdiff_t>(take));
  }

  void push(TokenId id) {
    std::shift_left(tokens_.begin(), tokens_.end(), 1);
    tokens_.back() = id;
  }

  std::span<const TokenId> view() const { return tokens_; }

 private:
  std::vector<TokenId> tokens_;
};

template <class Pick>
SampledOutput decode(const PolicyParams& params, std::span<const TokenId> prompt, int max_tokens,
                     Pick&& pick) {
  if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  SampledOutput out;
  Window window(params, prompt);
  std::vector<double> logits(params.vocab_size);
  for (int step = 0; step < max_tokens; ++step) {
    logits_into(params, window.view(), logits);
    const TokenId tok = pick(std::span<const double>(logits));
    out.token_ids.push_back(tok);
    out.logprobs.push_back(logits[tok] - log_sum_exp(logits));
    if (tok == kEos) {
      out.finish_reason = FinishReason::eos;
      return out;
    }
    window.push(tok);
  }
  out.finish_reason = FinishReason::length;
  return out;
}

}  // namespace

std::string_view to_string(FinishReason r) { return r == FinishReason::eos ? "stop" : "length"; }

std::vector<TokenId> context_window(const PolicyParams& params, std::span<const TokenId> sequence,
                                    std::size_t position) {
  const std::size_t w = params.context_window;
  std::vector<TokenId> out(w, kBos);
  const std::size_t take = std::min(position, w);
  std::copy(sequence.begin() + static_cast<std::ptrdiff_t>(position - take),
            sequence.begin() + static_cast<std::ptrdiff_t>(position),
            out.end() - static_cast<std::ptrdiff_t>(take));
  return out;
}

std::vector<double> next_token_logits(const PolicyParams& params,
                                      std::span<const TokenId> context) {
  std::vector<double> logits(params.vocab_size);
  const auto window = context_window(params, context, context.size());
  logits_into(params, window, logits);
  return logits;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

SampledOutput sample(const PolicyParams& params, std::span<const TokenId> prompt,
                     const SamplingParams& sampling) {
  if (!(sampling.temperature > 0.0)) throw ConfigError("sampling temperature must be > 0");
  CounterRng rng(sampling.seed.value_or(0));
  std::vector<double> weights(params.vocab_size);
  const double inv_t = 1.0 / sampling.temperature;
  return decode(params, prompt, sampling.max_tokens, [&](std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      weights[k] = std::exp((logits[k] - m) * inv_t);
      total += weights[k];
    }
    double u = rng.next_unit() * total;
    TokenId last_positive = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k] <= 0.0) continue;
      last_positive = static_cast<TokenId>(k);
      if (u < weights[k]) return static_cast<TokenId>(k);
      u -= weights[k];
    }
    return last_positive;
  });
}

SampledOutput decode_greedy(const PolicyParams& params, std::span<const TokenId> prompt,
                            int max_tokens) {
  return decode(params, prompt, max_tokens, [](std::span<const double> logits) {
    return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  });
}

std::vector<double> logprobs_of(const PolicyParams& params, std::span<const TokenId> prompt,
                                std::span<const TokenId> output) {
  std::vector<double> out;
  out.reserve(output.size());
  Window window(params, prompt);
  std::vector<double> logits(params.vocab_size);
  for (TokenId tok : output) {
    check_token(params, tok);
    logits_into(params, window.view(), logits);
    out.push_back(logits[tok] - log_sum_exp(logits));
    window.push(tok);
  }
  return out;
}

std::vector<double> sequence_logprobs(const PolicyParams& params,
                                      std::span<const TokenId> sequence, std::size_t from) {
  if (from > sequence.size()) throw ConfigError("sequence_logprobs: start beyond sequence");
  return logprobs_of(params, sequence.first(from), sequence.subspan(from));
}

double accumulate_logprob_gradient(const PolicyParams& params, std::span<const TokenId> window,
                                   TokenId token, double scale, std::span<double> gradient) {
  check_token(params, token);
  if (window.size() != params.context_window) {
    throw ConfigError("window length must equal the policy context window");
  }
  if (gradient.size() != params.weights.size()) {
    throw ConfigError("gradient buffer shape mismatch");
  }
  const std::size_t v = params.vocab_size;
  std::vector<double> logits(v);
  logits_into(params, window, logits);
  const double lse = log_sum_exp(logits);
  // d log pi(token) / d logits = onehot(token) - softmax(logits)
  std::vector<double> dlogits(v);
  for (std::size_t k = 0; k < v; ++k) dlogits[k] = -scale * std::exp(logits[k] - lse);
  dlogits[token] += scale;

  auto add_row = [&](std::size_t r) {
    double* g = gradient.data() + r * v;
    for (std::size_t k = 0; k < v; ++k) g[k] += dlogits[k];
  };
  for (std::size_t slot = 0; slot < window.size(); ++slot) {
    add_row(slot * v + static_cast<std::size_t>(window[slot]));
  }
  add_row(params.bias_row());
  return logits[token] - lse;
}

PolicyParams apply_gradient(const PolicyParams& params, std::span<const double> gradient,
                            double learning_rate) {
  if (gradient.size() != params.weights.size()) {
    throw ConfigError(fmt::format("gradient has {} entries, weights have {}", gradient.size(),
                                  params.weights.size()));
  }
  for (double g : gradient) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient entry");
  }
  PolicyParams out = params;
  for (std::size_t i = 0; i < out.weights.size(); ++i) {
    out.weights[i] -= learning_rate * gradient[i];
  }
  return out;
}

PolicyParams make_copy_prior_params(std::size_t vocab_size, std::size_t context_window,
                                    double strength) {
  if (!std::isfinite(strength)) throw ConfigError("copy prior strength must be finite");
  auto p = make_zero_params(vocab_size, context_window);
  for (std::size_t pos = 0; pos < context_window; ++pos) {
    for (std::size_t t = kNumSpecials; t < vocab_size; ++t) p.row(pos * vocab_size + t)[t] = strength;
  }
  return p;
}

}  // namespace lightline::policy
