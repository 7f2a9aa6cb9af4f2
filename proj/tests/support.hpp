#pragma once

// Trace builders and hand-rolled random generators shared by the test suites.

#include <cmath>
#include <string>
#include <vector>

#include "lightline/core/rng.hpp"
#include "lightline/core/types.hpp"

namespace lightline::testing {

// Thin layer over the counter RNG so every generated case replays from its seed.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(derive_key(seed, "test-gen")) {}

  std::uint64_t u64() { return rng_.next_u64(); }
  // Uniform integer in [lo, hi].
  int range(int lo, int hi) {
    return lo + static_cast<int>(rng_.next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double unit() { return rng_.next_unit(); }
  double real(double lo, double hi) { return lo + (hi - lo) * unit(); }
  bool coin(double p = 0.5) { return unit() < p; }
  template <typename T>
  const T& pick(const std::vector<T>& xs) {
    return xs[static_cast<std::size_t>(range(0, static_cast<int>(xs.size()) - 1))];
  }

 private:
  CounterRng rng_;
};

inline TokenDetail token_detail(std::vector<TokenId> in, std::vector<TokenId> out,
                                std::vector<double> lps = {}) {
  if (lps.empty()) lps.assign(out.size(), -1.0);
  return TokenDetail{std::move(in), std::move(out), std::move(lps)};
}

inline CallRecord llm_call(std::size_t index, std::optional<std::string> role,
                           std::optional<TokenDetail> td, std::uint64_t version = 0) {
  CallRecord c;
  c.meta.component_kind = ComponentKind::llm;
  c.meta.component_name = "policy";
  c.meta.role = std::move(role);
  c.meta.endpoint_version = version;
  c.meta.sampling = SamplingParams{1.0, 8, index};
  c.meta.sequence_index = index;
  c.meta.wall_clock = 1'700'000'000'000'000 + static_cast<Timestamp>(index);
  c.input = Json{{"messages", Json::array({Json{{"role", "user"}, {"content", "q"}}})}};
  c.output = Json{{"content", "a"}, {"finish_reason", "eos"}};
  c.token_detail = std::move(td);
  return c;
}

inline CallRecord tool_call(std::size_t index, std::string name, CallStatus status = CallStatus::ok) {
  CallRecord c;
  c.meta.component_kind = ComponentKind::tool;
  c.meta.component_name = std::move(name);
  c.meta.sequence_index = index;
  c.meta.wall_clock = 1'700'000'000'000'000 + static_cast<Timestamp>(index);
  c.meta.status = status;
  c.input = Json{{"query", "x"}};
  c.output = status == CallStatus::ok ? Json{{"passage", "p"}} : Json{{"error", "boom"}};
  return c;
}

// query_writer llm call, search tool call, answerer llm call; final reward on the last call.
inline RolloutTrace rag_trace(double final_reward, const std::string& rollout = "s0000-t-k0-a0",
                              const std::string& task = "t") {
  RolloutTrace t;
  t.rollout_id = rollout;
  t.task_id = task;
  t.calls.push_back(llm_call(0, "query_writer", token_detail({5, 6, 7}, {8, 9}, {-0.5, -0.25})));
  t.calls.push_back(tool_call(1, "search"));
  t.calls.push_back(llm_call(2, "answerer", token_detail({5, 6, 7, 10}, {11, 12, 13})));
  t.rewards.push_back({2, final_reward, RewardSource::final});
  return t;
}

// A random well-formed trace: llm calls carry token detail for a vocab of size `vocab`,
// some tool calls fail, the final reward sits on the last call, and there may be
// intermediate user rewards.
inline RolloutTrace random_trace(Gen& g, const std::string& rollout, const std::string& task,
                                 int vocab = 16, std::uint64_t version = 0) {
  RolloutTrace t;
  t.rollout_id = rollout;
  t.task_id = task;
  t.attempt_index = g.range(0, 3);
  const int n = g.range(0, 7);
  const std::vector<std::string> roles = {"query_writer", "answerer", "guesser"};
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (g.coin(0.6)) {
      std::vector<TokenId> in(static_cast<std::size_t>(g.range(0, 6)));
      for (auto& x : in) x = g.range(0, vocab - 1);
      std::vector<TokenId> out(static_cast<std::size_t>(g.range(1, 4)));
      std::vector<double> lps;
      for (auto& x : out) {
        x = g.range(0, vocab - 1);
        lps.push_back(-g.real(0.0, 5.0));
      }
      std::optional<std::string> role;
      if (g.coin(0.8)) role = g.pick(roles);
      t.calls.push_back(llm_call(idx, role, token_detail(in, out, lps), version));
    } else {
      const auto status = g.coin(0.7) ? CallStatus::ok : (g.coin() ? CallStatus::error : CallStatus::timeout);
      t.calls.push_back(tool_call(idx, g.coin() ? "search" : "calc", status));
    }
  }
  if (n > 0) {
    const int extra = g.range(0, 2);
    for (int i = 0; i < extra; ++i) {
      t.rewards.push_back({static_cast<std::size_t>(g.range(0, n - 1)),
                           std::round(g.real(-1.0, 1.0) * 64.0) / 64.0,
                           RewardSource::intermediate_user});
    }
    t.rewards.push_back({static_cast<std::size_t>(n - 1), g.real(0.0, 1.0), RewardSource::final});
  } else {
    t.status = RolloutStatus::failed;
  }
  return t;
}

}  // namespace lightline::testing
