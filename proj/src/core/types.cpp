#include "lightline/core/types.hpp"

#include <chrono>

#include "lightline/core/errors.hpp"

namespace lightline {

Timestamp now_micros() {
  using namespace std::chrono;
  return duration_cast<microseconds>(system_clock::now().time_since_epoch()).count();
}

std::string_view to_string(ComponentKind v) {
  switch (v) {
    case ComponentKind::llm: return "llm";
    case ComponentKind::tool: return "tool";
  }
  return "?";
}

std::string_view to_string(CallStatus v) {
  switch (v) {
    case CallStatus::ok: return "ok";
    case CallStatus::error: return "error";
    case CallStatus::timeout: return "timeout";
  }
  return "?";
}

std::string_view to_string(RewardSource v) {
  switch (v) {
    case RewardSource::final: return "final";
    case RewardSource::intermediate_user: return "intermediate_user";
    case RewardSource::intermediate_air: return "intermediate_air";
  }
  return "?";
}

std::string_view to_string(RolloutStatus v) {
  switch (v) {
    case RolloutStatus::success: return "success";
    case RolloutStatus::failed: return "failed";
    case RolloutStatus::timed_out: return "timed_out";
  }
  return "?";
}

std::optional<ComponentKind> parse_component_kind(std::string_view s) {
  if (s == "llm") return ComponentKind::llm;
  if (s == "tool") return ComponentKind::tool;
  return std::nullopt;
}

std::optional<CallStatus> parse_call_status(std::string_view s) {
  if (s == "ok") return CallStatus::ok;
  if (s == "error") return CallStatus::error;
  if (s == "timeout") return CallStatus::timeout;
  return std::nullopt;
}

std::optional<RewardSource> parse_reward_source(std::string_view s) {
  if (s == "final") return RewardSource::final;
  if (s == "intermediate_user") return RewardSource::intermediate_user;
  if (s == "intermediate_air") return RewardSource::intermediate_air;
  return std::nullopt;
}

std::optional<RolloutStatus> parse_rollout_status(std::string_view s) {
  if (s == "success") return RolloutStatus::success;
  if (s == "failed") return RolloutStatus::failed;
  if (s == "timed_out") return RolloutStatus::timed_out;
  return std::nullopt;
}

PolicyParams make_zero_params(std::size_t vocab_size, std::size_t context_window,
                              std::uint64_t version) {
  if (vocab_size == 0 || context_window == 0) {
    throw ConfigError("policy needs vocab_size >= 1 and context_window >= 1");
  }
  PolicyParams p;
  p.version = version;
  p.vocab_size = vocab_size;
  p.context_window = context_window;
  p.weights.assign(p.rows() * p.cols(), 0.0);
  return p;
}

}  // namespace lightline
