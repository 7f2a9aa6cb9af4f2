#pragma once

// Shared data types of the unified data interface and the RL data path.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace lightline {

using Json = nlohmann::json;
using TokenId = std::int32_t;
// Microseconds since the Unix epoch.
using Timestamp = std::int64_t;

Timestamp now_micros();

enum class ComponentKind { llm, tool };
enum class CallStatus { ok, error, timeout };
enum class RewardSource { final, intermediate_user, intermediate_air };
enum class RolloutStatus { success, failed, timed_out };

std::string_view to_string(ComponentKind v);
std::string_view to_string(CallStatus v);
std::string_view to_string(RewardSource v);
std::string_view to_string(RolloutStatus v);

// Strict parsers; unknown names return nullopt.
std::optional<ComponentKind> parse_component_kind(std::string_view s);
std::optional<CallStatus> parse_call_status(std::string_view s);
std::optional<RewardSource> parse_reward_source(std::string_view s);
std::optional<RolloutStatus> parse_rollout_status(std::string_view s);

struct TaskSpec {
  std::string task_id;
  std::string scenario;
  Json payload;
  int group_size = 1;

  bool operator==(const TaskSpec&) const = default;
};

struct SamplingParams {
  double temperature = 1.0;
  int max_tokens = 16;
  std::optional<std::uint64_t> seed;

  bool operator==(const SamplingParams&) const = default;
};

struct CallMeta {
  ComponentKind component_kind = ComponentKind::llm;
  std::string component_name;
  std::optional<std::string> role;
  // Policy version that served the call; present iff component_kind == llm.
  std::optional<std::uint64_t> endpoint_version;
  std::optional<SamplingParams> sampling;
  std::size_t sequence_index = 0;
  Timestamp wall_clock = 0;
  CallStatus status = CallStatus::ok;

  bool operator==(const CallMeta&) const = default;
};

struct TokenDetail {
  std::vector<TokenId> input_token_ids;
  std::vector<TokenId> output_token_ids;
  std::vector<double> output_logprobs;

  bool operator==(const TokenDetail&) const = default;
};

struct CallRecord {
  CallMeta meta;
  Json input;
  Json output;
  std::optional<TokenDetail> token_detail;

  bool operator==(const CallRecord&) const = default;
};

struct RewardSignal {
  std::size_t call_index = 0;
  double value = 0.0;
  RewardSource source = RewardSource::final;

  bool operator==(const RewardSignal&) const = default;
};

struct RolloutTrace {
  std::string rollout_id;
  std::string task_id;
  int attempt_index = 0;
  std::vector<CallRecord> calls;
  std::vector<RewardSignal> rewards;
  RolloutStatus status = RolloutStatus::success;

  bool operator==(const RolloutTrace&) const = default;
};

struct Transition {
  std::string task_id;
  std::string rollout_id;
  std::size_t turn_index = 0;
  std::optional<std::string> role;
  std::vector<TokenId> input_token_ids;
  std::vector<TokenId> output_token_ids;
  std::vector<double> old_logprobs;
  // Unset until credit assignment runs.
  std::optional<double> reward;
  std::uint64_t policy_version = 0;

  bool operator==(const Transition&) const = default;
};

// Linear map from windowed one-hot context features (plus a bias feature) to logits.
// `weights` is row-major with rows() = W*V + 1 and cols() = V.
struct PolicyParams {
  std::uint64_t version = 0;
  std::size_t vocab_size = 0;
  std::size_t context_window = 0;
  std::vector<double> weights;

  std::size_t rows() const { return context_window * vocab_size + 1; }
  std::size_t cols() const { return vocab_size; }
  std::size_t bias_row() const { return context_window * vocab_size; }

  std::span<double> row(std::size_t r) { return {weights.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {weights.data() + r * cols(), cols()};
  }

  bool operator==(const PolicyParams&) const = default;
};

PolicyParams make_zero_params(std::size_t vocab_size, std::size_t context_window,
                              std::uint64_t version = 0);

}  // namespace lightline
