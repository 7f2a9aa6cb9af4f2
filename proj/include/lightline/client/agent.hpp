#pragma once

// The agent-side harness contract: an agent sees only its task payload, an LLM client
// bound to its rollout, and a tool registry. Tool spans are buffered here; LLM spans are
// recorded by whoever serves the completions.

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lightline/client/tools.hpp"
#include "lightline/core/errors.hpp"
#include "lightline/core/types.hpp"
#include "lightline/policy/chat.hpp"

namespace lightline::client {

using policy::ChatMessage;

struct LlmOptions {
  std::optional<std::string> agent_role;
  std::optional<double> temperature;
  std::optional<int> max_tokens;
};

// A completion request that failed for good (after any retries).
class LlmCallError : public Error {
 public:
  LlmCallError(const std::string& what, int http_status = 0)
      : Error(what), http_status_(http_status) {}
  // 0 when the failure was at the transport level.
  int http_status() const { return http_status_; }

 private:
  int http_status_;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages,
                               const LlmOptions& opts) = 0;
};

class AgentContext {
 public:
  AgentContext(Json payload, std::shared_ptr<LlmClient> llm,
               std::shared_ptr<const ToolRegistry> tools, std::chrono::milliseconds call_timeout);

  const Json& payload() const { return payload_; }

  std::string llm_call(const std::vector<ChatMessage>& messages, const LlmOptions& opts = {});

  // Unknown tool names throw ConfigError; tool failures come back as error outcomes.
  ToolOutcome invoke_tool(const std::string& name, const Json& input);

  // Tool CallRecords stamped with their position in the combined call order.
  std::vector<CallRecord> tool_spans() const;
  std::size_t llm_calls() const;

 private:
  Json payload_;
  std::shared_ptr<LlmClient> llm_;
  std::shared_ptr<const ToolRegistry> tools_;
  std::chrono::milliseconds call_timeout_;

  mutable std::mutex mu_;
  std::size_t next_index_ = 0;
  std::size_t llm_calls_ = 0;
  std::vector<CallRecord> spans_;
};

// Returns the agent's answer. May throw; guarded_execute contains it.
using Harness = std::function<Json(AgentContext&)>;
// (answer, task payload) -> final reward.
using RewardFn = std::function<double(const Json& answer, const Json& payload)>;

// Everything a worker needs to run one scenario.
struct ScenarioRuntime {
  std::string name;
  std::shared_ptr<const ToolRegistry> tools;
  Harness harness;
  RewardFn reward;
};

enum class FailureKind { crash, timeout };
std::string_view to_string(FailureKind k);

struct FailureRecord {
  FailureKind kind = FailureKind::crash;
  std::string message;
};

struct GuardedResult {
  std::optional<Json> answer;
  std::optional<FailureRecord> failure;

  bool ok() const { return answer.has_value(); }
};

// Runs the harness on its own thread. Exceptions become crash records; exceeding `timeout`
// becomes a timeout record and the abandoned thread is left to finish on its own.
// Nothing escapes.
GuardedResult guarded_execute(const Harness& harness, std::shared_ptr<AgentContext> ctx,
                              std::chrono::milliseconds timeout);

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base{500};
  double factor = 2.0;
  std::chrono::milliseconds cap{8000};

  // Delay before retry number `attempt` (0-based): min(cap, base * factor^attempt).
  std::chrono::milliseconds delay(int attempt) const;
};

}  // namespace lightline::client
