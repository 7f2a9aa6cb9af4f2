#include "lightline/client/agent.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <thread>

namespace lightline::client {

AgentContext::AgentContext(Json payload, std::shared_ptr<LlmClient> llm,
                           std::shared_ptr<const ToolRegistry> tools,
                           std::chrono::milliseconds call_timeout)
    : payload_(std::move(payload)),
      llm_(std::move(llm)),
      tools_(std::move(tools)),
      call_timeout_(call_timeout) {}

std::string AgentContext::llm_call(const std::vector<ChatMessage>& messages,
                                   const LlmOptions& opts) {
  {
    std::lock_guard lock(mu_);
    ++next_index_;
    ++llm_calls_;
  }
  return llm_->complete(messages, opts);
}

ToolOutcome AgentContext::invoke_tool(const std::string& name, const Json& input) {
  if (!tools_ || !tools_->contains(name)) {
    throw ConfigError("unknown tool '" + name + "'");
  }
  std::size_t index;
  {
    std::lock_guard lock(mu_);
    index = next_index_++;
  }
  CallRecord span;
  span.meta.component_kind = ComponentKind::tool;
  span.meta.component_name = name;
  span.meta.sequence_index = index;
  span.meta.wall_clock = now_micros();
  span.input = input;
  auto outcome = tools_->run_with_timeout(name, input, call_timeout_);
  span.meta.status = outcome.status;
  span.output = outcome.value;
  {
    std::lock_guard lock(mu_);
    spans_.push_back(std::move(span));
  }
  return outcome;
}

std::vector<CallRecord> AgentContext::tool_spans() const {
  std::lock_guard lock(mu_);
  auto out = spans_;
  std::sort(out.begin(), out.end(), [](const CallRecord& a, const CallRecord& b) {
    return a.meta.sequence_index < b.meta.sequence_index;
  });
  return out;
}

std::size_t AgentContext::llm_calls() const {
  std::lock_guard lock(mu_);
  return llm_calls_;
}

std::string_view to_string(FailureKind k) { return k == FailureKind::crash ? "crash" : "timeout"; }

GuardedResult guarded_execute(const Harness& harness, std::shared_ptr<AgentContext> ctx,
                              std::chrono::milliseconds timeout) {
  auto promise = std::make_shared<std::promise<GuardedResult>>();
  auto future = promise->get_future();
  try {
    std::thread([promise, harness, ctx] {
      GuardedResult r;
      try {
        r.answer = harness(*ctx);
      } catch (const std::exception& e) {
        r.failure = FailureRecord{FailureKind::crash, e.what()};
      } catch (...) {
        r.failure = FailureRecord{FailureKind::crash, "non-standard exception"};
      }
      promise->set_value(std::move(r));
    }).detach();
  } catch (const std::exception& e) {
    return {std::nullopt, FailureRecord{FailureKind::crash, e.what()}};
  }
  if (future.wait_for(timeout) == std::future_status::ready) return future.get();
  return {std::nullopt,
          FailureRecord{FailureKind::timeout,
                        "harness exceeded " + std::to_string(timeout.count()) + " ms"}};
}

std::chrono::milliseconds RetryPolicy::delay(int attempt) const {
  const double ms = static_cast<double>(base.count()) * std::pow(factor, attempt);
  const double capped = std::min(ms, static_cast<double>(cap.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(capped));
}

}  // namespace lightline::client
