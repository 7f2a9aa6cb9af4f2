#include "lightline/client/runtime.hpp"

#include <exception>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "lightline/core/rng.hpp"
#include "lightline/core/trace_io.hpp"
#include "lightline/policy/policy.hpp"

namespace lightline::client {

Url parse_url(const std::string& url) {
  static const std::regex re(R"(^(http://[A-Za-z0-9.\-]+(:[0-9]+)?)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError(fmt::format("unsupported URL '{}'", url));
  return {m[1].str(), m[3].matched ? m[3].str() : "/"};
}

namespace {

bool transient(const httplib::Result& r) { return !r || r->status >= 500; }

std::string describe(const httplib::Result& r) {
  if (!r) return httplib::to_string(r.error());
  return fmt::format("HTTP {}: {}", r->status, r->body);
}

// Re-issues `send` while it fails transiently, sleeping per `policy` between attempts.
template <typename Send, typename Counter>
httplib::Result send_with_retry(const Send& send, const RetryPolicy& policy, Counter& retries) {
  auto r = send();
  for (int attempt = 0; transient(r) && attempt < policy.max_retries; ++attempt) {
    std::this_thread::sleep_for(policy.delay(attempt));
    ++retries;
    r = send();
  }
  return r;
}

}  // namespace

class HttpChannel {
 public:
  HttpChannel(const std::string& origin, std::chrono::milliseconds timeout) : client_(origin) {
    client_.set_keep_alive(true);
    client_.set_tcp_nodelay(true);
    client_.set_connection_timeout(std::chrono::seconds(2));
    client_.set_read_timeout(timeout);
    client_.set_write_timeout(timeout);
  }

  httplib::Result get(const std::string& path) {
    std::lock_guard lock(mu_);
    return client_.Get(path);
  }

  httplib::Result post(const std::string& path, const std::string& body) {
    std::lock_guard lock(mu_);
    return client_.Post(path, body, "application/json");
  }

 private:
  std::mutex mu_;
  httplib::Client client_;
};

std::shared_ptr<HttpChannel> make_channel(const std::string& origin,
                                          std::chrono::milliseconds timeout) {
  return std::make_shared<HttpChannel>(origin, timeout);
}

HttpLlmClient::HttpLlmClient(std::string completion_url, RetryPolicy retry,
                             std::chrono::milliseconds timeout,
                             std::shared_ptr<HttpChannel> channel)
    : url_(parse_url(completion_url)),
      retry_(retry),
      channel_(channel ? std::move(channel) : make_channel(url_.origin, timeout)) {}

std::string HttpLlmClient::complete(const std::vector<ChatMessage>& messages,
                                    const LlmOptions& opts) {
  Json body{{"messages", policy::to_json(messages)}};
  if (opts.temperature) body["temperature"] = *opts.temperature;
  if (opts.max_tokens) body["max_tokens"] = *opts.max_tokens;
  if (opts.agent_role) body["metadata"] = Json{{"agent_role", *opts.agent_role}};
  const auto payload = body.dump();
  auto r = send_with_retry([&] { return channel_->post(url_.path, payload); }, retry_, retries_);
  if (!r) throw LlmCallError(fmt::format("completion request failed: {}", describe(r)));
  if (r->status != 200) throw LlmCallError(describe(r), r->status);
  try {
    const auto j = Json::parse(r->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const std::exception& e) {
    throw LlmCallError(fmt::format("malformed completion response: {}", e.what()), r->status);
  }
}

LocalPolicyClient::LocalPolicyClient(std::shared_ptr<const PolicyParams> params,
                                     policy::Vocab vocab, bool greedy, std::uint64_t seed)
    : params_(std::move(params)), vocab_(std::move(vocab)), greedy_(greedy), seed_(seed) {
  if (params_->vocab_size != vocab_.size()) {
    throw ConfigError(fmt::format("policy vocab size {} does not match scenario vocab size {}",
                                  params_->vocab_size, vocab_.size()));
  }
}

std::string LocalPolicyClient::complete(const std::vector<ChatMessage>& messages,
                                        const LlmOptions& opts) {
  const auto prompt = policy::render_prompt(vocab_, messages);
  const int max_tokens = opts.max_tokens.value_or(kDefaultMaxTokens);
  policy::SampledOutput out;
  if (greedy_) {
    out = policy::decode_greedy(*params_, prompt, max_tokens);
  } else {
    SamplingParams sp{opts.temperature.value_or(1.0), max_tokens, derive_key(seed_, calls_++)};
    out = policy::sample(*params_, prompt, sp);
  }
  return vocab_.detokenize(out.token_ids);
}

void WorkerPoolConfig::validate() const {
  if (num_workers < 1) throw ConfigError("num_workers must be >= 1");
  if (!(fail_rate >= 0.0 && fail_rate <= 1.0)) throw ConfigError("fail_rate must lie in [0, 1]");
  if (retry.max_retries < 0) throw ConfigError("max_retries must be >= 0");
}

bool injected_fault(const std::string& rollout_id, double fail_rate, std::uint64_t fault_seed) {
  if (fail_rate <= 0.0) return false;
  CounterRng rng(derive_key(fault_seed, rollout_id));
  return rng.next_unit() < fail_rate;
}

namespace {

struct WorkerState {
  std::size_t tickets = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  int retries = 0;
  std::vector<std::string> rollouts;
};

class Worker {
 public:
  Worker(std::string id, const Url& server, const ScenarioRuntime& scenario,
         const WorkerPoolConfig& cfg, const std::atomic<bool>* stop, std::atomic<bool>& abort)
      : id_(std::move(id)),
        server_(server),
        scenario_(scenario),
        cfg_(cfg),
        stop_(stop),
        abort_(abort),
        http_(make_channel(server.origin, std::chrono::seconds(30))),
        completions_(make_channel(server.origin, cfg.call_timeout)) {}

  void run() {
    while (!(stop_ && stop_->load()) && !abort_.load()) {
      auto r = send_with_retry(
          [&] { return http_->get(fmt::format("/api/tasks/next?worker_id={}", id_)); }, cfg_.retry,
          state.retries);
      if (transient(r)) throw ConnectivityError(fmt::format("task poll failed: {}", describe(r)));
      if (r->status == 200) {
        run_rollout(Json::parse(r->body));
        continue;
      }
      if (r->status != 204) throw Error(fmt::format("unexpected task poll answer: {}", describe(r)));
      if (finished()) return;
      std::this_thread::sleep_for(cfg_.backoff);
    }
  }

  WorkerState state;

 private:
  bool finished() {
    auto r = send_with_retry([&] { return http_->get("/api/status"); }, cfg_.retry, state.retries);
    if (transient(r)) throw ConnectivityError(fmt::format("status poll failed: {}", describe(r)));
    return Json::parse(r->body).value("stage", "") == "finished";
  }

  void run_rollout(const Json& ticket) {
    const auto rollout_id = ticket.at("rollout_id").get<std::string>();
    ++state.tickets;
    state.rollouts.push_back(rollout_id);
    const auto task = task_from_json(ticket.at("task"), "task");
    const auto url = ticket.at("resource").at("completion_url").get<std::string>();

    auto llm = std::make_shared<HttpLlmClient>(url, cfg_.retry, cfg_.call_timeout, completions_);
    auto ctx = std::make_shared<AgentContext>(task.payload, llm, scenario_.tools, cfg_.call_timeout);
    auto timeout = cfg_.rollout_timeout;
    if (ticket.contains("deadline")) {
      const auto left = (ticket.at("deadline").get<Timestamp>() - now_micros()) / 1000;
      timeout = std::min(timeout, std::chrono::milliseconds(std::max<Timestamp>(left, 1)));
    }
    auto result = guarded_execute(scenario_.harness, ctx, timeout);

    Json report{{"tool_spans", Json::array()}};
    for (const auto& span : ctx->tool_spans()) report["tool_spans"].push_back(to_json(span));
    std::optional<double> reward;
    if (result.ok()) {
      if (injected_fault(rollout_id, cfg_.fail_rate, cfg_.fault_seed)) {
        result.failure = FailureRecord{FailureKind::crash, "injected fault"};
      } else {
        try {
          reward = scenario_.reward(*result.answer, task.payload);
        } catch (const std::exception& e) {
          result.failure = FailureRecord{FailureKind::crash, fmt::format("reward: {}", e.what())};
        }
      }
    }
    if (reward) {
      report["status"] = "success";
      report["final_reward"] = *reward;
    } else {
      report["status"] = result.failure->kind == FailureKind::timeout ? "timed_out" : "failed";
      report["reason"] = result.failure->message;
      spdlog::debug("{}: rollout {} failed ({}): {}", id_, rollout_id,
                    to_string(result.failure->kind), result.failure->message);
    }
    state.retries += llm->retries();

    auto r = send_with_retry(
        [&] {
          return http_->post(fmt::format("/api/rollouts/{}/report", rollout_id), report.dump());
        },
        cfg_.retry, state.retries);
    if (transient(r)) throw ConnectivityError(fmt::format("report failed: {}", describe(r)));
    if (r->status == 200 && reward) {
      ++state.ok;
    } else {
      if (r->status != 200) spdlog::warn("{}: report for {} refused: {}", id_, rollout_id, describe(r));
      ++state.failed;
    }
  }

  std::string id_;
  Url server_;
  const ScenarioRuntime& scenario_;
  const WorkerPoolConfig& cfg_;
  const std::atomic<bool>* stop_;
  std::atomic<bool>& abort_;
  std::shared_ptr<HttpChannel> http_;
  // Shared by every rollout this worker runs, including abandoned ones still winding down.
  std::shared_ptr<HttpChannel> completions_;
};

}  // namespace

RunSummary run_worker_pool(const std::string& server_url, const ScenarioRuntime& scenario,
                           const WorkerPoolConfig& cfg, const std::atomic<bool>* stop) {
  cfg.validate();
  const auto server = parse_url(server_url);
  std::atomic<bool> abort{false};
  std::vector<std::unique_ptr<Worker>> workers;
  for (int i = 0; i < cfg.num_workers; ++i) {
    workers.push_back(std::make_unique<Worker>(fmt::format("{}-{}", cfg.worker_prefix, i), server,
                                               scenario, cfg, stop, abort));
  }
  std::vector<std::exception_ptr> errors(workers.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < workers.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        workers[i]->run();
      } catch (...) {
        errors[i] = std::current_exception();
        abort = true;
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RunSummary summary;
  for (const auto& w : workers) {
    summary.tickets += w->state.tickets;
    summary.rollouts_ok += w->state.ok;
    summary.rollouts_failed += w->state.failed;
    summary.retries += static_cast<std::size_t>(w->state.retries);
    summary.per_worker.push_back(w->state.rollouts);
  }
  return summary;
}

}  // namespace lightline::client
