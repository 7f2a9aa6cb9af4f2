#include "lightline/server/server.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "lightline/core/errors.hpp"
#include "lightline/core/json_reader.hpp"
#include "lightline/core/rng.hpp"
#include "lightline/core/trace_io.hpp"
#include "lightline/core/validate.hpp"
#include "lightline/policy/chat.hpp"
#include "lightline/policy/policy.hpp"

namespace lightline::server {

void ServerConfig::validate() const {
  if (batch_tasks < 1) throw ConfigError("batch_tasks must be >= 1");
  if (group_size < 1) throw ConfigError("group_size must be >= 1");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (rollout_timeout.count() <= 0) throw ConfigError("rollout_timeout must be positive");
  if (call_timeout.count() <= 0) throw ConfigError("call_timeout must be positive");
  if (min_group_size < 1 || min_group_size > group_size) {
    throw ConfigError(fmt::format("min_group_size must lie in [1, group_size = {}], got {}",
                                  group_size, min_group_size));
  }
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (default_max_tokens < 1 || default_max_tokens > max_tokens_cap) {
    throw ConfigError("default_max_tokens must lie in [1, max_tokens_cap]");
  }
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::generation: return "generation";
    case Stage::training: return "training";
    case Stage::finished: return "finished";
  }
  return "?";
}

struct TrainingServer::RolloutBuffer {
  std::mutex mu;
  std::string rollout_id;
  TaskSpec task;
  int attempt = 0;
  std::uint64_t policy_version = 0;
  std::vector<CallRecord> llm_calls;
  // No further completions or reports are taken once closed.
  bool closed = false;
  bool reported = false;
};

namespace {

HttpReply error_reply(int status, const std::string& message, Json detail = nullptr) {
  Json body{{"error", {{"message", message}, {"code", status}}}};
  if (!detail.is_null()) body["error"]["detail"] = std::move(detail);
  return {status, std::move(body)};
}

}  // namespace

TrainingServer::TrainingServer(ServerConfig cfg, policy::Vocab vocab, PolicyParams initial,
                               std::uint64_t sampling_key, Clock clock)
    : cfg_(std::move(cfg)),
      vocab_(std::move(vocab)),
      sampling_key_(sampling_key),
      clock_(std::move(clock)),
      inventory_(cfg_.max_retries, cfg_.rollout_timeout.count() * 1000) {
  cfg_.validate();
  if (initial.vocab_size != vocab_.size()) {
    throw ConfigError(fmt::format("policy vocab size {} does not match vocab size {}",
                                  initial.vocab_size, vocab_.size()));
  }
  params_ = std::make_shared<const PolicyParams>(std::move(initial));
}

TrainingServer::~TrainingServer() { stop(); }

// ------------------------------------------------------------------ protocol

HttpReply TrainingServer::next_task(const std::string& worker_id, const std::string& origin) {
  std::lock_guard lock(mu_);
  if (stage_ != Stage::generation) return {204, nullptr};
  const auto now = clock_();
  expire_locked(now);
  auto slot = inventory_.lease(worker_id, now);
  if (!slot) return {204, nullptr};

  auto buf = std::make_shared<RolloutBuffer>();
  buf->rollout_id = slot->rollout_id;
  buf->task = slot->task;
  buf->attempt = slot->attempt;
  buf->policy_version = params_->version;
  buffers_[slot->rollout_id] = buf;

  Json ticket{
      {"rollout_id", slot->rollout_id},
      {"task", to_json(slot->task)},
      {"resource",
       {{"completion_url",
         fmt::format("{}/rollout/{}/v1/chat/completions", origin, slot->rollout_id)},
        {"policy_version", params_->version},
        {"sampling", {{"temperature", 1.0}, {"max_tokens", cfg_.default_max_tokens}}}}},
      {"deadline", slot->deadline},
      {"attempt", slot->attempt}};
  spdlog::debug("leased {} to {}", slot->rollout_id, worker_id);
  return {200, std::move(ticket)};
}

HttpReply TrainingServer::completion(const std::string& rollout_id, const std::string& body) {
  std::shared_ptr<RolloutBuffer> buf;
  std::shared_ptr<const PolicyParams> params;
  {
    std::lock_guard lock(mu_);
    auto it = buffers_.find(rollout_id);
    if (it == buffers_.end()) return error_reply(404, fmt::format("unknown rollout '{}'", rollout_id));
    if (stage_ != Stage::generation) return error_reply(409, "stage closed");
    buf = it->second;
    params = params_;
  }

  std::vector<policy::ChatMessage> messages;
  SamplingParams sampling{1.0, cfg_.default_max_tokens, std::nullopt};
  std::optional<std::string> role;
  try {
    const auto j = Json::parse(body);
    ObjectReader r(j, "");
    messages = policy::messages_from_json(r.required("messages"), "messages");
    if (r.optional("temperature")) sampling.temperature = r.real("temperature");
    if (r.optional("max_tokens")) sampling.max_tokens = static_cast<int>(r.integer("max_tokens"));
    if (const auto* meta = r.optional("metadata")) {
      ObjectReader m(*meta, "metadata");
      if (m.optional("agent_role")) role = m.string("agent_role");
    }
  } catch (const Json::parse_error& e) {
    return error_reply(400, fmt::format("malformed JSON: {}", e.what()));
  } catch (const ParseError& e) {
    return error_reply(400, e.what(), Json{{"field", e.field()}});
  }
  if (!(sampling.temperature > 0.0)) return error_reply(400, "temperature must be > 0");
  if (sampling.max_tokens < 1 || sampling.max_tokens > cfg_.max_tokens_cap) {
    return error_reply(400, fmt::format("max_tokens must lie in [1, {}], got {}",
                                        cfg_.max_tokens_cap, sampling.max_tokens));
  }
  const auto prompt = policy::render_prompt(vocab_, messages);

  std::lock_guard lock(buf->mu);
  if (buf->closed) return error_reply(409, fmt::format("rollout '{}' is closed", rollout_id));
  const std::size_t turn = buf->llm_calls.size();
  sampling.seed = derive_key(sampling_key_, fnv1a64(rollout_id), turn);
  const auto out = policy::sample(*params, prompt, sampling);
  const auto text = vocab_.detokenize(out.token_ids);

  CallRecord rec;
  rec.meta.component_kind = ComponentKind::llm;
  rec.meta.component_name = "policy";
  rec.meta.role = role;
  rec.meta.endpoint_version = params->version;
  rec.meta.sampling = sampling;
  rec.meta.sequence_index = turn;
  rec.meta.wall_clock = clock_();
  rec.input = Json{{"messages", policy::to_json(messages)}};
  rec.output = Json{{"content", text}, {"finish_reason", policy::to_string(out.finish_reason)}};
  rec.token_detail = TokenDetail{prompt, out.token_ids, out.logprobs};
  buf->llm_calls.push_back(std::move(rec));

  return {200,
          Json{{"id", fmt::format("{}-{}", rollout_id, turn)},
               {"object", "chat.completion"},
               {"model", fmt::format("policy-v{}", params->version)},
               {"choices",
                {{{"index", 0},
                  {"message", {{"role", "assistant"}, {"content", text}}},
                  {"finish_reason", policy::to_string(out.finish_reason)}}}},
               {"usage",
                {{"prompt_tokens", prompt.size()},
                 {"completion_tokens", out.token_ids.size()},
                 {"total_tokens", prompt.size() + out.token_ids.size()}}}}};
}

HttpReply TrainingServer::report(const std::string& rollout_id, const std::string& body) {
  RolloutStatus status = RolloutStatus::success;
  std::optional<double> final_reward;
  std::vector<RewardSignal> intermediate;
  std::vector<CallRecord> spans;
  try {
    const auto j = Json::parse(body);
    ObjectReader r(j, "");
    const auto s = r.string("status");
    const auto parsed = parse_rollout_status(s);
    if (!parsed) r.fail("status", fmt::format("unknown rollout status '{}'", s));
    status = *parsed;
    if (r.optional("final_reward")) final_reward = r.real("final_reward");
    if (const auto* ir = r.optional("intermediate_rewards")) {
      if (!ir->is_array()) r.fail("intermediate_rewards", "expected an array");
      for (std::size_t i = 0; i < ir->size(); ++i) {
        ObjectReader e((*ir)[i], fmt::format("intermediate_rewards[{}]", i));
        const auto idx = e.integer("call_index");
        if (idx < 0) e.fail("call_index", "must be >= 0");
        intermediate.push_back(RewardSignal{static_cast<std::size_t>(idx), e.real("value"),
                                            RewardSource::intermediate_user});
        e.finish();
      }
    }
    if (const auto* ts = r.optional("tool_spans")) {
      if (!ts->is_array()) r.fail("tool_spans", "expected an array");
      for (std::size_t i = 0; i < ts->size(); ++i) {
        spans.push_back(call_from_json((*ts)[i], fmt::format("tool_spans[{}]", i)));
      }
    }
    r.optional("reason");
    r.finish();
  } catch (const Json::parse_error& e) {
    return error_reply(400, fmt::format("malformed JSON: {}", e.what()));
  } catch (const ParseError& e) {
    return error_reply(400, e.what(), Json{{"field", e.field()}});
  }

  std::lock_guard lock(mu_);
  auto it = buffers_.find(rollout_id);
  if (it == buffers_.end()) return error_reply(404, fmt::format("unknown rollout '{}'", rollout_id));
  auto buf = it->second;
  std::lock_guard buf_lock(buf->mu);
  if (buf->reported) return {200, Json{{"ack", true}, {"duplicate", true}}};
  if (buf->closed) {
    spdlog::warn("dropping late report for {}", rollout_id);
    return error_reply(409, fmt::format("rollout '{}' is closed; late report dropped", rollout_id));
  }

  // Tool spans keep the positions the client stamped; llm records fill the gaps in order.
  const std::size_t n = buf->llm_calls.size() + spans.size();
  std::vector<std::optional<CallRecord>> merged(n);
  std::vector<std::string> violations;
  for (auto& s : spans) {
    const auto idx = s.meta.sequence_index;
    if (s.meta.component_kind != ComponentKind::tool) {
      violations.push_back(fmt::format("span at {} is not a tool call", idx));
    } else if (idx >= n) {
      violations.push_back(fmt::format("tool span index {} outside [0, {})", idx, n));
    } else if (merged[idx]) {
      violations.push_back(fmt::format("duplicate tool span index {}", idx));
    } else {
      merged[idx] = std::move(s);
    }
  }
  if (!violations.empty()) return error_reply(400, "invalid tool spans", violations);

  RolloutTrace trace;
  trace.rollout_id = rollout_id;
  trace.task_id = buf->task.task_id;
  trace.attempt_index = buf->attempt;
  trace.status = status;
  std::size_t next_llm = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!merged[i]) merged[i] = buf->llm_calls[next_llm++];
    merged[i]->meta.sequence_index = i;
    trace.calls.push_back(std::move(*merged[i]));
  }
  trace.rewards = intermediate;
  if (final_reward) {
    // The final reward attaches to the last call; index 0 stands in for an empty trace,
    // which validation then rejects as out of range.
    trace.rewards.push_back(RewardSignal{n == 0 ? 0 : n - 1, *final_reward, RewardSource::final});
  }
  const auto report = validate_trace(trace);
  if (!report.ok()) return error_reply(400, "trace validation failed", report.violations);

  buf->reported = true;
  buf->closed = true;
  buf->llm_calls.clear();
  inventory_.resolve(rollout_id, status == RolloutStatus::success);
  completed_.push_back(std::move(trace));
  cv_.notify_all();
  return {200, Json{{"ack", true}, {"duplicate", false}}};
}

Json TrainingServer::status() const {
  std::lock_guard lock(mu_);
  return Json{{"stage", to_string(stage_)},
              {"step", step_},
              {"policy_version", params_->version},
              {"open_rollouts", inventory_.counts().leased}};
}

// ------------------------------------------------------------------ stage control

void TrainingServer::close_buffer(const std::string& rollout_id) {
  auto it = buffers_.find(rollout_id);
  if (it == buffers_.end()) return;
  std::lock_guard lock(it->second->mu);
  it->second->closed = true;
  it->second->llm_calls.clear();
}

std::vector<std::string> TrainingServer::expire_locked(Timestamp now) {
  auto expired = inventory_.expire(now);
  for (const auto& id : expired) {
    spdlog::warn("lease for {} expired unreported", id);
    close_buffer(id);
  }
  return expired;
}

void TrainingServer::open_generation(std::size_t step, const std::vector<TaskSpec>& tasks) {
  std::lock_guard lock(mu_);
  if (stage_ == Stage::finished) throw IntegrityError("server already finished");
  if (stage_ == Stage::generation) throw IntegrityError("a generation stage is already open");
  inventory_.reset(step, tasks, cfg_.group_size);
  completed_.clear();
  // Buffers of earlier stages remain only as closed shells so late traffic gets a 409.
  for (auto& [id, buf] : buffers_) {
    std::lock_guard buf_lock(buf->mu);
    buf->closed = true;
  }
  step_ = step;
  stage_ = Stage::generation;
}

void TrainingServer::await_generation(std::chrono::milliseconds poll) {
  std::unique_lock lock(mu_);
  while (!inventory_.done() && stage_ == Stage::generation) {
    cv_.wait_for(lock, poll);
    expire_locked(clock_());
  }
}

std::vector<RolloutTrace> TrainingServer::close_generation() {
  std::lock_guard lock(mu_);
  if (stage_ != Stage::generation) throw IntegrityError("no generation stage is open");
  stage_ = Stage::training;
  for (const auto& s : inventory_.slots()) {
    if (s.state == SlotState::leased) close_buffer(s.rollout_id);
  }
  auto traces = std::move(completed_);
  completed_.clear();
  std::sort(traces.begin(), traces.end(), [](const RolloutTrace& a, const RolloutTrace& b) {
    return a.rollout_id < b.rollout_id;
  });
  return traces;
}

void TrainingServer::set_params(PolicyParams params) {
  std::lock_guard lock(mu_);
  if (stage_ == Stage::generation) {
    throw IntegrityError("policy weights cannot change during a generation stage");
  }
  if (params.vocab_size != vocab_.size()) throw ConfigError("policy vocab size mismatch");
  params_ = std::make_shared<const PolicyParams>(std::move(params));
}

void TrainingServer::finish() {
  std::lock_guard lock(mu_);
  stage_ = Stage::finished;
}

Stage TrainingServer::stage() const {
  std::lock_guard lock(mu_);
  return stage_;
}

std::uint64_t TrainingServer::policy_version() const {
  std::lock_guard lock(mu_);
  return params_->version;
}

PolicyParams TrainingServer::params() const {
  std::lock_guard lock(mu_);
  return *params_;
}

InventoryCounts TrainingServer::counts() const {
  std::lock_guard lock(mu_);
  return inventory_.counts();
}

// ------------------------------------------------------------------ HTTP

namespace {

void send(httplib::Response& res, const HttpReply& reply) {
  res.status = reply.status;
  if (reply.status != 204) res.set_content(reply.body.dump(), "application/json");
}

}  // namespace

int TrainingServer::start(const std::string& host, int port) {
  if (http_) throw Error("server already started");
  http_ = std::make_unique<httplib::Server>();
  http_->new_task_queue = [] { return new httplib::ThreadPool(16); };
  http_->set_keep_alive_max_count(1000000);
  http_->set_tcp_nodelay(true);

  http_->Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
    const auto host_header = req.get_header_value("Host");
    const auto origin = host_header.empty() ? base_url_ : "http://" + host_header;
    send(res, next_task(req.get_param_value("worker_id"), origin));
  });
  http_->Post(R"(/rollout/([^/]+)/v1/chat/completions)",
              [this](const httplib::Request& req, httplib::Response& res) {
                send(res, completion(req.matches[1], req.body));
              });
  http_->Post(R"(/api/rollouts/([^/]+)/report)",
              [this](const httplib::Request& req, httplib::Response& res) {
                send(res, report(req.matches[1], req.body));
              });
  http_->Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
    send(res, {200, status()});
  });
  http_->set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          what = e.what();
        } catch (...) {
        }
        spdlog::error("request failed: {}", what);
        send(res, error_reply(500, what));
      });

  int bound = port;
  if (port == 0) {
    bound = http_->bind_to_any_port(host);
  } else if (!http_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound <= 0) {
    http_.reset();
    throw Error(fmt::format("cannot bind {}:{}", host, port));
  }
  base_url_ = fmt::format("http://{}:{}", host, bound);
  listener_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return bound;
}

void TrainingServer::stop() {
  if (!http_) return;
  http_->stop();
  if (listener_.joinable()) listener_.join();
  http_.reset();
}

std::string TrainingServer::base_url() const { return base_url_; }

}  // namespace lightline::server
