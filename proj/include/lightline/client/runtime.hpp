#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>

#include "lightline/client/agent.hpp"
#include "lightline/policy/vocab.hpp"

namespace lightline::client {

// The server could not be reached within the retry budget.
class ConnectivityError : public Error {
 public:
  using Error::Error;
};

struct Url {
  // scheme://host:port
  std::string origin;
  // Starts with '/'; "/" when the URL has no path.
  std::string path;
};
// Accepts http://host[:port][/path]. Throws ConfigError otherwise.
Url parse_url(const std::string& url);

// A keep-alive HTTP connection to one origin, serialized by a mutex.
class HttpChannel;
std::shared_ptr<HttpChannel> make_channel(const std::string& origin,
                                          std::chrono::milliseconds timeout);

// Posts to a rollout's completion endpoint. Transport failures and 5xx responses are
// retried under `retry`; other error statuses fail immediately. A channel to the URL's
// origin may be shared with other clients.
class HttpLlmClient : public LlmClient {
 public:
  HttpLlmClient(std::string completion_url, RetryPolicy retry,
                std::chrono::milliseconds timeout = std::chrono::seconds(30),
                std::shared_ptr<HttpChannel> channel = nullptr);

  std::string complete(const std::vector<ChatMessage>& messages, const LlmOptions& opts) override;

  // Transport-level retries performed so far.
  int retries() const { return retries_; }

 private:
  Url url_;
  RetryPolicy retry_;
  std::shared_ptr<HttpChannel> channel_;
  std::atomic<int> retries_{0};
};

// Serves completions from an in-memory policy with the same prompt template as the server.
// Greedy when `greedy`; otherwise samples with seeds derived from (seed, call index).
class LocalPolicyClient : public LlmClient {
 public:
  LocalPolicyClient(std::shared_ptr<const PolicyParams> params, policy::Vocab vocab, bool greedy,
                    std::uint64_t seed = 0);

  std::string complete(const std::vector<ChatMessage>& messages, const LlmOptions& opts) override;

 private:
  std::shared_ptr<const PolicyParams> params_;
  policy::Vocab vocab_;
  bool greedy_;
  std::uint64_t seed_;
  std::atomic<std::uint64_t> calls_{0};
};

inline constexpr int kDefaultMaxTokens = 8;

struct WorkerPoolConfig {
  int num_workers = 1;
  std::chrono::milliseconds poll_interval{20};
  // Sleep after a no-task answer.
  std::chrono::milliseconds backoff{50};
  RetryPolicy retry;
  std::chrono::milliseconds rollout_timeout{120000};
  std::chrono::milliseconds call_timeout{30000};
  // Fraction of rollouts sabotaged for fault-injection runs; decided per rollout id.
  double fail_rate = 0.0;
  std::uint64_t fault_seed = 0;
  std::string worker_prefix = "worker";

  void validate() const;
};

struct RunSummary {
  std::size_t tickets = 0;
  std::size_t rollouts_ok = 0;
  std::size_t rollouts_failed = 0;
  // Transport-level retries across every request the pool made.
  std::size_t retries = 0;
  // Rollout ids each worker handled, indexed by worker.
  std::vector<std::vector<std::string>> per_worker;
};

// True when the fault injector sabotages this rollout.
bool injected_fault(const std::string& rollout_id, double fail_rate, std::uint64_t fault_seed);

// Runs workers until the server reports stage "finished" or `stop` becomes true. Throws
// ConnectivityError if the server cannot be reached within the retry budget.
RunSummary run_worker_pool(const std::string& server_url, const ScenarioRuntime& scenario,
                           const WorkerPoolConfig& cfg, const std::atomic<bool>* stop = nullptr);

}  // namespace lightline::client
