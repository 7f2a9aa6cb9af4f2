#pragma once

// Training-side server: task inventory, per-rollout completion endpoints that trace every
// call, report ingestion, and the generation/training stage machine.

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "lightline/core/types.hpp"
#include "lightline/policy/vocab.hpp"
#include "lightline/server/inventory.hpp"

namespace httplib {
class Server;
}

namespace lightline::server {

struct ServerConfig {
  std::string bind_address = "127.0.0.1:8765";
  int batch_tasks = 8;
  int group_size = 4;
  int max_retries = 3;
  std::chrono::milliseconds rollout_timeout{120000};
  std::chrono::milliseconds call_timeout{30000};
  int min_group_size = 2;
  int total_steps = 10;
  // Completion length when a request names none, and the largest it may name.
  int default_max_tokens = 8;
  int max_tokens_cap = 32;

  void validate() const;
};

enum class Stage { generation, training, finished };
std::string_view to_string(Stage s);

struct HttpReply {
  int status = 200;
  // Omitted from the wire for 204.
  Json body;
};

using Clock = std::function<Timestamp()>;

class TrainingServer {
 public:
  // `sampling_key` seeds every completion: the draw for turn t of rollout r uses
  // derive_key(sampling_key, fnv1a64(r), t).
  TrainingServer(ServerConfig cfg, policy::Vocab vocab, PolicyParams initial,
                 std::uint64_t sampling_key, Clock clock = now_micros);
  ~TrainingServer();
  TrainingServer(const TrainingServer&) = delete;
  TrainingServer& operator=(const TrainingServer&) = delete;

  // ---- protocol handlers; `origin` is the scheme://host:port workers reach us at
  HttpReply next_task(const std::string& worker_id, const std::string& origin);
  HttpReply completion(const std::string& rollout_id, const std::string& body);
  HttpReply report(const std::string& rollout_id, const std::string& body);
  Json status() const;

  // ---- stage control
  // Opens a generation stage of tasks x group_size slots served by the current params.
  void open_generation(std::size_t step, const std::vector<TaskSpec>& tasks);
  // Blocks until every slot succeeded or was abandoned, expiring leases on the way.
  // Returns early if finish() is called meanwhile.
  void await_generation(std::chrono::milliseconds poll = std::chrono::milliseconds(10));
  // Moves to the training stage; returns the stage's sealed traces sorted by rollout id.
  std::vector<RolloutTrace> close_generation();
  // Only legal outside a generation stage.
  void set_params(PolicyParams params);
  void finish();

  Stage stage() const;
  std::uint64_t policy_version() const;
  PolicyParams params() const;
  InventoryCounts counts() const;
  const ServerConfig& config() const { return cfg_; }
  const policy::Vocab& vocab() const { return vocab_; }

  // ---- HTTP
  // Binds `host:port` (port 0 picks a free port), serves in a background thread and
  // returns the bound port. Throws Error when the bind fails.
  int start(const std::string& host, int port);
  void stop();
  // http://host:port of the running listener.
  std::string base_url() const;

 private:
  struct RolloutBuffer;

  std::vector<std::string> expire_locked(Timestamp now);
  void close_buffer(const std::string& rollout_id);

  ServerConfig cfg_;
  policy::Vocab vocab_;
  std::uint64_t sampling_key_;
  Clock clock_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  Stage stage_ = Stage::training;
  std::size_t step_ = 0;
  std::shared_ptr<const PolicyParams> params_;
  Inventory inventory_;
  std::map<std::string, std::shared_ptr<RolloutBuffer>> buffers_;
  std::vector<RolloutTrace> completed_;

  std::unique_ptr<httplib::Server> http_;
  std::thread listener_;
  std::string base_url_;
};

}  // namespace lightline::server
