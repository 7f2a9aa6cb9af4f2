#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "lightline/core/types.hpp"

namespace lightline::client {

enum class ToolKind { stateless, pooled_service };

struct ToolOutcome {
  CallStatus status = CallStatus::ok;
  // Output on success; an error object (at least {"error": message}) otherwise.
  Json value;

  bool ok() const { return status == CallStatus::ok; }

  static ToolOutcome success(Json v) { return {CallStatus::ok, std::move(v)}; }
  static ToolOutcome failure(std::string message, Json detail = Json::object());
};

using ToolFn = std::function<ToolOutcome(const Json& input)>;

// A fixed set of service instances handed out one caller at a time.
class ServicePool {
 public:
  ServicePool(std::size_t size, const std::function<ToolFn()>& factory);

  class Lease {
   public:
    Lease(ServicePool* pool, std::size_t slot) : pool_(pool), slot_(slot) {}
    Lease(Lease&& o) noexcept : pool_(std::exchange(o.pool_, nullptr)), slot_(o.slot_) {}
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    Lease& operator=(Lease&&) = delete;
    ~Lease();

    const ToolFn& instance() const { return pool_->instances_[slot_]; }

   private:
    ServicePool* pool_;
    std::size_t slot_;
  };

  // Blocks until an instance is free.
  Lease acquire();
  std::size_t size() const { return instances_.size(); }

 private:
  void release(std::size_t slot);

  std::vector<ToolFn> instances_;
  std::vector<std::size_t> free_;
  std::mutex mu_;
  std::condition_variable cv_;
};

class ToolRegistry {
 public:
  // Stateless tools must be safe to call concurrently.
  void add_stateless(std::string name, ToolFn fn);
  void add_pooled(std::string name, std::size_t pool_size, const std::function<ToolFn()>& factory);

  bool contains(const std::string& name) const;
  ToolKind kind(const std::string& name) const;

  // Runs the tool synchronously. Exceptions thrown by the tool become error outcomes.
  // Throws ConfigError for an unknown name.
  ToolOutcome run(const std::string& name, const Json& input) const;

  // Runs the tool on a detached thread and gives up after `timeout`, returning a timeout
  // outcome. A pooled instance stays leased until the abandoned call actually returns.
  ToolOutcome run_with_timeout(const std::string& name, const Json& input,
                               std::chrono::milliseconds timeout) const;

 private:
  struct Entry {
    ToolKind kind;
    ToolFn fn;
    std::shared_ptr<ServicePool> pool;
  };
  const Entry& entry(const std::string& name) const;

  std::map<std::string, Entry> tools_;
};

}  // namespace lightline::client
