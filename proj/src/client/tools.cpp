#include "lightline/client/tools.hpp"

#include <future>
#include <thread>

#include <fmt/format.h>

#include "lightline/core/errors.hpp"

namespace lightline::client {

ToolOutcome ToolOutcome::failure(std::string message, Json detail) {
  if (!detail.is_object()) detail = Json{{"detail", std::move(detail)}};
  detail["error"] = std::move(message);
  return {CallStatus::error, std::move(detail)};
}

ServicePool::ServicePool(std::size_t size, const std::function<ToolFn()>& factory) {
  if (size == 0) throw ConfigError("service pool size must be >= 1");
  for (std::size_t i = 0; i < size; ++i) {
    instances_.push_back(factory());
    free_.push_back(size - 1 - i);
  }
}

ServicePool::Lease::~Lease() {
  if (pool_) pool_->release(slot_);
}

ServicePool::Lease ServicePool::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !free_.empty(); });
  const auto slot = free_.back();
  free_.pop_back();
  return Lease(this, slot);
}

void ServicePool::release(std::size_t slot) {
  {
    std::lock_guard lock(mu_);
    free_.push_back(slot);
  }
  cv_.notify_one();
}

void ToolRegistry::add_stateless(std::string name, ToolFn fn) {
  tools_[std::move(name)] = Entry{ToolKind::stateless, std::move(fn), nullptr};
}

void ToolRegistry::add_pooled(std::string name, std::size_t pool_size,
                              const std::function<ToolFn()>& factory) {
  tools_[std::move(name)] =
      Entry{ToolKind::pooled_service, nullptr, std::make_shared<ServicePool>(pool_size, factory)};
}

bool ToolRegistry::contains(const std::string& name) const { return tools_.contains(name); }

ToolKind ToolRegistry::kind(const std::string& name) const { return entry(name).kind; }

const ToolRegistry::Entry& ToolRegistry::entry(const std::string& name) const {
  auto it = tools_.find(name);
  if (it == tools_.end()) throw ConfigError(fmt::format("unknown tool '{}'", name));
  return it->second;
}

namespace {

ToolOutcome call_guarded(const ToolFn& fn, const Json& input) {
  try {
    return fn(input);
  } catch (const std::exception& e) {
    return ToolOutcome::failure(fmt::format("tool raised: {}", e.what()));
  } catch (...) {
    return ToolOutcome::failure("tool raised a non-standard exception");
  }
}

ToolOutcome run_entry(const std::shared_ptr<ServicePool>& pool, const ToolFn& fn,
                      const Json& input) {
  if (pool) {
    auto lease = pool->acquire();
    return call_guarded(lease.instance(), input);
  }
  return call_guarded(fn, input);
}

}  // namespace

ToolOutcome ToolRegistry::run(const std::string& name, const Json& input) const {
  const auto& e = entry(name);
  return run_entry(e.pool, e.fn, input);
}

ToolOutcome ToolRegistry::run_with_timeout(const std::string& name, const Json& input,
                                           std::chrono::milliseconds timeout) const {
  const auto& e = entry(name);
  auto promise = std::make_shared<std::promise<ToolOutcome>>();
  auto future = promise->get_future();
  // The thread owns copies of everything it touches so it can outlive this call.
  std::thread([promise, pool = e.pool, fn = e.fn, input] {
    promise->set_value(run_entry(pool, fn, input));
  }).detach();
  if (future.wait_for(timeout) == std::future_status::ready) return future.get();
  return {CallStatus::timeout,
          Json{{"error", fmt::format("tool '{}' exceeded {} ms", name, timeout.count())}}};
}

}  // namespace lightline::client
