#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lightline/core/types.hpp"

namespace lightline::server {

enum class SlotState { unassigned, leased, succeeded, abandoned };

// One (task, k) rollout slot of a generation stage.
struct Slot {
  TaskSpec task;
  int k = 0;
  int attempt = 0;
  SlotState state = SlotState::unassigned;
  // Valid while leased, and for the final attempt once resolved.
  std::string rollout_id;
  std::string worker_id;
  Timestamp deadline = 0;
};

// s{step:04}-{task_id}-k{k}-a{attempt}
std::string make_rollout_id(std::size_t step, const std::string& task_id, int k, int attempt);

struct InventoryCounts {
  std::size_t unassigned = 0;
  std::size_t leased = 0;
  std::size_t succeeded = 0;
  std::size_t abandoned = 0;
};

// Leases (task, k) slots in lexicographic order. Not thread-safe; the owner serializes.
class Inventory {
 public:
  Inventory(int max_retries, Timestamp lease_micros);

  // Replaces every slot with B x K fresh ones.
  void reset(std::size_t step, const std::vector<TaskSpec>& tasks, int group_size);

  // Smallest unassigned slot, now leased to `worker_id` until now + lease time.
  std::optional<Slot> lease(const std::string& worker_id, Timestamp now);

  // Outcome of the attempt `rollout_id`. Returns false when that attempt no longer holds the
  // lease (expired or already resolved); nothing changes then.
  bool resolve(const std::string& rollout_id, bool success);

  // Returns the rollout ids whose leases passed their deadline. Each such slot goes back to
  // the inventory with attempt + 1, or is abandoned once attempt == max_retries.
  std::vector<std::string> expire(Timestamp now);

  // Every slot succeeded or was abandoned.
  bool done() const;
  InventoryCounts counts() const;
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  void fail(Slot& slot);

  int max_retries_;
  Timestamp lease_micros_;
  std::size_t step_ = 0;
  // Sorted by (task_id, k).
  std::vector<Slot> slots_;
  std::map<std::string, std::size_t> by_rollout_;
};

}  // namespace lightline::server
