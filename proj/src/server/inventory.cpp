#include "lightline/server/inventory.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "lightline/core/errors.hpp"

namespace lightline::server {

std::string make_rollout_id(std::size_t step, const std::string& task_id, int k, int attempt) {
  return fmt::format("s{:04}-{}-k{}-a{}", step, task_id, k, attempt);
}

Inventory::Inventory(int max_retries, Timestamp lease_micros)
    : max_retries_(max_retries), lease_micros_(lease_micros) {
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (lease_micros <= 0) throw ConfigError("lease time must be positive");
}

void Inventory::reset(std::size_t step, const std::vector<TaskSpec>& tasks, int group_size) {
  if (group_size < 1) throw ConfigError("group_size must be >= 1");
  step_ = step;
  slots_.clear();
  by_rollout_.clear();
  for (const auto& t : tasks) {
    for (int k = 0; k < group_size; ++k) slots_.push_back(Slot{t, k});
  }
  std::sort(slots_.begin(), slots_.end(), [](const Slot& a, const Slot& b) {
    return std::tie(a.task.task_id, a.k) < std::tie(b.task.task_id, b.k);
  });
  for (std::size_t i = 1; i < slots_.size(); ++i) {
    if (slots_[i].task.task_id == slots_[i - 1].task.task_id && slots_[i].k == slots_[i - 1].k) {
      throw ConfigError(fmt::format("task '{}' appears twice in one batch", slots_[i].task.task_id));
    }
  }
}

std::optional<Slot> Inventory::lease(const std::string& worker_id, Timestamp now) {
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    auto& s = slots_[i];
    if (s.state != SlotState::unassigned) continue;
    s.state = SlotState::leased;
    s.worker_id = worker_id;
    s.deadline = now + lease_micros_;
    s.rollout_id = make_rollout_id(step_, s.task.task_id, s.k, s.attempt);
    by_rollout_[s.rollout_id] = i;
    return s;
  }
  return std::nullopt;
}

void Inventory::fail(Slot& slot) {
  by_rollout_.erase(slot.rollout_id);
  if (slot.attempt < max_retries_) {
    ++slot.attempt;
    slot.state = SlotState::unassigned;
    slot.worker_id.clear();
  } else {
    slot.state = SlotState::abandoned;
  }
}

bool Inventory::resolve(const std::string& rollout_id, bool success) {
  auto it = by_rollout_.find(rollout_id);
  if (it == by_rollout_.end()) return false;
  auto& slot = slots_[it->second];
  if (slot.state != SlotState::leased) return false;
  if (success) {
    slot.state = SlotState::succeeded;
    by_rollout_.erase(it);
  } else {
    fail(slot);
  }
  return true;
}

std::vector<std::string> Inventory::expire(Timestamp now) {
  std::vector<std::string> expired;
  for (auto& s : slots_) {
    if (s.state == SlotState::leased && now >= s.deadline) {
      expired.push_back(s.rollout_id);
      fail(s);
    }
  }
  return expired;
}

bool Inventory::done() const {
  return std::all_of(slots_.begin(), slots_.end(), [](const Slot& s) {
    return s.state == SlotState::succeeded || s.state == SlotState::abandoned;
  });
}

InventoryCounts Inventory::counts() const {
  InventoryCounts c;
  for (const auto& s : slots_) {
    switch (s.state) {
      case SlotState::unassigned: ++c.unassigned; break;
      case SlotState::leased: ++c.leased; break;
      case SlotState::succeeded: ++c.succeeded; break;
      case SlotState::abandoned: ++c.abandoned; break;
    }
  }
  return c;
}

}  // namespace lightline::server
