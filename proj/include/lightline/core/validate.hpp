#pragma once

#include <string>
#include <vector>

#include "lightline/core/types.hpp"

namespace lightline {

struct ValidationReport {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

// Reports every invariant violation of a trace. Never throws.
ValidationReport validate_trace(const RolloutTrace& trace);

// Checks task-level invariants of a dataset (unique ids, group sizes).
ValidationReport validate_tasks(const std::vector<TaskSpec>& tasks, bool require_groups);

}  // namespace lightline
