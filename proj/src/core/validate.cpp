#include "lightline/core/validate.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

namespace lightline {

ValidationReport validate_trace(const RolloutTrace& trace) {
  ValidationReport report;
  auto& v = report.violations;

  for (std::size_t i = 0; i < trace.calls.size(); ++i) {
    const auto& call = trace.calls[i];
    const auto& meta = call.meta;
    if (meta.sequence_index != i) {
      v.push_back(fmt::format("sequence index mismatch at call {}: expected {}, found {}", i, i,
                              meta.sequence_index));
    }
    const bool is_llm = meta.component_kind == ComponentKind::llm;
    if (is_llm != meta.endpoint_version.has_value()) {
      v.push_back(fmt::format("endpoint_version must be present iff call is llm (call {})", i));
    }
    if (call.token_detail) {
      if (!is_llm) {
        v.push_back(fmt::format("token_detail on a non-llm call (call {})", i));
      }
      const auto& td = *call.token_detail;
      if (td.output_logprobs.size() != td.output_token_ids.size()) {
        v.push_back(fmt::format("logprob length mismatch at call {}", i));
      }
      for (double lp : td.output_logprobs) {
        if (!(lp <= 0.0)) {
          v.push_back(fmt::format("positive or non-finite logprob at call {}", i));
          break;
        }
      }
    }
  }

  int finals = 0;
  for (const auto& r : trace.rewards) {
    if (r.call_index >= trace.calls.size()) {
      v.push_back(fmt::format("reward index out of range: {} >= {}", r.call_index,
                              trace.calls.size()));
    }
    if (!std::isfinite(r.value)) {
      v.push_back(fmt::format("non-finite reward at call {}", r.call_index));
    }
    if (r.source == RewardSource::final) ++finals;
  }
  if (finals > 1) v.push_back("duplicate final reward");
  if (trace.status == RolloutStatus::success && finals == 0) {
    v.push_back("successful rollout without a final reward");
  }
  if (trace.attempt_index < 0) v.push_back("negative attempt index");
  return report;
}

ValidationReport validate_tasks(const std::vector<TaskSpec>& tasks, bool require_groups) {
  ValidationReport report;
  std::set<std::string> seen;
  for (const auto& t : tasks) {
    if (!seen.insert(t.task_id).second) {
      report.violations.push_back(fmt::format("duplicate task_id {}", t.task_id));
    }
    if (t.group_size < 1) {
      report.violations.push_back(fmt::format("group_size < 1 for task {}", t.task_id));
    } else if (require_groups && t.group_size < 2) {
      report.violations.push_back(
          fmt::format("group_size < 2 for task {} under a grouped estimator", t.task_id));
    }
  }
  return report;
}

}  // namespace lightline
