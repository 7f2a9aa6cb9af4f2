#include "lightline/extract/extract.hpp"

#include <cmath>

#include <fmt/format.h>

#include "lightline/core/errors.hpp"

namespace lightline::extract {

std::optional<CreditStrategy> parse_credit_strategy(std::string_view s) {
  if (s == "identical") return CreditStrategy::identical;
  return std::nullopt;
}

std::string_view to_string(CreditStrategy s) {
  switch (s) {
    case CreditStrategy::identical: return "identical";
  }
  return "?";
}

void ExtractionConfig::validate() const {
  if (!std::isfinite(air_error_penalty) || air_error_penalty > 0.0) {
    throw ConfigError(fmt::format("air_error_penalty must be <= 0, got {}", air_error_penalty));
  }
}

RolloutTrace attach_air_rewards(const RolloutTrace& trace, const ExtractionConfig& cfg) {
  if (!cfg.air_enabled) return trace;
  RolloutTrace out = trace;
  for (std::size_t i = 0; i < trace.calls.size(); ++i) {
    const auto& meta = trace.calls[i].meta;
    if (meta.component_kind != ComponentKind::tool || meta.status == CallStatus::ok) continue;
    bool already = false;
    for (const auto& r : trace.rewards) {
      if (r.source == RewardSource::intermediate_air && r.call_index == i) {
        already = true;
        break;
      }
    }
    if (!already) {
      out.rewards.push_back({i, cfg.air_error_penalty, RewardSource::intermediate_air});
    }
  }
  return out;
}

double compute_return(const RolloutTrace& trace) {
  double r = 0.0;
  for (const auto& s : trace.rewards) r += s.value;
  return r;
}

std::vector<Transition> extract_transitions(const RolloutTrace& trace,
                                            const ExtractionConfig& cfg) {
  std::vector<Transition> out;
  std::size_t turn = 0;
  for (std::size_t i = 0; i < trace.calls.size(); ++i) {
    const auto& call = trace.calls[i];
    const auto& meta = call.meta;
    if (meta.component_kind != ComponentKind::llm ||
        meta.component_name != cfg.policy_component_name) {
      continue;
    }
    if (cfg.role_filter && (!meta.role || !cfg.role_filter->contains(*meta.role))) continue;
    if (!call.token_detail) {
      throw ExtractionError(
          fmt::format("llm call {} of rollout {} has no token detail", i, trace.rollout_id), i);
    }
    const auto& td = *call.token_detail;
    Transition t;
    t.task_id = trace.task_id;
    t.rollout_id = trace.rollout_id;
    t.turn_index = turn++;
    t.role = meta.role;
    t.input_token_ids = td.input_token_ids;
    t.output_token_ids = td.output_token_ids;
    t.old_logprobs = td.output_logprobs;
    t.policy_version = meta.endpoint_version.value_or(0);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Transition> IdenticalCredit::assign(std::vector<Transition> transitions,
                                                const RolloutTrace& trace) const {
  const double r = compute_return(trace);
  for (auto& t : transitions) t.reward = r;
  return transitions;
}

std::unique_ptr<CreditAssigner> make_credit_assigner(CreditStrategy strategy) {
  switch (strategy) {
    case CreditStrategy::identical: return std::make_unique<IdenticalCredit>();
  }
  throw ConfigError("unknown credit assignment strategy");
}

std::vector<Transition> assign_credit(std::vector<Transition> transitions,
                                      const RolloutTrace& trace, const ExtractionConfig& cfg) {
  return make_credit_assigner(cfg.credit_strategy)->assign(std::move(transitions), trace);
}

std::vector<Transition> trace_to_transitions(const RolloutTrace& trace,
                                             const ExtractionConfig& cfg) {
  const auto with_air = attach_air_rewards(trace, cfg);
  return assign_credit(extract_transitions(with_air, cfg), with_air, cfg);
}

}  // namespace lightline::extract
