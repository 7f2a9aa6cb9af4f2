#pragma once

// Trace -> transitions: AIR penalties, returns, per-call extraction, credit assignment.

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lightline/core/types.hpp"

namespace lightline::extract {

enum class CreditStrategy { identical };

std::optional<CreditStrategy> parse_credit_strategy(std::string_view s);
std::string_view to_string(CreditStrategy s);

struct ExtractionConfig {
  std::string policy_component_name = "policy";
  // Absent = accept every role.
  std::optional<std::set<std::string>> role_filter;
  bool air_enabled = true;
  double air_error_penalty = -0.1;
  CreditStrategy credit_strategy = CreditStrategy::identical;

  // Throws ConfigError when air_error_penalty > 0 or non-finite.
  void validate() const;
};

// Appends an intermediate_air signal for every tool call that ended in error or timeout.
// Indices that already carry an intermediate_air signal are not penalized again.
RolloutTrace attach_air_rewards(const RolloutTrace& trace, const ExtractionConfig& cfg);

// Sum of every reward signal (0 for none).
double compute_return(const RolloutTrace& trace);

// One transition per llm call of the configured component whose role passes the filter.
// Throws ExtractionError naming the call index when a matching call lacks token detail.
std::vector<Transition> extract_transitions(const RolloutTrace& trace, const ExtractionConfig& cfg);

class CreditAssigner {
 public:
  virtual ~CreditAssigner() = default;
  virtual std::vector<Transition> assign(std::vector<Transition> transitions,
                                         const RolloutTrace& trace) const = 0;
};

// Every action gets the episode return.
class IdenticalCredit final : public CreditAssigner {
 public:
  std::vector<Transition> assign(std::vector<Transition> transitions,
                                 const RolloutTrace& trace) const override;
};

std::unique_ptr<CreditAssigner> make_credit_assigner(CreditStrategy strategy);

std::vector<Transition> assign_credit(std::vector<Transition> transitions,
                                      const RolloutTrace& trace, const ExtractionConfig& cfg);

// attach_air_rewards -> extract_transitions -> assign_credit.
std::vector<Transition> trace_to_transitions(const RolloutTrace& trace, const ExtractionConfig& cfg);

}  // namespace lightline::extract
