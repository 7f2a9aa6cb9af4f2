#include <doctest.h>

#include "lightline/core/errors.hpp"
#include "lightline/extract/extract.hpp"
#include "support.hpp"

using namespace lightline;
using namespace lightline::extract;
using namespace lightline::testing;

namespace {

RolloutTrace with_failed_tools(int failures) {
  RolloutTrace t;
  t.rollout_id = "r";
  t.task_id = "t";
  t.calls.push_back(llm_call(0, "guesser", token_detail({5}, {6})));
  for (int i = 0; i < failures; ++i) {
    t.calls.push_back(tool_call(t.calls.size(), "probe", CallStatus::error));
  }
  t.calls.push_back(llm_call(t.calls.size(), "guesser", token_detail({5}, {7})));
  t.rewards.push_back({t.calls.size() - 1, 1.0, RewardSource::final});
  return t;
}

// Independent oracle: left fold over the signal list.
double fold_return(const RolloutTrace& t) {
  double r = 0.0;
  for (const auto& s : t.rewards) r = r + s.value;
  return r;
}

}  // namespace

TEST_CASE("compute_return sums every signal") {
  RolloutTrace t = rag_trace(0.9);
  t.rewards = {{0, 0.2, RewardSource::intermediate_user},
               {1, -0.1, RewardSource::intermediate_air},
               {2, 0.9, RewardSource::final}};
  CHECK(compute_return(t) == doctest::Approx(1.0).epsilon(1e-15));
  t.rewards.clear();
  CHECK(compute_return(t) == 0.0);
}

TEST_CASE("a final 1.0 plus two AIR penalties returns 0.8") {
  auto t = attach_air_rewards(with_failed_tools(2), ExtractionConfig{});
  CHECK(compute_return(t) == fold_return(t));
  CHECK(compute_return(t) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("AIR adds one penalty per failed tool call") {
  ExtractionConfig cfg;
  const auto base = with_failed_tools(1);
  const auto t = attach_air_rewards(base, cfg);
  REQUIRE(t.rewards.size() == base.rewards.size() + 1);
  CHECK(t.rewards.back().source == RewardSource::intermediate_air);
  CHECK(t.rewards.back().call_index == 1);
  CHECK(compute_return(t) == compute_return(base) - 0.1);
}

TEST_CASE("AIR treats timeouts as failures too") {
  auto base = with_failed_tools(1);
  base.calls[1].meta.status = CallStatus::timeout;
  CHECK(attach_air_rewards(base, ExtractionConfig{}).rewards.size() == 2);
}

TEST_CASE("AIR leaves clean traces and disabled configs alone") {
  const auto clean = rag_trace(1.0);
  CHECK(attach_air_rewards(clean, ExtractionConfig{}) == clean);
  ExtractionConfig off;
  off.air_enabled = false;
  const auto noisy = with_failed_tools(3);
  CHECK(attach_air_rewards(noisy, off) == noisy);
}

TEST_CASE("AIR is idempotent on its own output") {
  const auto once = attach_air_rewards(with_failed_tools(2), ExtractionConfig{});
  CHECK(attach_air_rewards(once, ExtractionConfig{}) == once);
}

TEST_CASE("a positive or non-finite AIR penalty is a config error") {
  ExtractionConfig cfg;
  cfg.air_error_penalty = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.air_error_penalty = -std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.air_error_penalty = 0.0;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("a RAG trace yields two transitions, one per llm call") {
  const auto tr = extract_transitions(rag_trace(1.0), ExtractionConfig{});
  REQUIRE(tr.size() == 2);
  CHECK(tr[0].turn_index == 0);
  CHECK(tr[1].turn_index == 1);
  CHECK(tr[0].role == "query_writer");
  CHECK(tr[1].role == "answerer");
  CHECK(tr[0].output_token_ids == std::vector<TokenId>{8, 9});
  CHECK(tr[0].old_logprobs == std::vector<double>{-0.5, -0.25});
  CHECK(tr[1].input_token_ids == std::vector<TokenId>{5, 6, 7, 10});
  CHECK_FALSE(tr[0].reward.has_value());
}

TEST_CASE("role filtering keeps only the named agent's calls") {
  ExtractionConfig cfg;
  cfg.role_filter = std::set<std::string>{"answerer"};
  auto tr = extract_transitions(rag_trace(1.0), cfg);
  REQUIRE(tr.size() == 1);
  CHECK(tr[0].role == "answerer");
  cfg.role_filter = std::set<std::string>{"answerer", "query_writer"};
  CHECK(extract_transitions(rag_trace(1.0), cfg).size() == 2);
  cfg.role_filter = std::set<std::string>{"critic"};
  CHECK(extract_transitions(rag_trace(1.0), cfg).empty());
}

TEST_CASE("calls from other components never become transitions") {
  auto t = rag_trace(1.0);
  t.calls[0].meta.component_name = "reranker";
  CHECK(extract_transitions(t, ExtractionConfig{}).size() == 1);
  RolloutTrace tools_only;
  tools_only.calls.push_back(tool_call(0, "search"));
  CHECK(extract_transitions(tools_only, ExtractionConfig{}).empty());
}

TEST_CASE("a matching llm call without token detail names its index") {
  auto t = rag_trace(1.0);
  t.calls[2].token_detail.reset();
  try {
    (void)extract_transitions(t, ExtractionConfig{});
    FAIL("expected ExtractionError");
  } catch (const ExtractionError& e) {
    CHECK(e.call_index() == 2);
  }
  ExtractionConfig only_query;
  only_query.role_filter = std::set<std::string>{"query_writer"};
  CHECK_NOTHROW((void)extract_transitions(t, only_query));
}

TEST_CASE("identical credit gives every transition the episode return") {
  RolloutTrace t;
  t.rollout_id = "r";
  t.task_id = "t";
  for (std::size_t i = 0; i < 3; ++i) t.calls.push_back(llm_call(i, "guesser", token_detail({5}, {6})));
  t.rewards = {{0, 0.0, RewardSource::intermediate_user},
               {1, 0.0, RewardSource::intermediate_user},
               {2, 1.0, RewardSource::final}};
  const auto tr = trace_to_transitions(t, ExtractionConfig{});
  REQUIRE(tr.size() == 3);
  for (const auto& x : tr) CHECK(x.reward == 1.0);

  t.rewards = {{2, 0.0, RewardSource::final}};
  for (const auto& x : trace_to_transitions(t, ExtractionConfig{})) CHECK(x.reward == 0.0);
}

TEST_CASE("a two-turn trace with final 0.5 and one tool failure credits 0.4 to both turns") {
  RolloutTrace t;
  t.rollout_id = "r";
  t.task_id = "t";
  t.calls.push_back(llm_call(0, "planner", token_detail({5}, {6})));
  t.calls.push_back(tool_call(1, "calc", CallStatus::error));
  t.calls.push_back(llm_call(2, "answerer", token_detail({5}, {7})));
  t.rewards.push_back({2, 0.5, RewardSource::final});
  const auto tr = trace_to_transitions(t, ExtractionConfig{});
  REQUIRE(tr.size() == 2);
  const double oracle = fold_return(attach_air_rewards(t, ExtractionConfig{}));
  CHECK(tr[0].reward == oracle);
  CHECK(tr[1].reward == oracle);
  CHECK(oracle == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("credit strategy names parse strictly") {
  CHECK(parse_credit_strategy("identical") == CreditStrategy::identical);
  CHECK_FALSE(parse_credit_strategy("discounted").has_value());
  CHECK(to_string(CreditStrategy::identical) == "identical");
}
