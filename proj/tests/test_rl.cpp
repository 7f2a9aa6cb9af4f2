#include <doctest.h>

#include "lightline/core/errors.hpp"
#include "lightline/rl/lightning_rl.hpp"
#include "oracles.hpp"

using namespace lightline;
using namespace lightline::rl;
using namespace lightline::testing;

namespace {

AdvantageConfig grpo() { return AdvantageConfig{Estimator::grpo, 1e-8}; }
AdvantageConfig rpp() { return AdvantageConfig{Estimator::reinforce_pp, 1e-8}; }

double adv_of(const RolloutValues& m, const std::string& task, const std::string& rollout) {
  return m.at({task, rollout});
}

}  // namespace

TEST_CASE("GRPO on {1, 0, 0.5} gives +-1.22474 and 0") {
  const auto batch = returns_batch({{"t", 1.0}, {"t", 0.0}, {"t", 0.5}});
  const auto adv = grpo_advantages(batch, grpo());
  const auto oracle = grpo_oracle({1.0, 0.0, 0.5}, 1e-8);
  CHECK(std::abs(adv_of(adv, "t", "r0") - oracle[0]) < 1e-12);
  CHECK(std::abs(adv_of(adv, "t", "r1") - oracle[1]) < 1e-12);
  CHECK(std::abs(adv_of(adv, "t", "r2") - oracle[2]) < 1e-12);
  CHECK(adv_of(adv, "t", "r0") == doctest::Approx(1.22474).epsilon(1e-5));
  CHECK(adv_of(adv, "t", "r1") == doctest::Approx(-1.22474).epsilon(1e-5));
  CHECK(adv_of(adv, "t", "r2") == 0.0);
}

TEST_CASE("GRPO zero-variance groups get exactly zero") {
  const auto adv = grpo_advantages(returns_batch({{"t", 0.7}, {"t", 0.7}}), grpo());
  CHECK(adv_of(adv, "t", "r0") == 0.0);
  CHECK(adv_of(adv, "t", "r1") == 0.0);
}

TEST_CASE("GRPO on {1, 0} gives +-1 up to epsilon") {
  const auto adv = grpo_advantages(returns_batch({{"t", 1.0}, {"t", 0.0}}), grpo());
  CHECK(adv_of(adv, "t", "r0") == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(adv_of(adv, "t", "r1") == doctest::Approx(-1.0).epsilon(1e-7));
}

TEST_CASE("GRPO normalizes each task separately and rejects singleton groups") {
  const auto adv = grpo_advantages(
      returns_batch({{"a", 1.0}, {"a", 0.0}, {"b", 10.0}, {"b", 10.0}, {"b", 13.0}}), grpo());
  CHECK(adv_of(adv, "a", "r0") == doctest::Approx(1.0).epsilon(1e-7));
  const auto b = grpo_oracle({10.0, 10.0, 13.0}, 1e-8);
  CHECK(std::abs(adv_of(adv, "b", "r2") - b[0]) < 1e-12);
  CHECK(std::abs(adv_of(adv, "b", "r4") - b[2]) < 1e-12);
  CHECK(adv_of(adv, "b", "r4") > 0.0);
  CHECK_THROWS_AS((void)grpo_advantages(returns_batch({{"a", 1.0}, {"a", 0.0}, {"b", 1.0}}), grpo()),
                  ConfigError);
}

TEST_CASE("REINFORCE++ subtracts the batch mean") {
  const auto adv = reinforcepp_advantages(returns_batch({{"x", 1.0}, {"y", 0.0}, {"z", 0.5}}), rpp());
  CHECK(adv_of(adv, "x", "r0") == 0.5);
  CHECK(adv_of(adv, "y", "r1") == -0.5);
  CHECK(adv_of(adv, "z", "r2") == 0.0);
  const auto single = reinforcepp_advantages(returns_batch({{"x", 0.3}}), rpp());
  CHECK(adv_of(single, "x", "r0") == 0.0);
  const auto flat = reinforcepp_advantages(returns_batch({{"x", 2.0}, {"x", 2.0}}), rpp());
  for (const auto& [k, a] : flat) CHECK(a == 0.0);
  CHECK_THROWS_AS((void)reinforcepp_advantages(TrainingBatch{}, rpp()), ConfigError);
}

TEST_CASE("trajectory returns read one value per rollout") {
  std::vector<Transition> ts;
  for (std::size_t k = 0; k < 3; ++k) ts.push_back(make_transition("t", "a", k, {4}, {5}, 1.0));
  ts.push_back(make_transition("t", "b", 0, {4}, {5}, 0.0));
  const auto r = trajectory_returns(TrainingBatch::from_transitions(ts, 0));
  CHECK(r.size() == 2);
  CHECK(r.at({"t", "a"}) == 1.0);
  CHECK(r.at({"t", "b"}) == 0.0);
  ts[1].reward = 0.9;
  CHECK_THROWS_AS((void)trajectory_returns(TrainingBatch::from_transitions(ts, 0)), IntegrityError);
}

TEST_CASE("from_transitions orders by (task, rollout, turn) and derives the grouping") {
  std::vector<Transition> ts = {make_transition("b", "r2", 1, {4}, {5}, 0.0),
                                make_transition("a", "r9", 0, {4}, {5}, 1.0),
                                make_transition("b", "r2", 0, {4}, {5}, 0.0),
                                make_transition("b", "r1", 0, {4}, {5, 6}, 1.0)};
  const auto batch = TrainingBatch::from_transitions(ts, 3);
  CHECK(batch.transitions[0].task_id == "a");
  CHECK(batch.transitions[1].rollout_id == "r1");
  CHECK(batch.transitions[2].turn_index == 0);
  CHECK(batch.transitions[3].turn_index == 1);
  CHECK(batch.grouping.at("b") == std::vector<std::string>{"r1", "r2"});
  CHECK(batch.token_count() == 5);
  CHECK(batch.policy_version == 3);
}

TEST_CASE("validate_batch enforces the on-policy and shape invariants") {
  std::vector<Transition> ts = {make_transition("t", "a", 0, {4}, {5}, 1.0),
                                make_transition("t", "b", 0, {4}, {5}, 0.0)};
  CHECK_NOTHROW(validate_batch(TrainingBatch::from_transitions(ts, 0), grpo()));
  SUBCASE("mixed versions") {
    ts[1].policy_version = 1;
    CHECK_THROWS_AS(validate_batch(TrainingBatch::from_transitions(ts, 0), grpo()), IntegrityError);
  }
  SUBCASE("missing reward") {
    ts[0].reward.reset();
    CHECK_THROWS_AS(validate_batch(TrainingBatch::from_transitions(ts, 0), grpo()), IntegrityError);
  }
  SUBCASE("empty output") {
    ts[0].output_token_ids.clear();
    ts[0].old_logprobs.clear();
    CHECK_THROWS_AS(validate_batch(TrainingBatch::from_transitions(ts, 0), grpo()), IntegrityError);
  }
  SUBCASE("logprob length mismatch") {
    ts[0].old_logprobs.push_back(-1.0);
    CHECK_THROWS_AS(validate_batch(TrainingBatch::from_transitions(ts, 0), grpo()), IntegrityError);
  }
  SUBCASE("singleton GRPO group") {
    ts[1].task_id = "u";
    CHECK_THROWS_AS(validate_batch(TrainingBatch::from_transitions(ts, 0), grpo()), ConfigError);
    CHECK_NOTHROW(validate_batch(TrainingBatch::from_transitions(ts, 0), rpp()));
  }
}

TEST_CASE("broadcast gives every token of a rollout its scalar advantage") {
  std::vector<Transition> ts = {make_transition("t", "a", 0, {4}, {5, 6, 7, 8}, 1.0),
                                make_transition("t", "a", 1, {4}, {5, 6}, 1.0),
                                make_transition("t", "b", 0, {4}, {5}, 0.0)};
  const auto batch = TrainingBatch::from_transitions(ts, 0);
  const RolloutValues adv = {{{"t", "a"}, 0.5}, {{"t", "b"}, 0.0}};
  const auto tok = broadcast_token_advantages(batch, adv);
  CHECK(tok[0] == std::vector<double>{0.5, 0.5, 0.5, 0.5});
  CHECK(tok[1] == std::vector<double>{0.5, 0.5});
  CHECK(tok[2] == std::vector<double>{0.0});
  CHECK_THROWS_AS((void)broadcast_token_advantages(batch, RolloutValues{{{"t", "a"}, 1.0}}),
                  IntegrityError);
}

TEST_CASE("on-policy loss equals minus the mean token advantage") {
  Gen g(1);
  const auto params = random_params(g, 8, 2);
  std::vector<Transition> ts = {make_transition("t", "a", 0, {4, 5}, {6, 7}, 1.0),
                                make_transition("t", "b", 0, {4}, {3}, 0.0)};
  for (auto& t : ts) t.old_logprobs = policy::logprobs_of(params, t.input_token_ids, t.output_token_ids);
  const auto batch = TrainingBatch::from_transitions(ts, 0);
  const std::vector<std::vector<double>> tok = {{0.5, 0.5}, {-1.0}};
  const auto r = policy_gradient_loss(params, batch, tok, LossConfig{});
  CHECK(r.loss == doctest::Approx(-(0.5 + 0.5 - 1.0) / 3.0).epsilon(1e-14));
  CHECK(r.tokens == 3);
  LossConfig per_transition;
  per_transition.normalize_by_tokens = false;
  CHECK(policy_gradient_loss(params, batch, tok, per_transition).normalizer == 2.0);
}

TEST_CASE("zero advantages give zero loss and zero gradient") {
  Gen g(2);
  const auto params = random_params(g, 8, 2);
  const auto batch = TrainingBatch::from_transitions({make_transition("t", "a", 0, {4}, {5, 6}, 1.0)}, 0);
  const auto r = policy_gradient_loss(params, batch, {{0.0, 0.0}}, LossConfig{});
  CHECK(r.loss == 0.0);
  for (double x : r.gradient) CHECK(x == 0.0);
}

TEST_CASE("loss gradient matches central finite differences") {
  Gen g(17);
  for (int i = 0; i < 20; ++i) CHECK(loss_gradient_relative_error(random_loss_instance(g)) < 1e-5);
}

TEST_CASE("the loss rejects out-of-vocabulary tokens") {
  const auto params = make_zero_params(6, 2);
  const auto batch = TrainingBatch::from_transitions({make_transition("t", "a", 0, {4}, {9}, 1.0)}, 0);
  CHECK_THROWS_AS((void)policy_gradient_loss(params, batch, {{1.0}}, LossConfig{}), VocabularyError);
}

TEST_CASE("train_step bumps the version by one regardless of epochs") {
  Gen g(5);
  auto params = random_params(g, 8, 2);
  params.version = 4;
  std::vector<Transition> ts = {make_transition("t", "a", 0, {4}, {5}, 1.0, std::nullopt, 4),
                                make_transition("t", "b", 0, {4}, {6}, 0.0, std::nullopt, 4)};
  for (auto& t : ts) t.old_logprobs = policy::logprobs_of(params, t.input_token_ids, t.output_token_ids);
  const auto batch = TrainingBatch::from_transitions(ts, 4);
  LossConfig lc;
  lc.epochs_per_batch = 3;
  const auto r = train_step(params, batch, grpo(), lc);
  CHECK(r.params.version == 5);
  CHECK(r.report.mean_return == 0.5);
  CHECK(r.report.transitions == 2);
  CHECK(r.params.weights != params.weights);
  // The sampled-and-rewarded token got likelier.
  const std::vector<TokenId> in = {4};
  const std::vector<TokenId> good = {5};
  CHECK(policy::logprobs_of(r.params, in, good)[0] > policy::logprobs_of(params, in, good)[0]);
}

TEST_CASE("a zero-advantage batch leaves weights unchanged except the version") {
  auto params = make_zero_params(8, 2, 2);
  std::vector<Transition> ts = {make_transition("t", "a", 0, {4}, {5}, 0.3, std::nullopt, 2),
                                make_transition("t", "b", 0, {4}, {6}, 0.3, std::nullopt, 2)};
  const auto r = train_step(params, TrainingBatch::from_transitions(ts, 2), grpo(), LossConfig{});
  CHECK(r.params.weights == params.weights);
  CHECK(r.params.version == 3);
}

TEST_CASE("k train steps advance the version by k") {
  auto params = make_zero_params(8, 2);
  for (int k = 0; k < 5; ++k) {
    std::vector<Transition> ts = {
        make_transition("t", "a", 0, {4}, {5}, 1.0, std::nullopt, params.version),
        make_transition("t", "b", 0, {4}, {6}, 0.0, std::nullopt, params.version)};
    for (auto& t : ts) t.old_logprobs = policy::logprobs_of(params, t.input_token_ids, t.output_token_ids);
    params = train_step(params, TrainingBatch::from_transitions(ts, params.version), grpo(), LossConfig{}).params;
  }
  CHECK(params.version == 5);
}

TEST_CASE("clipping stops the gradient once the ratio leaves the trust region") {
  const auto params = make_zero_params(6, 1);
  auto t = make_transition("t", "a", 0, {4}, {5}, 1.0);
  // rho = exp(-ln 6 - old) = 2 > 1.2 with a positive advantage: clipped, no gradient.
  t.old_logprobs = {-std::log(6.0) - std::log(2.0)};
  const auto batch = TrainingBatch::from_transitions({t}, 0);
  const auto r = policy_gradient_loss(params, batch, {{1.0}}, LossConfig{});
  CHECK(r.loss == doctest::Approx(-1.2).epsilon(1e-12));
  for (double x : r.gradient) CHECK(x == 0.0);
  // With a negative advantage the unclipped term is the minimum and keeps its gradient.
  const auto neg = policy_gradient_loss(params, batch, {{-1.0}}, LossConfig{});
  CHECK(neg.loss == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::any_of(neg.gradient.begin(), neg.gradient.end(), [](double x) { return x != 0.0; }));
}

TEST_CASE("per-transition logprobs equal the masked concatenated sequence") {
  Gen g(23);
  const auto params = random_params(g, 12, 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ep = concatenation_episode(params, seed);
    double per_turn = 0.0;
    for (const auto& [in, out] : ep.turns) {
      for (double lp : policy::logprobs_of(params, in, out)) per_turn += lp;
    }
    CHECK(std::abs(per_turn - masked_sequence_logprob(params, ep.sequence, ep.mask)) < 1e-9);
  }
}

TEST_CASE("config validation") {
  LossConfig l;
  l.clip_epsilon = 0.0;
  CHECK_THROWS_AS(l.validate(), ConfigError);
  l = LossConfig{};
  l.epochs_per_batch = 0;
  CHECK_THROWS_AS(l.validate(), ConfigError);
  l = LossConfig{};
  l.learning_rate = -1.0;
  CHECK_THROWS_AS(l.validate(), ConfigError);
  AdvantageConfig a;
  a.epsilon_std = -1.0;
  CHECK_THROWS_AS(a.validate(), ConfigError);
  a.epsilon_std = 0.0;
  CHECK_NOTHROW(a.validate());
  CHECK(parse_estimator("reinforce_pp") == Estimator::reinforce_pp);
  CHECK_FALSE(parse_estimator("ppo").has_value());
}

TEST_CASE("selective training equals zeroing the other role's advantages") {
  // Transitions of a filtered-out role contribute nothing; the accumulated gradient of the
  // filtered batch is bit-identical to the full batch with those advantages set to zero.
  Gen g(31);
  const auto params = random_params(g, 16, 3);
  std::vector<Transition> all;
  for (int r = 0; r < 4; ++r) {
    const std::string id = "r" + std::to_string(r);
    const double ret = g.real(0.0, 1.0);
    all.push_back(make_transition("t", id, 0, random_ids(g, 4, 16), random_ids(g, 2, 16), ret, "query_writer"));
    all.push_back(make_transition("t", id, 1, random_ids(g, 5, 16), random_ids(g, 3, 16), ret, "answerer"));
  }
  for (auto& t : all) t.old_logprobs = policy::logprobs_of(params, t.input_token_ids, t.output_token_ids);
  std::vector<Transition> only_query;
  for (const auto& t : all) {
    if (t.role == "query_writer") only_query.push_back(t);
  }
  const auto full = TrainingBatch::from_transitions(all, 0);
  const auto part = TrainingBatch::from_transitions(only_query, 0);
  const auto adv_full = grpo_advantages(full, grpo());
  CHECK(adv_full == grpo_advantages(part, grpo()));

  auto masked = broadcast_token_advantages(full, adv_full);
  for (std::size_t i = 0; i < full.transitions.size(); ++i) {
    if (full.transitions[i].role != "query_writer") std::fill(masked[i].begin(), masked[i].end(), 0.0);
  }
  const auto a = policy_gradient_loss(params, full, masked, LossConfig{});
  const auto b = policy_gradient_loss(params, part, broadcast_token_advantages(part, adv_full), LossConfig{});
  CHECK(a.gradient_sum == b.gradient_sum);
}
