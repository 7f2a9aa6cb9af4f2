#include <doctest.h>

#include <atomic>

#include <httplib.h>

#include "lightline/core/errors.hpp"
#include "lightline/core/rng.hpp"
#include "lightline/server/inventory.hpp"
#include "lightline/server/server.hpp"
#include "protocol_script.hpp"

using namespace lightline;
using namespace lightline::server;
using namespace lightline::testing;
using namespace std::chrono_literals;

namespace {

std::vector<TaskSpec> two_tasks() {
  return {TaskSpec{"alpha", "s", Json::object(), 2}, TaskSpec{"beta", "s", Json::object(), 2}};
}

struct FakeClock {
  std::shared_ptr<std::atomic<Timestamp>> t = std::make_shared<std::atomic<Timestamp>>(1'000'000);
  Clock fn() const {
    return [t = t] { return t->load(); };
  }
  void advance(std::chrono::milliseconds d) { *t += d.count() * 1000; }
};

ServerConfig small_config() {
  ServerConfig cfg;
  cfg.batch_tasks = 2;
  cfg.group_size = 2;
  cfg.max_retries = 1;
  cfg.rollout_timeout = 1000ms;
  return cfg;
}

Json success_report(double reward) {
  return Json{{"status", "success"}, {"final_reward", reward}, {"tool_spans", Json::array()}};
}

}  // namespace

TEST_CASE("rollout ids name step, task, slot and attempt") {
  CHECK(make_rollout_id(3, "alpha", 1, 2) == "s0003-alpha-k1-a2");
}

TEST_CASE("B=2, K=2 yields four leases in order, then nothing") {
  Inventory inv(3, 1000);
  inv.reset(0, two_tasks(), 2);
  std::vector<std::string> ids;
  while (auto s = inv.lease("w", 0)) ids.push_back(s->rollout_id);
  CHECK(ids == std::vector<std::string>{"s0000-alpha-k0-a0", "s0000-alpha-k1-a0", "s0000-beta-k0-a0",
                                        "s0000-beta-k1-a0"});
  CHECK(inv.counts().leased == 4);
  CHECK_FALSE(inv.done());
  for (const auto& id : ids) CHECK(inv.resolve(id, true));
  CHECK(inv.done());
  CHECK(inv.counts().succeeded == 4);
}

TEST_CASE("an expired lease comes back as the next attempt, then is abandoned") {
  Inventory inv(1, 1000);
  inv.reset(2, {TaskSpec{"alpha", "s", Json::object(), 1}}, 1);
  const auto first = inv.lease("w0", 0);
  REQUIRE(first.has_value());
  CHECK(inv.expire(999).empty());
  CHECK(inv.expire(1000) == std::vector<std::string>{"s0002-alpha-k0-a0"});
  // The stale attempt can no longer resolve the slot.
  CHECK_FALSE(inv.resolve(first->rollout_id, true));
  const auto second = inv.lease("w1", 1000);
  REQUIRE(second.has_value());
  CHECK(second->attempt == 1);
  CHECK(second->rollout_id == "s0002-alpha-k0-a1");
  CHECK(inv.resolve(second->rollout_id, false));
  CHECK(inv.counts().abandoned == 1);
  CHECK(inv.done());
  CHECK_FALSE(inv.lease("w2", 2000).has_value());
}

TEST_CASE("a slot is never leased to two workers at once") {
  Inventory inv(3, 1000);
  inv.reset(0, two_tasks(), 2);
  std::set<std::string> leased;
  for (int i = 0; i < 4; ++i) CHECK(leased.insert(inv.lease("w" + std::to_string(i), 0)->rollout_id).second);
  CHECK_FALSE(inv.lease("w9", 10).has_value());
}

TEST_CASE("scripted protocol run: merged order, idempotent report, closed stage") {
  const auto out = run_protocol_script();
  CHECK(out.first_report_status == 200);
  CHECK(out.duplicate_acked);
  CHECK(out.traces_after_duplicate == 1);
  CHECK(out.sealed_order == std::vector<std::string>{"llm", "tool", "llm"});
  CHECK(out.indices_contiguous);
  CHECK(out.sealed_valid);
  REQUIRE(out.sealed_roles.size() == 3);
  CHECK(out.sealed_roles[0] == "query_writer");
  CHECK(out.sealed_roles[2] == "answerer");
  CHECK(out.late_completion_status == 409);
  CHECK(out.late_completion_message == "stage closed");
}

TEST_CASE("completion errors: unknown rollout, bad body, max_tokens cap") {
  const auto vocab = protocol_vocab();
  TrainingServer srv(small_config(), vocab, make_zero_params(vocab.size(), 4), 1);
  srv.open_generation(0, two_tasks());
  const auto id = srv.next_task("w", "http://h:1").body.at("rollout_id").get<std::string>();
  CHECK(srv.completion("nope", completion_body("r", "a")).status == 404);
  CHECK(srv.completion(id, "{").status == 400);
  CHECK(srv.completion(id, R"({"messages":[{"role":"wizard","content":"a"}]})").status == 400);
  const auto capped = srv.completion(id, R"({"messages":[{"role":"user","content":"a"}],"max_tokens":33})");
  CHECK(capped.status == 400);
  CHECK(srv.completion(id, R"({"messages":[],"temperature":0})").status == 400);
  const auto ok = srv.completion(id, completion_body("r", "a"));
  CHECK(ok.status == 200);
  CHECK(ok.body.at("choices").at(0).at("message").at("role") == "assistant");
  CHECK(ok.body.at("model") == "policy-v0");
}

TEST_CASE("completions are stamped with the serving version and a per-turn seed") {
  const auto vocab = protocol_vocab();
  auto params = make_zero_params(vocab.size(), 4, 6);
  TrainingServer srv(small_config(), vocab, params, 1);
  srv.open_generation(0, two_tasks());
  const auto ticket = srv.next_task("w", "http://h:1");
  CHECK(ticket.status == 200);
  CHECK(ticket.body.at("resource").at("policy_version") == 6);
  const auto id = ticket.body.at("rollout_id").get<std::string>();
  CHECK(ticket.body.at("resource").at("completion_url") ==
        "http://h:1/rollout/" + id + "/v1/chat/completions");
  (void)srv.completion(id, completion_body("r", "a"));
  (void)srv.completion(id, completion_body("r", "b"));
  CHECK(srv.report(id, success_report(0.5).dump()).status == 200);
  const auto t = srv.close_generation();
  REQUIRE(t.size() == 1);
  REQUIRE(t[0].calls.size() == 2);
  for (const auto& c : t[0].calls) CHECK(c.meta.endpoint_version == 6u);
  CHECK(t[0].calls[0].meta.sampling->seed == derive_key(1, fnv1a64(id), 0));
  CHECK(t[0].calls[1].meta.sampling->seed == derive_key(1, fnv1a64(id), 1));
}

TEST_CASE("report validation and late reports") {
  FakeClock clock;
  const auto vocab = protocol_vocab();
  TrainingServer srv(small_config(), vocab, make_zero_params(vocab.size(), 4), 1, clock.fn());
  srv.open_generation(0, two_tasks());
  const auto id = srv.next_task("w", "http://h:1").body.at("rollout_id").get<std::string>();
  (void)srv.completion(id, completion_body("r", "a"));
  CHECK(srv.report("nope", success_report(1).dump()).status == 404);
  CHECK(srv.report(id, R"({"status":"exploded"})").status == 400);
  CHECK(srv.report(id, R"({"status":"success","bonus":1})").status == 400);
  // A tool span claiming an index past the merged length.
  const Json bad{{"status", "success"}, {"final_reward", 1.0}, {"tool_spans", Json::array({tool_span_json(5)})}};
  CHECK(srv.report(id, bad.dump()).status == 400);
  // Success without a final reward fails trace validation.
  CHECK(srv.report(id, R"({"status":"success"})").status == 400);

  clock.advance(1500ms);
  CHECK(srv.next_task("w2", "http://h:1").body.at("rollout_id") == "s0000-alpha-k0-a1");
  const auto late = srv.report(id, success_report(1).dump());
  CHECK(late.status == 409);
  CHECK(srv.completion(id, completion_body("r", "a")).status == 409);
}

TEST_CASE("failed reports return the slot for another attempt") {
  const auto vocab = protocol_vocab();
  TrainingServer srv(small_config(), vocab, make_zero_params(vocab.size(), 4), 1);
  srv.open_generation(4, two_tasks());
  const auto id = srv.next_task("w", "http://h:1").body.at("rollout_id").get<std::string>();
  CHECK(srv.report(id, R"({"status":"failed","reason":"crash"})").status == 200);
  CHECK(srv.next_task("w", "http://h:1").body.at("rollout_id") == "s0004-alpha-k0-a1");
  CHECK(srv.counts().leased == 1);
}

TEST_CASE("stage machine guards") {
  const auto vocab = protocol_vocab();
  TrainingServer srv(small_config(), vocab, make_zero_params(vocab.size(), 4), 1);
  CHECK(srv.stage() == Stage::training);
  CHECK(srv.next_task("w", "http://h:1").status == 204);
  CHECK_THROWS_AS((void)srv.close_generation(), IntegrityError);
  srv.open_generation(0, two_tasks());
  CHECK_THROWS_AS(srv.open_generation(1, two_tasks()), IntegrityError);
  CHECK_THROWS_AS(srv.set_params(make_zero_params(vocab.size(), 4, 1)), IntegrityError);
  (void)srv.close_generation();
  srv.set_params(make_zero_params(vocab.size(), 4, 1));
  CHECK(srv.policy_version() == 1);
  CHECK_THROWS_AS(srv.set_params(make_zero_params(vocab.size() + 1, 4, 2)), ConfigError);
  srv.finish();
  CHECK(srv.status().at("stage") == "finished");
  CHECK_THROWS_AS(srv.open_generation(2, two_tasks()), IntegrityError);
}

TEST_CASE("server config validation") {
  ServerConfig cfg;
  cfg.min_group_size = cfg.group_size + 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ServerConfig{};
  cfg.total_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  const auto vocab = protocol_vocab();
  CHECK_THROWS_AS(TrainingServer(ServerConfig{}, vocab, make_zero_params(vocab.size() + 1, 4), 1), ConfigError);
}

TEST_CASE("the HTTP listener speaks the same protocol") {
  const auto vocab = protocol_vocab();
  TrainingServer srv(small_config(), vocab, make_zero_params(vocab.size(), 4), 1);
  const int port = srv.start("127.0.0.1", 0);
  CHECK(port > 0);
  httplib::Client http("127.0.0.1", port);
  auto status = http.Get("/api/status");
  REQUIRE(status);
  CHECK(Json::parse(status->body).at("stage") == "training");
  CHECK(http.Get("/api/tasks/next?worker_id=w")->status == 204);

  srv.open_generation(0, two_tasks());
  auto ticket = http.Get("/api/tasks/next?worker_id=w");
  REQUIRE(ticket);
  REQUIRE(ticket->status == 200);
  const auto body = Json::parse(ticket->body);
  const auto url = body.at("resource").at("completion_url").get<std::string>();
  CHECK(url.rfind(srv.base_url(), 0) == 0);
  const auto path = url.substr(srv.base_url().size());
  auto done = http.Post(path, completion_body("r", "go"), "application/json");
  REQUIRE(done);
  CHECK(done->status == 200);
  const auto id = body.at("rollout_id").get<std::string>();
  auto rep = http.Post("/api/rollouts/" + id + "/report", success_report(1).dump(), "application/json");
  REQUIRE(rep);
  CHECK(rep->status == 200);
  CHECK(http.Post("/rollout/ghost/v1/chat/completions", "{}", "application/json")->status == 404);
  CHECK(Json::parse(http.Get("/api/status")->body).at("open_rollouts") == 0);
  srv.finish();
  srv.stop();
}
