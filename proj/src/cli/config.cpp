#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "lightline/cli/cli.hpp"
#include "lightline/core/errors.hpp"
#include "lightline/core/json_reader.hpp"
#include "lightline/core/rng.hpp"
#include "lightline/policy/checkpoint.hpp"
#include "lightline/policy/policy.hpp"

namespace lightline::cli {

std::uint64_t RunConfig::dataset_seed() const { return derive_key(seed, "dataset"); }
std::uint64_t RunConfig::sampling_key() const { return derive_key(seed, "sampling"); }
std::uint64_t RunConfig::fault_seed() const { return derive_key(seed, "faults"); }

namespace {

void read_int(ObjectReader& r, std::string_view key, int& out) {
  if (r.optional(key)) out = static_cast<int>(r.integer(key));
}

void read_ms(ObjectReader& r, std::string_view key, std::chrono::milliseconds& out) {
  if (r.optional(key)) {
    const auto v = r.integer(key);
    if (v <= 0) r.fail(key, "must be a positive number of milliseconds");
    out = std::chrono::milliseconds(v);
  }
}

void read_real(ObjectReader& r, std::string_view key, double& out) {
  if (r.optional(key)) out = r.real(key);
}

// Re-labels a constraint violation with the section it came from.
template <typename F>
void checked(const std::string& section, const F& validate) {
  try {
    validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", section, e.what()));
  }
}

}  // namespace

RunConfig parse_run_config(const Json& j) {
  RunConfig c;
  ObjectReader r(j, "");
  if (r.optional("run_id")) c.run_id = r.string("run_id");
  if (r.optional("scenario")) c.scenario = r.string("scenario");
  if (r.optional("seed")) c.seed = r.unsigned_integer("seed");
  if (r.optional("output_dir")) c.output_dir = r.string("output_dir");
  read_real(r, "fail_rate", c.fail_rate);

  if (const auto* s = r.optional("server")) {
    ObjectReader sr(*s, "server");
    if (sr.optional("bind_address")) c.server.bind_address = sr.string("bind_address");
    read_int(sr, "batch_tasks", c.server.batch_tasks);
    read_int(sr, "group_size", c.server.group_size);
    read_int(sr, "max_retries", c.server.max_retries);
    read_ms(sr, "rollout_timeout_ms", c.server.rollout_timeout);
    read_ms(sr, "call_timeout_ms", c.server.call_timeout);
    read_int(sr, "min_group_size", c.server.min_group_size);
    read_int(sr, "total_steps", c.server.total_steps);
    read_int(sr, "default_max_tokens", c.server.default_max_tokens);
    read_int(sr, "max_tokens_cap", c.server.max_tokens_cap);
    sr.finish();
  }
  if (const auto* a = r.optional("advantage")) {
    ObjectReader ar(*a, "advantage");
    if (ar.optional("estimator")) {
      const auto name = ar.string("estimator");
      const auto e = rl::parse_estimator(name);
      if (!e) ar.fail("estimator", fmt::format("unknown estimator '{}'", name));
      c.advantage.estimator = *e;
    }
    read_real(ar, "epsilon_std", c.advantage.epsilon_std);
    ar.finish();
  }
  if (const auto* l = r.optional("loss")) {
    ObjectReader lr(*l, "loss");
    read_real(lr, "clip_epsilon", c.loss.clip_epsilon);
    read_int(lr, "epochs_per_batch", c.loss.epochs_per_batch);
    read_real(lr, "learning_rate", c.loss.learning_rate);
    if (lr.optional("normalize_by_tokens")) c.loss.normalize_by_tokens = lr.boolean("normalize_by_tokens");
    lr.finish();
  }
  if (const auto* x = r.optional("extraction")) {
    ObjectReader xr(*x, "extraction");
    if (xr.optional("policy_component_name")) {
      c.extraction.policy_component_name = xr.string("policy_component_name");
    }
    if (const auto* rf = xr.optional("role_filter")) {
      if (!rf->is_array()) xr.fail("role_filter", "expected an array of role names or null");
      std::set<std::string> roles;
      for (std::size_t i = 0; i < rf->size(); ++i) {
        roles.insert(json_string((*rf)[i], fmt::format("extraction.role_filter[{}]", i)));
      }
      c.extraction.role_filter = std::move(roles);
    }
    if (xr.optional("air_enabled")) c.extraction.air_enabled = xr.boolean("air_enabled");
    read_real(xr, "air_error_penalty", c.extraction.air_error_penalty);
    if (xr.optional("credit_strategy")) {
      const auto name = xr.string("credit_strategy");
      const auto s = extract::parse_credit_strategy(name);
      if (!s) xr.fail("credit_strategy", fmt::format("unknown credit strategy '{}'", name));
      c.extraction.credit_strategy = *s;
    }
    xr.finish();
  }
  if (const auto* o = r.optional("scenario_options")) {
    ObjectReader orr(*o, "scenario_options");
    read_int(orr, "range_max", c.scenario_options.range_max);
    read_int(orr, "num_docs", c.scenario_options.num_docs);
    read_int(orr, "num_tasks", c.scenario_options.num_tasks);
    orr.finish();
  }
  if (const auto* p = r.optional("policy")) {
    ObjectReader pr(*p, "policy");
    if (pr.optional("context_window")) {
      const auto w = pr.integer("context_window");
      if (w < 1 || w > 64) pr.fail("context_window", "must lie in [1, 64]");
      c.context_window = static_cast<std::size_t>(w);
    }
    if (pr.optional("init_checkpoint")) c.init_checkpoint = pr.string("init_checkpoint");
    read_real(pr, "copy_prior", c.copy_prior);
    if (c.copy_prior < 0.0 || c.copy_prior > 10.0) pr.fail("copy_prior", "must lie in [0, 10]");
    pr.finish();
  }
  if (const auto* w = r.optional("workers")) {
    ObjectReader wr(*w, "workers");
    read_int(wr, "num_workers", c.workers.num_workers);
    read_ms(wr, "poll_interval_ms", c.workers.poll_interval);
    read_ms(wr, "backoff_ms", c.workers.backoff);
    read_int(wr, "max_retries", c.workers.retry.max_retries);
    read_ms(wr, "retry_base_ms", c.workers.retry.base);
    read_ms(wr, "retry_cap_ms", c.workers.retry.cap);
    wr.finish();
  }
  r.finish();

  c.scenario_options.seed = c.dataset_seed();
  c.scenario_options.group_size = c.server.group_size;
  c.workers.rollout_timeout = c.server.rollout_timeout;
  c.workers.call_timeout = c.server.call_timeout;
  c.workers.fail_rate = c.fail_rate;
  c.workers.fault_seed = c.fault_seed();

  const auto& names = agents::scenario_names();
  if (std::find(names.begin(), names.end(), c.scenario) == names.end()) {
    throw ConfigError(fmt::format("scenario: unknown scenario '{}'", c.scenario));
  }
  checked("server", [&] { c.server.validate(); });
  checked("advantage", [&] { c.advantage.validate(); });
  checked("loss", [&] { c.loss.validate(); });
  checked("extraction", [&] { c.extraction.validate(); });
  checked("scenario_options", [&] { c.scenario_options.validate(); });
  checked("workers", [&] { c.workers.validate(); });
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  const auto text = ss.str();
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(fmt::format("{}: malformed JSON: {}", path.string(), e.what()), e.byte,
                     "<json>");
  }
  return parse_run_config(j);
}

Json RunConfig::to_json() const {
  Json roles = nullptr;
  if (extraction.role_filter) roles = Json(*extraction.role_filter);
  return Json{
      {"run_id", run_id},
      {"scenario", scenario},
      {"seed", seed},
      {"output_dir", output_dir.string()},
      {"fail_rate", fail_rate},
      {"server",
       {{"bind_address", server.bind_address},
        {"batch_tasks", server.batch_tasks},
        {"group_size", server.group_size},
        {"max_retries", server.max_retries},
        {"rollout_timeout_ms", server.rollout_timeout.count()},
        {"call_timeout_ms", server.call_timeout.count()},
        {"min_group_size", server.min_group_size},
        {"total_steps", server.total_steps},
        {"default_max_tokens", server.default_max_tokens},
        {"max_tokens_cap", server.max_tokens_cap}}},
      {"advantage",
       {{"estimator", rl::to_string(advantage.estimator)}, {"epsilon_std", advantage.epsilon_std}}},
      {"loss",
       {{"clip_epsilon", loss.clip_epsilon},
        {"epochs_per_batch", loss.epochs_per_batch},
        {"learning_rate", loss.learning_rate},
        {"normalize_by_tokens", loss.normalize_by_tokens}}},
      {"extraction",
       {{"policy_component_name", extraction.policy_component_name},
        {"role_filter", roles},
        {"air_enabled", extraction.air_enabled},
        {"air_error_penalty", extraction.air_error_penalty},
        {"credit_strategy", extract::to_string(extraction.credit_strategy)}}},
      {"scenario_options",
       {{"range_max", scenario_options.range_max},
        {"num_docs", scenario_options.num_docs},
        {"num_tasks", scenario_options.num_tasks}}},
      {"policy",
       {{"context_window", context_window},
        {"copy_prior", copy_prior},
        {"init_checkpoint", init_checkpoint ? Json(init_checkpoint->string()) : Json(nullptr)}}},
      {"workers",
       {{"num_workers", workers.num_workers},
        {"poll_interval_ms", workers.poll_interval.count()},
        {"backoff_ms", workers.backoff.count()},
        {"max_retries", workers.retry.max_retries},
        {"retry_base_ms", workers.retry.base.count()},
        {"retry_cap_ms", workers.retry.cap.count()}}}};
}

std::string run_config_reference() {
  RunConfig defaults;
  return fmt::format(
      "Run config (JSON). Every key is optional; unknown keys are rejected (exit 2).\n"
      "Defaults:\n{}\n"
      "Notes: seed is the master seed (dataset, sampling and fault streams derive from it);\n"
      "role_filter null keeps every role; scenario is one of guess_number, keyword_rag,\n"
      "calculator; range_max lies in [2, 9]; num_docs in [10, 32].\n",
      defaults.to_json().dump(2));
}

agents::Scenario build_scenario(const RunConfig& cfg) {
  return agents::make_scenario(cfg.scenario, cfg.scenario_options);
}

PolicyParams initial_params(const RunConfig& cfg, const policy::Vocab& vocab) {
  if (cfg.init_checkpoint) {
    auto p = policy::load_checkpoint(*cfg.init_checkpoint);
    if (p.vocab_size != vocab.size()) {
      throw ConfigError(fmt::format("policy.init_checkpoint: vocab size {} does not match the {} "
                                    "scenario vocab size {}",
                                    p.vocab_size, cfg.scenario, vocab.size()));
    }
    return p;
  }
  return policy::make_copy_prior_params(vocab.size(), cfg.context_window, cfg.copy_prior);
}

}  // namespace lightline::cli
