#include "lightline/core/trace_io.hpp"

#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "lightline/core/errors.hpp"
#include "lightline/core/json_reader.hpp"

namespace lightline {

namespace {

std::string index_path(const std::string& base, std::string_view key, std::size_t i) {
  return fmt::format("{}{}{}[{}]", base, base.empty() ? "" : ".", key, i);
}

const Json& array_field(ObjectReader& r, std::string_view key) {
  const auto& v = r.required(key);
  if (!v.is_array()) r.fail(key, fmt::format("expected array, found {}", v.type_name()));
  return v;
}

template <class T>
std::vector<T> read_numbers(ObjectReader& r, std::string_view key) {
  const auto& arr = array_field(r, key);
  std::vector<T> out;
  out.reserve(arr.size());
  const auto base = r.child_path(key);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto p = fmt::format("{}[{}]", base, i);
    if constexpr (std::is_integral_v<T>) {
      const auto v = json_integer(arr[i], p);
      if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) {
        throw ParseError(fmt::format("{}: value out of range", p), std::nullopt, p);
      }
      out.push_back(static_cast<T>(v));
    } else {
      out.push_back(json_real(arr[i], p));
    }
  }
  return out;
}

std::size_t read_index(ObjectReader& r, std::string_view key) {
  const auto v = r.integer(key);
  if (v < 0) r.fail(key, "expected non-negative integer");
  return static_cast<std::size_t>(v);
}

}  // namespace

Json to_json(const TaskSpec& task) {
  return Json{{"task_id", task.task_id},
              {"scenario", task.scenario},
              {"payload", task.payload},
              {"group_size", task.group_size}};
}

Json to_json(const SamplingParams& s) {
  Json j{{"temperature", s.temperature}, {"max_tokens", s.max_tokens}};
  if (s.seed) j["seed"] = *s.seed;
  return j;
}

Json to_json(const CallMeta& meta) {
  Json j{{"component_kind", to_string(meta.component_kind)},
         {"component_name", meta.component_name},
         {"sequence_index", meta.sequence_index},
         {"wall_clock", meta.wall_clock},
         {"status", to_string(meta.status)}};
  if (meta.role) j["role"] = *meta.role;
  if (meta.endpoint_version) j["endpoint_version"] = *meta.endpoint_version;
  if (meta.sampling) j["sampling"] = to_json(*meta.sampling);
  return j;
}

Json to_json(const TokenDetail& td) {
  return Json{{"input_token_ids", td.input_token_ids},
              {"output_token_ids", td.output_token_ids},
              {"output_logprobs", td.output_logprobs}};
}

Json to_json(const CallRecord& call) {
  Json j{{"meta", to_json(call.meta)}, {"input", call.input}, {"output", call.output}};
  if (call.token_detail) j["token_detail"] = to_json(*call.token_detail);
  return j;
}

Json to_json(const RewardSignal& r) {
  return Json{{"call_index", r.call_index}, {"value", r.value}, {"source", to_string(r.source)}};
}

Json to_json(const RolloutTrace& trace) {
  Json calls = Json::array();
  for (const auto& c : trace.calls) calls.push_back(to_json(c));
  Json rewards = Json::array();
  for (const auto& r : trace.rewards) rewards.push_back(to_json(r));
  return Json{{"rollout_id", trace.rollout_id},
              {"task_id", trace.task_id},
              {"attempt_index", trace.attempt_index},
              {"calls", std::move(calls)},
              {"rewards", std::move(rewards)},
              {"status", to_string(trace.status)}};
}

Json to_json(const Transition& t) {
  Json j{{"task_id", t.task_id},
         {"rollout_id", t.rollout_id},
         {"turn_index", t.turn_index},
         {"input_token_ids", t.input_token_ids},
         {"output_token_ids", t.output_token_ids},
         {"old_logprobs", t.old_logprobs},
         {"policy_version", t.policy_version}};
  if (t.role) j["role"] = *t.role;
  if (t.reward) j["reward"] = *t.reward;
  return j;
}

TaskSpec task_from_json(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  TaskSpec t;
  t.task_id = r.string("task_id");
  t.scenario = r.string("scenario");
  t.payload = r.required("payload");
  const auto g = r.integer("group_size");
  if (g < 1) r.fail("group_size", "must be >= 1");
  t.group_size = static_cast<int>(g);
  r.finish();
  return t;
}

SamplingParams sampling_from_json(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  SamplingParams s;
  s.temperature = r.real("temperature");
  s.max_tokens = static_cast<int>(r.integer("max_tokens"));
  if (r.optional("seed")) s.seed = r.unsigned_integer("seed");
  r.finish();
  return s;
}

CallMeta call_meta_from_json(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  CallMeta m;
  const auto kind = r.string("component_kind");
  const auto k = parse_component_kind(kind);
  if (!k) r.fail("component_kind", fmt::format("unknown component kind '{}'", kind));
  m.component_kind = *k;
  m.component_name = r.string("component_name");
  if (const auto* role = r.optional("role")) m.role = json_string(*role, r.child_path("role"));
  if (r.optional("endpoint_version")) m.endpoint_version = r.unsigned_integer("endpoint_version");
  if (const auto* s = r.optional("sampling")) {
    m.sampling = sampling_from_json(*s, r.child_path("sampling"));
  }
  m.sequence_index = read_index(r, "sequence_index");
  m.wall_clock = r.integer("wall_clock");
  const auto status = r.string("status");
  const auto st = parse_call_status(status);
  if (!st) r.fail("status", fmt::format("unknown call status '{}'", status));
  m.status = *st;
  r.finish();
  return m;
}

CallRecord call_from_json(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  CallRecord c;
  c.meta = call_meta_from_json(r.required("meta"), r.child_path("meta"));
  c.input = r.required("input");
  c.output = r.required("output");
  if (const auto* td = r.optional("token_detail")) {
    ObjectReader tr(*td, r.child_path("token_detail"));
    TokenDetail detail;
    detail.input_token_ids = read_numbers<TokenId>(tr, "input_token_ids");
    detail.output_token_ids = read_numbers<TokenId>(tr, "output_token_ids");
    detail.output_logprobs = read_numbers<double>(tr, "output_logprobs");
    tr.finish();
    c.token_detail = std::move(detail);
  }
  r.finish();
  return c;
}

RewardSignal reward_from_json(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  RewardSignal s;
  s.call_index = read_index(r, "call_index");
  s.value = r.real("value");
  const auto src = r.string("source");
  const auto parsed = parse_reward_source(src);
  if (!parsed) r.fail("source", fmt::format("unknown reward source '{}'", src));
  s.source = *parsed;
  r.finish();
  return s;
}

RolloutTrace trace_from_json(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  RolloutTrace t;
  t.rollout_id = r.string("rollout_id");
  t.task_id = r.string("task_id");
  const auto attempt = r.integer("attempt_index");
  if (attempt < 0) r.fail("attempt_index", "must be >= 0");
  t.attempt_index = static_cast<int>(attempt);
  const auto& calls = array_field(r, "calls");
  for (std::size_t i = 0; i < calls.size(); ++i) {
    t.calls.push_back(call_from_json(calls[i], index_path(path, "calls", i)));
  }
  const auto& rewards = array_field(r, "rewards");
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    t.rewards.push_back(reward_from_json(rewards[i], index_path(path, "rewards", i)));
  }
  const auto status = r.string("status");
  const auto st = parse_rollout_status(status);
  if (!st) r.fail("status", fmt::format("unknown rollout status '{}'", status));
  t.status = *st;
  r.finish();
  return t;
}

std::string serialize_trace(const RolloutTrace& trace) { return to_json(trace).dump(); }

RolloutTrace deserialize_trace(std::string_view bytes) {
  Json j;
  try {
    j = Json::parse(bytes.begin(), bytes.end());
  } catch (const Json::parse_error& e) {
    throw ParseError(fmt::format("malformed trace at byte {}: {}", e.byte, e.what()), e.byte,
                     "<json>");
  }
  return trace_from_json(j);
}

std::vector<RolloutTrace> read_traces_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  std::vector<RolloutTrace> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(deserialize_trace(line));
  }
  return out;
}

void append_traces_jsonl(const std::filesystem::path& path,
                         const std::vector<RolloutTrace>& traces) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error(fmt::format("cannot open {} for append", path.string()));
  for (const auto& t : traces) out << serialize_trace(t) << '\n';
}

std::vector<TaskSpec> read_tasks_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  std::vector<TaskSpec> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(fmt::format("{}:{}: malformed task at byte {}", path.string(), lineno,
                                   e.byte),
                       e.byte, "<json>");
    }
    out.push_back(task_from_json(j));
  }
  return out;
}

void write_tasks_jsonl(const std::filesystem::path& path, const std::vector<TaskSpec>& tasks) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error(fmt::format("cannot open {} for writing", path.string()));
  for (const auto& t : tasks) out << to_json(t).dump() << '\n';
}

}  // namespace lightline
