#pragma once

// JSON (de)serialization for the unified data interface. Traces are persisted as JSON
// Lines, one RolloutTrace per line, snake_case field names.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lightline/core/types.hpp"

namespace lightline {

Json to_json(const TaskSpec& task);
Json to_json(const SamplingParams& s);
Json to_json(const CallMeta& meta);
Json to_json(const TokenDetail& td);
Json to_json(const CallRecord& call);
Json to_json(const RewardSignal& r);
Json to_json(const RolloutTrace& trace);
Json to_json(const Transition& t);

TaskSpec task_from_json(const Json& j, const std::string& path = "");
SamplingParams sampling_from_json(const Json& j, const std::string& path = "");
CallMeta call_meta_from_json(const Json& j, const std::string& path = "");
CallRecord call_from_json(const Json& j, const std::string& path = "");
RewardSignal reward_from_json(const Json& j, const std::string& path = "");
RolloutTrace trace_from_json(const Json& j, const std::string& path = "");

// Canonical single-line encoding (object keys sorted, no trailing newline).
std::string serialize_trace(const RolloutTrace& trace);
// Throws ParseError with a byte offset for malformed JSON, or a field path for
// well-formed JSON that does not describe a trace.
RolloutTrace deserialize_trace(std::string_view bytes);

std::vector<RolloutTrace> read_traces_jsonl(const std::filesystem::path& path);
void append_traces_jsonl(const std::filesystem::path& path, const std::vector<RolloutTrace>& traces);

std::vector<TaskSpec> read_tasks_jsonl(const std::filesystem::path& path);
void write_tasks_jsonl(const std::filesystem::path& path, const std::vector<TaskSpec>& tasks);

}  // namespace lightline
