#include "lightline/core/json_reader.hpp"

#include <fmt/format.h>

namespace lightline {

namespace {

std::string describe(const Json& j) { return std::string(j.type_name()); }

}  // namespace

ObjectReader::ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
  if (!j_.is_object()) {
    throw ParseError(fmt::format("{}: expected object, found {}", path_.empty() ? "<root>" : path_,
                                 describe(j_)),
                     std::nullopt, path_);
  }
}

std::string ObjectReader::child_path(std::string_view key) const {
  return path_.empty() ? std::string(key) : fmt::format("{}.{}", path_, key);
}

void ObjectReader::fail(std::string_view key, std::string_view what) const {
  const auto p = child_path(key);
  throw ParseError(fmt::format("{}: {}", p, what), std::nullopt, p);
}

bool ObjectReader::has(std::string_view key) const { return j_.contains(key); }

const Json& ObjectReader::required(std::string_view key) {
  auto it = j_.find(key);
  if (it == j_.end()) fail(key, "missing required field");
  used_.emplace(key);
  return *it;
}

const Json* ObjectReader::optional(std::string_view key) {
  auto it = j_.find(key);
  if (it == j_.end()) return nullptr;
  used_.emplace(key);
  if (it->is_null()) return nullptr;
  return &*it;
}

std::string ObjectReader::string(std::string_view key) {
  return json_string(required(key), child_path(key));
}

std::int64_t ObjectReader::integer(std::string_view key) {
  return json_integer(required(key), child_path(key));
}

std::uint64_t ObjectReader::unsigned_integer(std::string_view key) {
  const auto& v = required(key);
  if (!v.is_number_unsigned()) {
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
    fail(key, fmt::format("expected non-negative integer, found {}", describe(v)));
  }
  return v.get<std::uint64_t>();
}

double ObjectReader::real(std::string_view key) { return json_real(required(key), child_path(key)); }

bool ObjectReader::boolean(std::string_view key) {
  const auto& v = required(key);
  if (!v.is_boolean()) fail(key, fmt::format("expected boolean, found {}", describe(v)));
  return v.get<bool>();
}

void ObjectReader::finish() const {
  for (auto it = j_.begin(); it != j_.end(); ++it) {
    if (!used_.contains(it.key())) fail(it.key(), "unknown field");
  }
}

std::int64_t json_integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) {
    throw ParseError(fmt::format("{}: expected integer, found {}", path, describe(j)),
                     std::nullopt, path);
  }
  return j.get<std::int64_t>();
}

double json_real(const Json& j, const std::string& path) {
  if (!j.is_number()) {
    throw ParseError(fmt::format("{}: expected number, found {}", path, describe(j)), std::nullopt,
                     path);
  }
  return j.get<double>();
}

std::string json_string(const Json& j, const std::string& path) {
  if (!j.is_string()) {
    throw ParseError(fmt::format("{}: expected string, found {}", path, describe(j)), std::nullopt,
                     path);
  }
  return j.get<std::string>();
}

}  // namespace lightline
