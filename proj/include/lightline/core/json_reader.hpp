#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>

#include "lightline/core/errors.hpp"
#include "lightline/core/types.hpp"

namespace lightline {

// Path-tracking accessor over a JSON object. Every failure is a ParseError naming the
// full field path (e.g. "calls[2].meta.status"). finish() rejects keys never read.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path);

  bool has(std::string_view key) const;
  const Json& required(std::string_view key);
  // nullptr when absent or JSON null.
  const Json* optional(std::string_view key);

  std::string string(std::string_view key);
  std::int64_t integer(std::string_view key);
  std::uint64_t unsigned_integer(std::string_view key);
  double real(std::string_view key);
  bool boolean(std::string_view key);

  std::string child_path(std::string_view key) const;
  const std::string& path() const { return path_; }

  void finish() const;

  [[noreturn]] void fail(std::string_view key, std::string_view what) const;

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string, std::less<>> used_;
};

std::int64_t json_integer(const Json& j, const std::string& path);
double json_real(const Json& j, const std::string& path);
std::string json_string(const Json& j, const std::string& path);

}  // namespace lightline
