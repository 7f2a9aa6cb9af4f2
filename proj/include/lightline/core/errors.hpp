#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace lightline {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or an unsupported option value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A token id outside [0, V).
class VocabularyError : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity showed up where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Data that violates a cross-record invariant (e.g. rewards disagreeing within a rollout).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// A traced llm call is missing the token detail needed for training.
class ExtractionError : public Error {
 public:
  using Error::Error;
  ExtractionError(const std::string& what, std::size_t call_index)
      : Error(what), call_index_(call_index) {}

  std::optional<std::size_t> call_index() const { return call_index_; }

 private:
  std::optional<std::size_t> call_index_;
};

// Malformed serialized data. `offset` is a byte offset when the failure is syntactic,
// `field` the JSON path of the offending field when it is structural.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::optional<std::size_t> offset, std::string field)
      : Error(what), offset_(offset), field_(std::move(field)) {}

  std::optional<std::size_t> offset() const { return offset_; }
  const std::string& field() const { return field_; }

 private:
  std::optional<std::size_t> offset_;
  std::string field_;
};

}  // namespace lightline
