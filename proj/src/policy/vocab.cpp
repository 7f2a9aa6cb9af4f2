#include "lightline/policy/vocab.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "lightline/core/errors.hpp"

namespace lightline::policy {

Vocab::Vocab(std::vector<std::string> pieces) : by_first_byte_(256) {
  tokens_ = {"<bos>", "<eos>", "<sep>", "<unk>"};
  tokens_.insert(tokens_.end(), std::make_move_iterator(pieces.begin()),
                 std::make_move_iterator(pieces.end()));
  if (tokens_.size() > kMaxVocab) {
    throw ConfigError(fmt::format("vocabulary of {} tokens exceeds {}", tokens_.size(), kMaxVocab));
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty()) throw ConfigError("empty vocabulary piece");
    if (!index_.emplace(t, static_cast<TokenId>(i)).second) {
      throw ConfigError(fmt::format("duplicate vocabulary piece '{}'", t));
    }
    if (i >= kNumSpecials) {
      by_first_byte_[static_cast<unsigned char>(t[0])].push_back(static_cast<TokenId>(i));
    }
  }
  for (auto& bucket : by_first_byte_) {
    std::stable_sort(bucket.begin(), bucket.end(), [this](TokenId a, TokenId b) {
      return tokens_[a].size() > tokens_[b].size();
    });
  }
}

std::vector<std::string> Vocab::base_pieces() {
  return {"system:", "user:", "assistant:", "tool:", " "};
}

const std::string& Vocab::piece(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabularyError(fmt::format("token id {} outside vocabulary of size {}", id,
                                      tokens_.size()));
  }
  return tokens_[id];
}

TokenId Vocab::id_of(std::string_view p) const {
  auto it = index_.find(std::string(p));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view p) const { return index_.contains(std::string(p)); }

std::vector<TokenId> Vocab::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto& bucket = by_first_byte_[static_cast<unsigned char>(text[pos])];
    TokenId match = kUnk;
    for (TokenId id : bucket) {
      if (text.substr(pos).starts_with(tokens_[id])) {
        match = id;
        break;
      }
    }
    out.push_back(match);
    pos += match == kUnk ? 1 : tokens_[match].size();
  }
  return out;
}

std::string Vocab::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    switch (id) {
      case kBos:
      case kEos: break;
      case kSep: out += '\n'; break;
      case kUnk: out += "\xEF\xBF\xBD"; break;
      default: out += piece(id);
    }
  }
  return out;
}

}  // namespace lightline::policy
