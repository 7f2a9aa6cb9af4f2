#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lightline/core/types.hpp"

namespace lightline::policy {

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kSep = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumSpecials = 4;
inline constexpr std::size_t kMaxVocab = 128;

// Ordered token pieces with the specials {BOS, EOS, SEP, UNK} at ids 0..3. Specials are
// never produced by tokenize(); they only enter sequences structurally.
class Vocab {
 public:
  // `pieces` are the non-special tokens, in id order starting at 4. Throws ConfigError on
  // duplicates, empty pieces, or a total size above kMaxVocab.
  explicit Vocab(std::vector<std::string> pieces);

  // Role prefixes used by the prompt template plus a single space.
  static std::vector<std::string> base_pieces();

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& piece(TokenId id) const;
  // Id of an exact piece, or kUnk.
  TokenId id_of(std::string_view piece) const;
  bool contains(std::string_view piece) const;

  // Greedy longest match; bytes no piece covers become UNK.
  std::vector<TokenId> tokenize(std::string_view text) const;
  // BOS/EOS render as nothing, SEP as "\n", UNK as U+FFFD.
  std::string detokenize(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  // Candidate ids per leading byte, longest piece first.
  std::vector<std::vector<TokenId>> by_first_byte_;
};

}  // namespace lightline::policy
