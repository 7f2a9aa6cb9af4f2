#include "lightline/policy/chat.hpp"

#include <array>

#include <fmt/format.h>

#include "lightline/core/errors.hpp"
#include "lightline/core/json_reader.hpp"

namespace lightline::policy {

namespace {
constexpr std::array<std::string_view, 4> kRoles = {"system", "user", "assistant", "tool"};
}

bool is_chat_role(std::string_view role) {
  for (auto r : kRoles) {
    if (r == role) return true;
  }
  return false;
}

std::vector<TokenId> render_prompt(const Vocab& vocab, const std::vector<ChatMessage>& messages) {
  std::vector<TokenId> out;
  for (const auto& m : messages) {
    if (!is_chat_role(m.role)) throw ConfigError(fmt::format("unknown chat role '{}'", m.role));
    const auto line = vocab.tokenize(fmt::format("{}: {}", m.role, m.content));
    out.insert(out.end(), line.begin(), line.end());
    out.push_back(kSep);
  }
  const auto tail = vocab.tokenize("assistant:");
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

Json to_json(const std::vector<ChatMessage>& messages) {
  Json arr = Json::array();
  for (const auto& m : messages) arr.push_back(Json{{"role", m.role}, {"content", m.content}});
  return arr;
}

std::vector<ChatMessage> messages_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError("expected an array of messages", std::nullopt, path);
  std::vector<ChatMessage> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    ObjectReader r(j[i], fmt::format("{}[{}]", path, i));
    ChatMessage m{r.string("role"), r.string("content")};
    r.finish();
    if (!is_chat_role(m.role)) r.fail("role", fmt::format("unknown chat role '{}'", m.role));
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace lightline::policy
