#pragma once

#include <string>
#include <vector>

#include "lightline/core/types.hpp"
#include "lightline/policy/vocab.hpp"

namespace lightline::policy {

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

// Roles the prompt template can render: system, user, assistant, tool.
bool is_chat_role(std::string_view role);

// "<role>: <content>" lines joined by SEP and terminated by "assistant:".
// Throws ConfigError for a role outside is_chat_role().
std::vector<TokenId> render_prompt(const Vocab& vocab, const std::vector<ChatMessage>& messages);

Json to_json(const std::vector<ChatMessage>& messages);
// Throws ParseError naming the offending element.
std::vector<ChatMessage> messages_from_json(const Json& j, const std::string& path);

}  // namespace lightline::policy
