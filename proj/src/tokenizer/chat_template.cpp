#include "dated/tokenizer/chat_template.hpp"

namespace dated::tok {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "unknown";
}

std::optional<Role> parse_role(std::string_view name) {
  if (name == "system") return Role::kSystem;
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  return std::nullopt;
}

std::optional<std::string> check_turn_order(
    std::span<const ChatMessage> messages) {
  if (messages.empty()) return "no messages";
  size_t i = 0;
  if (messages[0].role == Role::kSystem) ++i;
  if (i == messages.size()) return "no user turn after system message";
  Role expected = Role::kUser;
  for (; i < messages.size(); ++i) {
    if (messages[i].role != expected) {
      return "message " + std::to_string(i) + " has role " +
             std::string(role_name(messages[i].role)) + ", expected " +
             std::string(role_name(expected));
    }
    expected = expected == Role::kUser ? Role::kAssistant : Role::kUser;
  }
  return std::nullopt;
}

RenderedChat render_chat(const BpeTokenizer& tokenizer,
                         std::span<const ChatMessage> messages,
                         bool add_generation_prompt) {
  RenderedChat out;
  auto push = [&](TokenId id, bool target) {
    out.tokens.push_back(id);
    out.is_target.push_back(target ? 1 : 0);
  };
  push(kEndOfText, false);
  for (const auto& m : messages) {
    const bool target = m.role == Role::kAssistant;
    switch (m.role) {
      case Role::kSystem: push(kSystem, false); break;
      case Role::kUser: push(kUser, false); break;
      case Role::kAssistant: push(kAssistant, false); break;
    }
    tokenizer.encode_append(m.text, out.tokens);
    out.is_target.resize(out.tokens.size(), target ? 1 : 0);
    push(kEndOfTurn, target);
  }
  if (add_generation_prompt) push(kAssistant, false);
  return out;
}

}  // namespace dated::tok
