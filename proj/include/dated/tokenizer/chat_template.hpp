#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dated/tokenizer/bpe.hpp"

namespace dated::tok {

enum class Role { kSystem, kUser, kAssistant };

std::string_view role_name(Role role);
std::optional<Role> parse_role(std::string_view name);

struct ChatMessage {
  Role role;
  std::string text;

  bool operator==(const ChatMessage&) const = default;
};

// Optional leading system turn, then user/assistant alternating from user.
// Returns a description of the first problem, or nullopt when well formed.
std::optional<std::string> check_turn_order(std::span<const ChatMessage> messages);

struct RenderedChat {
  std::vector<TokenId> tokens;
  // is_target[i] marks tokens[i] as a training target: the content and the
  // closing <|end|> of assistant turns.
  std::vector<uint8_t> is_target;
};

// Layout: <|endoftext|> then, per message, <|role|> text <|end|>. With
// `add_generation_prompt` a trailing <|assistant|> opens the reply.
RenderedChat render_chat(const BpeTokenizer& tokenizer,
                         std::span<const ChatMessage> messages,
                         bool add_generation_prompt);

}  // namespace dated::tok
