#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dated/common/error.hpp"
#include "dated/common/jsonl.hpp"
#include "dated/serve/registry.hpp"
#include "dated/tokenizer/chat_template.hpp"

namespace dated::serve {

struct SamplingRequest {
  double temperature = 0.8;
  int top_k = 40;
  int max_tokens = 128;
  std::optional<uint64_t> seed;  // drawn by the server when absent
};

struct ChatRequest {
  std::string model;
  std::vector<tok::ChatMessage> messages;
  SamplingRequest sampling;
};

struct Usage {
  size_t prompt_tokens = 0;
  size_t completion_tokens = 0;
  bool operator==(const Usage&) const = default;
};

struct ChatResponse {
  std::string model;
  std::string text;
  uint64_t seed = 0;
  std::string finish_reason;  // "stop" or "length"
  Usage usage;
  bool operator==(const ChatResponse&) const = default;
};

struct CompareRequest {
  std::vector<std::string> models;
  std::vector<tok::ChatMessage> messages;
  SamplingRequest sampling;
};

struct SlotError {
  std::string code;
  std::string message;
};

struct CompareSlot {
  std::string model;
  std::optional<ChatResponse> response;
  std::optional<SlotError> error;
};

inline constexpr int kMaxNewTokens = 4096;

// Raised when the rendered prompt does not fit the model's context window.
class ContextOverflow : public Error {
 public:
  explicit ContextOverflow(const std::string& message) : Error("context_overflow", message) {}
};

class ChatService {
 public:
  using SeedSource = std::function<uint64_t()>;
  explicit ChatService(const ModelRegistry& registry, SeedSource seeds = {});

  // Renders the conversation with a trailing assistant prompt and decodes
  // until a stop token, max_tokens or a full context window. Throws
  // NotFoundError for an unregistered model, InvalidArgument for a
  // malformed conversation or sampling, ContextOverflow when the prompt
  // alone exceeds the window.
  ChatResponse chat(const ChatRequest& request) const;

  // Validates every id first (at least two, distinct, registered) and
  // rejects the whole request on failure. Then runs one chat per model with
  // a shared seed, in request order; a model that fails gets an error slot.
  std::vector<CompareSlot> compare(const CompareRequest& request) const;

 private:
  ChatResponse run(const ModelEntry& entry, const std::vector<tok::ChatMessage>& messages,
                   const SamplingRequest& sampling, uint64_t seed) const;

  const ModelRegistry& registry_;
  SeedSource seeds_;
};

// Wire format: messages are [{"role", "content"}].
std::vector<tok::ChatMessage> messages_from_json(const Json& j);
Json messages_to_json(const std::vector<tok::ChatMessage>& messages);
SamplingRequest sampling_from_json(const Json& j);
ChatRequest chat_request_from_json(const Json& j);
CompareRequest compare_request_from_json(const Json& j);
Json chat_response_to_json(const ChatResponse& r);
Json compare_slot_to_json(const CompareSlot& s);

}  // namespace dated::serve
