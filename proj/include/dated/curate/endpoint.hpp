#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <span>
#include <string>

#include "dated/common/error.hpp"
#include "dated/tokenizer/chat_template.hpp"

namespace dated::curate {

// Exponential backoff for calls to external services. Only RetryableError
// is retried.
struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double multiplier = 2.0;
  // Replaceable so tests do not sleep.
  std::function<void(std::chrono::milliseconds)> sleep;

  std::chrono::milliseconds backoff(int attempt) const;  // attempt >= 1
  void wait(int attempt) const;
};

template <typename F>
auto with_retries(const RetryPolicy& policy, F&& call) -> decltype(call()) {
  for (int attempt = 1;; ++attempt) {
    try {
      return call();
    } catch (const RetryableError&) {
      if (attempt >= policy.max_attempts) throw;
      policy.wait(attempt);
    }
  }
}

// A chat-completions service: messages in, assistant text out.
class ChatEndpoint {
 public:
  virtual ~ChatEndpoint() = default;
  // Throws RetryableError when the service is unreachable, overloaded
  // (429) or failing (5xx); Error("endpoint", ...) for other rejections or
  // malformed replies.
  virtual std::string complete(std::span<const tok::ChatMessage> messages,
                               double temperature) = 0;
};

struct EndpointConfig {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "DATED_API_KEY";  // unset or empty: no auth header
  double timeout_seconds = 60;
};

class HttpChatEndpoint : public ChatEndpoint {
 public:
  explicit HttpChatEndpoint(EndpointConfig config);
  std::string complete(std::span<const tok::ChatMessage> messages,
                       double temperature) override;
  const EndpointConfig& config() const { return config_; }

 private:
  EndpointConfig config_;
  std::string api_key_;
};

}  // namespace dated::curate
