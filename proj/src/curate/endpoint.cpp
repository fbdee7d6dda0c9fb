#include "dated/curate/endpoint.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "dated/common/jsonl.hpp"

namespace dated::curate {

std::chrono::milliseconds RetryPolicy::backoff(int attempt) const {
  const double ms = static_cast<double>(initial_backoff.count()) *
                    std::pow(multiplier, std::max(0, attempt - 1));
  return std::chrono::milliseconds(static_cast<int64_t>(std::llround(ms)));
}

void RetryPolicy::wait(int attempt) const {
  const auto d = backoff(attempt);
  if (sleep) {
    sleep(d);
  } else {
    std::this_thread::sleep_for(d);
  }
}

HttpChatEndpoint::HttpChatEndpoint(EndpointConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw InvalidArgument("endpoint base URL is empty");
  if (config_.model.empty()) throw InvalidArgument("endpoint model name is empty");
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  }
}

std::string HttpChatEndpoint::complete(std::span<const tok::ChatMessage> messages,
                                       double temperature) {
  Json body{{"model", config_.model}, {"temperature", temperature}};
  Json msgs = Json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", tok::role_name(m.role)}, {"content", m.text}});
  }
  body["messages"] = std::move(msgs);

  httplib::Client client(config_.base_url);
  const auto secs = std::chrono::duration<double>(config_.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const auto res = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!res) {
    throw RetryableError("cannot reach " + config_.base_url + ": " +
                         httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw RetryableError(config_.base_url + " answered HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error("endpoint", config_.base_url + " rejected the request with HTTP " +
                                std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  try {
    const Json reply = Json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const Json::exception& ex) {
    throw Error("endpoint", "malformed reply from " + config_.base_url + ": " + ex.what());
  }
}

}  // namespace dated::curate
