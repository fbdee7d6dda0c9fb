#include "dated/serve/chat.hpp"

#include <random>
#include <set>

#include "dated/lm/generate.hpp"

namespace dated::serve {
namespace {

uint64_t random_seed() {
  static std::mutex m;
  static std::mt19937_64 engine{std::random_device{}()};
  std::lock_guard lock(m);
  return engine();
}

void validate_sampling(const SamplingRequest& s) {
  if (!(s.temperature >= 0.0)) throw InvalidArgument("temperature must be non-negative");
  if (s.top_k < 0) throw InvalidArgument("top_k must be non-negative");
  if (s.max_tokens < 1 || s.max_tokens > kMaxNewTokens) {
    throw InvalidArgument("max_tokens must be in [1, " + std::to_string(kMaxNewTokens) + "]");
  }
}

void validate_messages(const std::vector<tok::ChatMessage>& messages) {
  if (auto problem = tok::check_turn_order(messages)) throw InvalidArgument(*problem);
  if (messages.back().role != tok::Role::kUser) {
    throw InvalidArgument("the last message must come from the user");
  }
}

}  // namespace

ChatService::ChatService(const ModelRegistry& registry, SeedSource seeds)
    : registry_(registry), seeds_(seeds ? std::move(seeds) : SeedSource(random_seed)) {}

ChatResponse ChatService::run(const ModelEntry& entry,
                              const std::vector<tok::ChatMessage>& messages,
                              const SamplingRequest& sampling, uint64_t seed) const {
  const LoadedModel& m = *entry.model;
  const auto prompt = tok::render_chat(*m.tokenizer, messages, true);
  const size_t window = m.params.config.sequence_length;
  if (prompt.tokens.size() > window) {
    throw ContextOverflow("conversation needs " + std::to_string(prompt.tokens.size()) +
                          " tokens; " + entry.id + " has a context window of " +
                          std::to_string(window));
  }
  lm::SamplingParams p;
  p.temperature = sampling.temperature;
  p.top_k = sampling.top_k;
  p.max_new_tokens = sampling.max_tokens;
  p.seed = seed;
  const auto gen = lm::generate(m.params, prompt.tokens, p);

  ChatResponse r;
  r.model = entry.id;
  r.text = m.tokenizer->decode(gen.tokens);
  r.seed = seed;
  r.finish_reason = std::string(lm::finish_reason_name(gen.finish));
  r.usage = {prompt.tokens.size(), gen.tokens.size()};
  return r;
}

ChatResponse ChatService::chat(const ChatRequest& request) const {
  validate_messages(request.messages);
  validate_sampling(request.sampling);
  const ModelEntry entry = registry_.get(request.model);
  const uint64_t seed = request.sampling.seed ? *request.sampling.seed : seeds_();
  return run(entry, request.messages, request.sampling, seed);
}

std::vector<CompareSlot> ChatService::compare(const CompareRequest& request) const {
  validate_messages(request.messages);
  validate_sampling(request.sampling);
  if (request.models.size() < 2) throw InvalidArgument("compare needs at least two models");
  std::set<std::string> seen;
  std::vector<ModelEntry> entries;
  for (const auto& id : request.models) {
    if (!seen.insert(id).second) throw InvalidArgument("model '" + id + "' is listed twice");
    entries.push_back(registry_.get(id));
  }
  const uint64_t seed = request.sampling.seed ? *request.sampling.seed : seeds_();
  std::vector<CompareSlot> out;
  for (const auto& e : entries) {
    CompareSlot slot;
    slot.model = e.id;
    try {
      slot.response = run(e, request.messages, request.sampling, seed);
    } catch (const Error& err) {
      slot.error = SlotError{err.code(), err.what()};
    } catch (const std::exception& err) {
      slot.error = SlotError{"internal", err.what()};
    }
    out.push_back(std::move(slot));
  }
  return out;
}

std::vector<tok::ChatMessage> messages_from_json(const Json& j) {
  if (!j.is_array()) throw InvalidArgument("messages must be an array");
  std::vector<tok::ChatMessage> out;
  for (const auto& m : j) {
    const std::string role = m.at("role").get<std::string>();
    const auto r = tok::parse_role(role);
    if (!r) throw InvalidArgument("unknown role '" + role + "'");
    out.push_back({*r, m.at("content").get<std::string>()});
  }
  return out;
}

Json messages_to_json(const std::vector<tok::ChatMessage>& messages) {
  Json out = Json::array();
  for (const auto& m : messages) out.push_back({{"role", tok::role_name(m.role)}, {"content", m.text}});
  return out;
}

SamplingRequest sampling_from_json(const Json& j) {
  SamplingRequest s;
  s.temperature = j.value("temperature", s.temperature);
  s.top_k = j.value("top_k", s.top_k);
  s.max_tokens = j.value("max_tokens", s.max_tokens);
  if (j.contains("seed") && !j.at("seed").is_null()) s.seed = j.at("seed").get<uint64_t>();
  return s;
}

namespace {

template <typename F>
auto parse_or_invalid(F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("malformed request: ") + e.what());
  }
}

}  // namespace

ChatRequest chat_request_from_json(const Json& j) {
  return parse_or_invalid([&] {
    ChatRequest r;
    r.model = j.at("model").get<std::string>();
    r.messages = messages_from_json(j.at("messages"));
    r.sampling = sampling_from_json(j);
    return r;
  });
}

CompareRequest compare_request_from_json(const Json& j) {
  return parse_or_invalid([&] {
    CompareRequest r;
    r.models = j.at("models").get<std::vector<std::string>>();
    r.messages = messages_from_json(j.at("messages"));
    r.sampling = sampling_from_json(j);
    return r;
  });
}

Json chat_response_to_json(const ChatResponse& r) {
  return {{"model", r.model},
          {"text", r.text},
          {"seed", r.seed},
          {"finish_reason", r.finish_reason},
          {"usage",
           {{"prompt_tokens", r.usage.prompt_tokens},
            {"completion_tokens", r.usage.completion_tokens}}}};
}

Json compare_slot_to_json(const CompareSlot& s) {
  if (s.response) return chat_response_to_json(*s.response);
  return {{"model", s.model}, {"error", {{"code", s.error->code}, {"message", s.error->message}}}};
}

}  // namespace dated::serve
