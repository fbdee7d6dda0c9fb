#include "dated/lm/generate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dated/common/error.hpp"
#include "dated/lm/transformer.hpp"

namespace dated::lm {

std::string_view finish_reason_name(FinishReason reason) {
  return reason == FinishReason::kStop ? "stop" : "length";
}

tok::TokenId sample_token(std::span<const float> logits, double temperature,
                          int top_k, Rng& rng) {
  const int vocab = static_cast<int>(logits.size());
  if (temperature == 0.0 || top_k == 1) {
    int best = 0;
    for (int i = 1; i < vocab; ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    return best;
  }
  std::vector<int> ids(vocab);
  std::iota(ids.begin(), ids.end(), 0);
  if (top_k > 0 && top_k < vocab) {
    auto by_logit = [&](int a, int b) {
      return logits[a] != logits[b] ? logits[a] > logits[b] : a < b;
    };
    std::partial_sort(ids.begin(), ids.begin() + top_k, ids.end(), by_logit);
    ids.resize(top_k);
  }
  double mx = logits[ids[0]];
  for (int id : ids) mx = std::max(mx, static_cast<double>(logits[id]));
  std::vector<double> weights(ids.size());
  double total = 0;
  for (size_t i = 0; i < ids.size(); ++i) {
    weights[i] = std::exp((logits[ids[i]] - mx) / temperature);
    total += weights[i];
  }
  const double target = rng.uniform() * total;
  double cumulative = 0;
  for (size_t i = 0; i < ids.size(); ++i) {
    cumulative += weights[i];
    if (cumulative > target) return ids[i];
  }
  return ids.back();
}

Generation generate(const Parameters<float>& params,
                    std::span<const tok::TokenId> prompt,
                    const SamplingParams& sampling) {
  const ModelConfig& c = params.config;
  if (prompt.empty()) throw InvalidArgument("prompt is empty");
  if (prompt.size() > static_cast<size_t>(c.sequence_length)) {
    throw InvalidArgument("prompt of " + std::to_string(prompt.size()) +
                          " tokens exceeds the context window of " +
                          std::to_string(c.sequence_length));
  }
  if (!(sampling.temperature >= 0.0)) {
    throw InvalidArgument("temperature must be non-negative");
  }
  if (sampling.top_k < 0) throw InvalidArgument("top_k must be non-negative");

  IncrementalDecoder<float> decoder(params);
  Rng rng(sampling.seed);
  std::span<const float> logits;
  for (auto t : prompt) logits = decoder.step(t);

  Generation out;
  while (true) {
    if (static_cast<int>(out.tokens.size()) >= sampling.max_new_tokens) {
      out.finish = FinishReason::kLength;
      break;
    }
    for (float v : logits) {
      if (!std::isfinite(v)) throw NumericError("model produced non-finite logits");
    }
    const tok::TokenId next =
        sample_token(logits, sampling.temperature, sampling.top_k, rng);
    if (std::find(sampling.stop_tokens.begin(), sampling.stop_tokens.end(),
                  next) != sampling.stop_tokens.end()) {
      out.finish = FinishReason::kStop;
      break;
    }
    out.tokens.push_back(next);
    if (decoder.position() >= c.sequence_length) {
      out.finish = FinishReason::kLength;
      break;
    }
    logits = decoder.step(next);
  }
  return out;
}

}  // namespace dated::lm
