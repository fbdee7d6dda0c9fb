#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "dated/common/random.hpp"
#include "dated/lm/parameters.hpp"
#include "dated/tokenizer/bpe.hpp"

namespace dated::lm {

struct SamplingParams {
  double temperature = 0.0;  // 0 selects the argmax
  int top_k = 0;             // 0 keeps the whole vocabulary
  int max_new_tokens = 64;
  uint64_t seed = 0;
  std::vector<tok::TokenId> stop_tokens = {tok::kEndOfText, tok::kEndOfTurn};
};

enum class FinishReason { kStop, kLength };
std::string_view finish_reason_name(FinishReason reason);

struct Generation {
  std::vector<tok::TokenId> tokens;  // excludes the stop token
  FinishReason finish = FinishReason::kLength;
};

// Draws one token. Temperature 0 or top_k == 1 returns the argmax with the
// lowest id winning ties, without consuming randomness. Otherwise the
// candidates (top_k largest logits, ordered by logit descending then id
// ascending; or all ids in ascending order when top_k is 0) are weighted by
// exp((logit - max) / temperature) and one uniform draw u in [0, 1) selects
// the first candidate whose cumulative weight exceeds u * total.
tok::TokenId sample_token(std::span<const float> logits, double temperature,
                          int top_k, Rng& rng);

// Autoregressive decoding with a key/value cache. Deterministic for fixed
// (params, prompt, sampling). Stops on a stop token, after max_new_tokens,
// or when the context window fills. Throws InvalidArgument for an empty or
// over-long prompt or negative temperature, NumericError on non-finite
// logits.
Generation generate(const Parameters<float>& params,
                    std::span<const tok::TokenId> prompt,
                    const SamplingParams& sampling);

}  // namespace dated::lm
