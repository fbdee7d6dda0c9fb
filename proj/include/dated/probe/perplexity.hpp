#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dated/lm/parameters.hpp"
#include "dated/tokenizer/bpe.hpp"
#include "dated/train/checkpoint.hpp"

namespace dated::probe {

struct DocumentScore {
  double nll = 0;     // summed negative log-likelihood, nats
  size_t tokens = 0;  // scored tokens
  double perplexity() const;
};

// Scores `ids` as a document: <|endoftext|> is prepended as context and
// every id is predicted once. Sequences longer than the context window are
// cut into non-overlapping windows, each starting from fresh context.
DocumentScore score_document(const lm::Parameters<float>& params,
                             std::span<const tok::TokenId> ids);

struct PerplexityResult {
  double mean_perplexity = 0;  // mean over scored documents
  size_t scored = 0;
  size_t excluded = 0;  // empty after tokenization
  uint64_t tokens = 0;
  std::vector<double> per_document;  // 0 for excluded documents
};

// Throws InvalidArgument when every document is excluded.
PerplexityResult perplexity(const lm::Parameters<float>& params,
                            const tok::BpeTokenizer& tokenizer,
                            std::span<const std::string> texts);

// Throws InvalidArgument unless `tokenizer` is the one the checkpoint was
// trained with.
void require_matching_tokenizer(const train::CheckpointMeta& meta,
                                const tok::BpeTokenizer& tokenizer);

}  // namespace dated::probe
