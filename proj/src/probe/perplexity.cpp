#include "dated/probe/perplexity.hpp"

#include <cmath>

#include "dated/common/error.hpp"
#include "dated/lm/loss.hpp"
#include "dated/lm/transformer.hpp"

namespace dated::probe {

double DocumentScore::perplexity() const {
  return std::exp(nll / static_cast<double>(tokens));
}

DocumentScore score_document(const lm::Parameters<float>& params,
                             std::span<const tok::TokenId> ids) {
  DocumentScore out;
  if (ids.empty()) return out;
  const int vocab = params.config.vocab_size;
  const size_t window = params.config.sequence_length;
  std::vector<tok::TokenId> stream;
  stream.reserve(ids.size() + 1);
  stream.push_back(tok::kEndOfText);
  stream.insert(stream.end(), ids.begin(), ids.end());

  lm::Workspace<float> ws;
  for (size_t start = 0; start + 1 < stream.size(); start += window) {
    const size_t len = std::min(window, stream.size() - 1 - start);
    const std::span<const tok::TokenId> input(stream.data() + start, len);
    const auto logits = ws.forward(params, input, 1, static_cast<int>(len));
    for (size_t i = 0; i < len; ++i) {
      out.nll -= lm::token_log_prob<float>(logits.subspan(i * vocab, vocab),
                                           stream[start + i + 1]);
    }
    out.tokens += len;
  }
  return out;
}

PerplexityResult perplexity(const lm::Parameters<float>& params,
                            const tok::BpeTokenizer& tokenizer,
                            std::span<const std::string> texts) {
  PerplexityResult r;
  r.per_document.assign(texts.size(), 0.0);
  double sum = 0;
  for (size_t i = 0; i < texts.size(); ++i) {
    const auto ids = tokenizer.encode(texts[i]);
    if (ids.empty()) {
      ++r.excluded;
      continue;
    }
    const DocumentScore s = score_document(params, ids);
    r.per_document[i] = s.perplexity();
    sum += r.per_document[i];
    r.tokens += s.tokens;
    ++r.scored;
  }
  if (r.scored == 0) {
    throw InvalidArgument("no document produced a scoreable token");
  }
  r.mean_perplexity = sum / static_cast<double>(r.scored);
  return r;
}

void require_matching_tokenizer(const train::CheckpointMeta& meta,
                                const tok::BpeTokenizer& tokenizer) {
  if (meta.tokenizer_fingerprint != tokenizer.fingerprint_hex()) {
    throw InvalidArgument("checkpoint was trained with tokenizer " +
                          meta.tokenizer_fingerprint + ", got " +
                          tokenizer.fingerprint_hex());
  }
}

}  // namespace dated::probe
