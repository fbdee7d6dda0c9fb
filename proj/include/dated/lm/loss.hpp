#pragma once

#include <span>

#include "dated/tokenizer/bpe.hpp"

namespace dated::lm {

inline constexpr tok::TokenId kIgnoreIndex = -1;

// Mean cross-entropy in nats over rows whose target != ignore_id, computed
// with log-sum-exp. When `dlogits` is non-empty it receives d(mean)/d(logits)
// (zero rows for ignored targets). Throws InvalidArgument when every
// position is ignored or a target is outside the vocabulary.
template <typename Real>
double cross_entropy(std::span<const Real> logits, int vocab,
                     std::span<const tok::TokenId> targets,
                     tok::TokenId ignore_id = kIgnoreIndex,
                     std::span<Real> dlogits = {});

// log softmax(row)[target], in double.
template <typename Real>
double token_log_prob(std::span<const Real> row, tok::TokenId target);

}  // namespace dated::lm
