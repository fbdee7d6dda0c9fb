#include "dated/lm/loss.hpp"

#include <algorithm>
#include <cmath>

#include "dated/common/error.hpp"

namespace dated::lm {

template <typename Real>
double token_log_prob(std::span<const Real> row, tok::TokenId target) {
  double mx = row[0];
  for (Real v : row) mx = std::max(mx, static_cast<double>(v));
  double sum = 0;
  for (Real v : row) sum += std::exp(static_cast<double>(v) - mx);
  return static_cast<double>(row[target]) - mx - std::log(sum);
}

template <typename Real>
double cross_entropy(std::span<const Real> logits, int vocab,
                     std::span<const tok::TokenId> targets,
                     tok::TokenId ignore_id, std::span<Real> dlogits) {
  const size_t rows = targets.size();
  if (logits.size() != rows * vocab) {
    throw InvalidArgument("logits and targets disagree in shape");
  }
  if (!dlogits.empty() && dlogits.size() != logits.size()) {
    throw InvalidArgument("dlogits has wrong size");
  }
  size_t count = 0;
  for (auto t : targets) {
    if (t == ignore_id) continue;
    if (t < 0 || t >= vocab) {
      throw InvalidArgument("target id " + std::to_string(t) +
                            " is outside the vocabulary");
    }
    ++count;
  }
  if (count == 0) throw InvalidArgument("every target position is ignored");

  double total = 0;
  const double inv_count = 1.0 / static_cast<double>(count);
  for (size_t r = 0; r < rows; ++r) {
    auto row = logits.subspan(r * vocab, vocab);
    if (targets[r] == ignore_id) {
      if (!dlogits.empty()) {
        std::fill_n(dlogits.begin() + r * vocab, vocab, Real(0));
      }
      continue;
    }
    double mx = row[0];
    for (Real v : row) mx = std::max(mx, static_cast<double>(v));
    double sum = 0;
    for (Real v : row) sum += std::exp(static_cast<double>(v) - mx);
    const double lse = mx + std::log(sum);
    total += lse - static_cast<double>(row[targets[r]]);
    if (!dlogits.empty()) {
      Real* g = dlogits.data() + r * vocab;
      for (int i = 0; i < vocab; ++i) {
        g[i] = static_cast<Real>(std::exp(static_cast<double>(row[i]) - lse) *
                                 inv_count);
      }
      g[targets[r]] -= static_cast<Real>(inv_count);
    }
  }
  return total * inv_count;
}

template double cross_entropy<float>(std::span<const float>, int,
                                     std::span<const tok::TokenId>, tok::TokenId,
                                     std::span<float>);
template double cross_entropy<double>(std::span<const double>, int,
                                      std::span<const tok::TokenId>,
                                      tok::TokenId, std::span<double>);
template double token_log_prob<float>(std::span<const float>, tok::TokenId);
template double token_log_prob<double>(std::span<const double>, tok::TokenId);

}  // namespace dated::lm
