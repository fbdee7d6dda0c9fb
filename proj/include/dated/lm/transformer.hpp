#pragma once

#include <span>
#include <vector>

#include "dated/lm/parameters.hpp"
#include "dated/tokenizer/bpe.hpp"

namespace dated::lm {

using tok::TokenId;

// Throws InvalidArgument unless tokens.size() == batch * seq, 0 < seq <=
// sequence_length and every id is inside the vocabulary.
void validate_batch(const ModelConfig& config, std::span<const TokenId> tokens,
                    int batch, int seq);

// Activation storage for one batch shape. Pre-norm blocks:
//   h   = x + Attn(RMSNorm(x)),  Attn with rotary Q/K and a causal mask
//   out = h + SwiGLU(RMSNorm(h))
// followed by a final RMSNorm and the output projection.
template <typename Real>
class Workspace {
 public:
  // Returns logits [batch * seq, vocab], row-major, and keeps every
  // intermediate needed by backward().
  std::span<const Real> forward(const Parameters<Real>& params,
                                std::span<const TokenId> tokens, int batch,
                                int seq);

  // Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits) of
  // the most recent forward().
  void backward(const Parameters<Real>& params, std::span<const Real> dlogits,
                std::span<Real> grads);

  std::span<const Real> logits() const { return logits_; }
  // Causal attention weights of `layer`, laid out [batch, head, query, key].
  std::span<const Real> attention_probs(int layer) const {
    return layers_.at(layer).probs;
  }
  int batch() const { return batch_; }
  int seq() const { return seq_; }

 private:
  struct LayerCache {
    std::vector<Real> x_in, inv_rms1, u1, q, k, v, probs, attn;
    std::vector<Real> h, inv_rms2, u2, gate, up, act;
  };

  void reshape(const ModelConfig& config, int batch, int seq);

  ModelConfig config_{};
  int batch_ = 0;
  int seq_ = 0;
  std::vector<TokenId> tokens_;
  std::vector<LayerCache> layers_;
  std::vector<Real> x_final_, inv_rms_final_, u_final_, logits_;
  std::vector<Real> rope_cos_, rope_sin_;
  // backward scratch
  std::vector<Real> dx_, dh_, du_, dq_, dk_, dv_, dattn_, dact_, dgate_, dup_;
  std::vector<Real> dprobs_;
};

// Single-sequence decoding with a key/value cache. Holds a reference to
// `params`, which must outlive the decoder and stay unchanged.
template <typename Real>
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const Parameters<Real>& params);

  // Feeds one token at position() and returns next-token logits. Throws
  // InvalidArgument once the context window is full.
  std::span<const Real> step(TokenId token);
  int position() const { return position_; }

 private:
  const Parameters<Real>& params_;
  ParameterLayout layout_;
  int position_ = 0;
  std::vector<std::vector<Real>> k_cache_, v_cache_;
  std::vector<Real> x_, u_, q_, k_, v_, attn_, h_, gate_, up_, scores_, logits_;
};

// Rotates consecutive pairs (2i, 2i+1) of a head vector at `position` by
// position * theta^(-2i/head_dim). Exposed for property tests.
template <typename Real>
void apply_rotary(std::span<Real> head, int position, double theta);

// y = x / sqrt(mean(x^2) + eps) * scale.
template <typename Real>
void rms_norm(std::span<const Real> x, std::span<const Real> scale, double eps,
              std::span<Real> y);

}  // namespace dated::lm
