#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dated/lm/config.hpp"

namespace dated::lm {

enum class TensorKind { kEmbedding, kMatrix, kNormScale };

struct TensorInfo {
  std::string name;
  size_t offset = 0;
  size_t rows = 0;
  size_t cols = 0;
  TensorKind kind = TensorKind::kMatrix;

  size_t size() const { return rows * cols; }
};

// Offsets of one decoder block's tensors inside the flat parameter buffer.
// Linear weights are stored [in x out], row-major.
struct LayerOffsets {
  size_t attn_norm, wq, wk, wv, wo;
  size_t ffn_norm, w_gate, w_up, w_down;
};

class ParameterLayout {
 public:
  explicit ParameterLayout(const ModelConfig& config);

  size_t total() const { return total_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }

  size_t token_embedding = 0;  // [V x d]
  std::vector<LayerOffsets> layers;
  size_t final_norm = 0;  // [d]
  size_t output = 0;      // [d x V]

 private:
  size_t add(std::string name, size_t rows, size_t cols, TensorKind kind);

  std::vector<TensorInfo> tensors_;
  size_t total_ = 0;
};

// Flat parameter buffer for one model.
template <typename Real>
struct Parameters {
  ModelConfig config;
  std::vector<Real> values;

  Parameters() = default;
  explicit Parameters(const ModelConfig& cfg)
      : config(cfg), values(ParameterLayout(cfg).total(), Real(0)) {}

  ParameterLayout layout() const { return ParameterLayout(config); }
  std::span<Real> span() { return values; }
  std::span<const Real> span() const { return values; }

  template <typename Other>
  Parameters<Other> cast() const {
    Parameters<Other> out;
    out.config = config;
    out.values.assign(values.begin(), values.end());
    return out;
  }
};

// normal(0, 0.02) for embeddings and matrices, with the attention output
// and SwiGLU down projections scaled by 1/sqrt(2 * n_layers); norm scales 1.
Parameters<float> init_parameters(const ModelConfig& config, uint64_t seed);

template <typename Real>
bool all_finite(std::span<const Real> values);

}  // namespace dated::lm
