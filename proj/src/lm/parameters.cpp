#include "dated/lm/parameters.hpp"

#include <cmath>

#include "dated/common/random.hpp"

namespace dated::lm {

ParameterLayout::ParameterLayout(const ModelConfig& c) {
  const size_t d = c.d_model, f = c.ffn_hidden, v = c.vocab_size;
  token_embedding = add("token_embedding", v, d, TensorKind::kEmbedding);
  layers.reserve(c.n_layers);
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerOffsets o{};
    o.attn_norm = add(p + "attn_norm", 1, d, TensorKind::kNormScale);
    o.wq = add(p + "wq", d, d, TensorKind::kMatrix);
    o.wk = add(p + "wk", d, d, TensorKind::kMatrix);
    o.wv = add(p + "wv", d, d, TensorKind::kMatrix);
    o.wo = add(p + "wo", d, d, TensorKind::kMatrix);
    o.ffn_norm = add(p + "ffn_norm", 1, d, TensorKind::kNormScale);
    o.w_gate = add(p + "w_gate", d, f, TensorKind::kMatrix);
    o.w_up = add(p + "w_up", d, f, TensorKind::kMatrix);
    o.w_down = add(p + "w_down", f, d, TensorKind::kMatrix);
    layers.push_back(o);
  }
  final_norm = add("final_norm", 1, d, TensorKind::kNormScale);
  output = add("output", d, v, TensorKind::kEmbedding);
}

size_t ParameterLayout::add(std::string name, size_t rows, size_t cols,
                            TensorKind kind) {
  const size_t offset = total_;
  tensors_.push_back({std::move(name), offset, rows, cols, kind});
  total_ += rows * cols;
  return offset;
}

Parameters<float> init_parameters(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Parameters<float> p(config);
  const ParameterLayout layout(config);
  Rng rng(seed);
  const double residual_std =
      0.02 / std::sqrt(2.0 * std::max(1, config.n_layers));
  for (const auto& t : layout.tensors()) {
    auto out = std::span(p.values).subspan(t.offset, t.size());
    if (t.kind == TensorKind::kNormScale) {
      std::fill(out.begin(), out.end(), 1.0f);
      continue;
    }
    const bool residual = t.name.ends_with(".wo") || t.name.ends_with(".w_down");
    const double std = residual ? residual_std : 0.02;
    for (auto& x : out) x = static_cast<float>(rng.normal() * std);
  }
  return p;
}

template <typename Real>
bool all_finite(std::span<const Real> values) {
  for (Real v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);

}  // namespace dated::lm
