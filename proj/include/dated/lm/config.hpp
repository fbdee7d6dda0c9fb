#pragma once

#include <cstdint>

#include "dated/common/jsonl.hpp"

namespace dated::lm {

// Decoder-only transformer hyperparameters. Every size is configurable;
// reference_scale() is the 1.3B reference configuration.
struct ModelConfig {
  int sequence_length = 2048;
  int n_layers = 24;
  int d_model = 2048;
  int ffn_hidden = 5504;
  int n_heads = 16;
  int vocab_size = 32000;
  double rope_theta = 10000.0;
  double norm_eps = 1e-5;

  static ModelConfig reference_scale() { return ModelConfig{}; }

  int head_dim() const { return d_model / n_heads; }
  // Throws InvalidArgument describing the first broken constraint.
  void validate() const;

  Json to_json() const;
  static ModelConfig from_json(const Json& j);

  bool operator==(const ModelConfig&) const = default;
};

struct ParamCount {
  int64_t embedding = 0;
  int64_t non_embedding = 0;
  int64_t total = 0;
};

// Untied input embedding and output projection count as embedding
// parameters; everything else (attention, SwiGLU, norms) is non-embedding.
ParamCount param_count(const ModelConfig& config);

// Truncates to `step` (e.g. 0.01 for hundredths of a billion) the way model
// cards quote parameter counts: 1.3454B is reported as 1.34B.
double billions_truncated(int64_t count, double step = 0.01);

}  // namespace dated::lm
