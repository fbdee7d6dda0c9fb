#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dated/lm/parameters.hpp"

namespace dated::train {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;  // embeddings and matrices; never norm scales
  double grad_clip = 1.0;     // global L2 norm; 0 disables
};

struct OptimizerState {
  int64_t step = 0;
  std::vector<float> m;
  std::vector<float> v;
  bool operator==(const OptimizerState&) const = default;
};

class AdamW {
 public:
  AdamW(const lm::ParameterLayout& layout, AdamWConfig config = {});

  // Clips `grads` in place, applies one update and returns the global
  // gradient norm measured before clipping.
  double step(std::span<float> params, std::span<float> grads, double lr);

  const OptimizerState& state() const { return state_; }
  void set_state(OptimizerState state);
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  std::vector<uint8_t> decay_;  // per-element decay mask
  OptimizerState state_;
};

double global_norm(std::span<const float> values);

}  // namespace dated::train
