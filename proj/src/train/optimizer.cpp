#include "dated/train/optimizer.hpp"

#include <cmath>

#include "dated/common/error.hpp"

namespace dated::train {

double global_norm(std::span<const float> values) {
  double sum = 0;
  for (float v : values) sum += static_cast<double>(v) * v;
  return std::sqrt(sum);
}

AdamW::AdamW(const lm::ParameterLayout& layout, AdamWConfig config)
    : config_(config), decay_(layout.total(), 0) {
  for (const auto& t : layout.tensors()) {
    if (t.kind == lm::TensorKind::kNormScale) continue;
    std::fill_n(decay_.begin() + t.offset, t.size(), uint8_t{1});
  }
  state_.m.assign(layout.total(), 0.0f);
  state_.v.assign(layout.total(), 0.0f);
}

void AdamW::set_state(OptimizerState state) {
  if (state.m.size() != decay_.size() || state.v.size() != decay_.size()) {
    throw InvalidArgument("optimizer state does not match the parameter count");
  }
  state_ = std::move(state);
}

double AdamW::step(std::span<float> params, std::span<float> grads, double lr) {
  if (params.size() != decay_.size() || grads.size() != decay_.size()) {
    throw InvalidArgument("parameter buffer does not match the optimizer");
  }
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) return norm;
  const float clip = config_.grad_clip > 0 && norm > config_.grad_clip
                         ? static_cast<float>(config_.grad_clip / norm)
                         : 1.0f;
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(config_.beta1, t)));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(config_.beta2, t)));
  const float eps = static_cast<float>(config_.eps);
  const float lr_f = static_cast<float>(lr);
  const float decay = static_cast<float>(lr * config_.weight_decay);
  float* m = state_.m.data();
  float* v = state_.v.data();
  for (size_t i = 0; i < params.size(); ++i) {
    const float g = grads[i] * clip;
    grads[i] = g;
    m[i] = b1 * m[i] + (1.0f - b1) * g;
    v[i] = b2 * v[i] + (1.0f - b2) * g * g;
    const float mhat = m[i] * c1;
    const float vhat = v[i] * c2;
    if (decay_[i]) params[i] -= decay * params[i];
    params[i] -= lr_f * mhat / (std::sqrt(vhat) + eps);
  }
  return norm;
}

}  // namespace dated::train
