#include "dated/lm/config.hpp"

#include <cmath>

#include "dated/common/error.hpp"

namespace dated::lm {

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string("invalid model config: ") + what);
  };
  require(sequence_length > 0, "sequence_length must be positive");
  require(n_layers >= 0, "n_layers must be non-negative");
  require(d_model > 0, "d_model must be positive");
  require(ffn_hidden > 0, "ffn_hidden must be positive");
  require(n_heads > 0, "n_heads must be positive");
  require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
  require(head_dim() % 2 == 0, "head dimension must be even for rotary encoding");
  require(vocab_size >= 2, "vocab_size must be at least 2");
  require(rope_theta > 0, "rope_theta must be positive");
  require(norm_eps >= 0, "norm_eps must be non-negative");
}

Json ModelConfig::to_json() const {
  return Json{{"sequence_length", sequence_length},
              {"n_layers", n_layers},
              {"d_model", d_model},
              {"ffn_hidden", ffn_hidden},
              {"n_heads", n_heads},
              {"vocab_size", vocab_size},
              {"rope_theta", rope_theta},
              {"norm_eps", norm_eps}};
}

ModelConfig ModelConfig::from_json(const Json& j) {
  ModelConfig c;
  try {
    c.sequence_length = j.at("sequence_length").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.ffn_hidden = j.at("ffn_hidden").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.rope_theta = j.value("rope_theta", 10000.0);
    c.norm_eps = j.value("norm_eps", 1e-5);
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

ParamCount param_count(const ModelConfig& c) {
  const int64_t d = c.d_model, f = c.ffn_hidden, v = c.vocab_size;
  ParamCount p;
  p.embedding = 2 * v * d;
  p.non_embedding = c.n_layers * (4 * d * d + 3 * d * f + 2 * d) + d;
  p.total = p.embedding + p.non_embedding;
  return p;
}

double billions_truncated(int64_t count, double step) {
  const double units = static_cast<double>(count) / 1e9 / step;
  return std::floor(units + 1e-9) * step;
}

}  // namespace dated::lm
