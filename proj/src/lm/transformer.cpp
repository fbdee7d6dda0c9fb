#include "dated/lm/transformer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "dated/common/error.hpp"

namespace dated::lm {
namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMat<Real>>;
template <typename Real>
using StridedMap = Eigen::Map<RowMat<Real>, 0, Eigen::OuterStride<>>;
template <typename Real>
using ConstStridedMap = Eigen::Map<const RowMat<Real>, 0, Eigen::OuterStride<>>;

template <typename Real>
MatMap<Real> mat(std::vector<Real>& v, Eigen::Index rows, Eigen::Index cols) {
  return MatMap<Real>(v.data(), rows, cols);
}
template <typename Real>
ConstMatMap<Real> cmat(const std::vector<Real>& v, Eigen::Index rows,
                       Eigen::Index cols) {
  return ConstMatMap<Real>(v.data(), rows, cols);
}
template <typename Real>
ConstMatMap<Real> weight(const Parameters<Real>& p, size_t offset,
                         Eigen::Index rows, Eigen::Index cols) {
  return ConstMatMap<Real>(p.values.data() + offset, rows, cols);
}
template <typename Real>
MatMap<Real> grad(std::span<Real> g, size_t offset, Eigen::Index rows,
                  Eigen::Index cols) {
  return MatMap<Real>(g.data() + offset, rows, cols);
}

template <typename Real>
Real sigmoid(Real z) {
  return Real(1) / (Real(1) + std::exp(-z));
}

// Row-wise RMSNorm; stores the inverse RMS per row for the backward pass.
template <typename Real>
void rms_norm_rows(const Real* x, const Real* scale, size_t rows, size_t d,
                   double eps, Real* y, Real* inv_rms) {
  for (size_t n = 0; n < rows; ++n) {
    const Real* xr = x + n * d;
    Real ss = 0;
    for (size_t i = 0; i < d; ++i) ss += xr[i] * xr[i];
    const Real r = Real(1) / std::sqrt(ss / Real(d) + Real(eps));
    inv_rms[n] = r;
    Real* yr = y + n * d;
    for (size_t i = 0; i < d; ++i) yr[i] = xr[i] * r * scale[i];
  }
}

// dx += d(RMSNorm)/dx^T dy ; dscale += sum_rows dy * x * r.
template <typename Real>
void rms_norm_rows_backward(const Real* x, const Real* scale, const Real* inv_rms,
                            const Real* dy, size_t rows, size_t d, Real* dx,
                            Real* dscale) {
  for (size_t n = 0; n < rows; ++n) {
    const Real* xr = x + n * d;
    const Real* dyr = dy + n * d;
    const Real r = inv_rms[n];
    Real dot = 0;
    for (size_t i = 0; i < d; ++i) {
      const Real gdy = dyr[i] * scale[i];
      dot += gdy * xr[i];
      dscale[i] += dyr[i] * xr[i] * r;
    }
    const Real coeff = r * r * r * dot / Real(d);
    Real* dxr = dx + n * d;
    for (size_t i = 0; i < d; ++i) {
      dxr[i] += r * dyr[i] * scale[i] - coeff * xr[i];
    }
  }
}

template <typename Real>
void rope_tables(int seq, int head_dim, double theta, std::vector<Real>& cos_t,
                 std::vector<Real>& sin_t) {
  const int half = head_dim / 2;
  cos_t.resize(static_cast<size_t>(seq) * half);
  sin_t.resize(static_cast<size_t>(seq) * half);
  for (int t = 0; t < seq; ++t) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::pow(theta, -2.0 * i / head_dim);
      const double angle = t * freq;
      cos_t[t * half + i] = static_cast<Real>(std::cos(angle));
      sin_t[t * half + i] = static_cast<Real>(std::sin(angle));
    }
  }
}

// Rotates every head of every row. `inverse` applies the transpose rotation,
// which is what the backward pass needs.
template <typename Real>
void rope_rows(Real* data, size_t rows, int seq, int d, int head_dim,
               const std::vector<Real>& cos_t, const std::vector<Real>& sin_t,
               bool inverse) {
  const int half = head_dim / 2;
  for (size_t n = 0; n < rows; ++n) {
    const int t = static_cast<int>(n % seq);
    Real* row = data + n * d;
    for (int h0 = 0; h0 < d; h0 += head_dim) {
      for (int i = 0; i < half; ++i) {
        const Real c = cos_t[t * half + i];
        const Real s = inverse ? -sin_t[t * half + i] : sin_t[t * half + i];
        Real& a = row[h0 + 2 * i];
        Real& b = row[h0 + 2 * i + 1];
        const Real a0 = a, b0 = b;
        a = c * a0 - s * b0;
        b = s * a0 + c * b0;
      }
    }
  }
}

}  // namespace

void validate_batch(const ModelConfig& config, std::span<const TokenId> tokens,
                    int batch, int seq) {
  if (batch <= 0 || seq <= 0) {
    throw InvalidArgument("batch and sequence length must be positive");
  }
  if (seq > config.sequence_length) {
    throw InvalidArgument("sequence of " + std::to_string(seq) +
                          " tokens exceeds the context window of " +
                          std::to_string(config.sequence_length));
  }
  if (tokens.size() != static_cast<size_t>(batch) * seq) {
    throw InvalidArgument("token buffer size does not match batch shape");
  }
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= config.vocab_size) {
      throw InvalidArgument("token id " + std::to_string(tokens[i]) +
                            " at position " + std::to_string(i) +
                            " is outside the vocabulary");
    }
  }
}

template <typename Real>
void Workspace<Real>::reshape(const ModelConfig& config, int batch, int seq) {
  if (config == config_ && batch == batch_ && seq == seq_) return;
  config_ = config;
  batch_ = batch;
  seq_ = seq;
  const size_t n = static_cast<size_t>(batch) * seq;
  const size_t d = config.d_model, f = config.ffn_hidden, v = config.vocab_size;
  const size_t att = static_cast<size_t>(batch) * config.n_heads * seq * seq;
  layers_.assign(config.n_layers, LayerCache{});
  for (auto& l : layers_) {
    l.x_in.resize(n * d);
    l.inv_rms1.resize(n);
    l.u1.resize(n * d);
    l.q.resize(n * d);
    l.k.resize(n * d);
    l.v.resize(n * d);
    l.probs.resize(att);
    l.attn.resize(n * d);
    l.h.resize(n * d);
    l.inv_rms2.resize(n);
    l.u2.resize(n * d);
    l.gate.resize(n * f);
    l.up.resize(n * f);
    l.act.resize(n * f);
  }
  x_final_.resize(n * d);
  inv_rms_final_.resize(n);
  u_final_.resize(n * d);
  logits_.resize(n * v);
  rope_tables(seq, config.head_dim(), config.rope_theta, rope_cos_, rope_sin_);
  dx_.clear();  // backward scratch is sized lazily
}

template <typename Real>
std::span<const Real> Workspace<Real>::forward(const Parameters<Real>& p,
                                               std::span<const TokenId> tokens,
                                               int batch, int seq) {
  const ModelConfig& c = p.config;
  validate_batch(c, tokens, batch, seq);
  reshape(c, batch, seq);
  tokens_.assign(tokens.begin(), tokens.end());

  const ParameterLayout layout(c);
  const Eigen::Index n = static_cast<Eigen::Index>(batch) * seq;
  const Eigen::Index d = c.d_model, f = c.ffn_hidden, v = c.vocab_size;
  const int heads = c.n_heads, hd = c.head_dim();
  const Real scale = Real(1) / std::sqrt(Real(hd));

  std::vector<Real> x(n * d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Real* e = p.values.data() + layout.token_embedding + tokens[r] * d;
    std::copy(e, e + d, x.data() + r * d);
  }

  for (int li = 0; li < c.n_layers; ++li) {
    const LayerOffsets& o = layout.layers[li];
    LayerCache& L = layers_[li];
    L.x_in = x;
    rms_norm_rows(L.x_in.data(), p.values.data() + o.attn_norm, n, d, c.norm_eps,
                  L.u1.data(), L.inv_rms1.data());
    auto u1 = cmat(L.u1, n, d);
    mat(L.q, n, d).noalias() = u1 * weight(p, o.wq, d, d);
    mat(L.k, n, d).noalias() = u1 * weight(p, o.wk, d, d);
    mat(L.v, n, d).noalias() = u1 * weight(p, o.wv, d, d);
    rope_rows(L.q.data(), n, seq, d, hd, rope_cos_, rope_sin_, false);
    rope_rows(L.k.data(), n, seq, d, hd, rope_cos_, rope_sin_, false);

    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const size_t base = static_cast<size_t>(b) * seq * d + h * hd;
        ConstStridedMap<Real> qh(L.q.data() + base, seq, hd, Eigen::OuterStride<>(d));
        ConstStridedMap<Real> kh(L.k.data() + base, seq, hd, Eigen::OuterStride<>(d));
        ConstStridedMap<Real> vh(L.v.data() + base, seq, hd, Eigen::OuterStride<>(d));
        Real* pr = L.probs.data() + (static_cast<size_t>(b) * heads + h) * seq * seq;
        MatMap<Real> P(pr, seq, seq);
        P.noalias() = (qh * kh.transpose()) * scale;
        for (int i = 0; i < seq; ++i) {
          Real* row = pr + static_cast<size_t>(i) * seq;
          Real mx = row[0];
          for (int j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
          Real sum = 0;
          for (int j = 0; j <= i; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
          }
          const Real inv = Real(1) / sum;
          for (int j = 0; j <= i; ++j) row[j] *= inv;
          for (int j = i + 1; j < seq; ++j) row[j] = 0;
        }
        StridedMap<Real> oh(L.attn.data() + base, seq, hd, Eigen::OuterStride<>(d));
        oh.noalias() = P * vh;
      }
    }

    auto hm = mat(L.h, n, d);
    hm = cmat(L.x_in, n, d);
    hm.noalias() += cmat(L.attn, n, d) * weight(p, o.wo, d, d);

    rms_norm_rows(L.h.data(), p.values.data() + o.ffn_norm, n, d, c.norm_eps,
                  L.u2.data(), L.inv_rms2.data());
    auto u2 = cmat(L.u2, n, d);
    mat(L.gate, n, f).noalias() = u2 * weight(p, o.w_gate, d, f);
    mat(L.up, n, f).noalias() = u2 * weight(p, o.w_up, d, f);
    for (size_t i = 0; i < L.act.size(); ++i) {
      const Real g = L.gate[i];
      L.act[i] = g * sigmoid(g) * L.up[i];
    }
    auto xm = mat(x, n, d);
    xm = hm;
    xm.noalias() += cmat(L.act, n, f) * weight(p, o.w_down, f, d);
  }

  x_final_ = x;
  rms_norm_rows(x_final_.data(), p.values.data() + layout.final_norm, n, d,
                c.norm_eps, u_final_.data(), inv_rms_final_.data());
  mat(logits_, n, v).noalias() = cmat(u_final_, n, d) * weight(p, layout.output, d, v);
  return logits_;
}

template <typename Real>
void Workspace<Real>::backward(const Parameters<Real>& p,
                               std::span<const Real> dlogits,
                               std::span<Real> grads) {
  const ModelConfig& c = p.config;
  if (batch_ == 0 || !(c == config_)) {
    throw InvalidArgument("backward() without a matching forward()");
  }
  const ParameterLayout layout(c);
  if (grads.size() != layout.total()) {
    throw InvalidArgument("gradient buffer has wrong size");
  }
  const int batch = batch_, seq = seq_;
  const Eigen::Index n = static_cast<Eigen::Index>(batch) * seq;
  const Eigen::Index d = c.d_model, f = c.ffn_hidden, v = c.vocab_size;
  const int heads = c.n_heads, hd = c.head_dim();
  const Real scale = Real(1) / std::sqrt(Real(hd));
  if (dlogits.size() != static_cast<size_t>(n * v)) {
    throw InvalidArgument("dlogits has wrong size");
  }

  dx_.assign(n * d, Real(0));
  dh_.resize(n * d);
  du_.resize(n * d);
  dq_.resize(n * d);
  dk_.resize(n * d);
  dv_.resize(n * d);
  dattn_.resize(n * d);
  dact_.resize(n * f);
  dgate_.resize(n * f);
  dup_.resize(n * f);
  dprobs_.resize(static_cast<size_t>(seq) * seq);

  ConstMatMap<Real> dlog(dlogits.data(), n, v);
  grad(grads, layout.output, d, v).noalias() += cmat(u_final_, n, d).transpose() * dlog;
  mat(du_, n, d).noalias() = dlog * weight(p, layout.output, d, v).transpose();
  rms_norm_rows_backward(x_final_.data(), p.values.data() + layout.final_norm,
                         inv_rms_final_.data(), du_.data(), n, d, dx_.data(),
                         grads.data() + layout.final_norm);

  for (int li = c.n_layers - 1; li >= 0; --li) {
    const LayerOffsets& o = layout.layers[li];
    const LayerCache& L = layers_[li];
    auto dx = mat(dx_, n, d);

    // SwiGLU block.
    grad(grads, o.w_down, f, d).noalias() += cmat(L.act, n, f).transpose() * dx;
    mat(dact_, n, f).noalias() = dx * weight(p, o.w_down, f, d).transpose();
    for (size_t i = 0; i < dact_.size(); ++i) {
      const Real g = L.gate[i];
      const Real s = sigmoid(g);
      const Real silu = g * s;
      dup_[i] = dact_[i] * silu;
      dgate_[i] = dact_[i] * L.up[i] * s * (Real(1) + g * (Real(1) - s));
    }
    auto u2 = cmat(L.u2, n, d);
    grad(grads, o.w_gate, d, f).noalias() += u2.transpose() * cmat(dgate_, n, f);
    grad(grads, o.w_up, d, f).noalias() += u2.transpose() * cmat(dup_, n, f);
    auto du = mat(du_, n, d);
    du.noalias() = cmat(dgate_, n, f) * weight(p, o.w_gate, d, f).transpose();
    du.noalias() += cmat(dup_, n, f) * weight(p, o.w_up, d, f).transpose();
    dh_ = dx_;
    rms_norm_rows_backward(L.h.data(), p.values.data() + o.ffn_norm,
                           L.inv_rms2.data(), du_.data(), n, d, dh_.data(),
                           grads.data() + o.ffn_norm);

    // Attention block.
    auto dh = cmat(dh_, n, d);
    grad(grads, o.wo, d, d).noalias() += cmat(L.attn, n, d).transpose() * dh;
    mat(dattn_, n, d).noalias() = dh * weight(p, o.wo, d, d).transpose();

    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const size_t base = static_cast<size_t>(b) * seq * d + h * hd;
        const Eigen::OuterStride<> stride(d);
        ConstStridedMap<Real> qh(L.q.data() + base, seq, hd, stride);
        ConstStridedMap<Real> kh(L.k.data() + base, seq, hd, stride);
        ConstStridedMap<Real> vh(L.v.data() + base, seq, hd, stride);
        ConstStridedMap<Real> doh(dattn_.data() + base, seq, hd, stride);
        StridedMap<Real> dqh(dq_.data() + base, seq, hd, stride);
        StridedMap<Real> dkh(dk_.data() + base, seq, hd, stride);
        StridedMap<Real> dvh(dv_.data() + base, seq, hd, stride);
        const Real* pr =
            L.probs.data() + (static_cast<size_t>(b) * heads + h) * seq * seq;
        ConstMatMap<Real> P(pr, seq, seq);
        MatMap<Real> dP(dprobs_.data(), seq, seq);
        dvh.noalias() = P.transpose() * doh;
        dP.noalias() = doh * vh.transpose();
        // Softmax backward, masked entries have P = 0 and stay 0.
        for (int i = 0; i < seq; ++i) {
          Real* dpr = dprobs_.data() + static_cast<size_t>(i) * seq;
          const Real* prow = pr + static_cast<size_t>(i) * seq;
          Real dot = 0;
          for (int j = 0; j <= i; ++j) dot += prow[j] * dpr[j];
          for (int j = 0; j <= i; ++j) dpr[j] = prow[j] * (dpr[j] - dot) * scale;
          for (int j = i + 1; j < seq; ++j) dpr[j] = 0;
        }
        dqh.noalias() = dP * kh;
        dkh.noalias() = dP.transpose() * qh;
      }
    }
    rope_rows(dq_.data(), n, seq, d, hd, rope_cos_, rope_sin_, true);
    rope_rows(dk_.data(), n, seq, d, hd, rope_cos_, rope_sin_, true);

    auto u1 = cmat(L.u1, n, d);
    grad(grads, o.wq, d, d).noalias() += u1.transpose() * cmat(dq_, n, d);
    grad(grads, o.wk, d, d).noalias() += u1.transpose() * cmat(dk_, n, d);
    grad(grads, o.wv, d, d).noalias() += u1.transpose() * cmat(dv_, n, d);
    du.noalias() = cmat(dq_, n, d) * weight(p, o.wq, d, d).transpose();
    du.noalias() += cmat(dk_, n, d) * weight(p, o.wk, d, d).transpose();
    du.noalias() += cmat(dv_, n, d) * weight(p, o.wv, d, d).transpose();
    dx_ = dh_;
    rms_norm_rows_backward(L.x_in.data(), p.values.data() + o.attn_norm,
                           L.inv_rms1.data(), du_.data(), n, d, dx_.data(),
                           grads.data() + o.attn_norm);
  }

  for (Eigen::Index r = 0; r < n; ++r) {
    Real* g = grads.data() + layout.token_embedding + tokens_[r] * d;
    const Real* src = dx_.data() + r * d;
    for (Eigen::Index i = 0; i < d; ++i) g[i] += src[i];
  }
}

template <typename Real>
IncrementalDecoder<Real>::IncrementalDecoder(const Parameters<Real>& params)
    : params_(params), layout_(params.config) {
  const ModelConfig& c = params.config;
  const size_t window = static_cast<size_t>(c.sequence_length) * c.d_model;
  k_cache_.assign(c.n_layers, std::vector<Real>(window));
  v_cache_.assign(c.n_layers, std::vector<Real>(window));
  x_.resize(c.d_model);
  u_.resize(c.d_model);
  q_.resize(c.d_model);
  k_.resize(c.d_model);
  v_.resize(c.d_model);
  attn_.resize(c.d_model);
  h_.resize(c.d_model);
  gate_.resize(c.ffn_hidden);
  up_.resize(c.ffn_hidden);
  scores_.resize(c.sequence_length);
  logits_.resize(c.vocab_size);
}

template <typename Real>
std::span<const Real> IncrementalDecoder<Real>::step(TokenId token) {
  const ModelConfig& c = params_.config;
  const Parameters<Real>& p = params_;
  if (position_ >= c.sequence_length) {
    throw InvalidArgument("context window of " +
                          std::to_string(c.sequence_length) + " tokens is full");
  }
  if (token < 0 || token >= c.vocab_size) {
    throw InvalidArgument("token id " + std::to_string(token) +
                          " is outside the vocabulary");
  }
  const Eigen::Index d = c.d_model, f = c.ffn_hidden, v = c.vocab_size;
  const int hd = c.head_dim();
  const Real scale = Real(1) / std::sqrt(Real(hd));
  const int pos = position_;
  using RowVec = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
  using VecMap = Eigen::Map<RowVec>;

  const Real* e = p.values.data() + layout_.token_embedding + token * d;
  std::copy(e, e + d, x_.begin());
  Real inv_rms;
  for (int li = 0; li < c.n_layers; ++li) {
    const LayerOffsets& o = layout_.layers[li];
    rms_norm_rows(x_.data(), p.values.data() + o.attn_norm, 1, d, c.norm_eps,
                  u_.data(), &inv_rms);
    VecMap u(u_.data(), d);
    VecMap(q_.data(), d).noalias() = u * weight(p, o.wq, d, d);
    VecMap(k_.data(), d).noalias() = u * weight(p, o.wk, d, d);
    VecMap(v_.data(), d).noalias() = u * weight(p, o.wv, d, d);
    for (Eigen::Index h0 = 0; h0 < d; h0 += hd) {
      apply_rotary<Real>(std::span(q_).subspan(h0, hd), pos, c.rope_theta);
      apply_rotary<Real>(std::span(k_).subspan(h0, hd), pos, c.rope_theta);
    }
    std::copy(k_.begin(), k_.end(), k_cache_[li].begin() + pos * d);
    std::copy(v_.begin(), v_.end(), v_cache_[li].begin() + pos * d);
    for (int h = 0; h < c.n_heads; ++h) {
      const Real* qh = q_.data() + h * hd;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (int j = 0; j <= pos; ++j) {
        const Real* kj = k_cache_[li].data() + j * d + h * hd;
        Real s = 0;
        for (int i = 0; i < hd; ++i) s += qh[i] * kj[i];
        scores_[j] = s * scale;
        mx = std::max(mx, scores_[j]);
      }
      Real sum = 0;
      for (int j = 0; j <= pos; ++j) {
        scores_[j] = std::exp(scores_[j] - mx);
        sum += scores_[j];
      }
      Real* out = attn_.data() + h * hd;
      std::fill(out, out + hd, Real(0));
      for (int j = 0; j <= pos; ++j) {
        const Real w = scores_[j] / sum;
        const Real* vj = v_cache_[li].data() + j * d + h * hd;
        for (int i = 0; i < hd; ++i) out[i] += w * vj[i];
      }
    }
    VecMap hv(h_.data(), d);
    hv = VecMap(x_.data(), d);
    hv.noalias() += VecMap(attn_.data(), d) * weight(p, o.wo, d, d);
    rms_norm_rows(h_.data(), p.values.data() + o.ffn_norm, 1, d, c.norm_eps,
                  u_.data(), &inv_rms);
    VecMap(gate_.data(), f).noalias() = u * weight(p, o.w_gate, d, f);
    VecMap(up_.data(), f).noalias() = u * weight(p, o.w_up, d, f);
    for (Eigen::Index i = 0; i < f; ++i) {
      gate_[i] = gate_[i] * sigmoid(gate_[i]) * up_[i];
    }
    VecMap xv(x_.data(), d);
    xv = hv;
    xv.noalias() += VecMap(gate_.data(), f) * weight(p, o.w_down, f, d);
  }
  rms_norm_rows(x_.data(), p.values.data() + layout_.final_norm, 1, d,
                c.norm_eps, u_.data(), &inv_rms);
  VecMap(logits_.data(), v).noalias() =
      VecMap(u_.data(), d) * weight(p, layout_.output, d, v);
  ++position_;
  return logits_;
}

template <typename Real>
void apply_rotary(std::span<Real> head, int position, double theta) {
  const size_t hd = head.size();
  for (size_t i = 0; i < hd / 2; ++i) {
    const double angle =
        position * std::pow(theta, -2.0 * static_cast<double>(i) / hd);
    const Real c = static_cast<Real>(std::cos(angle));
    const Real s = static_cast<Real>(std::sin(angle));
    const Real a = head[2 * i], b = head[2 * i + 1];
    head[2 * i] = c * a - s * b;
    head[2 * i + 1] = s * a + c * b;
  }
}

template <typename Real>
void rms_norm(std::span<const Real> x, std::span<const Real> scale, double eps,
              std::span<Real> y) {
  Real inv_rms;
  rms_norm_rows(x.data(), scale.data(), 1, x.size(), eps, y.data(), &inv_rms);
}

template class Workspace<float>;
template class Workspace<double>;
template class IncrementalDecoder<float>;
template class IncrementalDecoder<double>;
template void apply_rotary<float>(std::span<float>, int, double);
template void apply_rotary<double>(std::span<double>, int, double);
template void rms_norm<float>(std::span<const float>, std::span<const float>,
                              double, std::span<float>);
template void rms_norm<double>(std::span<const double>, std::span<const double>,
                               double, std::span<double>);

}  // namespace dated::lm
