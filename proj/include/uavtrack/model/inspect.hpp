#pragma once

// Finite-difference gradient checking and attention-map export.

#include <iomanip>
#include <ostream>

#include "uavtrack/model/network.hpp"

namespace uavtrack::model {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "tensor[index]"
  int checked = 0;
};

/// Relative error with a floor on the denominator so that coordinates whose
/// true gradient is ~0 are judged by absolute error.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

/// Compares `loss(p, &grad)` against central differences on up to
/// `per_tensor` random coordinates of every non-empty tensor.
template <class LossFn>
GradCheckResult grad_check(Params<double> p, LossFn&& loss, int per_tensor, std::uint64_t seed, double h = 1e-5) {
  Params<double> g = p.zeros_like();
  loss(p, &g);
  Rng rng(seed);
  GradCheckResult r;
  for (std::size_t ti = 0; ti < p.size(); ++ti) {
    auto& t = p[ti];
    if (t.size() == 0) continue;
    const auto n = static_cast<std::size_t>(t.size());
    const int count = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(per_tensor), n));
    for (int c = 0; c < count; ++c) {
      const std::size_t k = count == static_cast<int>(n) ? static_cast<std::size_t>(c) : rng.index(n);
      const double orig = t.data()[k];
      t.data()[k] = orig + h;
      const double lp = loss(p, nullptr);
      t.data()[k] = orig - h;
      const double lm = loss(p, nullptr);
      t.data()[k] = orig;
      const double num = (lp - lm) / (2.0 * h);
      const double e = relative_error(g[ti].data()[k], num);
      ++r.checked;
      if (e > r.max_rel_error) {
        r.max_rel_error = e;
        r.worst = p.names[ti] + "[" + std::to_string(k) + "]";
      }
    }
  }
  return r;
}

/// Random example with pixel values in [0, 1], two text tokens followed by
/// padding and standard-normal targets. Used by gradient checks and
/// benchmarks.
inline TrainExample synthetic_example(const ModelConfig& cfg, Rng& rng) {
  TrainExample ex;
  for (int f = 0; f <= cfg.history_frames; ++f) {
    std::vector<float> px(static_cast<std::size_t>(cfg.preproc_size * cfg.preproc_size));
    for (auto& v : px) v = static_cast<float>(rng.uniform01());
    ex.input.frames.push_back(std::move(px));
  }
  ex.input.tokens.assign(static_cast<std::size_t>(cfg.text_len), 0);
  for (int j = 0; j < std::min(2, cfg.text_len); ++j)
    ex.input.tokens[static_cast<std::size_t>(j)] = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(cfg.vocab_size - 1)));
  for (int i = 0; i < 4; ++i) {
    ex.input.state[i] = rng.normal();
    ex.pose[i] = rng.normal();
  }
  ex.chunk.resize(cfg.chunk_len, cfg.action_dim);
  for (Eigen::Index k = 0; k < ex.chunk.size(); ++k) ex.chunk.data()[k] = rng.normal();
  return ex;
}

/// Gradient check of the joint loss on a fixed batch and fixed flow draws.
inline GradCheckResult grad_check_model(const Params<double>& p, const ModelConfig& cfg,
                                        const std::vector<TrainExample>& batch, const std::vector<FlowDraws>& draws,
                                        int per_tensor, std::uint64_t seed, double h = 1e-5) {
  return grad_check(
      p, [&](const Params<double>& q, Params<double>* g) { return loss_and_grad(q, cfg, batch, draws, g).total; },
      per_tensor, seed, h);
}

// ---------------------------------------------------------------------------

struct AttentionMap {
  Mat<double> grid;  // text_len x n_cur, rows sum to 1
  int layers_used = 0;
  bool fewer_layers = false;  // model has fewer than 4 layers
};

/// Attention from text tokens to current-frame visual tokens, averaged over
/// heads and the last four layers, restricted to those columns and
/// renormalized.
template <class S>
AttentionMap export_attention(const Params<S>& p, const ModelConfig& cfg, const ModelInput& in) {
  EncoderCache<S> ec;
  encode(p, cfg, in, ec);
  AttentionMap m;
  const int L = cfg.layers;
  m.layers_used = std::min(4, L);
  m.fewer_layers = L < 4;
  const int nv = cfg.n_visual(), nc = cfg.n_cur();
  m.grid = Mat<double>::Zero(cfg.text_len, nc);
  for (int l = L - m.layers_used; l < L; ++l)
    for (const auto& a : ec.blocks[static_cast<std::size_t>(l)].attn.probs)
      m.grid += a.block(nv, nv - nc, cfg.text_len, nc).template cast<double>();
  for (Eigen::Index r = 0; r < m.grid.rows(); ++r) {
    const double s = m.grid.row(r).sum();
    if (s > 0) m.grid.row(r) /= s;
    else m.grid.row(r).setConstant(1.0 / nc);
  }
  return m;
}

inline void write_csv(std::ostream& os, const Mat<double>& m) {
  os << std::setprecision(9);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(r, c);
    os << '\n';
  }
}

}  // namespace uavtrack::model
