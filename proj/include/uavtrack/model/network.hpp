#pragma once

// Forward and backward passes of the policy: patch tokenizer with temporal
// compression, pre-norm transformer over [visual | text], a cross-attention
// grounding head and the flow-matching action MLP.

#include <algorithm>
#include <array>
#include <optional>
#include <type_traits>

#include "uavtrack/model/params.hpp"

namespace uavtrack::model {

/// One observation ready for the network.
struct ModelInput {
  std::vector<std::vector<float>> frames;  // history_frames + 1, oldest first, preproc^2 in [0,1]
  std::vector<int> tokens;                 // text_len ids, 0 = padding
  Eigen::Vector4d state = Eigen::Vector4d::Zero();  // normalized S_t
};

/// Supervised example in normalized units.
struct TrainExample {
  ModelInput input;
  Eigen::Vector4d pose = Eigen::Vector4d::Zero();
  Mat<double> chunk;  // chunk_len x 4
};

/// Flow-matching draws for one example: s ~ U(0,1), eps ~ N(0, I).
struct FlowDraws {
  std::vector<double> s;
  std::vector<Mat<double>> eps;

  static FlowDraws sample(const ModelConfig& cfg, int n, Rng& rng) {
    FlowDraws d;
    for (int i = 0; i < n; ++i) {
      d.s.push_back(rng.uniform01());
      Mat<double> e(cfg.chunk_len, cfg.action_dim);
      for (Eigen::Index k = 0; k < e.size(); ++k) e.data()[k] = rng.normal();
      d.eps.push_back(std::move(e));
    }
    return d;
  }
};

/// A_s = s A + (1 - s) eps and u = A - eps.
template <class T>
Mat<T> flow_interpolant(const Mat<T>& a, const Mat<T>& eps, T s) {
  return s * a + (T(1) - s) * eps;
}

struct ForwardOptions {
  bool positional = true;  // add the visual positional embedding
};

template <class S>
struct BlockCache {
  LayerNormCache<S> ln1, ln2;
  AttentionCache<S> attn;
  Mat<S> mlp_in, h1, g1;
};

template <class S>
struct EncoderCache {
  Mat<S> patches;    // (frames * n_cur) x patch_dim
  Mat<S> embedded;   // (frames * n_cur) x D
  std::vector<int> tokens;
  std::vector<std::uint8_t> mask;  // key validity per token
  std::vector<BlockCache<S>> blocks;
  LayerNormCache<S> lnf;
  Mat<S> hidden;
  int n_valid = 0;
};

namespace detail {

template <class S>
Mat<S> patchify(const ModelConfig& cfg, const std::vector<std::vector<float>>& frames) {
  const int P = cfg.patch, side = cfg.patches_per_side(), img = cfg.preproc_size;
  const int nf = static_cast<int>(frames.size());
  Mat<S> out(nf * cfg.n_cur(), cfg.patch_dim());
  for (int f = 0; f < nf; ++f) {
    const auto& px = frames[static_cast<std::size_t>(f)];
    if (static_cast<int>(px.size()) != img * img)
      throw Error("model input: frame has " + std::to_string(px.size()) + " pixels, expected " +
                  std::to_string(img * img));
    for (int pr = 0; pr < side; ++pr)
      for (int pc = 0; pc < side; ++pc) {
        const int row = f * cfg.n_cur() + pr * side + pc;
        for (int y = 0; y < P; ++y)
          for (int x = 0; x < P; ++x)
            out(row, y * P + x) = static_cast<S>(px[static_cast<std::size_t>((pr * P + y) * img + pc * P + x)]);
      }
  }
  return out;
}

}  // namespace detail

/// Visual token sequence [hist(t-3), hist(t-2), hist(t-1), current] plus the
/// positional embedding.
template <class S>
Mat<S> build_visual_sequence(const Params<S>& p, const ModelConfig& cfg, const std::vector<std::vector<float>>& frames,
                             EncoderCache<S>* cache = nullptr, ForwardOptions opt = {}) {
  const Layout L(cfg);
  if (static_cast<int>(frames.size()) != cfg.history_frames + 1)
    throw Error("model input: expected " + std::to_string(cfg.history_frames + 1) + " frames, got " +
                std::to_string(frames.size()));
  Mat<S> patches = detail::patchify<S>(cfg, frames);
  Mat<S> emb = linear(patches, p[L.patch_w], p[L.patch_b]);
  const int nc = cfg.n_cur(), nh = cfg.n_hist(), H = cfg.history_frames;
  Mat<S> v(cfg.n_visual(), cfg.d_model);
  for (int f = 0; f < H; ++f) v.middleRows(f * nh, nh) = p[L.compress] * emb.middleRows(f * nc, nc);
  v.bottomRows(nc) = emb.middleRows(H * nc, nc);
  if (opt.positional) v += p[L.pos];
  if (cache) {
    cache->patches = std::move(patches);
    cache->embedded = std::move(emb);
  }
  return v;
}

/// Final hidden states (n_tokens x D).
template <class S>
Mat<S> encode(const Params<S>& p, const ModelConfig& cfg, const ModelInput& in, EncoderCache<S>& c,
              ForwardOptions opt = {}) {
  const Layout L(cfg);
  if (static_cast<int>(in.tokens.size()) != cfg.text_len)
    throw Error("model input: expected " + std::to_string(cfg.text_len) + " text tokens");
  const int nv = cfg.n_visual(), N = cfg.n_tokens();
  Mat<S> x(N, cfg.d_model);
  x.topRows(nv) = build_visual_sequence(p, cfg, in.frames, &c, opt);
  c.tokens = in.tokens;
  c.mask.assign(static_cast<std::size_t>(N), 1);
  for (int j = 0; j < cfg.text_len; ++j) {
    const int id = in.tokens[static_cast<std::size_t>(j)];
    if (id < 0 || id >= cfg.vocab_size) throw Error("model input: token id out of range");
    x.row(nv + j) = p[L.tok_emb].row(id) + p[L.text_pos].row(j);
    if (id == 0) c.mask[static_cast<std::size_t>(nv + j)] = 0;
  }
  c.n_valid = static_cast<int>(std::count(c.mask.begin(), c.mask.end(), std::uint8_t{1}));
  c.blocks.resize(L.blocks.size());
  for (std::size_t l = 0; l < L.blocks.size(); ++l) {
    const auto& b = L.blocks[l];
    auto& bc = c.blocks[l];
    const Mat<S> a_in = layer_norm(x, p[b.ln1_g], p[b.ln1_b], &bc.ln1);
    x += self_attention(a_in, p[b.wq], p[b.wk], p[b.wv], p[b.wo], p[b.bo], cfg.heads, c.mask, bc.attn);
    bc.mlp_in = layer_norm(x, p[b.ln2_g], p[b.ln2_b], &bc.ln2);
    bc.h1 = linear(bc.mlp_in, p[b.w1], p[b.b1]);
    bc.g1 = gelu(bc.h1);
    x += linear(bc.g1, p[b.w2], p[b.b2]);
  }
  c.hidden = layer_norm(x, p[L.lnf_g], p[L.lnf_b], &c.lnf);
  return c.hidden;
}

template <class S>
void encode_backward(const Params<S>& p, const ModelConfig& cfg, const EncoderCache<S>& c, Mat<S> dh,
                     Params<S>& g) {
  const Layout L(cfg);
  Mat<S> dx = layer_norm_backward(c.lnf, p[L.lnf_g], dh, g[L.lnf_g], g[L.lnf_b]);
  for (std::size_t li = L.blocks.size(); li-- > 0;) {
    const auto& b = L.blocks[li];
    const auto& bc = c.blocks[li];
    const Mat<S> dg1 = linear_backward(bc.g1, p[b.w2], dx, g[b.w2], g[b.b2]);
    const Mat<S> dh1 = gelu_backward(bc.h1, dg1);
    const Mat<S> dmlp_in = linear_backward(bc.mlp_in, p[b.w1], dh1, g[b.w1], g[b.b1]);
    dx += layer_norm_backward(bc.ln2, p[b.ln2_g], dmlp_in, g[b.ln2_g], g[b.ln2_b]);
    const Mat<S> da_in = self_attention_backward(bc.attn, p[b.wq], p[b.wk], p[b.wv], p[b.wo], cfg.heads, dx,
                                                 g[b.wq], g[b.wk], g[b.wv], g[b.wo], g[b.bo]);
    dx += layer_norm_backward(bc.ln1, p[b.ln1_g], da_in, g[b.ln1_g], g[b.ln1_b]);
  }
  const int nv = cfg.n_visual(), nc = cfg.n_cur(), nh = cfg.n_hist(), H = cfg.history_frames;
  for (int j = 0; j < cfg.text_len; ++j) {
    g[L.text_pos].row(j) += dx.row(nv + j);
    g[L.tok_emb].row(c.tokens[static_cast<std::size_t>(j)]) += dx.row(nv + j);
  }
  const Mat<S> dv = dx.topRows(nv);
  g[L.pos] += dv;
  Mat<S> demb(c.embedded.rows(), c.embedded.cols());
  for (int f = 0; f < H; ++f) {
    const Mat<S> dhist = dv.middleRows(f * nh, nh);
    g[L.compress].noalias() += dhist * c.embedded.middleRows(f * nc, nc).transpose();
    demb.middleRows(f * nc, nc) = p[L.compress].transpose() * dhist;
  }
  demb.bottomRows(nc) = dv.bottomRows(nc);
  linear_backward(c.patches, p[L.patch_w], demb, g[L.patch_w], g[L.patch_b]);
}

// ---------------------------------------------------------------------------
// Grounding head: learnable query cross-attends over valid hidden states,
// then a two-layer GELU MLP maps the pooled vector to 4 values.

template <class S>
struct GroundingCache {
  Mat<S> q, k, v, probs, ctx, h, g;
};

template <class S>
RowVec<S> grounding_head(const Params<S>& p, const ModelConfig& cfg, const Mat<S>& hidden,
                         const std::vector<std::uint8_t>& mask, GroundingCache<S>& c) {
  const Layout L(cfg);
  c.q = p[L.g_query] * p[L.g_wq];
  c.k = hidden * p[L.g_wk];
  c.v = hidden * p[L.g_wv];
  c.probs = c.q * c.k.transpose() / std::sqrt(static_cast<S>(cfg.d_model));
  masked_softmax_rows(c.probs, mask);
  c.ctx = c.probs * c.v;
  c.h = linear(c.ctx, p[L.g_w1], p[L.g_b1]);
  c.g = gelu(c.h);
  return linear(c.g, p[L.g_w2], p[L.g_b2]).row(0);
}

template <class S>
Mat<S> grounding_backward(const Params<S>& p, const ModelConfig& cfg, const Mat<S>& hidden,
                          const GroundingCache<S>& c, const Mat<S>& dout, Params<S>& g) {
  const Layout L(cfg);
  const Mat<S> dg = linear_backward(c.g, p[L.g_w2], dout, g[L.g_w2], g[L.g_b2]);
  const Mat<S> dh = gelu_backward(c.h, dg);
  const Mat<S> dctx = linear_backward(c.ctx, p[L.g_w1], dh, g[L.g_w1], g[L.g_b1]);
  const Mat<S> dprobs = dctx * c.v.transpose();
  const Mat<S> dvv = c.probs.transpose() * dctx;
  const Mat<S> ds = softmax_backward(c.probs, dprobs) / std::sqrt(static_cast<S>(cfg.d_model));
  const Mat<S> dq = ds * c.k;
  const Mat<S> dk = ds.transpose() * c.q;
  Mat<S> dhidden = matmul_backward(hidden, p[L.g_wk], dk, g[L.g_wk]);
  dhidden += matmul_backward(hidden, p[L.g_wv], dvv, g[L.g_wv]);
  const Mat<S> dquery = matmul_backward(p[L.g_query], p[L.g_wq], dq, g[L.g_wq]);
  g[L.g_query] += dquery;
  return dhidden;
}

// ---------------------------------------------------------------------------
// Flow-matching action expert: [pooled context | S_t | A_s | time embed]
// through a 3-layer GELU MLP, one row per flow draw. The MLP estimates the
// clean chunk D and the velocity is (D - A_s) / max(1 - s, floor). The
// context is either the mean of the valid hidden states or, with
// action_queries > 0, the concatenated outputs of that many learned queries
// attending over them.

template <class S>
RowVec<S> mean_pool(const Mat<S>& hidden, const std::vector<std::uint8_t>& mask) {
  RowVec<S> m = RowVec<S>::Zero(hidden.cols());
  int n = 0;
  for (Eigen::Index i = 0; i < hidden.rows(); ++i)
    if (mask[static_cast<std::size_t>(i)]) {
      m += hidden.row(i);
      ++n;
    }
  return m / static_cast<S>(n);
}

template <class S>
struct ContextCache {
  Mat<S> k, v, probs, ctx;
  int n_valid = 0;
};

template <class S>
RowVec<S> action_context(const Params<S>& p, const ModelConfig& cfg, const Mat<S>& hidden,
                         const std::vector<std::uint8_t>& mask, ContextCache<S>& c) {
  c.n_valid = static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  if (cfg.action_queries == 0) return mean_pool(hidden, mask);
  const Layout L(cfg);
  c.k = hidden * p[L.a_wk];
  c.v = hidden * p[L.a_wv];
  c.probs = p[L.a_query] * c.k.transpose() / std::sqrt(static_cast<S>(cfg.d_model));
  masked_softmax_rows(c.probs, mask);
  c.ctx = c.probs * c.v;
  return Eigen::Map<const RowVec<S>>(c.ctx.data(), c.ctx.size());  // row-major flatten
}

/// Accumulates parameter gradients and returns d(hidden).
template <class S>
Mat<S> action_context_backward(const Params<S>& p, const ModelConfig& cfg, const Mat<S>& hidden,
                               const std::vector<std::uint8_t>& mask, const ContextCache<S>& c,
                               const RowVec<S>& dctx_flat, Params<S>& g) {
  Mat<S> dhidden = Mat<S>::Zero(hidden.rows(), hidden.cols());
  if (cfg.action_queries == 0) {
    const S inv_n = S(1) / static_cast<S>(c.n_valid);
    for (Eigen::Index i = 0; i < hidden.rows(); ++i)
      if (mask[static_cast<std::size_t>(i)]) dhidden.row(i) = dctx_flat * inv_n;
    return dhidden;
  }
  const Layout L(cfg);
  const Mat<S> dctx = Eigen::Map<const Mat<S>>(dctx_flat.data(), cfg.action_queries, cfg.d_model);
  const Mat<S> dprobs = dctx * c.v.transpose();
  const Mat<S> dv = c.probs.transpose() * dctx;
  const Mat<S> ds = softmax_backward(c.probs, dprobs) / std::sqrt(static_cast<S>(cfg.d_model));
  g[L.a_query] += ds * c.k;
  const Mat<S> dk = ds.transpose() * p[L.a_query];
  dhidden += matmul_backward(hidden, p[L.a_wk], dk, g[L.a_wk]);
  dhidden += matmul_backward(hidden, p[L.a_wv], dv, g[L.a_wv]);
  return dhidden;
}

template <class S>
struct ActionCache {
  Mat<S> phi, cond, h1, g1, h2, g2;
  std::vector<S> gap;  // max(1 - s, flow_gap_floor) per draw
};

/// Velocity for m flow states at once. `a_s` is m x (chunk_len * 4),
/// flattened row-major.
template <class S>
Mat<S> flow_velocity(const Params<S>& p, const ModelConfig& cfg, const RowVec<S>& pooled,
                     const Eigen::Vector4d& state, const Mat<S>& a_s, const std::vector<S>& s, ActionCache<S>& c) {
  const Layout L(cfg);
  const auto m = static_cast<Eigen::Index>(s.size());
  const int D = cfg.action_context(), T = cfg.time_embed_dim, K = cfg.action_size();
  if (pooled.size() != D) throw Error("flow_velocity: context size mismatch");
  if (a_s.rows() != m || a_s.cols() != K) throw Error("flow_velocity: action state shape mismatch");
  c.phi.resize(m, T);
  for (Eigen::Index i = 0; i < m; ++i) c.phi.row(i) = sinusoidal<S>(s[static_cast<std::size_t>(i)], T);
  const Mat<S> temb = linear(c.phi, p[L.t_w], p[L.t_b]);
  c.cond.resize(m, cfg.action_input());
  for (Eigen::Index i = 0; i < m; ++i) {
    c.cond.row(i).head(D) = pooled;
    for (int j = 0; j < 4; ++j) c.cond(i, D + j) = static_cast<S>(state[j]);
  }
  c.cond.middleCols(D + 4, K) = a_s;
  c.cond.rightCols(T) = temb;
  c.h1 = linear(c.cond, p[L.a_w1], p[L.a_b1]);
  c.g1 = gelu(c.h1);
  c.h2 = linear(c.g1, p[L.a_w2], p[L.a_b2]);
  c.g2 = gelu(c.h2);
  // The MLP predicts the clean chunk; the velocity toward it from A_s
  // follows from the linear interpolant.
  Mat<S> v = linear(c.g2, p[L.a_w3], p[L.a_b3]) - a_s;
  c.gap.resize(s.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    c.gap[ii] = std::max(S(1) - s[ii], static_cast<S>(cfg.flow_gap_floor));
    v.row(i) /= c.gap[ii];
  }
  return v;
}

/// Returns d(loss)/d(pooled).
template <class S>
RowVec<S> flow_velocity_backward(const Params<S>& p, const ModelConfig& cfg, const ActionCache<S>& c,
                                 const Mat<S>& dv, Params<S>& g) {
  const Layout L(cfg);
  const int D = cfg.action_context(), T = cfg.time_embed_dim;
  Mat<S> dclean = dv;
  for (Eigen::Index i = 0; i < dclean.rows(); ++i) dclean.row(i) /= c.gap[static_cast<std::size_t>(i)];
  const Mat<S> dg2 = linear_backward(c.g2, p[L.a_w3], dclean, g[L.a_w3], g[L.a_b3]);
  const Mat<S> dh2 = gelu_backward(c.h2, dg2);
  const Mat<S> dg1 = linear_backward(c.g1, p[L.a_w2], dh2, g[L.a_w2], g[L.a_b2]);
  const Mat<S> dh1 = gelu_backward(c.h1, dg1);
  const Mat<S> dcond = linear_backward(c.cond, p[L.a_w1], dh1, g[L.a_w1], g[L.a_b1]);
  const Mat<S> dtemb = dcond.rightCols(T);
  linear_backward(c.phi, p[L.t_w], dtemb, g[L.t_w], g[L.t_b]);
  return dcond.leftCols(D).colwise().sum();
}

// ---------------------------------------------------------------------------
// Joint loss.

struct LossTerms {
  double total = 0.0;
  double pos = 0.0;
  double action = 0.0;
};

/// L = lambda_pos * MSE(pose) + lambda_action * MSE(flow velocity vs A - eps).
/// Gradients are accumulated into `grad` when given.
template <class S>
LossTerms loss_and_grad(const Params<S>& p, const ModelConfig& cfg, const std::vector<TrainExample>& batch,
                        const std::vector<FlowDraws>& draws, std::type_identity_t<Params<S>>* grad) {
  if (batch.empty()) throw Error("loss: empty batch");
  if (draws.size() != batch.size()) throw Error("loss: one set of flow draws per example required");
  const auto B = static_cast<double>(batch.size());
  const int K = cfg.action_size();
  std::size_t total_draws = 0;
  for (const auto& d : draws) total_draws += d.s.size();
  if (total_draws == 0) throw Error("loss: no flow draws");
  const S pos_scale = static_cast<S>(2.0 * cfg.lambda_pos / (B * 4.0));
  const S act_scale = static_cast<S>(2.0 * cfg.lambda_action / (static_cast<double>(total_draws) * K));

  double sse_pos = 0.0, sse_act = 0.0;
  EncoderCache<S> ec;
  GroundingCache<S> gc;
  ContextCache<S> cc;
  ActionCache<S> ac;
  for (std::size_t bi = 0; bi < batch.size(); ++bi) {
    const TrainExample& ex = batch[bi];
    const FlowDraws& fd = draws[bi];
    const Mat<S>& hidden = encode(p, cfg, ex.input, ec);

    const RowVec<S> pose = grounding_head(p, cfg, hidden, ec.mask, gc);
    const RowVec<S> pose_err = pose - ex.pose.transpose().cast<S>();
    sse_pos += static_cast<double>(pose_err.squaredNorm());

    const auto m = static_cast<Eigen::Index>(fd.s.size());
    Mat<S> a_s(m, K), u(m, K);
    std::vector<S> s(fd.s.size());
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      const Mat<double> as = flow_interpolant(ex.chunk, fd.eps[ii], fd.s[ii]);
      const Mat<double> target = ex.chunk - fd.eps[ii];
      a_s.row(i) = Eigen::Map<const RowVec<double>>(as.data(), K).cast<S>();
      u.row(i) = Eigen::Map<const RowVec<double>>(target.data(), K).cast<S>();
      s[ii] = static_cast<S>(fd.s[ii]);
    }
    const RowVec<S> pooled = action_context(p, cfg, hidden, ec.mask, cc);
    const Mat<S> v = flow_velocity(p, cfg, pooled, ex.input.state, a_s, s, ac);
    const Mat<S> verr = v - u;
    sse_act += static_cast<double>(verr.squaredNorm());

    if (!grad) continue;
    Mat<S> dhidden = grounding_backward(p, cfg, hidden, gc, Mat<S>(pose_err * pos_scale), *grad);
    const RowVec<S> dpooled = flow_velocity_backward(p, cfg, ac, Mat<S>(verr * act_scale), *grad);
    dhidden += action_context_backward(p, cfg, hidden, ec.mask, cc, dpooled, *grad);
    encode_backward(p, cfg, ec, std::move(dhidden), *grad);
  }
  LossTerms t;
  t.pos = sse_pos / (B * 4.0);
  t.action = sse_act / (static_cast<double>(total_draws) * K);
  t.total = cfg.lambda_pos * t.pos + cfg.lambda_action * t.action;
  return t;
}

// ---------------------------------------------------------------------------
// Inference.

/// Grounding prediction in normalized units.
template <class S>
Eigen::Vector4d predict_pose(const Params<S>& p, const ModelConfig& cfg, const ModelInput& in) {
  EncoderCache<S> ec;
  GroundingCache<S> gc;
  const Mat<S>& hidden = encode(p, cfg, in, ec);
  return grounding_head(p, cfg, hidden, ec.mask, gc).transpose().template cast<double>();
}

/// Euler integration of dx/ds = field(x, s) from s = 0 to 1.
template <class T, class Field>
Mat<T> euler_integrate(Mat<T> x, int steps, Field&& field) {
  if (steps < 1) throw Error("euler_integrate: steps must be >= 1");
  const T h = T(1) / static_cast<T>(steps);
  for (int i = 0; i < steps; ++i) x += h * field(x, static_cast<T>(i) * h);
  return x;
}

/// Samples a chunk in normalized units starting from `eps` (chunk_len x 4).
/// Only the encoder and the action expert run; the grounding head is never
/// evaluated.
template <class S>
Mat<double> sample_chunk_normalized(const Params<S>& p, const ModelConfig& cfg, const ModelInput& in,
                                    const Mat<double>& eps, int euler_steps = -1) {
  if (euler_steps < 0) euler_steps = cfg.euler_steps;
  const int K = cfg.action_size();
  EncoderCache<S> ec;
  ContextCache<S> cc;
  ActionCache<S> ac;
  const Mat<S>& hidden = encode(p, cfg, in, ec);
  const RowVec<S> pooled = action_context(p, cfg, hidden, ec.mask, cc);
  Mat<S> x0(1, K);
  x0.row(0) = Eigen::Map<const RowVec<double>>(eps.data(), K).cast<S>();
  const Mat<S> x = euler_integrate<S>(x0, euler_steps, [&](const Mat<S>& xs, S s) {
    return flow_velocity(p, cfg, pooled, in.state, xs, std::vector<S>{s}, ac);
  });
  Mat<double> out(cfg.chunk_len, cfg.action_dim);
  Eigen::Map<RowVec<double>>(out.data(), K) = x.row(0).template cast<double>();
  return out;
}

}  // namespace uavtrack::model
