#pragma once

// Differentiable building blocks with hand-written backward rules. Every
// forward returns (or fills) the cache its backward needs; backward
// functions accumulate parameter gradients and return the input gradient.

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <vector>

namespace uavtrack::model {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// ---------------------------------------------------------------------------
// Linear: Y = X W + b

template <class S>
Mat<S> linear(const Mat<S>& x, const Mat<S>& w, const Mat<S>& b) {
  Mat<S> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

template <class S>
Mat<S> linear_backward(const Mat<S>& x, const Mat<S>& w, const Mat<S>& dy, Mat<S>& dw, Mat<S>& db) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  return dy * w.transpose();
}

template <class S>
Mat<S> matmul_backward(const Mat<S>& x, const Mat<S>& w, const Mat<S>& dy, Mat<S>& dw) {
  dw.noalias() += x.transpose() * dy;
  return dy * w.transpose();
}

// ---------------------------------------------------------------------------
// GELU, exact erf form.

template <class S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(0.70710678118654752440)));
}

template <class S>
S gelu_grad(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(0.70710678118654752440)));
  const S pdf = std::exp(S(-0.5) * x * x) * S(0.39894228040143267794);
  return cdf + x * pdf;
}

template <class S>
Mat<S> gelu(const Mat<S>& x) {
  return x.unaryExpr([](S v) { return gelu(v); });
}

template <class S>
Mat<S> gelu_backward(const Mat<S>& x, const Mat<S>& dy) {
  return dy.cwiseProduct(x.unaryExpr([](S v) { return gelu_grad(v); }));
}

// ---------------------------------------------------------------------------
// LayerNorm over the last axis.

template <class S>
struct LayerNormCache {
  Mat<S> xhat;
  std::vector<S> inv_std;
};

template <class S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, LayerNormCache<S>* cache, S eps = S(1e-5)) {
  const auto n = x.rows();
  const auto d = x.cols();
  Mat<S> xhat(n, d);
  if (cache) cache->inv_std.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const S mu = x.row(i).mean();
    const S var = (x.row(i).array() - mu).square().mean();
    const S inv = S(1) / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mu) * inv;
    if (cache) cache->inv_std[static_cast<std::size_t>(i)] = inv;
  }
  Mat<S> y = xhat.array().rowwise() * g.row(0).array();
  y.rowwise() += b.row(0);
  if (cache) cache->xhat = std::move(xhat);
  return y;
}

template <class S>
Mat<S> layer_norm_backward(const LayerNormCache<S>& c, const Mat<S>& g, const Mat<S>& dy, Mat<S>& dg, Mat<S>& db) {
  dg.row(0) += (dy.cwiseProduct(c.xhat)).colwise().sum();
  db.row(0) += dy.colwise().sum();
  const Mat<S> dxhat = dy.array().rowwise() * g.row(0).array();
  Mat<S> dx(dy.rows(), dy.cols());
  const S inv_d = S(1) / static_cast<S>(dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const S m1 = dxhat.row(i).sum() * inv_d;
    const S m2 = dxhat.row(i).dot(c.xhat.row(i)) * inv_d;
    dx.row(i) = (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2) * c.inv_std[static_cast<std::size_t>(i)];
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Row softmax restricted to keys with mask[j] != 0. Masked entries are 0.

template <class S>
void masked_softmax_rows(Mat<S>& scores, const std::vector<std::uint8_t>& key_mask) {
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    S mx = -std::numeric_limits<S>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j)
      if (key_mask[static_cast<std::size_t>(j)]) mx = std::max(mx, scores(i, j));
    S sum = 0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      const S e = key_mask[static_cast<std::size_t>(j)] ? std::exp(scores(i, j) - mx) : S(0);
      scores(i, j) = e;
      sum += e;
    }
    scores.row(i) /= sum;
  }
}

template <class S>
Mat<S> softmax_backward(const Mat<S>& a, const Mat<S>& da) {
  const Eigen::Matrix<S, Eigen::Dynamic, 1> dot = (a.cwiseProduct(da)).rowwise().sum();
  return a.cwiseProduct(da - dot.replicate(1, da.cols()));
}

// ---------------------------------------------------------------------------
// Multi-head self-attention with key masking; projections without bias
// except the output.

template <class S>
struct AttentionCache {
  Mat<S> x, q, k, v, o;
  std::vector<Mat<S>> probs;  // per head, N x N
};

template <class S>
Mat<S> self_attention(const Mat<S>& x, const Mat<S>& wq, const Mat<S>& wk, const Mat<S>& wv, const Mat<S>& wo,
                      const Mat<S>& bo, int heads, const std::vector<std::uint8_t>& key_mask,
                      AttentionCache<S>& c) {
  const auto d = x.cols();
  const auto dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  c.x = x;
  c.q = x * wq;
  c.k = x * wk;
  c.v = x * wv;
  c.o.resize(x.rows(), d);
  c.probs.resize(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Mat<S> s = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose() * scale;
    masked_softmax_rows(s, key_mask);
    c.o.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
    c.probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  return linear(c.o, wo, bo);
}

template <class S>
Mat<S> self_attention_backward(const AttentionCache<S>& c, const Mat<S>& wq, const Mat<S>& wk, const Mat<S>& wv,
                               const Mat<S>& wo, int heads, const Mat<S>& dy, Mat<S>& dwq, Mat<S>& dwk,
                               Mat<S>& dwv, Mat<S>& dwo, Mat<S>& dbo) {
  const auto d = c.x.cols();
  const auto dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  const Mat<S> d_o = linear_backward(c.o, wo, dy, dwo, dbo);
  Mat<S> dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Mat<S>& a = c.probs[static_cast<std::size_t>(h)];
    const Mat<S> doh = d_o.middleCols(h * dh, dh);
    dv.middleCols(h * dh, dh) = a.transpose() * doh;
    const Mat<S> da = doh * c.v.middleCols(h * dh, dh).transpose();
    const Mat<S> ds = softmax_backward(a, da) * scale;
    dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  Mat<S> dx = matmul_backward(c.x, wq, dq, dwq);
  dx += matmul_backward(c.x, wk, dk, dwk);
  dx += matmul_backward(c.x, wv, dv, dwv);
  return dx;
}

// ---------------------------------------------------------------------------
// Sinusoidal features of a scalar in [0, 1].

template <class S>
RowVec<S> sinusoidal(S s, int dim) {
  RowVec<S> e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const S freq = std::exp(std::log(S(100)) * static_cast<S>(i) / static_cast<S>(std::max(1, half - 1)));
    e[i] = std::sin(s * freq);
    e[half + i] = std::cos(s * freq);
  }
  return e;
}

}  // namespace uavtrack::model
