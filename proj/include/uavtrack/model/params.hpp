#pragma once

// Named parameter tensors of the policy. A Params object doubles as its own
// gradient container (same layout, zero-filled).

#include <string>
#include <vector>

#include "uavtrack/common.hpp"
#include "uavtrack/model/config.hpp"
#include "uavtrack/model/layers.hpp"

namespace uavtrack::model {

/// Tensor indices into Params::tensors, derived from a ModelConfig.
struct Layout {
  struct Block {
    std::size_t ln1_g, ln1_b, wq, wk, wv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  std::size_t patch_w, patch_b, compress, pos, tok_emb, text_pos;
  std::vector<Block> blocks;
  std::size_t lnf_g, lnf_b;
  std::size_t g_query, g_wq, g_wk, g_wv, g_w1, g_b1, g_w2, g_b2;
  std::size_t a_query, a_wk, a_wv;  // empty when the expert mean-pools
  std::size_t t_w, t_b, a_w1, a_b1, a_w2, a_b2, a_w3, a_b3;

  struct Entry {
    std::string name;
    int rows, cols;
  };
  std::vector<Entry> entries;

  explicit Layout(const ModelConfig& c) {
    const int d = c.d_model;
    auto add = [&](const std::string& name, int r, int k) {
      entries.push_back({name, r, k});
      return entries.size() - 1;
    };
    patch_w = add("visual.patch_w", c.patch_dim(), d);
    patch_b = add("visual.patch_b", 1, d);
    compress = add("visual.compress", c.n_hist(), c.n_cur());
    pos = add("visual.pos", c.n_visual(), d);
    tok_emb = add("text.embed", c.vocab_size, d);
    text_pos = add("text.pos", c.text_len, d);
    for (int l = 0; l < c.layers; ++l) {
      const std::string p = "enc." + std::to_string(l) + ".";
      Block b{};
      b.ln1_g = add(p + "ln1_g", 1, d);
      b.ln1_b = add(p + "ln1_b", 1, d);
      b.wq = add(p + "wq", d, d);
      b.wk = add(p + "wk", d, d);
      b.wv = add(p + "wv", d, d);
      b.wo = add(p + "wo", d, d);
      b.bo = add(p + "bo", 1, d);
      b.ln2_g = add(p + "ln2_g", 1, d);
      b.ln2_b = add(p + "ln2_b", 1, d);
      b.w1 = add(p + "w1", d, d * c.mlp_ratio);
      b.b1 = add(p + "b1", 1, d * c.mlp_ratio);
      b.w2 = add(p + "w2", d * c.mlp_ratio, d);
      b.b2 = add(p + "b2", 1, d);
      blocks.push_back(b);
    }
    lnf_g = add("enc.lnf_g", 1, d);
    lnf_b = add("enc.lnf_b", 1, d);
    g_query = add("ground.query", 1, d);
    g_wq = add("ground.wq", d, d);
    g_wk = add("ground.wk", d, d);
    g_wv = add("ground.wv", d, d);
    g_w1 = add("ground.w1", d, c.grounding_hidden);
    g_b1 = add("ground.b1", 1, c.grounding_hidden);
    g_w2 = add("ground.w2", c.grounding_hidden, 4);
    g_b2 = add("ground.b2", 1, 4);
    const int nq = c.action_queries;
    a_query = add("action.query", nq, nq > 0 ? d : 0);
    a_wk = add("action.wk", nq > 0 ? d : 0, nq > 0 ? d : 0);
    a_wv = add("action.wv", nq > 0 ? d : 0, nq > 0 ? d : 0);
    t_w = add("action.time_w", c.time_embed_dim, c.time_embed_dim);
    t_b = add("action.time_b", 1, c.time_embed_dim);
    a_w1 = add("action.w1", c.action_input(), c.action_hidden);
    a_b1 = add("action.b1", 1, c.action_hidden);
    a_w2 = add("action.w2", c.action_hidden, c.action_hidden);
    a_b2 = add("action.b2", 1, c.action_hidden);
    a_w3 = add("action.w3", c.action_hidden, c.action_size());
    a_b3 = add("action.b3", 1, c.action_size());
  }

  /// Parameter group of a tensor: the prefix before the first dot.
  static std::string group_of(const std::string& name) { return name.substr(0, name.find('.')); }
};

template <class S>
struct Params {
  std::vector<std::string> names;
  std::vector<Mat<S>> tensors;

  Mat<S>& operator[](std::size_t i) { return tensors[i]; }
  const Mat<S>& operator[](std::size_t i) const { return tensors[i]; }
  std::size_t size() const { return tensors.size(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
    return n;
  }

  static Params zeros(const Layout& layout) {
    Params p;
    for (const auto& e : layout.entries) {
      p.names.push_back(e.name);
      p.tensors.push_back(Mat<S>::Zero(e.rows, e.cols));
    }
    return p;
  }

  Params zeros_like() const {
    Params p;
    p.names = names;
    for (const auto& t : tensors) p.tensors.push_back(Mat<S>::Zero(t.rows(), t.cols()));
    return p;
  }

  void set_zero() {
    for (auto& t : tensors) t.setZero();
  }

  template <class T>
  Params<T> cast() const {
    Params<T> p;
    p.names = names;
    for (const auto& t : tensors) p.tensors.push_back(t.template cast<T>());
    return p;
  }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw Error("no parameter named '" + name + "'");
  }

  bool all_finite() const {
    for (const auto& t : tensors)
      if (!t.allFinite()) return false;
    return true;
  }

  bool operator==(const Params& o) const {
    if (names != o.names || tensors.size() != o.tensors.size()) return false;
    for (std::size_t i = 0; i < tensors.size(); ++i)
      if (tensors[i].rows() != o.tensors[i].rows() || tensors[i].cols() != o.tensors[i].cols() ||
          tensors[i] != o.tensors[i])
        return false;
    return true;
  }
};

/// Initialization: Xavier-uniform matrices, zero biases, unit LayerNorm
/// gains, all-zero visual positional embedding, N(0, query_init_std) for the
/// grounding and action queries.
template <class S>
Params<S> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Layout L(cfg);
  Params<S> p = Params<S>::zeros(L);
  Rng rng(seed);
  auto xavier = [&](std::size_t i) {
    auto& t = p[i];
    const double a = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<S>(rng.uniform(-a, a));
  };
  auto normal = [&](std::size_t i, double sd) {
    for (Eigen::Index k = 0; k < p[i].size(); ++k) p[i].data()[k] = static_cast<S>(rng.normal(0.0, sd));
  };
  xavier(L.patch_w);
  xavier(L.compress);
  normal(L.tok_emb, 0.5);
  normal(L.text_pos, 0.02);
  for (const auto& b : L.blocks) {
    p[b.ln1_g].setOnes();
    p[b.ln2_g].setOnes();
    for (auto i : {b.wq, b.wk, b.wv, b.wo, b.w1, b.w2}) xavier(i);
  }
  p[L.lnf_g].setOnes();
  normal(L.g_query, cfg.query_init_std);
  normal(L.a_query, cfg.query_init_std);
  for (auto i : {L.g_wq, L.g_wk, L.g_wv, L.g_w1, L.g_w2, L.a_wk, L.a_wv, L.t_w, L.a_w1, L.a_w2, L.a_w3}) xavier(i);
  return p;
}

}  // namespace uavtrack::model
