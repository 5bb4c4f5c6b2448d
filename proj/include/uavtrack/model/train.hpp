#pragma once

// Optimizer, schedule, EMA and the training loop, plus conversion of
// recorded episodes into normalized training examples.

#include <functional>

#include "uavtrack/data.hpp"
#include "uavtrack/language.hpp"
#include "uavtrack/model/network.hpp"
#include "uavtrack/raster.hpp"

namespace uavtrack::model {

struct TrainConfig {
  double lr_peak = 1.2e-4;
  int warmup_steps = 200;
  int total_steps = 5000;
  double lr_floor = 1e-6;
  double clip_norm = 0.8;
  double ema_decay = 0.999;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  int batch_size = 8;
  int flow_draws = 4;  // flow samples per example per step
  std::uint64_t seed = 0;

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw Error("TrainConfig: " + what);
    };
    need(lr_peak > 0, "lr_peak must be > 0");
    need(lr_floor >= 0 && lr_floor <= lr_peak, "lr_floor must be in [0, lr_peak]");
    need(warmup_steps >= 0, "warmup_steps must be >= 0");
    need(total_steps >= 1 && total_steps >= warmup_steps, "total_steps must be >= max(1, warmup_steps)");
    need(clip_norm > 0, "clip_norm must be > 0");
    need(ema_decay >= 0 && ema_decay <= 1, "ema_decay must be in [0, 1]");
    need(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "betas must be in [0, 1)");
    need(adam_eps > 0, "adam_eps must be > 0");
    need(weight_decay >= 0, "weight_decay must be >= 0");
    need(batch_size >= 1, "batch_size must be >= 1");
    need(flow_draws >= 1, "flow_draws must be >= 1");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, lr_peak, warmup_steps, total_steps, lr_floor, clip_norm,
                                                ema_decay, beta1, beta2, adam_eps, weight_decay, batch_size,
                                                flow_draws, seed)

/// Linear warmup from 0 to the peak, then cosine decay to the floor at
/// total_steps; constant floor afterwards.
inline double learning_rate(const TrainConfig& c, int step) {
  if (step <= 0) return c.warmup_steps > 0 ? 0.0 : c.lr_peak;
  if (step < c.warmup_steps) return c.lr_peak * step / c.warmup_steps;
  if (step >= c.total_steps) return c.lr_floor;
  const int span = c.total_steps - c.warmup_steps;
  const double prog = static_cast<double>(step - c.warmup_steps) / span;
  return c.lr_floor + 0.5 * (c.lr_peak - c.lr_floor) * (1.0 + std::cos(kPi * prog));
}

template <class S>
double global_norm(const Params<S>& g) {
  double sq = 0.0;
  for (const auto& t : g.tensors) sq += t.template cast<double>().squaredNorm();
  return std::sqrt(sq);
}

/// Scales g so its global norm is at most max_norm. Returns the norm before
/// clipping.
template <class S>
double clip_global_norm(Params<S>& g, double max_norm) {
  const double n = global_norm(g);
  if (n > max_norm) {
    const S f = static_cast<S>(max_norm / n);
    for (auto& t : g.tensors) t *= f;
  }
  return n;
}

/// new = decay * ema + (1 - decay) * params.
template <class S>
void ema_update(Params<S>& ema, const Params<S>& params, double decay) {
  if (decay == 1.0) return;
  if (decay == 0.0) {
    ema.tensors = params.tensors;
    return;
  }
  const S a = static_cast<S>(decay), b = static_cast<S>(1.0 - decay);
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = a * ema[i] + b * params[i];
}

template <class S>
struct TrainState {
  Params<S> params;
  Params<S> ema;
  Params<S> m;  // first moment
  Params<S> v;  // second moment
  int step = 0;
  Rng rng{0};

  static TrainState init(const ModelConfig& cfg, std::uint64_t seed) {
    TrainState s;
    s.params = init_params<S>(cfg, seed);
    s.ema = s.params;
    s.m = s.params.zeros_like();
    s.v = s.params.zeros_like();
    s.rng = Rng(seed).fork(1);
    return s;
  }
};

struct StepStats {
  LossTerms loss;
  double grad_norm = 0.0;
  double lr = 0.0;
};

/// Decoupled-weight-decay Adam update with bias correction; `t` is 1-based.
template <class S>
void adamw_update(Params<S>& p, const Params<S>& g, Params<S>& m, Params<S>& v, int t, double lr,
                  const TrainConfig& c) {
  const double bc1 = 1.0 - std::pow(c.beta1, t), bc2 = 1.0 - std::pow(c.beta2, t);
  const S b1 = static_cast<S>(c.beta1), b2 = static_cast<S>(c.beta2);
  const S step = static_cast<S>(lr / bc1), eps = static_cast<S>(c.adam_eps);
  const S inv_bc2 = static_cast<S>(1.0 / bc2), decay = static_cast<S>(1.0 - lr * c.weight_decay);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = b1 * m[i] + (S(1) - b1) * g[i];
    v[i] = b2 * v[i] + (S(1) - b2) * g[i].cwiseProduct(g[i]);
    if (c.weight_decay > 0 && p[i].rows() > 1) p[i] *= decay;
    p[i].array() -= step * m[i].array() / ((v[i].array() * inv_bc2).sqrt() + eps);
  }
}

/// One optimizer step on a batch with the given flow draws. A non-finite
/// loss or gradient throws and leaves the state untouched.
template <class S>
StepStats train_step(TrainState<S>& st, const ModelConfig& cfg, const TrainConfig& tc,
                     const std::vector<TrainExample>& batch, const std::vector<FlowDraws>& draws) {
  Params<S> g = st.params.zeros_like();
  StepStats out;
  out.loss = loss_and_grad(st.params, cfg, batch, draws, &g);
  if (!std::isfinite(out.loss.total) || !g.all_finite())
    throw Error("train_step: non-finite loss at step " + std::to_string(st.step));
  out.grad_norm = clip_global_norm(g, tc.clip_norm);
  out.lr = learning_rate(tc, st.step);
  adamw_update(st.params, g, st.m, st.v, st.step + 1, out.lr, tc);
  ema_update(st.ema, st.params, tc.ema_decay);
  ++st.step;
  return out;
}

/// Draws a random batch and flow noise from the state's RNG and steps.
template <class S>
StepStats train_step(TrainState<S>& st, const ModelConfig& cfg, const TrainConfig& tc,
                     const std::vector<TrainExample>& examples) {
  if (examples.empty()) throw Error("train_step: no training examples");
  std::vector<TrainExample> batch;
  std::vector<FlowDraws> draws;
  for (int i = 0; i < tc.batch_size; ++i) {
    batch.push_back(examples[st.rng.index(examples.size())]);
    draws.push_back(FlowDraws::sample(cfg, tc.flow_draws, st.rng));
  }
  return train_step(st, cfg, tc, batch, draws);
}

/// Runs until st.step == tc.total_steps. The callback sees every step.
template <class S>
void train_loop(TrainState<S>& st, const ModelConfig& cfg, const TrainConfig& tc,
                const std::vector<TrainExample>& examples,
                const std::function<void(int, const StepStats&)>& on_step = {}) {
  tc.validate();
  while (st.step < tc.total_steps) {
    const StepStats s = train_step(st, cfg, tc, examples);
    if (on_step) on_step(st.step, s);
  }
}

// ---------------------------------------------------------------------------
// Examples from recorded episodes.

inline std::vector<float> frame_to_input(const RasterFrame& f, int preproc) {
  const RasterFrame p = preprocess_frame(f, preproc);
  std::vector<float> out(p.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(p.pixels[i]) / 255.0f;
  return out;
}

inline Eigen::Vector4d normalize(const Eigen::Vector4d& x, const Eigen::Vector4d& mean, const Eigen::Vector4d& sd) {
  return (x - mean).cwiseQuotient(sd);
}

inline Mat<double> normalize_chunk(const data::ChunkMatrix& c, const data::NormStats& n) {
  Mat<double> out(c.rows(), c.cols());
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    out.row(i) = (c.row(i).transpose() - n.action_mean).cwiseQuotient(n.action_std).transpose();
  return out;
}

inline data::ActionChunk denormalize_chunk(const Mat<double>& c, const data::NormStats& n) {
  data::ActionChunk out;
  out.steps.resize(c.rows(), 4);
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    out.steps.row(i) = (c.row(i).transpose().cwiseProduct(n.action_std) + n.action_mean).transpose();
  return out;
}

/// Builds a model input from already preprocessed frames, oldest first.
/// Missing history (before the episode start) is passed as empty vectors
/// and becomes black frames.
inline ModelInput make_input(const ModelConfig& cfg, std::vector<std::vector<float>> frames,
                             const std::vector<int>& tokens, const Eigen::Vector4d& raw_state,
                             const data::NormStats& norm) {
  ModelInput in;
  for (auto& f : frames)
    if (f.empty()) f.assign(static_cast<std::size_t>(cfg.preproc_size * cfg.preproc_size), 0.0f);
  in.frames = std::move(frames);
  in.tokens = tokens;
  in.state = normalize(raw_state, norm.state_mean, norm.state_std);
  return in;
}

/// One example per vision tick of every episode.
inline std::vector<TrainExample> build_examples(std::span<const data::EpisodeRecord> episodes,
                                                const language::Vocab& vocab, const data::NormStats& norm,
                                                const ModelConfig& cfg) {
  std::vector<TrainExample> out;
  const int H = cfg.history_frames;
  for (const auto& rec : episodes) {
    std::vector<std::vector<float>> pre;
    pre.reserve(rec.vision.size());
    for (const auto& v : rec.vision) pre.push_back(frame_to_input(v.frame, cfg.preproc_size));
    const auto tokens = language::tokenize(rec.prompt, vocab, cfg.text_len).token_ids;
    for (std::size_t t = 0; t < rec.vision.size(); ++t) {
      const auto& v = rec.vision[t];
      std::vector<std::vector<float>> frames;
      for (int j = H; j >= 0; --j) {
        const long idx = static_cast<long>(t) - j;
        frames.push_back(idx >= 0 ? pre[static_cast<std::size_t>(idx)] : std::vector<float>{});
      }
      TrainExample ex;
      ex.input = make_input(cfg, std::move(frames), tokens, v.state.cast<double>(), norm);
      ex.pose = normalize(v.pose.cast<double>(), norm.pose_mean, norm.pose_std);
      ex.chunk = normalize_chunk(v.chunk.cast<double>(), norm);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

/// Samples a denormalized chunk with noise drawn from `rng`.
template <class S>
data::ActionChunk sample_action_chunk(const Params<S>& ema, const ModelConfig& cfg, const ModelInput& in,
                                      const data::NormStats& norm, Rng& rng, int euler_steps = -1) {
  Mat<double> eps(cfg.chunk_len, cfg.action_dim);
  for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = rng.normal();
  return denormalize_chunk(sample_chunk_normalized(ema, cfg, in, eps, euler_steps), norm);
}

}  // namespace uavtrack::model
