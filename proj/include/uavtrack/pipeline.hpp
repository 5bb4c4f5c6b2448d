#pragma once

// End-to-end steps shared by the command-line tool and the acceptance suite:
// collect demonstrations, train a policy, evaluate it in closed loop.

#include <chrono>
#include <iostream>

#include "uavtrack/config.hpp"
#include "uavtrack/model/checkpoint.hpp"
#include "uavtrack/model/inspect.hpp"

namespace uavtrack::pipeline {

inline const std::vector<language::PromptSpec>& prompts() {
  static const std::vector<language::PromptSpec> p = language::generate_vocabulary(0);
  return p;
}

/// Closed vocabulary over all 176 prompts. Words that only occur in unseen
/// prompts keep their initial embeddings, since training never sees them.
inline const language::Vocab& vocabulary() {
  static const language::Vocab v = language::Vocab::from_prompts(prompts());
  return v;
}

inline model::ModelConfig model_config(const RunConfig& cfg) {
  model::ModelConfig m = cfg.model;
  m.vocab_size = vocabulary().size();
  m.validate();
  return m;
}

inline collect::CollectOptions collect_options(const RunConfig& cfg) {
  collect::CollectOptions o;
  o.apf.noise_amplitude = cfg.collection.apf_noise;
  return o;
}

inline std::vector<data::EpisodeRecord> collect_episodes(const RunConfig& cfg, std::size_t n, std::uint64_t seed,
                                                         int workers) {
  const auto plan = collect::plan_collection(n, seed, cfg.episode.to_config(), sim::default_scenarios(), prompts(),
                                             parse_split(cfg.collection.split));
  return collect::collect_episodes(plan, sim::default_scenarios(), prompts(), collect_options(cfg), workers);
}

// ---------------------------------------------------------------------------
// Training

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;
  double pos = 0.0;
  double action = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

struct TrainResult {
  model::Checkpoint checkpoint;
  std::vector<TrainLogEntry> log;
  double val_pose_mse_initial = 0.0;  // grounding head on held-out samples, normalized units
  double val_pose_mse_final = 0.0;
};

/// Mean squared grounding error in normalized units.
template <class S>
double pose_mse(const model::Params<S>& p, const model::ModelConfig& cfg, const std::vector<model::TrainExample>& ex) {
  if (ex.empty()) return 0.0;
  double sse = 0.0;
  for (const auto& e : ex) sse += (model::predict_pose(p, cfg, e.input) - e.pose).squaredNorm();
  return sse / (4.0 * static_cast<double>(ex.size()));
}

/// Trains on `train_eps`; `val_eps` only feeds the grounding validation
/// metric. Normalization statistics come from the training episodes.
inline TrainResult train(const RunConfig& cfg, std::span<const data::EpisodeRecord> train_eps,
                         std::span<const data::EpisodeRecord> val_eps, std::uint64_t seed, int log_every = 100,
                         std::ostream* progress = nullptr) {
  if (train_eps.empty()) throw Error("train: no training episodes");
  const model::ModelConfig mc = model_config(cfg);
  model::TrainConfig tc = cfg.train;
  tc.seed = seed;
  tc.validate();
  const data::NormStats norm = data::compute_norm_stats(train_eps);
  const auto examples = model::build_examples(train_eps, vocabulary(), norm, mc);
  const auto val = model::build_examples(val_eps, vocabulary(), norm, mc);

  auto st = model::TrainState<float>::init(mc, seed);
  TrainResult r;
  r.val_pose_mse_initial = pose_mse(st.ema, mc, val);
  model::train_loop(st, mc, tc, examples, [&](int step, const model::StepStats& s) {
    if (step % log_every != 0 && step != tc.total_steps) return;
    r.log.push_back({step, s.loss.total, s.loss.pos, s.loss.action, s.lr, s.grad_norm});
    if (progress)
      *progress << "step " << step << " loss " << s.loss.total << " pos " << s.loss.pos << " action "
                << s.loss.action << " lr " << s.lr << '\n';
  });
  r.val_pose_mse_final = pose_mse(st.ema, mc, val);
  r.checkpoint.model = mc;
  r.checkpoint.train = tc;
  r.checkpoint.norm = norm;
  r.checkpoint.vocab = vocabulary();
  r.checkpoint.step = st.step;
  r.checkpoint.params = std::move(st.params);
  r.checkpoint.ema = std::move(st.ema);
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation

enum class PolicyKind { model, untrained, zero, expert };

inline PolicyKind parse_policy(const std::string& s) {
  if (s == "model") return PolicyKind::model;
  if (s == "untrained") return PolicyKind::untrained;
  if (s == "zero") return PolicyKind::zero;
  if (s == "expert") return PolicyKind::expert;
  throw Error("unknown policy '" + s + "' (expected model, untrained, zero or expert)");
}

/// `ck` is required for the model and untrained policies; the untrained one
/// keeps the checkpoint's config and normalization but re-initializes the
/// weights from `seed`.
inline eval::PolicyFactory policy_factory(PolicyKind kind, const model::Checkpoint* ck, std::uint64_t seed) {
  switch (kind) {
    case PolicyKind::zero:
      return [](const eval::EvalEpisode&) { return std::make_unique<eval::ZeroPolicy>(); };
    case PolicyKind::expert:
      return [](const eval::EvalEpisode& e) {
        expert::ApfParams apf;
        apf.noise_amplitude = 0.0;
        return std::make_unique<eval::ExpertPolicy>(apf, GranularityProfile{}, e.config.seed);
      };
    case PolicyKind::model:
    case PolicyKind::untrained: {
      if (!ck) throw Error("policy needs a checkpoint");
      auto params = std::make_shared<const model::Params<float>>(
          kind == PolicyKind::model ? ck->ema : model::init_params<float>(ck->model, seed));
      return [params, ck](const eval::EvalEpisode& e) {
        return std::make_unique<eval::ModelPolicy>(
            params, ck->model, ck->norm, language::tokenize(e.prompt, ck->vocab, ck->model.text_len).token_ids,
            e.config.seed);
      };
    }
  }
  throw Error("unreachable policy kind");
}

inline std::vector<eval::EpisodeLog> evaluate(const RunConfig& cfg, const eval::PolicyFactory& factory, std::size_t n,
                                              std::uint64_t seed, Split map_split, Split prompt_split, int workers) {
  sim::EpisodeConfig base = cfg.episode.to_config();
  base.horizon = cfg.eval.criteria.horizon;
  const auto plan =
      eval::plan_evaluation(n, seed, base, sim::default_scenarios(), prompts(), map_split, prompt_split);
  return eval::evaluate(plan, factory, sim::default_scenarios(), cfg.eval.criteria, {}, workers);
}

/// Sensitivity plan: for each scenario of the split, `per_category` episodes
/// for each substitution category, prompts cycling over that category's
/// unseen prompts.
inline std::vector<eval::EvalEpisode> plan_sensitivity(const RunConfig& cfg, std::size_t per_category,
                                                       std::uint64_t seed, Split map_split) {
  sim::EpisodeConfig base = cfg.episode.to_config();
  base.horizon = cfg.eval.criteria.horizon;
  Rng rng = Rng(seed).fork(40);
  std::vector<eval::EvalEpisode> out;
  for (int sid : sim::scenario_ids(sim::default_scenarios(), map_split))
    for (const auto kind : {language::SubstitutionKind::verb, language::SubstitutionKind::object,
                            language::SubstitutionKind::distance}) {
      std::vector<std::string> texts;
      for (const auto& p : prompts())
        if (p.split == Split::unseen && p.substitution_kind == kind) texts.push_back(p.text());
      for (std::size_t i = 0; i < per_category; ++i) {
        eval::EvalEpisode e;
        e.config = base;
        e.config.scenario_id = sid;
        e.config.seed = rng.next_u64();
        e.prompt = texts[i % texts.size()];
        e.prompt_split = Split::unseen;
        out.push_back(std::move(e));
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Small double-precision model used for gradient checks.
inline model::ModelConfig gradcheck_config() {
  model::ModelConfig c;
  c.preproc_size = 16;
  c.patch = 8;
  c.d_model = 8;
  c.heads = 2;
  c.layers = 2;
  c.mlp_ratio = 2;
  c.text_len = 4;
  c.vocab_size = 10;
  c.chunk_len = 3;
  c.time_embed_dim = 4;
  c.action_hidden = 8;
  c.grounding_hidden = 6;
  return c;
}

/// Joint-loss gradient check on random weights (perturbed away from the
/// zero-initialized tensors) and a two-example batch.
inline model::GradCheckResult run_gradcheck(std::uint64_t seed, int per_tensor = 6) {
  const model::ModelConfig c = gradcheck_config();
  Rng rng = Rng(seed).fork(50);
  auto p = model::init_params<double>(c, seed);
  for (auto& t : p.tensors)
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] += rng.normal(0.0, 0.05);
  std::vector<model::TrainExample> batch{model::synthetic_example(c, rng), model::synthetic_example(c, rng)};
  std::vector<model::FlowDraws> draws{model::FlowDraws::sample(c, 2, rng), model::FlowDraws::sample(c, 1, rng)};
  return model::grad_check_model(p, c, batch, draws, per_tensor, seed);
}

struct LatencyComparison {
  int compressed_tokens = 0;
  int stacked_tokens = 0;
  eval::LatencyStats compressed;
  eval::LatencyStats stacked;
  double speedup() const { return 1.0 - compressed.mean / stacked.mean; }  // fraction of time saved
};

/// Encoder forward time with compressed history tokens versus every history
/// frame kept at full resolution, on the full-scale token layout.
inline LatencyComparison compare_latency(const model::ModelConfig& base, int trials, std::uint64_t seed) {
  model::ModelConfig a = base, b = base;
  if (a.vocab_size == 0) a.vocab_size = b.vocab_size = vocabulary().size();
  b.compress_ratio = 1;
  a.validate();
  b.validate();
  Rng rng(seed);
  const auto pa = model::init_params<float>(a, seed), pb = model::init_params<float>(b, seed);
  const model::ModelInput in = model::synthetic_example(a, rng).input;
  LatencyComparison r;
  r.compressed_tokens = a.n_visual();
  r.stacked_tokens = b.n_visual();
  // Interleave the two so that drift in machine load affects both alike.
  std::vector<double> ta, tb;
  model::EncoderCache<float> ca, cb;
  auto time = [](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  for (int i = 0; i < 5; ++i) {
    model::encode(pa, a, in, ca);
    model::encode(pb, b, in, cb);
  }
  for (int i = 0; i < trials; ++i) {
    ta.push_back(time([&] { model::encode(pa, a, in, ca); }));
    tb.push_back(time([&] { model::encode(pb, b, in, cb); }));
  }
  r.compressed = eval::summarize_latency(std::move(ta));
  r.stacked = eval::summarize_latency(std::move(tb));
  return r;
}

}  // namespace uavtrack::pipeline
