// Acceptance suite: one PASS/FAIL line per criterion. Thresholds and budgets
// are fixed here; the closed-loop criteria read configs/toy.json.
//
//   acceptance            run everything
//   acceptance 3 5 11     run a subset

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>

#include "oracles.hpp"
#include "uavtrack/pipeline.hpp"

using namespace uavtrack;
namespace fs = std::filesystem;
using model::Mat;

namespace {

// Thresholds.
constexpr int kFullTokens = 448;
constexpr int kStackedTokens = 1024;
constexpr double kTokenReduction = 0.5625;
constexpr double kMinLatencySaving = 0.20;
constexpr int kLatencyTrials = 100;
constexpr double kMaxGradError = 1e-4;
constexpr double kEulerTol = 1e-9;
constexpr int kSingleDatumSteps = 2000;
constexpr double kSingleDatumLinf = 0.05;
constexpr int kMetricEpisodes = 1000;
constexpr int kMinTrainEpisodes = 200;
constexpr double kMinSr = 0.5;
constexpr double kAtfFactor = 3.0;
constexpr int kSeeds = 3;
constexpr int kSeedsNeeded = 2;
constexpr double kMinPoseMseDrop = 0.5;
constexpr double kUnseenSrRetention = 0.5;
constexpr int kEvalEpisodes = 50;
constexpr int kApfTicks = 10000;
constexpr double kMinAltitude = 0.1;
constexpr double kMaxRepulsion = 1.5;
constexpr int kConvergeTicks = 500;
constexpr int kUtdEpisodes = 100;
constexpr double kReintegrationTol = 1e-9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Mat<double> gaussian(int rows, int cols, Rng& rng, double sd = 1.0) {
  Mat<double> m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal(0.0, sd);
  return m;
}

// ---------------------------------------------------------------------------

Outcome token_arithmetic() {
  const auto c = model::ModelConfig::full_scale();
  const double reduction = 1.0 - static_cast<double>(c.n_visual()) / c.n_visual_uncompressed();
  return {c.n_visual() == kFullTokens && c.n_visual_uncompressed() == kStackedTokens && reduction == kTokenReduction,
          fmt("%d visual tokens vs %d stacked, reduction %.4f", c.n_visual(), c.n_visual_uncompressed(), reduction)};
}

Outcome latency(const RunConfig& cfg) {
  // Toy widths on the full-scale token layout.
  model::ModelConfig base = model::ModelConfig::full_scale();
  base.d_model = cfg.model.d_model;
  base.heads = cfg.model.heads;
  base.layers = cfg.model.layers;
  const auto r = pipeline::compare_latency(base, kLatencyTrials, 1);
  return {r.compressed_tokens == kFullTokens && r.stacked_tokens == kStackedTokens && r.speedup() >= kMinLatencySaving,
          fmt("mean %.2f ms (%d tokens) vs %.2f ms (%d tokens), %.1f%% faster over %d trials",
              1e3 * r.compressed.mean, r.compressed_tokens, 1e3 * r.stacked.mean, r.stacked_tokens,
              100 * r.speedup(), kLatencyTrials)};
}

Outcome gradients() {
  double worst = 0.0;
  std::string where;
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto r = pipeline::run_gradcheck(seed);
    checked += r.checked;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = r.worst;
    }
  }
  return {worst < kMaxGradError, fmt("max relative error %.2e at %s, %d coordinates, 3 seeds", worst, where.c_str(),
                                     checked)};
}

Outcome flow_oracle() {
  // (a) analytic field
  Rng rng(4);
  double worst_a = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Mat<double> target = gaussian(25, 4, rng, 3.0), eps = gaussian(25, 4, rng);
    for (int steps : {1, 2, 3, 5, 10, 25, 100}) {
      const Mat<double> x = model::euler_integrate<double>(
          eps, steps, [&](const Mat<double>& xs, double s) -> Mat<double> { return (target - xs) / (1.0 - s); });
      worst_a = std::max(worst_a, (x - target).cwiseAbs().maxCoeff());
    }
  }
  // (b) one (context, chunk) pair
  model::ModelConfig c;
  c.d_model = 32;
  c.heads = 2;
  c.vocab_size = 50;
  model::TrainConfig tc;
  tc.lr_peak = 1e-3;
  tc.warmup_steps = 100;
  tc.total_steps = kSingleDatumSteps;
  tc.ema_decay = 0.99;
  tc.seed = 3;
  Rng data_rng(5);
  const std::vector<model::TrainExample> ex{model::synthetic_example(c, data_rng)};
  auto st = model::TrainState<float>::init(c, tc.seed);
  model::train_loop(st, c, tc, ex, [](int, const model::StepStats&) {});
  double worst_b = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Mat<double> x = model::sample_chunk_normalized(st.ema, c, ex[0].input, gaussian(25, 4, data_rng));
    worst_b = std::max(worst_b, (x - ex[0].chunk).cwiseAbs().maxCoeff());
  }
  return {worst_a < kEulerTol && worst_b < kSingleDatumLinf,
          fmt("(a) analytic field max error %.1e; (b) %d steps, L-inf over 100 samples %.4f", worst_a,
              kSingleDatumSteps, worst_b)};
}

Outcome metric_oracle() {
  const int tau = 15;
  const auto eps = oracle::random_episodes(kMetricEpisodes, 500, 21);
  std::vector<eval::EpisodeLog> logs;
  for (const auto& e : eps) logs.push_back(oracle::to_log(e, tau));
  const auto r = eval::compute_metrics(logs);
  const auto t = oracle::brute_force(eps, tau);
  bool ok = r.overall.successes == t.successes && r.overall.tracked_frames == t.tracked &&
            r.overall.sr == static_cast<double>(t.successes) / kMetricEpisodes &&
            r.overall.atf == static_cast<double>(t.tracked) / kMetricEpisodes;
  int grouped = 0;
  for (const auto& g : r.groups) {
    std::vector<oracle::RawEpisode> sub;
    for (const auto& e : eps)
      if (e.key == g.key) sub.push_back(e);
    const auto gt = oracle::brute_force(sub, tau);
    ok = ok && g.successes == gt.successes && g.tracked_frames == gt.tracked &&
         g.sr == static_cast<double>(gt.successes) / static_cast<double>(sub.size()) &&
         g.atf == static_cast<double>(gt.tracked) / static_cast<double>(sub.size());
    grouped += static_cast<int>(sub.size());
  }
  ok = ok && grouped == kMetricEpisodes;
  return {ok, fmt("%d logs, SR %.3f ATF %.2f, %zu groups, all identical to brute force", kMetricEpisodes,
                  r.overall.sr, r.overall.atf, r.groups.size())};
}

// Criteria 6, 7 and 8 share one set of runs per seed.
struct SeedRun {
  std::uint64_t seed = 0;
  double model_sr = 0, model_atf = 0, zero_atf = 0, untrained_atf = 0, ablation_atf = 0, unseen_sr = 0;
  double pose_mse_initial = 0, pose_mse_final = 0;
};

struct ClosedLoop {
  std::vector<SeedRun> runs;
  double collect_train_seconds = 0;  // criterion 6 share
  double total_seconds = 0;
  std::string error;
};

ClosedLoop run_closed_loop(const RunConfig& cfg) {
  ClosedLoop out;
  const auto t0 = std::chrono::steady_clock::now();
  double ablation_seconds = 0;
  try {
    if (static_cast<int>(cfg.collection.episodes) < kMinTrainEpisodes)
      throw Error("toy config collects fewer than " + std::to_string(kMinTrainEpisodes) + " episodes");
    RunConfig ablation = cfg;
    ablation.model.lambda_pos = 0.0;
    for (int i = 0; i < kSeeds; ++i) {
      SeedRun r;
      r.seed = cfg.seed + static_cast<std::uint64_t>(i);
      const auto eps = pipeline::collect_episodes(cfg, cfg.collection.episodes, r.seed, 1);
      const std::size_t n_val = eps.size() / 10;
      const std::span<const data::EpisodeRecord> all(eps);
      const auto train_eps = all.first(eps.size() - n_val), val_eps = all.last(n_val);
      const auto full = pipeline::train(cfg, train_eps, val_eps, r.seed);
      r.pose_mse_initial = full.val_pose_mse_initial;
      r.pose_mse_final = full.val_pose_mse_final;

      const std::uint64_t eval_seed = 1000 + r.seed;
      auto atf_sr = [&](pipeline::PolicyKind kind, const model::Checkpoint* ck, Split prompts) {
        const auto logs = pipeline::evaluate(cfg, pipeline::policy_factory(kind, ck, r.seed), kEvalEpisodes,
                                             eval_seed, Split::seen, prompts, 1);
        const auto m = eval::compute_metrics(logs).overall;
        return std::pair{m.atf, m.sr};
      };
      std::tie(r.model_atf, r.model_sr) = atf_sr(pipeline::PolicyKind::model, &full.checkpoint, Split::seen);
      r.zero_atf = atf_sr(pipeline::PolicyKind::zero, nullptr, Split::seen).first;
      r.untrained_atf = atf_sr(pipeline::PolicyKind::untrained, &full.checkpoint, Split::seen).first;
      r.unseen_sr = atf_sr(pipeline::PolicyKind::model, &full.checkpoint, Split::unseen).second;

      const auto ta = std::chrono::steady_clock::now();
      const auto abl = pipeline::train(ablation, train_eps, val_eps, r.seed);
      r.ablation_atf = atf_sr(pipeline::PolicyKind::model, &abl.checkpoint, Split::seen).first;
      ablation_seconds += since(ta);

      std::printf("  seed %llu: SR %.2f ATF %.1f | zero ATF %.1f | untrained ATF %.1f | lambda1=0 ATF %.1f | "
                  "unseen-prompt SR %.2f | val pose MSE %.4f -> %.4f\n",
                  static_cast<unsigned long long>(r.seed), r.model_sr, r.model_atf, r.zero_atf, r.untrained_atf,
                  r.ablation_atf, r.unseen_sr, r.pose_mse_initial, r.pose_mse_final);
      std::fflush(stdout);
      out.runs.push_back(r);
    }
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.total_seconds = since(t0);
  out.collect_train_seconds = out.total_seconds - ablation_seconds;
  return out;
}

Outcome closed_loop_learning(const ClosedLoop& cl) {
  if (!cl.error.empty()) return {false, cl.error};
  int ok = 0;
  for (const auto& r : cl.runs)
    ok += r.model_sr >= kMinSr && r.model_atf >= kAtfFactor * r.zero_atf && r.model_atf >= kAtfFactor * r.untrained_atf;
  return {ok >= kSeedsNeeded && cl.collect_train_seconds <= 30 * 60,
          fmt("%d/%d seeds reach SR >= %.1f and ATF >= %.0fx both baselines (%.0f s)", ok, kSeeds, kMinSr,
              kAtfFactor, cl.collect_train_seconds)};
}

Outcome ablation_direction(const ClosedLoop& cl) {
  if (!cl.error.empty()) return {false, cl.error};
  int ok = 0;
  bool mse_ok = true;
  double worst_drop = 1.0;
  for (const auto& r : cl.runs) {
    ok += r.model_atf >= r.ablation_atf;
    const double drop = 1.0 - r.pose_mse_final / r.pose_mse_initial;
    worst_drop = std::min(worst_drop, drop);
    mse_ok = mse_ok && drop >= kMinPoseMseDrop;
  }
  return {ok >= kSeedsNeeded && mse_ok && cl.total_seconds <= 45 * 60,
          fmt("full ATF >= lambda1=0 ATF in %d/%d seeds; val pose MSE drop >= %.0f%% in every seed (worst %.1f%%); "
              "%.0f s with criterion 6",
              ok, kSeeds, 100 * kMinPoseMseDrop, 100 * worst_drop, cl.total_seconds)};
}

Outcome zero_shot(const ClosedLoop& cl) {
  if (!cl.error.empty()) return {false, cl.error};
  // Pooled over seeds; every seed uses the same number of episodes.
  double seen = 0, unseen = 0;
  for (const auto& r : cl.runs) {
    seen += r.model_sr;
    unseen += r.unseen_sr;
  }
  seen /= kSeeds;
  unseen /= kSeeds;
  return {unseen >= kUnseenSrRetention * seen,
          fmt("unseen-prompt SR %.3f vs seen-prompt SR %.3f (needs >= %.0f%%)", unseen, seen,
              100 * kUnseenSrRetention)};
}

Outcome prompt_generator() {
  const auto& v = pipeline::prompts();
  int seen = 0, verb = 0, object = 0, distance = 0, single_block = 0;
  for (const auto& p : v) {
    if (p.split == Split::seen) {
      ++seen;
      continue;
    }
    verb += p.substitution_kind == language::SubstitutionKind::verb;
    object += p.substitution_kind == language::SubstitutionKind::object;
    distance += p.substitution_kind == language::SubstitutionKind::distance;
    single_block += p.base_index >= 0 && p.blocks_differing(v[static_cast<std::size_t>(p.base_index)]) == 1;
  }
  const int unseen = static_cast<int>(v.size()) - seen;
  return {v.size() == 176 && seen == 136 && verb == 14 && object == 17 && distance == 9 && single_block == unseen,
          fmt("%zu prompts, %d seen + %d unseen, {verb %d, object %d, distance %d}, %d/%d one-block edits", v.size(),
              seen, unseen, verb, object, distance, single_block, unseen)};
}

Outcome apf_safety() {
  const auto& presets = sim::default_scenarios();
  const expert::ApfParams apf;  // collection defaults, noise on
  const GranularityProfile gran;
  Rng rng(77);
  int ticks = 0;
  double min_alt = std::numeric_limits<double>::infinity(), max_rep = 0;
  while (ticks < kApfTicks) {
    sim::EpisodeConfig ec;
    ec.scenario_id = presets[rng.index(presets.size())].id;
    ec.target_class = static_cast<TargetClass>(rng.index(3));
    ec.distance_tier = static_cast<DistanceTier>(rng.index(3));
    ec.seed = rng.next_u64();
    sim::WorldState w = sim::init_episode(ec, presets);
    Rng expert_rng = Rng(ec.seed).fork(10);
    for (int t = 0; t < ec.horizon && ticks < kApfTicks; ++t, ++ticks) {
      const auto d = expert::apf_decide(w, w.anchor, apf, gran, expert_rng);
      max_rep = std::max(max_rep, d.repulse_magnitude);
      w = sim::step_world(w, d.action, ec.dt());
      min_alt = std::min(min_alt, w.uav.z);
    }
  }
  // Convergence: no noise, no obstacles, a stationary target, a displaced start.
  expert::ApfParams quiet;
  quiet.noise_amplitude = 0.0;
  int converged = 0, worst_ticks = 0;
  const int trials = 20;
  for (int s = 0; s < trials; ++s) {
    sim::EpisodeConfig ec;
    ec.target_class = static_cast<TargetClass>(s % 3);
    ec.seed = static_cast<std::uint64_t>(s);
    ec.n_vehicles = ec.n_pedestrians = 0;
    sim::WorldState w = sim::init_episode(ec, presets);
    w.obstacles.clear();
    w.target.speed = w.target.cruise_speed = w.target.speed_noise = 0.0;
    w.uav.x += rng.uniform(-3, 3);
    w.uav.y += rng.uniform(-3, 3);
    w.uav.z += rng.uniform(0, 1.5);
    w.uav.yaw = wrap_angle(w.uav.yaw + rng.uniform(-0.6, 0.6));
    const Eigen::Array4d step = gran.steps(ec.target_class).array();
    for (int t = 1; t <= kConvergeTicks; ++t) {
      w = sim::step_world(w, expert::apf_command(w, w.anchor, quiet, gran, rng), ec.dt());
      if ((expert::anchor_error(w, w.anchor).cwiseAbs().array() < step).all()) {
        ++converged;
        worst_ticks = std::max(worst_ticks, t);
        break;
      }
    }
  }
  return {min_alt >= kMinAltitude && max_rep <= kMaxRepulsion && converged == trials,
          fmt("%d ticks: min altitude %.3f m, max repulsion %.3f; %d/%d noise-free starts converge (slowest %d ticks)",
              kApfTicks, min_alt, max_rep, converged, trials, worst_ticks)};
}

Outcome data_integrity(const RunConfig& cfg) {
  const auto eps = pipeline::collect_episodes(cfg, kUtdEpisodes, 31, 1);
  int bitwise = 0;
  for (const auto& e : eps) {
    const auto bytes = data::encode_episode(e);
    const auto back = data::decode_episode(bytes);
    bitwise += back == e && data::encode_episode(back) == bytes;
  }
  // Re-fly each episode in double precision with the collector's expert
  // stream and re-integrate every recorded chunk.
  const collect::CollectOptions opt = pipeline::collect_options(cfg);
  double worst = 0;
  int chunks = 0, chunk_match = 0;
  for (const auto& e : eps) {
    sim::WorldState w = sim::init_episode(e.config, sim::default_scenarios());
    Rng expert_rng = Rng(e.config.seed).fork(10);
    std::vector<geometry::Pose6D> poses{w.uav};
    for (int t = 0; t < e.config.horizon; ++t) {
      w = sim::step_world(w, expert::apf_command(w, w.anchor, opt.apf, opt.granularity, expert_rng), e.config.dt());
      poses.push_back(w.uav);
    }
    for (const auto& v : e.vision) {
      const int t = static_cast<int>(v.control_tick);
      if (t + e.chunk_len >= static_cast<int>(poses.size())) continue;
      const auto c = data::compute_action_chunk(poses, t, e.chunk_len);
      chunk_match += c.steps.cast<float>() == v.chunk;
      const auto end = data::integrate_chunk(poses[static_cast<std::size_t>(t)], c);
      const auto& q = poses[static_cast<std::size_t>(t + e.chunk_len)];
      worst = std::max({worst, std::abs(end.x - q.x), std::abs(end.y - q.y), std::abs(end.z - q.z),
                        std::abs(wrap_angle(end.yaw - q.yaw))});
      ++chunks;
    }
  }
  const fs::path dir = fs::temp_directory_path() / "uavtrack_acceptance_layout";
  data::build_dataset_layout(eps, dir, pipeline::prompts(), 40, true);
  const auto n_eps = data::read_jsonl(dir / "meta" / "episodes.jsonl").size();
  const auto n_stats = data::read_jsonl(dir / "meta" / "episodes_stats.jsonl").size();
  const auto n_tasks = data::read_jsonl(dir / "meta" / "tasks.jsonl").size();
  const auto info = data::read_json(dir / "meta" / "info.json");
  const bool reloaded = data::load_dataset(dir) == eps;
  fs::remove_all(dir);
  const bool layout_ok = n_eps == eps.size() && n_stats == eps.size() && n_tasks == pipeline::prompts().size() &&
                         info.at("total_episodes").get<std::size_t>() == eps.size() && reloaded;
  return {bitwise == kUtdEpisodes && chunks > 0 && chunk_match == chunks && worst < kReintegrationTol && layout_ok,
          fmt("%d/%d bitwise round trips; %d chunks re-integrated, max error %.1e, %d match the stored chunk; meta "
              "counts %zu/%zu/%zu tasks, reload %s",
              bitwise, kUtdEpisodes, chunks, worst, chunk_match, n_eps, n_stats, n_tasks, reloaded ? "equal" : "differs")};
}

Outcome sensitivity() {
  using eval::sensitivity_normalize;
  const auto div = sensitivity_normalize({{"0", {{"verb", {130, 0.5}}, {"object", {146, 0.5}}, {"distance", {196, 0.5}}}}});
  const auto& d = div.normalized.at("0");
  bool ok = std::abs(d.at("object").atf - 1.1231) < 5e-5 && d.at("verb").atf == 1.0 &&
            std::abs(d.at("distance").atf - 1.5077) < 5e-5;

  Rng rng(12);
  eval::SensitivityInput raw;
  for (int s = 0; s < 50; ++s)
    for (const auto& c : eval::kSubstitutionCategories)
      raw[std::to_string(s)][c] = {rng.uniform(1, 500), rng.uniform(0.01, 1)};
  int exact_min = 0;
  for (const auto& [s, cats] : sensitivity_normalize(raw).normalized) {
    double ma = 1e300, ms = 1e300;
    for (const auto& [c, v] : cats) {
      ma = std::min(ma, v.atf);
      ms = std::min(ms, v.sr);
    }
    exact_min += ma == 1.0 && ms == 1.0;
  }
  ok = ok && exact_min == 50;

  // Published vehicle row.
  const auto veh =
      sensitivity_normalize({{"vehicle", {{"verb", {1.30, 1}}, {"object", {1.46, 1}}, {"distance", {1.96, 1}}}}});
  const auto& v = veh.normalized.at("vehicle");
  ok = ok && v.at("verb").atf == 1.0 && v.at("verb").atf < v.at("object").atf &&
       v.at("object").atf < v.at("distance").atf;
  return {ok, fmt("{146,130,196} -> {%.4f, %.4f, %.4f}; minimum exactly 1.0 in %d/50 random scenarios; vehicle "
                  "fixture %.3f < %.3f < %.3f",
                  d.at("object").atf, d.at("verb").atf, d.at("distance").atf, exact_min, v.at("verb").atf,
                  v.at("object").atf, v.at("distance").atf)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || only.count(id); };

  RunConfig cfg;
  try {
    cfg = load_config(UAVTRACK_TOY_CONFIG);
  } catch (const std::exception& e) {
    std::printf("cannot load toy config: %s\n", e.what());
    return 1;
  }

  int failed = 0, ran = 0;
  auto report = [&](int id, const char* name, double budget_s, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double s = since(t0);
    if (budget_s > 0 && s > budget_s) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s budget]", budget_s);
    }
    ++ran;
    failed += !o.pass;
    std::printf("%s  %2d %-28s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), s);
    std::fflush(stdout);
  };

  report(1, "token arithmetic", 1, token_arithmetic);
  report(2, "latency", 120, [&] { return latency(cfg); });
  report(3, "gradient fidelity", 60, gradients);
  report(4, "flow-matching oracle", 300, flow_oracle);
  report(5, "metric oracle", 30, metric_oracle);

  if (wanted(6) || wanted(7) || wanted(8)) {
    std::printf("closed-loop runs (%d seeds, %zu episodes each, %d eval episodes per policy)\n", kSeeds,
                static_cast<std::size_t>(cfg.collection.episodes), kEvalEpisodes);
    std::fflush(stdout);
    const ClosedLoop cl = run_closed_loop(cfg);
    // Budgets for these are checked inside, against the shared run time.
    report(6, "closed-loop learning", 0, [&] { return closed_loop_learning(cl); });
    report(7, "ablation direction", 0, [&] { return ablation_direction(cl); });
    report(8, "zero-shot prompts", 0, [&] { return zero_shot(cl); });
  }

  report(9, "prompt generator", 1, prompt_generator);
  report(10, "APF safety", 60, apf_safety);
  report(11, "data integrity", 120, [&] { return data_integrity(cfg); });
  report(12, "sensitivity normalization", 10, sensitivity);

  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
