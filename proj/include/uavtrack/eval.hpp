#pragma once

// Closed-loop evaluation: tracking validity, fatal-failure detection, SR and
// ATF aggregation, prompt-sensitivity normalization and latency timing.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>

#include "uavtrack/collect.hpp"
#include "uavtrack/model/train.hpp"

namespace uavtrack::eval {

struct TrackingCriteria {
  double d_min = 0.0;
  std::array<double, 3> vehicle_d_max{25.0, 35.0, 40.0};     // close, suitable, far
  std::array<double, 3> pedestrian_d_max{10.0, 15.0, 20.0};  // close, suitable, far
  int tolerance = 15;       // consecutive invalid control ticks before fatal failure
  int horizon = 500;        // control ticks
  int replan_interval = 5;  // control ticks between policy queries
  bool open_loop = false;   // execute whole chunks before replanning

  /// Two-wheelers use the vehicle tiers.
  double d_max(TargetClass c, DistanceTier t) const {
    const auto i = static_cast<std::size_t>(t);
    return c == TargetClass::pedestrian ? pedestrian_d_max[i] : vehicle_d_max[i];
  }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw Error("TrackingCriteria: " + what);
    };
    need(d_min >= 0, "d_min must be >= 0");
    for (std::size_t i = 0; i < 3; ++i) {
      need(vehicle_d_max[i] > d_min && pedestrian_d_max[i] > d_min, "d_min must be < every d_max");
    }
    need(tolerance >= 1, "tolerance must be >= 1");
    need(horizon >= 1, "horizon must be >= 1");
    need(replan_interval >= 1, "replan_interval must be >= 1");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrackingCriteria, d_min, vehicle_d_max, pedestrian_d_max, tolerance,
                                                horizon, replan_interval, open_loop)

struct Validity {
  double distance = 0.0;
  bool in_fov = false;
  bool valid = false;
};

/// Target center projects inside the image and its 3D distance to the UAV
/// lies in [d_min, d_max] (both inclusive).
inline Validity check_tracking(const sim::WorldState& s, const geometry::CameraModel& cam,
                               const TrackingCriteria& c, DistanceTier tier) {
  Validity v;
  v.distance = (s.target.pose.position() - s.uav.position()).norm();
  v.in_fov = geometry::project_point(geometry::camera_pose_for(s.uav, cam), cam, s.target.pose.position()).in_frame;
  v.valid = v.in_fov && v.distance >= c.d_min && v.distance <= c.d_max(s.target.cls, tier);
  return v;
}

inline bool is_tracked(const sim::WorldState& s, const geometry::CameraModel& cam, const TrackingCriteria& c,
                       DistanceTier tier) {
  return check_tracking(s, cam, c, tier).valid;
}

/// 1-based index of the tolerance-th consecutive invalid step, if any.
template <class Range>
std::optional<int> detect_fatal_failure(const Range& valid, int tolerance) {
  if (tolerance < 1) throw Error("detect_fatal_failure: tolerance must be >= 1");
  int run = 0, i = 0;
  for (const auto v : valid) {
    ++i;
    run = v ? 0 : run + 1;
    if (run == tolerance) return i;
  }
  return std::nullopt;
}

struct StepRecord {
  double distance = 0.0;
  bool in_fov = false;
  bool valid = false;
  bool operator==(const StepRecord&) const = default;
};

struct EpisodeLog {
  int scenario_id = 0;
  Split map_split = Split::seen;
  Split prompt_split = Split::seen;
  TargetClass cls = TargetClass::pedestrian;
  DistanceTier tier = DistanceTier::suitable;
  std::string prompt;
  std::uint64_t seed = 0;
  int horizon = 0;
  std::vector<StepRecord> steps;  // one per control tick; zeros after a fatal failure
  std::optional<int> fatal_step;  // 1-based

  bool success() const { return !fatal_step.has_value(); }

  /// Valid steps strictly before the fatal step.
  int tracked_frames() const {
    const std::size_t end = fatal_step ? static_cast<std::size_t>(*fatal_step) : steps.size();
    int n = 0;
    for (std::size_t i = 0; i < std::min(end, steps.size()); ++i) n += steps[i].valid;
    return n;
  }
  bool operator==(const EpisodeLog&) const = default;
};

// ---------------------------------------------------------------------------
// Metrics

struct GroupKey {
  int scenario_id = 0;
  TargetClass cls = TargetClass::pedestrian;
  DistanceTier tier = DistanceTier::suitable;
  Split map_split = Split::seen;
  Split prompt_split = Split::seen;
  auto operator<=>(const GroupKey&) const = default;
};

struct GroupMetrics {
  GroupKey key;
  int episodes = 0;
  int successes = 0;
  long tracked_frames = 0;
  double sr = 0.0;
  double atf = 0.0;
};

struct MetricsReport {
  std::vector<GroupMetrics> groups;  // sorted by key
  GroupMetrics overall;
};

inline MetricsReport compute_metrics(std::span<const EpisodeLog> logs) {
  if (logs.empty()) throw Error("compute_metrics: no episode logs");
  std::map<GroupKey, GroupMetrics> acc;
  MetricsReport r;
  auto add = [](GroupMetrics& g, const EpisodeLog& l) {
    ++g.episodes;
    g.successes += l.success();
    g.tracked_frames += l.tracked_frames();
  };
  for (const auto& l : logs) {
    const GroupKey k{l.scenario_id, l.cls, l.tier, l.map_split, l.prompt_split};
    auto& g = acc[k];
    g.key = k;
    add(g, l);
    add(r.overall, l);
  }
  auto finish = [](GroupMetrics& g) {
    g.sr = static_cast<double>(g.successes) / g.episodes;
    g.atf = static_cast<double>(g.tracked_frames) / g.episodes;
  };
  for (auto& [k, g] : acc) {
    finish(g);
    r.groups.push_back(g);
  }
  finish(r.overall);
  return r;
}

// ---------------------------------------------------------------------------
// Policies

struct Observation {
  const sim::WorldState* world = nullptr;     // privileged; only the expert oracle reads it
  const std::vector<RasterFrame>* frames = nullptr;  // every vision frame so far, oldest first
  Eigen::Vector4d state = Eigen::Vector4d::Zero();   // S_t
  int tick = 0;
  double dt = 0.04;
};

class Policy {
 public:
  virtual ~Policy() = default;
  /// Chunk in the UAV yaw frame at the decision tick.
  virtual data::ActionChunk plan(const Observation& obs) = 0;
};

class ZeroPolicy : public Policy {
 public:
  data::ActionChunk plan(const Observation&) override { return {}; }
};

/// Looks ahead with the APF expert on a copy of the world. The simulator is
/// deterministic, so executing the chunk replays the expert exactly.
class ExpertPolicy : public Policy {
 public:
  ExpertPolicy(expert::ApfParams apf, GranularityProfile gran, std::uint64_t seed, int chunk_len = data::kChunkLen)
      : apf_(apf), gran_(gran), rng_(Rng(seed).fork(10)), k_(chunk_len) {}

  data::ActionChunk plan(const Observation& obs) override {
    sim::WorldState w = *obs.world;
    const double dt = obs.dt;
    std::vector<geometry::Pose6D> poses{w.uav};
    for (int i = 0; i < k_; ++i) {
      w = sim::step_world(w, expert::apf_command(w, w.anchor, apf_, gran_, rng_), dt);
      poses.push_back(w.uav);
    }
    return data::compute_action_chunk(poses, 0, k_);
  }

 private:
  expert::ApfParams apf_;
  GranularityProfile gran_;
  Rng rng_;
  int k_;
};

/// The learned policy: EMA weights, Euler sampling, grounding head unused.
class ModelPolicy : public Policy {
 public:
  ModelPolicy(std::shared_ptr<const model::Params<float>> params, model::ModelConfig cfg, data::NormStats norm,
              std::vector<int> tokens, std::uint64_t seed)
      : params_(std::move(params)), cfg_(cfg), norm_(norm), tokens_(std::move(tokens)), rng_(Rng(seed).fork(20)) {
    if (static_cast<int>(tokens_.size()) != cfg_.text_len) throw Error("ModelPolicy: token length mismatch");
    if (cfg_.chunk_len < 1) throw Error("ModelPolicy: bad chunk length");
  }

  data::ActionChunk plan(const Observation& obs) override {
    const auto& frames = *obs.frames;
    while (pre_.size() < frames.size()) pre_.push_back(model::frame_to_input(frames[pre_.size()], cfg_.preproc_size));
    std::vector<std::vector<float>> stack;
    const long t = static_cast<long>(pre_.size()) - 1;
    for (int j = cfg_.history_frames; j >= 0; --j)
      stack.push_back(t - j >= 0 ? pre_[static_cast<std::size_t>(t - j)] : std::vector<float>{});
    const model::ModelInput in = model::make_input(cfg_, std::move(stack), tokens_, obs.state, norm_);
    return model::sample_action_chunk(*params_, cfg_, in, norm_, rng_);
  }

 private:
  std::shared_ptr<const model::Params<float>> params_;
  model::ModelConfig cfg_;
  data::NormStats norm_;
  std::vector<int> tokens_;
  Rng rng_;
  std::vector<std::vector<float>> pre_;
};

// ---------------------------------------------------------------------------
// Closed loop

struct EvalEpisode {
  sim::EpisodeConfig config;
  std::string prompt;
  Split prompt_split = Split::seen;
};

/// Replans every replan_interval control ticks (whole chunks in open-loop
/// mode), executing chunk steps rotated into the current yaw frame. Validity
/// is logged after each tick; the run stops at a fatal failure and the
/// remaining ticks are logged as zero.
inline EpisodeLog run_closed_loop(Policy& policy, const EvalEpisode& ep, const std::vector<sim::Scenario>& presets,
                                  const TrackingCriteria& crit, const geometry::CameraModel& cam = {}) {
  crit.validate();
  sim::EpisodeConfig cfg = ep.config;
  cfg.horizon = crit.horizon;
  sim::WorldState w = sim::init_episode(cfg, presets);
  const double dt = cfg.dt();
  const int tpf = cfg.ticks_per_frame();

  EpisodeLog log;
  log.scenario_id = cfg.scenario_id;
  log.map_split = sim::find_scenario(presets, cfg.scenario_id).split;
  log.prompt_split = ep.prompt_split;
  log.cls = cfg.target_class;
  log.tier = cfg.distance_tier;
  log.prompt = ep.prompt;
  log.seed = cfg.seed;
  log.horizon = crit.horizon;
  log.steps.assign(static_cast<std::size_t>(crit.horizon), StepRecord{});

  std::vector<RasterFrame> frames;
  data::ActionChunk chunk;
  double decision_yaw = 0.0;
  int idx = 0;
  int run = 0;
  for (int tick = 0; tick < crit.horizon; ++tick) {
    if (tick % tpf == 0) frames.push_back(sim::render_raster(w, cam));
    const bool replan = crit.open_loop ? (tick == 0 || idx >= chunk.k()) : tick % crit.replan_interval == 0;
    if (replan) {
      Observation obs{&w, &frames, w.velocity, tick, dt};
      chunk = policy.plan(obs);
      if (chunk.steps.cols() != 4 || chunk.k() < 1) throw Error("run_closed_loop: policy returned a malformed chunk");
      if (!chunk.all_finite()) throw Error("run_closed_loop: policy returned non-finite actions");
      decision_yaw = w.uav.yaw;
      idx = 0;
    }
    const ActionStep a = data::chunk_step_in_current_frame(chunk, idx++, decision_yaw, w.uav.yaw);
    w = sim::step_world(w, a, dt);
    const Validity v = check_tracking(w, cam, crit, cfg.distance_tier);
    log.steps[static_cast<std::size_t>(tick)] = {v.distance, v.in_fov, v.valid};
    run = v.valid ? 0 : run + 1;
    if (run == crit.tolerance) {
      log.fatal_step = tick + 1;
      break;
    }
  }
  return log;
}

/// Deterministic evaluation plan over the scenarios of `map_split`, drawing
/// prompts of `prompt_split` that match the class and tier.
inline std::vector<EvalEpisode> plan_evaluation(std::size_t n, std::uint64_t seed, const sim::EpisodeConfig& base,
                                                const std::vector<sim::Scenario>& presets,
                                                const std::vector<language::PromptSpec>& prompts, Split map_split,
                                                Split prompt_split) {
  const auto scen = sim::scenario_ids(presets, map_split);
  if (scen.empty()) throw Error("plan_evaluation: no scenarios for split " + std::string(to_string(map_split)));
  auto cand = language::select_prompts(prompts, prompt_split, base.target_class, base.distance_tier);
  if (cand.empty()) cand = language::select_prompts(prompts, prompt_split, base.target_class);
  if (cand.empty()) throw Error("plan_evaluation: no prompts for this class");
  Rng rng = Rng(seed).fork(30);
  std::vector<EvalEpisode> out;
  for (std::size_t i = 0; i < n; ++i) {
    EvalEpisode e;
    e.config = base;
    e.config.scenario_id = scen[i % scen.size()];
    e.config.seed = rng.next_u64();
    e.prompt = prompts[cand[i % cand.size()]].text();
    e.prompt_split = prompt_split;
    out.push_back(std::move(e));
  }
  return out;
}

using PolicyFactory = std::function<std::unique_ptr<Policy>(const EvalEpisode&)>;

/// Evaluates every planned episode with a fresh policy; logs keep plan order.
inline std::vector<EpisodeLog> evaluate(const std::vector<EvalEpisode>& plan, const PolicyFactory& make_policy,
                                        const std::vector<sim::Scenario>& presets, const TrackingCriteria& crit,
                                        const geometry::CameraModel& cam = {}, int workers = 1) {
  std::vector<EpisodeLog> logs(plan.size());
  collect::parallel_for(plan.size(), workers, [&](std::size_t i) {
    auto policy = make_policy(plan[i]);
    logs[i] = run_closed_loop(*policy, plan[i], presets, crit, cam);
  });
  return logs;
}

// ---------------------------------------------------------------------------
// Reports

inline void write_metrics_csv(std::ostream& os, const MetricsReport& r) {
  os << "scenario,class,tier,map_split,prompt_split,episodes,successes,sr,atf\n";
  os << std::setprecision(10);
  for (const auto& g : r.groups)
    os << g.key.scenario_id << ',' << to_string(g.key.cls) << ',' << to_string(g.key.tier) << ','
       << to_string(g.key.map_split) << ',' << to_string(g.key.prompt_split) << ',' << g.episodes << ','
       << g.successes << ',' << g.sr << ',' << g.atf << '\n';
}

inline void write_metrics_table(std::ostream& os, const MetricsReport& r) {
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-12s %-9s %-6s %-6s %5s %7s %8s\n", "scenario", "class", "tier", "maps",
                "prompt", "n", "SR(%)", "ATF");
  os << line;
  for (const auto& g : r.groups) {
    std::snprintf(line, sizeof line, "%-8d %-12s %-9s %-6s %-6s %5d %7.2f %8.2f\n", g.key.scenario_id,
                  std::string(to_string(g.key.cls)).c_str(), std::string(to_string(g.key.tier)).c_str(),
                  std::string(to_string(g.key.map_split)).c_str(), std::string(to_string(g.key.prompt_split)).c_str(),
                  g.episodes, 100.0 * g.sr, g.atf);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-46s %5d %7.2f %8.2f\n", "all", r.overall.episodes, 100.0 * r.overall.sr,
                r.overall.atf);
  os << line;
}

inline nlohmann::json metrics_json(const MetricsReport& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups)
    groups.push_back({{"scenario", g.key.scenario_id},
                      {"class", to_string(g.key.cls)},
                      {"tier", to_string(g.key.tier)},
                      {"map_split", to_string(g.key.map_split)},
                      {"prompt_split", to_string(g.key.prompt_split)},
                      {"episodes", g.episodes},
                      {"successes", g.successes},
                      {"sr", g.sr},
                      {"atf", g.atf}});
  return {{"episodes", r.overall.episodes}, {"sr", r.overall.sr}, {"atf", r.overall.atf}, {"groups", groups}};
}

inline nlohmann::json log_json(const EpisodeLog& l) {
  std::string valid(l.steps.size(), '0');
  for (std::size_t i = 0; i < l.steps.size(); ++i) valid[i] = l.steps[i].valid ? '1' : '0';
  return {{"scenario", l.scenario_id},
          {"map_split", to_string(l.map_split)},
          {"prompt_split", to_string(l.prompt_split)},
          {"class", to_string(l.cls)},
          {"tier", to_string(l.tier)},
          {"prompt", l.prompt},
          {"seed", l.seed},
          {"horizon", l.horizon},
          {"fatal_step", l.fatal_step ? nlohmann::json(*l.fatal_step) : nlohmann::json(nullptr)},
          {"valid", valid}};
}

inline EpisodeLog log_from_json(const nlohmann::json& j) {
  EpisodeLog l;
  l.scenario_id = j.at("scenario").get<int>();
  l.map_split = parse_split(j.at("map_split").get<std::string>());
  l.prompt_split = parse_split(j.at("prompt_split").get<std::string>());
  l.cls = parse_target_class(j.at("class").get<std::string>());
  l.tier = parse_tier(j.at("tier").get<std::string>());
  l.prompt = j.at("prompt").get<std::string>();
  l.seed = j.at("seed").get<std::uint64_t>();
  l.horizon = j.at("horizon").get<int>();
  if (!j.at("fatal_step").is_null()) l.fatal_step = j.at("fatal_step").get<int>();
  for (char c : j.at("valid").get<std::string>()) {
    StepRecord s;
    s.valid = c == '1';
    s.in_fov = s.valid;
    l.steps.push_back(s);
  }
  return l;
}

// ---------------------------------------------------------------------------
// Prompt sensitivity

inline const std::array<std::string, 3> kSubstitutionCategories{"verb", "object", "distance"};

struct CategoryValue {
  double atf = 0.0;
  double sr = 0.0;
};

/// Per-scenario raw values: scenario -> category -> value.
using SensitivityInput = std::map<std::string, std::map<std::string, CategoryValue>>;

struct SensitivityTable {
  SensitivityInput raw;
  SensitivityInput normalized;                 // per scenario, divided by the scenario minimum
  std::map<std::string, CategoryValue> mean;  // normalized, averaged over scenarios
};

/// Divides every category value by the scenario's minimum for that metric,
/// then averages the normalized values over scenarios.
inline SensitivityTable sensitivity_normalize(const SensitivityInput& raw) {
  if (raw.empty()) throw Error("sensitivity_normalize: no scenarios");
  SensitivityTable t;
  t.raw = raw;
  for (const auto& [scenario, cats] : raw) {
    for (const auto& c : kSubstitutionCategories)
      if (!cats.count(c)) throw Error("sensitivity_normalize: scenario " + scenario + " lacks category '" + c + "'");
    double min_atf = std::numeric_limits<double>::infinity(), min_sr = min_atf;
    for (const auto& [c, v] : cats) {
      min_atf = std::min(min_atf, v.atf);
      min_sr = std::min(min_sr, v.sr);
    }
    if (!(min_atf > 0) || !(min_sr > 0))
      throw Error("sensitivity_normalize: degenerate baseline in scenario " + scenario);
    for (const auto& [c, v] : cats) {
      const CategoryValue n{v.atf / min_atf, v.sr / min_sr};
      t.normalized[scenario][c] = n;
      t.mean[c].atf += n.atf / static_cast<double>(raw.size());
      t.mean[c].sr += n.sr / static_cast<double>(raw.size());
    }
  }
  return t;
}

inline nlohmann::json sensitivity_json(const SensitivityTable& t) {
  auto dump = [](const std::map<std::string, CategoryValue>& m) {
    nlohmann::json j;
    for (const auto& [c, v] : m) j[c] = {{"atf", v.atf}, {"sr", v.sr}};
    return j;
  };
  nlohmann::json j;
  for (const auto& [s, m] : t.raw) j["raw"][s] = dump(m);
  for (const auto& [s, m] : t.normalized) j["normalized"][s] = dump(m);
  j["mean"] = dump(t.mean);
  return j;
}

/// Raw sensitivity input from evaluation logs of unseen prompts: each log's
/// substitution category comes from the prompt vocabulary.
inline SensitivityInput sensitivity_from_logs(std::span<const EpisodeLog> logs,
                                              const std::vector<language::PromptSpec>& prompts) {
  std::map<std::string, language::SubstitutionKind> kind;
  for (const auto& p : prompts)
    if (p.split == Split::unseen) kind[p.text()] = p.substitution_kind;
  std::map<std::string, std::map<std::string, std::vector<EpisodeLog>>> by;
  for (const auto& l : logs) {
    auto it = kind.find(l.prompt);
    if (it == kind.end()) continue;
    by[std::to_string(l.scenario_id)][std::string(language::to_string(it->second))].push_back(l);
  }
  SensitivityInput out;
  for (const auto& [s, cats] : by)
    for (const auto& [c, ls] : cats) {
      const MetricsReport r = compute_metrics(ls);
      out[s][c] = {r.overall.atf, r.overall.sr};
    }
  return out;
}

// ---------------------------------------------------------------------------
// Latency

struct LatencyStats {
  int trials = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
};

/// Mean and percentiles of per-trial wall-clock seconds.
inline LatencyStats summarize_latency(std::vector<double> t) {
  if (t.size() < 100) throw Error("latency_stats: n_trials must be >= 100");
  LatencyStats s;
  s.trials = static_cast<int>(t.size());
  for (double x : t) s.mean += x / static_cast<double>(t.size());
  std::sort(t.begin(), t.end());
  auto pct = [&](double q) { return t[static_cast<std::size_t>(q * static_cast<double>(t.size() - 1))]; };
  s.p50 = pct(0.5);
  s.p90 = pct(0.9);
  s.p99 = pct(0.99);
  return s;
}

/// Wall-clock seconds of fn() over n_trials calls after `warmup` untimed calls.
template <class Fn>
LatencyStats latency_stats(Fn&& fn, int n_trials, int warmup = 5) {
  if (n_trials < 100) throw Error("latency_stats: n_trials must be >= 100");
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> t(static_cast<std::size_t>(n_trials));
  for (auto& x : t) {
    const auto a = std::chrono::steady_clock::now();
    fn();
    x = std::chrono::duration<double>(std::chrono::steady_clock::now() - a).count();
  }
  return summarize_latency(std::move(t));
}

}  // namespace uavtrack::eval
