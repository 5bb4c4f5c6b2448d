#pragma once

// Automated demonstration collection: the APF expert flies the simulator and
// every tick is recorded into an EpisodeRecord.

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "uavtrack/data.hpp"
#include "uavtrack/expert.hpp"
#include "uavtrack/language.hpp"

namespace uavtrack::collect {

struct CollectOptions {
  expert::ApfParams apf;
  GranularityProfile granularity;
  geometry::CameraModel camera;
  sim::RenderOptions render;
};

/// Runs one expert episode. Control ticks are recorded before the action is
/// applied; a vision tick is taken every ticks_per_frame control ticks.
inline data::EpisodeRecord collect_episode(const sim::EpisodeConfig& cfg, const std::vector<sim::Scenario>& presets,
                                           const std::string& prompt, std::uint32_t task_index,
                                           std::uint32_t episode_index, const CollectOptions& opt = {}) {
  opt.apf.validate();
  opt.camera.validate();
  sim::WorldState w = sim::init_episode(cfg, presets);
  Rng expert_rng = Rng(cfg.seed).fork(10);
  const double dt = cfg.dt();
  const int tpf = cfg.ticks_per_frame();

  data::EpisodeRecord rec;
  rec.config = cfg;
  rec.weather = w.weather;
  rec.prompt = prompt;
  rec.task_index = task_index;
  rec.episode_index = episode_index;
  rec.frame_width = opt.camera.width;
  rec.frame_height = opt.camera.height;
  rec.control.reserve(static_cast<std::size_t>(cfg.horizon));

  std::vector<geometry::Pose6D> poses;
  poses.reserve(static_cast<std::size_t>(cfg.horizon) + 1);
  auto rel = [&](const sim::WorldState& s) {
    const auto p = geometry::relative_pose(geometry::camera_pose_for(s.uav, opt.camera), s.target.pose);
    return data::Vec4f(static_cast<float>(p.dx), static_cast<float>(p.dy), static_cast<float>(p.dz),
                       static_cast<float>(p.dpsi));
  };

  for (int tick = 0; tick < cfg.horizon; ++tick) {
    const data::Vec4f pose = rel(w);
    const data::Vec4f state = w.velocity.cast<float>();
    if (tick % tpf == 0) {
      data::VisionTick v;
      v.control_tick = static_cast<std::uint32_t>(tick);
      v.timestamp = static_cast<float>(tick * dt);
      v.state = state;
      v.pose = pose;
      v.frame = sim::render_raster(w, opt.camera, opt.render);
      rec.vision.push_back(std::move(v));
    }
    const ActionStep a = expert::apf_command(w, w.anchor, opt.apf, opt.granularity, expert_rng);
    data::ControlTick ct;
    ct.position = data::Vec4f(static_cast<float>(w.uav.x), static_cast<float>(w.uav.y), static_cast<float>(w.uav.z),
                              static_cast<float>(w.uav.yaw));
    ct.state = state;
    ct.action = a.as_vector().cast<float>();
    ct.pose = pose;
    rec.control.push_back(ct);
    poses.push_back(w.uav);
    w = sim::step_world(w, a, dt);
  }
  poses.push_back(w.uav);
  for (auto& v : rec.vision)
    v.chunk = data::compute_action_chunk(poses, static_cast<int>(v.control_tick), rec.chunk_len).steps.cast<float>();
  return rec;
}

struct PlannedEpisode {
  sim::EpisodeConfig config;
  std::size_t prompt_index = 0;  // into the prompt vocabulary
};

/// Deterministic plan: scenarios of `split` are cycled, the prompt is drawn
/// from seen prompts matching (class, tier), seeds derive from `seed`.
inline std::vector<PlannedEpisode> plan_collection(std::size_t n, std::uint64_t seed, const sim::EpisodeConfig& base,
                                                   const std::vector<sim::Scenario>& presets,
                                                   const std::vector<language::PromptSpec>& prompts,
                                                   Split split = Split::seen) {
  const auto scen = sim::scenario_ids(presets, split);
  if (scen.empty()) throw Error("plan_collection: no scenarios for split " + std::string(to_string(split)));
  const auto candidates = language::select_prompts(prompts, Split::seen, base.target_class, base.distance_tier);
  if (candidates.empty()) throw Error("plan_collection: no prompts for this class and tier");
  Rng rng(seed);
  std::vector<PlannedEpisode> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PlannedEpisode p;
    p.config = base;
    p.config.scenario_id = scen[i % scen.size()];
    p.config.seed = rng.next_u64();
    p.prompt_index = candidates[rng.index(candidates.size())];
    out.push_back(p);
  }
  return out;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t nw = std::max<std::size_t>(1, std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers))));
  if (nw == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < nw; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; !failed && (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
          failed = true;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

inline std::vector<data::EpisodeRecord> collect_episodes(const std::vector<PlannedEpisode>& plan,
                                                         const std::vector<sim::Scenario>& presets,
                                                         const std::vector<language::PromptSpec>& prompts,
                                                         const CollectOptions& opt = {}, int workers = 1) {
  std::vector<data::EpisodeRecord> out(plan.size());
  parallel_for(plan.size(), workers, [&](std::size_t i) {
    const auto& p = plan[i];
    out[i] = collect_episode(p.config, presets, prompts.at(p.prompt_index).text(),
                             static_cast<std::uint32_t>(p.prompt_index), static_cast<std::uint32_t>(i), opt);
  });
  return out;
}

}  // namespace uavtrack::collect
