#pragma once

// Independent reference implementations used to cross-check the library.

#include <optional>
#include <vector>

#include "uavtrack/eval.hpp"

namespace oracle {

/// First 1-based step t such that steps t-tau+1..t are all invalid, found by
/// scanning every window.
inline std::optional<int> fatal_by_windows(const std::vector<bool>& valid, int tau) {
  const int n = static_cast<int>(valid.size());
  for (int end = tau; end <= n; ++end) {
    bool all_invalid = true;
    for (int i = end - tau; i < end; ++i) all_invalid = all_invalid && !valid[static_cast<std::size_t>(i)];
    if (all_invalid) return end;
  }
  return std::nullopt;
}

struct RawEpisode {
  uavtrack::eval::GroupKey key;
  std::vector<bool> valid;  // per control tick, before any zeroing
};

struct Totals {
  int episodes = 0;
  int successes = 0;
  long tracked = 0;
};

/// SR and ATF per frame: I_track(i, t) = valid(i, t) and no fatal failure
/// at or before t.
inline Totals brute_force(const std::vector<RawEpisode>& eps, int tau) {
  Totals t;
  for (const auto& e : eps) {
    ++t.episodes;
    bool failed = false;
    int run = 0;
    for (std::size_t i = 0; i < e.valid.size(); ++i) {
      run = e.valid[i] ? 0 : run + 1;
      if (run >= tau) failed = true;
      if (!failed && e.valid[i]) ++t.tracked;
    }
    t.successes += !failed;
  }
  return t;
}

/// The log the closed-loop runner would record for a raw validity stream.
inline uavtrack::eval::EpisodeLog to_log(const RawEpisode& e, int tau) {
  uavtrack::eval::EpisodeLog l;
  l.scenario_id = e.key.scenario_id;
  l.cls = e.key.cls;
  l.tier = e.key.tier;
  l.map_split = e.key.map_split;
  l.prompt_split = e.key.prompt_split;
  l.horizon = static_cast<int>(e.valid.size());
  l.fatal_step = uavtrack::eval::detect_fatal_failure(e.valid, tau);
  l.steps.resize(e.valid.size());
  const std::size_t stop = l.fatal_step ? static_cast<std::size_t>(*l.fatal_step) : e.valid.size();
  for (std::size_t i = 0; i < stop; ++i) l.steps[i].valid = l.steps[i].in_fov = e.valid[i];
  return l;
}

/// Random validity streams with bursty invalid runs around the tolerance.
inline std::vector<RawEpisode> random_episodes(int n, int horizon, std::uint64_t seed) {
  uavtrack::Rng rng(seed);
  std::vector<RawEpisode> out;
  for (int i = 0; i < n; ++i) {
    RawEpisode e;
    e.key.scenario_id = static_cast<int>(rng.index(8));
    e.key.cls = static_cast<uavtrack::TargetClass>(rng.index(3));
    e.key.tier = static_cast<uavtrack::DistanceTier>(rng.index(3));
    e.key.map_split = e.key.scenario_id < 5 ? uavtrack::Split::seen : uavtrack::Split::unseen;
    e.key.prompt_split = static_cast<uavtrack::Split>(rng.index(2));
    const double p_bad = rng.uniform(0.0, 0.2);
    while (static_cast<int>(e.valid.size()) < horizon) {
      if (rng.uniform01() < p_bad) {
        const int run = 1 + static_cast<int>(rng.index(20));
        for (int k = 0; k < run && static_cast<int>(e.valid.size()) < horizon; ++k) e.valid.push_back(false);
      } else {
        e.valid.push_back(true);
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace oracle
