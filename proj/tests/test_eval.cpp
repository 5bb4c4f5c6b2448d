#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"

using namespace uavtrack;
using namespace uavtrack::eval;

namespace {

geometry::CameraModel level_camera() {
  geometry::CameraModel c;
  c.mount_offset = geometry::Vec3::Zero();
  c.mount_pitch = 0.0;
  return c;
}

sim::WorldState target_ahead(TargetClass cls, double x) {
  sim::WorldState w;
  w.uav.z = 1.0;
  w.target.cls = cls;
  w.target.pose.x = x;
  w.target.pose.z = 1.0;
  return w;
}

std::vector<bool> stream(std::initializer_list<std::pair<bool, int>> runs) {
  std::vector<bool> v;
  for (auto [b, n] : runs) v.insert(v.end(), static_cast<std::size_t>(n), b);
  return v;
}

}  // namespace

TEST(Tracking, DistanceBoundsAndFov) {
  const auto cam = level_camera();
  const TrackingCriteria c;
  EXPECT_TRUE(is_tracked(target_ahead(TargetClass::vehicle, 40.0), cam, c, DistanceTier::far));
  EXPECT_FALSE(is_tracked(target_ahead(TargetClass::vehicle, 41.0), cam, c, DistanceTier::far));
  EXPECT_TRUE(is_tracked(target_ahead(TargetClass::pedestrian, 15.0), cam, c, DistanceTier::suitable));
  EXPECT_FALSE(is_tracked(target_ahead(TargetClass::pedestrian, 15.5), cam, c, DistanceTier::suitable));
  EXPECT_FALSE(is_tracked(target_ahead(TargetClass::pedestrian, -5.0), cam, c, DistanceTier::suitable));
  TrackingCriteria near = c;
  near.d_min = 6.0;
  EXPECT_FALSE(is_tracked(target_ahead(TargetClass::pedestrian, 5.0), cam, near, DistanceTier::suitable));
  EXPECT_DOUBLE_EQ(c.d_max(TargetClass::two_wheeler, DistanceTier::close), 25.0);
  near.d_min = 50;
  EXPECT_THROW(near.validate(), Error);
}

TEST(FatalFailure, Examples) {
  EXPECT_EQ(detect_fatal_failure(stream({{true, 100}, {false, 15}}), 15), 115);
  std::vector<bool> resets;
  for (int i = 0; i < 20; ++i) {
    auto s = stream({{false, 14}, {true, 1}});
    resets.insert(resets.end(), s.begin(), s.end());
  }
  EXPECT_FALSE(detect_fatal_failure(resets, 15).has_value());
  EXPECT_FALSE(detect_fatal_failure(stream({{true, 500}}), 15).has_value());
  EXPECT_EQ(detect_fatal_failure(stream({{false, 1}}), 1), 1);
  EXPECT_THROW(detect_fatal_failure(stream({{true, 1}}), 0), Error);
}

TEST(FatalFailure, MatchesWindowOracle) {
  const auto eps = oracle::random_episodes(500, 300, 3);
  for (int tau : {1, 5, 15, 30})
    for (const auto& e : eps) ASSERT_EQ(detect_fatal_failure(e.valid, tau), oracle::fatal_by_windows(e.valid, tau));
}

TEST(Metrics, Examples) {
  oracle::RawEpisode a, b;
  a.valid = stream({{true, 100}, {false, 15}, {true, 385}});
  b.valid = stream({{true, 500}});
  const std::vector<EpisodeLog> logs{oracle::to_log(a, 15), oracle::to_log(b, 15)};
  EXPECT_EQ(logs[0].tracked_frames(), 100);
  const MetricsReport r = compute_metrics(logs);
  EXPECT_DOUBLE_EQ(r.overall.sr, 0.5);
  EXPECT_DOUBLE_EQ(r.overall.atf, 300.0);
  EXPECT_THROW(compute_metrics(std::vector<EpisodeLog>{}), Error);
}

TEST(Metrics, EqualsBruteForceOracle) {
  const int tau = 15;
  const auto eps = oracle::random_episodes(1000, 500, 11);
  std::vector<EpisodeLog> logs;
  for (const auto& e : eps) logs.push_back(oracle::to_log(e, tau));
  const MetricsReport r = compute_metrics(logs);
  const oracle::Totals t = oracle::brute_force(eps, tau);
  EXPECT_EQ(r.overall.successes, t.successes);
  EXPECT_EQ(r.overall.tracked_frames, t.tracked);
  EXPECT_EQ(r.overall.sr, static_cast<double>(t.successes) / 1000);
  EXPECT_EQ(r.overall.atf, static_cast<double>(t.tracked) / 1000);
  int total = 0;
  for (const auto& g : r.groups) {
    std::vector<oracle::RawEpisode> sub;
    for (const auto& e : eps)
      if (e.key == g.key) sub.push_back(e);
    const oracle::Totals gt = oracle::brute_force(sub, tau);
    EXPECT_EQ(g.successes, gt.successes);
    EXPECT_EQ(g.atf, static_cast<double>(gt.tracked) / gt.episodes);
    EXPECT_GE(g.sr, 0.0);
    EXPECT_LE(g.atf, 500.0);
    total += g.episodes;
  }
  EXPECT_EQ(total, 1000);
}

TEST(Metrics, AtfMonotoneInTolerance) {
  const auto eps = oracle::random_episodes(300, 300, 5);
  double prev = -1;
  for (int tau = 1; tau <= 40; ++tau) {
    std::vector<EpisodeLog> logs;
    for (const auto& e : eps) logs.push_back(oracle::to_log(e, tau));
    const double atf = compute_metrics(logs).overall.atf;
    EXPECT_GE(atf, prev);
    prev = atf;
  }
}

TEST(ClosedLoop, ExpertSucceedsAndIsDeterministic) {
  EvalEpisode ep;
  ep.config.target_class = TargetClass::pedestrian;
  ep.config.scenario_id = 0;
  ep.config.seed = 21;
  TrackingCriteria c;
  c.horizon = 200;
  expert::ApfParams apf;
  apf.noise_amplitude = 0.0;
  ExpertPolicy a(apf, {}, 1), b(apf, {}, 1);
  const EpisodeLog la = run_closed_loop(a, ep, sim::default_scenarios(), c);
  const EpisodeLog lb = run_closed_loop(b, ep, sim::default_scenarios(), c);
  EXPECT_TRUE(la.success());
  EXPECT_EQ(la, lb);
  EXPECT_EQ(la.steps.size(), 200u);
  EXPECT_GT(la.tracked_frames(), 150);
}

TEST(ClosedLoop, ZeroPolicyLosesVehicle) {
  EvalEpisode ep;
  ep.config.target_class = TargetClass::vehicle;
  ep.config.distance_tier = DistanceTier::close;
  ep.config.seed = 4;
  ZeroPolicy z;
  const EpisodeLog l = run_closed_loop(z, ep, sim::default_scenarios(), TrackingCriteria{});
  ASSERT_TRUE(l.fatal_step.has_value());
  EXPECT_LT(*l.fatal_step, 500);
  // Steps after the failure are zero.
  for (std::size_t i = static_cast<std::size_t>(*l.fatal_step); i < l.steps.size(); ++i)
    EXPECT_FALSE(l.steps[i].valid);
}

TEST(ClosedLoop, MalformedPolicyRejected) {
  struct Bad : Policy {
    data::ActionChunk plan(const Observation&) override {
      data::ActionChunk c;
      c.steps(0, 0) = NAN;
      return c;
    }
  } bad;
  EXPECT_THROW(run_closed_loop(bad, EvalEpisode{}, sim::default_scenarios(), TrackingCriteria{}), Error);
}

TEST(Evaluate, ParallelMatchesSerial) {
  const auto prompts = language::generate_vocabulary(0);
  sim::EpisodeConfig base;
  const auto plan = plan_evaluation(6, 9, base, sim::default_scenarios(), prompts, Split::unseen, Split::unseen);
  for (const auto& e : plan) EXPECT_GE(e.config.scenario_id, 5);
  TrackingCriteria c;
  c.horizon = 60;
  PolicyFactory f = [](const EvalEpisode&) { return std::make_unique<ZeroPolicy>(); };
  const auto serial = evaluate(plan, f, sim::default_scenarios(), c, {}, 1);
  const auto par = evaluate(plan, f, sim::default_scenarios(), c, {}, 3);
  EXPECT_EQ(serial, par);
  std::ostringstream csv, txt;
  const MetricsReport r = compute_metrics(serial);
  write_metrics_csv(csv, r);
  write_metrics_table(txt, r);
  EXPECT_EQ(csv.str().substr(0, 8), "scenario");
  EXPECT_NE(txt.str().find("all"), std::string::npos);
  const auto j = metrics_json(r);
  EXPECT_EQ(j.at("episodes").get<int>(), 6);
  const EpisodeLog back = log_from_json(log_json(serial[0]));
  EXPECT_EQ(back.tracked_frames(), serial[0].tracked_frames());
  EXPECT_EQ(back.fatal_step, serial[0].fatal_step);
}

TEST(Sensitivity, DivisionExample) {
  const SensitivityInput raw{{"0", {{"object", {146, 0.5}}, {"verb", {130, 0.5}}, {"distance", {196, 0.5}}}}};
  const SensitivityTable t = sensitivity_normalize(raw);
  EXPECT_NEAR(t.normalized.at("0").at("object").atf, 1.1231, 5e-5);
  EXPECT_EQ(t.normalized.at("0").at("verb").atf, 1.0);
  EXPECT_NEAR(t.normalized.at("0").at("distance").atf, 1.5077, 5e-5);
  EXPECT_EQ(t.normalized.at("0").at("distance").sr, 1.0);
}

TEST(Sensitivity, MinimumIsOneAndErrors) {
  Rng rng(2);
  SensitivityInput raw;
  for (int s = 0; s < 5; ++s)
    for (const auto& c : kSubstitutionCategories) raw[std::to_string(s)][c] = {rng.uniform(1, 300), rng.uniform(0.01, 1)};
  const SensitivityTable t = sensitivity_normalize(raw);
  for (const auto& [s, cats] : t.normalized) {
    double ma = 1e9, ms = 1e9;
    for (const auto& [c, v] : cats) {
      ma = std::min(ma, v.atf);
      ms = std::min(ms, v.sr);
    }
    EXPECT_EQ(ma, 1.0);
    EXPECT_EQ(ms, 1.0);
  }
  raw["0"]["verb"].atf = 0.0;
  EXPECT_THROW(sensitivity_normalize(raw), Error);
  raw["0"].erase("verb");
  EXPECT_THROW(sensitivity_normalize(raw), Error);
}

TEST(Latency, RequiresEnoughTrials) {
  EXPECT_THROW(latency_stats([] {}, 0), Error);
  const LatencyStats s = latency_stats([] {}, 100);
  EXPECT_EQ(s.trials, 100);
  EXPECT_LE(s.p50, s.p99);
}
