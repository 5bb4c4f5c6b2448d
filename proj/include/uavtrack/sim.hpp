#pragma once

// Deterministic kinematic tracking world: episode initialization, agent
// motion, UAV displacement integration and rectangle-raster rendering.

#include <algorithm>
#include <optional>
#include <vector>

#include "uavtrack/anchor.hpp"
#include "uavtrack/geometry.hpp"
#include "uavtrack/raster.hpp"
#include "uavtrack/scenario.hpp"
#include "uavtrack/types.hpp"

namespace uavtrack::sim {

using geometry::Pose6D;
using geometry::Vec3;

struct EpisodeConfig {
  int scenario_id = 0;
  TargetClass target_class = TargetClass::pedestrian;
  DistanceTier distance_tier = DistanceTier::suitable;
  std::uint64_t seed = 0;
  int horizon = 500;
  int control_hz = 25;
  int vision_hz = 5;
  int n_vehicles = 6;
  int n_pedestrians = 4;
  std::optional<Sector> sector;  // drawn uniformly when unset
  bool weather_noise = false;

  double dt() const { return 1.0 / control_hz; }
  int ticks_per_frame() const { return control_hz / vision_hz; }

  void validate() const {
    if (horizon <= 0) throw Error("EpisodeConfig: horizon must be positive");
    if (control_hz <= 0 || vision_hz <= 0) throw Error("EpisodeConfig: rates must be positive");
    if (control_hz % vision_hz != 0) throw Error("EpisodeConfig: control_hz must be divisible by vision_hz");
    if (n_vehicles < 0 || n_pedestrians < 0) throw Error("EpisodeConfig: distractor counts must be >= 0");
  }
  bool operator==(const EpisodeConfig&) const = default;
};

struct WeatherParams {
  double cloudiness = 0.0;     // [0, 35]
  double precipitation = 0.0;  // [0, 40]
  double deposits = 0.0;       // [0, 30]
  double wind = 0.0;           // [0, 10]
  double fog_density = 0.0;    // [0, 30]
  double fog_distance = 100.0; // [100, 200] m
  double wetness = 0.0;        // [0, 10]
  double sun_azimuth = 0.0;    // [0, 360] deg
  double sun_altitude = 45.0;  // [-5, 90] deg
  bool operator==(const WeatherParams&) const = default;
};

inline WeatherParams sample_weather(Rng& rng) {
  WeatherParams w;
  w.cloudiness = rng.uniform(0.0, 35.0);
  w.precipitation = rng.uniform(0.0, 40.0);
  w.deposits = rng.uniform(0.0, 30.0);
  w.wind = rng.uniform(0.0, 10.0);
  w.fog_density = rng.uniform(0.0, 30.0);
  w.fog_distance = rng.uniform(100.0, 200.0);
  w.wetness = rng.uniform(0.0, 10.0);
  w.sun_azimuth = rng.uniform(0.0, 360.0);
  w.sun_altitude = rng.uniform(-5.0, 90.0);
  return w;
}

struct Extent {
  double length = 0.0, width = 0.0, height = 0.0;
};

inline Extent extent_of(TargetClass c) {
  switch (c) {
    case TargetClass::vehicle: return {4.5, 1.9, 1.5};
    case TargetClass::two_wheeler: return {2.0, 0.8, 1.6};
    case TargetClass::pedestrian: return {0.5, 0.5, 1.8};
  }
  return {};
}

inline double speed_ceiling(TargetClass c) { return c == TargetClass::pedestrian ? 3.0 : 70.0; }

/// Cruise-speed ranges and motion noise used when spawning agents.
struct MotionProfile {
  double lo = 0.0, hi = 0.0;
  double turn_rate = 0.0;    // rad/s
  double speed_noise = 0.0;  // m/s per sqrt(s)
};

inline MotionProfile motion_profile(TargetClass c) {
  switch (c) {
    case TargetClass::vehicle: return {6.0, 12.0, 0.6, 0.4};
    case TargetClass::two_wheeler: return {4.0, 8.0, 0.8, 0.3};
    case TargetClass::pedestrian: return {1.7, 2.3, 1.5, 0.1};
  }
  return {};
}

struct AgentState {
  Pose6D pose;  // position is the geometric center
  double speed = 0.0;
  double cruise_speed = 0.0;
  double max_turn_rate = 1.0;
  double speed_noise = 0.0;
  TargetClass cls = TargetClass::pedestrian;
  Lane waypoints;
  std::size_t next_waypoint = 0;

  Vec3 top() const { return {pose.x, pose.y, pose.z + 0.5 * extent_of(cls).height}; }
  bool operator==(const AgentState&) const = default;
};

struct WorldState {
  int t = 0;
  Pose6D uav;
  Eigen::Vector4d velocity = Eigen::Vector4d::Zero();  // S_t = [vx, vy, vz, yaw rate], body frame
  AgentState target;
  std::vector<AgentState> distractors;
  std::vector<Obstacle> obstacles;
  WeatherParams weather;
  AnchorOffset anchor;
  int scenario_id = 0;
  std::uint64_t render_seed = 0;
  bool weather_noise = false;
  Rng rng;

  bool operator==(const WorldState&) const = default;
};

/// World pose of the collection anchor for the current target pose.
inline Pose6D anchor_world_pose(const AgentState& target, const AnchorOffset& anchor) {
  const double heading = wrap_angle(target.pose.yaw - anchor.yaw);
  const double c = std::cos(heading), s = std::sin(heading);
  const double ox = anchor.x, oy = -anchor.y;
  Pose6D p;
  p.x = target.pose.x + c * ox - s * oy;
  p.y = target.pose.y + s * ox + c * oy;
  p.z = target.top().z() + anchor.z;
  p.yaw = heading;
  return p;
}

namespace detail {

inline AgentState spawn_on_lane(const Scenario& sc, TargetClass cls, Rng& rng) {
  AgentState a;
  a.cls = cls;
  const Lane& lane = sc.lanes[rng.index(sc.lanes.size())];
  a.waypoints = lane;
  const std::size_t seg = rng.index(lane.size());
  const std::size_t nxt = (seg + 1) % lane.size();
  const double f = rng.uniform01();
  const Eigen::Vector2d p = lane[seg] + f * (lane[nxt] - lane[seg]);
  const Eigen::Vector2d d = lane[nxt] - lane[seg];
  a.pose.x = p.x();
  a.pose.y = p.y();
  a.pose.z = 0.5 * extent_of(cls).height;
  a.pose.yaw = std::atan2(d.y(), d.x());
  a.next_waypoint = nxt;
  const MotionProfile mp = motion_profile(cls);
  a.cruise_speed = rng.uniform(mp.lo, mp.hi);
  a.speed = a.cruise_speed;
  a.max_turn_rate = mp.turn_rate;
  a.speed_noise = mp.speed_noise;
  return a;
}

}  // namespace detail

/// Waypoint following with bounded turn rate and mean-reverting speed noise.
inline AgentState target_motion_step(const AgentState& agent, double dt, Rng& rng) {
  AgentState a = agent;
  const double noise = rng.normal();
  if (!a.waypoints.empty() && a.speed > 0.0) {
    const Eigen::Vector2d wp = a.waypoints[a.next_waypoint % a.waypoints.size()];
    const double desired = std::atan2(wp.y() - a.pose.y, wp.x() - a.pose.x);
    const double err = wrap_angle(desired - a.pose.yaw);
    const double limit = a.max_turn_rate * dt;
    a.pose.yaw = wrap_angle(a.pose.yaw + std::clamp(err, -limit, limit));
  }
  a.pose.x += a.speed * dt * std::cos(a.pose.yaw);
  a.pose.y += a.speed * dt * std::sin(a.pose.yaw);
  if (!a.waypoints.empty()) {
    const Eigen::Vector2d wp = a.waypoints[a.next_waypoint % a.waypoints.size()];
    const double reach = std::max(1.0, a.max_turn_rate > 0.0 ? a.speed / a.max_turn_rate : 1.0);
    if ((wp - Eigen::Vector2d(a.pose.x, a.pose.y)).norm() < reach)
      a.next_waypoint = (a.next_waypoint + 1) % a.waypoints.size();
  }
  a.speed += 0.8 * (a.cruise_speed - a.speed) * dt + a.speed_noise * std::sqrt(dt) * noise;
  a.speed = std::clamp(a.speed, 0.0, speed_ceiling(a.cls));
  return a;
}

inline WorldState init_episode(const EpisodeConfig& cfg,
                               const std::vector<Scenario>& presets = default_scenarios()) {
  cfg.validate();
  const Scenario& sc = find_scenario(presets, cfg.scenario_id);
  Rng root(cfg.seed);
  Rng spawn = root.fork(1);
  Rng weather_rng = root.fork(2);

  WorldState w;
  w.scenario_id = cfg.scenario_id;
  w.rng = root.fork(3);
  w.render_seed = root.fork(4).next_u64();
  w.weather_noise = cfg.weather_noise;
  w.weather = sample_weather(weather_rng);
  w.obstacles = sc.obstacles;

  w.target = detail::spawn_on_lane(sc, cfg.target_class, spawn);
  const Sector sector = cfg.sector ? *cfg.sector : static_cast<Sector>(spawn.index(3));
  w.anchor = expert::sample_initial_offset(cfg.target_class, cfg.distance_tier, sector, spawn);
  w.uav = anchor_world_pose(w.target, w.anchor);

  auto place = [&](TargetClass cls) {
    AgentState best;
    double best_d = -1.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      AgentState a = detail::spawn_on_lane(sc, cls, spawn);
      const double d = (a.pose.position() - w.uav.position()).norm();
      if (d >= 5.0) return a;
      if (d > best_d) {
        best_d = d;
        best = a;
      }
    }
    // Every lane point is close to the UAV; push the agent out radially.
    Vec3 dir = best.pose.position() - w.uav.position();
    dir.z() = 0.0;
    if (dir.norm() < 1e-9) dir = Vec3::UnitX();
    const Vec3 p = w.uav.position() + dir.normalized() * 5.0;
    best.pose.x = p.x();
    best.pose.y = p.y();
    return best;
  };
  for (int i = 0; i < cfg.n_vehicles; ++i)
    w.distractors.push_back(place(i % 3 == 2 ? TargetClass::two_wheeler : TargetClass::vehicle));
  for (int i = 0; i < cfg.n_pedestrians; ++i) w.distractors.push_back(place(TargetClass::pedestrian));
  return w;
}

/// Applies one control tick: displacement in the UAV yaw frame, then yaw
/// increment, then all agents advance.
inline WorldState step_world(const WorldState& state, const ActionStep& a, double dt) {
  if (!std::isfinite(a.dx) || !std::isfinite(a.dy) || !std::isfinite(a.dz) || !std::isfinite(a.dpsi))
    throw Error("step_world: non-finite action");
  WorldState w = state;
  const double c = std::cos(w.uav.yaw), s = std::sin(w.uav.yaw);
  w.uav.x += c * a.dx - s * a.dy;
  w.uav.y += s * a.dx + c * a.dy;
  const double new_z = std::max(0.0, w.uav.z + a.dz);
  const double actual_dz = new_z - w.uav.z;
  w.uav.z = new_z;
  w.uav.yaw = wrap_angle(w.uav.yaw + a.dpsi);
  w.velocity = {a.dx / dt, a.dy / dt, actual_dz / dt, a.dpsi / dt};
  w.target = target_motion_step(w.target, dt, w.rng);
  for (auto& d : w.distractors) d = target_motion_step(d, dt, w.rng);
  ++w.t;
  return w;
}

struct RenderOptions {
  double target_intensity = 255.0;
  double pedestrian_intensity = 150.0;
  double two_wheeler_intensity = 130.0;
  double vehicle_intensity = 110.0;
  double obstacle_intensity = 70.0;
  double max_noise = 12.0;  // intensity levels at fog_density 30
};

namespace detail {

struct Box {
  double depth, u0, u1, v0, v1, intensity;
};

inline std::optional<Box> project_box(const Pose6D& cam_pose, const geometry::CameraModel& cam, const Vec3& center,
                                      double visible_width, double height, double intensity) {
  const Vec3 ego = geometry::world_to_ego(cam_pose, center);
  if (ego.x() <= 0.1) return std::nullopt;
  const geometry::Projection pr = geometry::project_ego(cam, ego);
  const double f = cam.focal_px();
  const double hw = 0.5 * f * visible_width / pr.depth;
  const double hh = 0.5 * f * height / pr.depth;
  Box b{pr.depth, pr.u - hw, pr.u + hw, pr.v - hh, pr.v + hh, intensity};
  if (b.u1 <= 0.0 || b.u0 >= cam.width || b.v1 <= 0.0 || b.v0 >= cam.height) return std::nullopt;
  return b;
}

inline double visible_width(const AgentState& a, double cam_yaw) {
  const Extent e = extent_of(a.cls);
  const double phi = a.pose.yaw - cam_yaw;
  return std::abs(e.length * std::sin(phi)) + std::abs(e.width * std::cos(phi));
}

}  // namespace detail

/// Rectangle raster of the scene: far-to-near painter's order with
/// fractional pixel coverage. Pure function of the state.
inline RasterFrame render_raster(const WorldState& state, const geometry::CameraModel& cam,
                                 const RenderOptions& opt = {}) {
  const Pose6D cp = geometry::camera_pose_for(state.uav, cam);
  std::vector<detail::Box> boxes;
  auto add_agent = [&](const AgentState& a, double intensity) {
    if (auto b = detail::project_box(cp, cam, a.pose.position(), detail::visible_width(a, cp.yaw),
                                     extent_of(a.cls).height, intensity))
      boxes.push_back(*b);
  };
  add_agent(state.target, opt.target_intensity);
  for (const auto& d : state.distractors) {
    const double in = d.cls == TargetClass::pedestrian    ? opt.pedestrian_intensity
                      : d.cls == TargetClass::two_wheeler ? opt.two_wheeler_intensity
                                                          : opt.vehicle_intensity;
    add_agent(d, in);
  }
  for (const auto& o : state.obstacles) {
    const Vec3 c(o.position.x(), o.position.y(), 0.5 * o.height);
    if (auto b = detail::project_box(cp, cam, c, 2.0 * o.radius, o.height, opt.obstacle_intensity))
      boxes.push_back(*b);
  }
  std::stable_sort(boxes.begin(), boxes.end(), [](const auto& a, const auto& b) { return a.depth > b.depth; });

  std::vector<double> acc(static_cast<std::size_t>(cam.width) * cam.height, 0.0);
  for (const auto& b : boxes) {
    const int c0 = std::max(0, static_cast<int>(std::floor(b.u0)));
    const int c1 = std::min(cam.width, static_cast<int>(std::ceil(b.u1)));
    const int r0 = std::max(0, static_cast<int>(std::floor(b.v0)));
    const int r1 = std::min(cam.height, static_cast<int>(std::ceil(b.v1)));
    for (int r = r0; r < r1; ++r) {
      const double cy = std::min<double>(r + 1, b.v1) - std::max<double>(r, b.v0);
      if (cy <= 0.0) continue;
      for (int c = c0; c < c1; ++c) {
        const double cx = std::min<double>(c + 1, b.u1) - std::max<double>(c, b.u0);
        if (cx <= 0.0) continue;
        const double cov = cx * cy;
        double& px = acc[static_cast<std::size_t>(r) * cam.width + c];
        px = px * (1.0 - cov) + b.intensity * cov;
      }
    }
  }

  RasterFrame frame(cam.width, cam.height);
  const double amp = state.weather_noise ? opt.max_noise * state.weather.fog_density / 30.0 : 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    double v = acc[i];
    if (amp > 0.0) {
      const std::uint64_t h = splitmix64(state.render_seed ^ splitmix64(static_cast<std::uint64_t>(state.t) * 1000003u + i));
      v += amp * (2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0);
    }
    frame.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return frame;
}

}  // namespace uavtrack::sim
