#pragma once

// APF expert used for automated data collection: anchor regression with
// random perturbations, obstacle repulsion and a ground guard, quantized to
// the per-class control granularity.

#include <vector>

#include "uavtrack/anchor.hpp"
#include "uavtrack/sim.hpp"

namespace uavtrack::expert {

struct ApfParams {
  double regression_coeff = 0.6;
  double max_repulse = 1.5;
  double min_altitude = 0.1;
  double margin_pedestrian = 0.35;
  double margin_vehicle = 0.5;
  double margin_other = 0.15;
  double noise_amplitude = 1.0;  // fraction of one granularity step
  double k_rep = 1.0;

  double margin(sim::ObstacleClass c) const {
    switch (c) {
      case sim::ObstacleClass::pedestrian: return margin_pedestrian;
      case sim::ObstacleClass::vehicle: return margin_vehicle;
      case sim::ObstacleClass::other: return margin_other;
    }
    return margin_other;
  }

  void validate() const {
    if (!(margin_pedestrian > 0 && margin_vehicle > 0 && margin_other > 0))
      throw Error("ApfParams: safety margins must be positive");
    if (!(max_repulse > 0)) throw Error("ApfParams: max_repulse must be positive");
    if (noise_amplitude < 0) throw Error("ApfParams: noise_amplitude must be >= 0");
    if (k_rep < 0) throw Error("ApfParams: k_rep must be >= 0");
  }
};

/// sign(raw) * step when |raw| >= step / 2, else 0; at most one step per axis.
inline ActionStep quantize_action(const Eigen::Vector4d& raw, const GranularityProfile& gran, TargetClass cls) {
  const Eigen::Vector4d steps = gran.steps(cls);
  Eigen::Vector4d q;
  for (int i = 0; i < 4; ++i) {
    if (!std::isfinite(raw[i])) throw Error("quantize_action: non-finite input");
    q[i] = std::abs(raw[i]) >= 0.5 * steps[i] ? std::copysign(steps[i], raw[i]) : 0.0;
  }
  return ActionStep::from_vector(q);
}

/// Closest-approach distance from a point to a vertical cylinder standing on
/// the ground. Negative inside the footprint below the top.
inline double distance_to_cylinder(const geometry::Vec3& p, const Eigen::Vector2d& center, double radius,
                                   double height) {
  const double horiz = (p.head<2>() - center).norm() - radius;
  if (p.z() <= height) return horiz;
  const double h = std::max(horiz, 0.0);
  return std::sqrt(h * h + (p.z() - height) * (p.z() - height));
}

/// Obstacle set seen by the collector: static obstacles plus distractor agents.
inline std::vector<sim::Obstacle> collision_set(const sim::WorldState& s) {
  std::vector<sim::Obstacle> out = s.obstacles;
  for (const auto& d : s.distractors) {
    const sim::Extent e = sim::extent_of(d.cls);
    sim::Obstacle o;
    o.position = {d.pose.x, d.pose.y};
    o.radius = 0.5 * std::max(e.length, e.width);
    o.height = e.height;
    o.cls = d.cls == TargetClass::pedestrian ? sim::ObstacleClass::pedestrian : sim::ObstacleClass::vehicle;
    out.push_back(o);
  }
  return out;
}

struct Repulsion {
  Eigen::Vector2d force_world = Eigen::Vector2d::Zero();
  double magnitude = 0.0;
  bool active = false;
};

/// Horizontal repulsion k_rep (1/d - 1/margin) from every obstacle inside its
/// margin; each term and the total are clamped to max_repulse.
inline Repulsion repulsion(const geometry::Vec3& uav, const std::vector<sim::Obstacle>& obstacles,
                           const ApfParams& p) {
  Repulsion r;
  for (const auto& o : obstacles) {
    const double margin = p.margin(o.cls);
    const double d = distance_to_cylinder(uav, o.position, o.radius, o.height);
    if (d >= margin) continue;
    r.active = true;
    const double dd = std::max(d, 1e-3);
    const double mag = std::min(p.k_rep * (1.0 / dd - 1.0 / margin), p.max_repulse);
    Eigen::Vector2d dir = uav.head<2>() - o.position;
    if (dir.norm() < 1e-9) dir = Eigen::Vector2d::UnitX();
    r.force_world += mag * dir.normalized();
  }
  r.magnitude = r.force_world.norm();
  if (r.magnitude > p.max_repulse) {
    r.force_world *= p.max_repulse / r.magnitude;
    r.magnitude = p.max_repulse;
  }
  return r;
}

struct ApfDecision {
  ActionStep action;
  Eigen::Vector4d raw = Eigen::Vector4d::Zero();
  double repulse_magnitude = 0.0;
  bool noise_suppressed = false;
  bool ground_guard = false;
};

/// Anchor error expressed in the UAV yaw frame: [dx, dy, dz, dyaw].
inline Eigen::Vector4d anchor_error(const sim::WorldState& s, const AnchorOffset& anchor) {
  const geometry::Pose6D a = sim::anchor_world_pose(s.target, anchor);
  const double c = std::cos(s.uav.yaw), sn = std::sin(s.uav.yaw);
  const double ex = a.x - s.uav.x, ey = a.y - s.uav.y;
  return {c * ex + sn * ey, -sn * ex + c * ey, a.z - s.uav.z, wrap_angle(a.yaw - s.uav.yaw)};
}

inline ApfDecision apf_decide(const sim::WorldState& s, const AnchorOffset& anchor, const ApfParams& p,
                              const GranularityProfile& gran, Rng& rng) {
  ApfDecision out;
  const TargetClass cls = s.target.cls;
  const Eigen::Vector4d steps = gran.steps(cls);
  Eigen::Vector4d raw = p.regression_coeff * anchor_error(s, anchor);

  const Repulsion rep = repulsion(s.uav.position(), collision_set(s), p);
  // Noise is always drawn so the stream stays aligned across branches.
  Eigen::Vector4d noise;
  for (int i = 0; i < 4; ++i) noise[i] = rng.uniform(-1.0, 1.0) * p.noise_amplitude * steps[i];
  if (rep.active) {
    out.noise_suppressed = true;
    const double c = std::cos(s.uav.yaw), sn = std::sin(s.uav.yaw);
    raw[0] += c * rep.force_world.x() + sn * rep.force_world.y();
    raw[1] += -sn * rep.force_world.x() + c * rep.force_world.y();
  } else {
    raw += noise;
  }
  out.repulse_magnitude = rep.magnitude;
  out.raw = raw;
  out.action = quantize_action(raw, gran, cls);
  if (s.uav.z + out.action.dz < p.min_altitude) {
    out.ground_guard = true;
    out.action.dz = s.uav.z >= p.min_altitude ? 0.0 : gran.z_step;
  }
  return out;
}

inline ActionStep apf_command(const sim::WorldState& s, const AnchorOffset& anchor, const ApfParams& p,
                              const GranularityProfile& gran, Rng& rng) {
  return apf_decide(s, anchor, p, gran, rng).action;
}

}  // namespace uavtrack::expert
