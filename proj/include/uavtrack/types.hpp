#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <string_view>

#include "uavtrack/common.hpp"

namespace uavtrack {

enum class TargetClass : std::uint8_t { vehicle = 0, two_wheeler = 1, pedestrian = 2 };
enum class DistanceTier : std::uint8_t { close = 0, suitable = 1, far = 2 };
enum class Sector : std::uint8_t { rear = 0, right_rear = 1, left_rear = 2 };
enum class Split : std::uint8_t { seen = 0, unseen = 1 };

inline std::string_view to_string(TargetClass c) {
  switch (c) {
    case TargetClass::vehicle: return "vehicle";
    case TargetClass::two_wheeler: return "two_wheeler";
    case TargetClass::pedestrian: return "pedestrian";
  }
  return "?";
}

inline std::string_view to_string(DistanceTier t) {
  switch (t) {
    case DistanceTier::close: return "close";
    case DistanceTier::suitable: return "suitable";
    case DistanceTier::far: return "far";
  }
  return "?";
}

inline std::string_view to_string(Sector s) {
  switch (s) {
    case Sector::rear: return "rear";
    case Sector::right_rear: return "right_rear";
    case Sector::left_rear: return "left_rear";
  }
  return "?";
}

inline std::string_view to_string(Split s) { return s == Split::seen ? "seen" : "unseen"; }

inline TargetClass parse_target_class(std::string_view s) {
  if (s == "vehicle") return TargetClass::vehicle;
  if (s == "two_wheeler") return TargetClass::two_wheeler;
  if (s == "pedestrian") return TargetClass::pedestrian;
  throw Error("unknown target class '" + std::string(s) + "'");
}

/// "near" is accepted as an alias for the close tier; "long" for far.
inline DistanceTier parse_tier(std::string_view s) {
  if (s == "close" || s == "near") return DistanceTier::close;
  if (s == "suitable") return DistanceTier::suitable;
  if (s == "far" || s == "long") return DistanceTier::far;
  throw Error("unknown distance tier '" + std::string(s) + "'");
}

inline Split parse_split(std::string_view s) {
  if (s == "seen") return Split::seen;
  if (s == "unseen") return Split::unseen;
  throw Error("unknown split '" + std::string(s) + "'");
}

/// One 25 Hz control tick: displacement in the UAV yaw frame plus yaw change.
struct ActionStep {
  double dx = 0.0, dy = 0.0, dz = 0.0;
  double dpsi = 0.0;

  Eigen::Vector4d as_vector() const { return {dx, dy, dz, dpsi}; }
  static ActionStep from_vector(const Eigen::Vector4d& v) { return {v[0], v[1], v[2], v[3]}; }
  bool operator==(const ActionStep&) const = default;
};

struct GranularityProfile {
  double z_step = 0.35;
  double yaw_step = deg2rad(3.5);
  double xy_step_vehicle = 1.35;
  double xy_step_pedestrian = 0.1;

  /// Horizontal resolution; two-wheelers share the vehicle step.
  double xy_step(TargetClass c) const {
    return c == TargetClass::pedestrian ? xy_step_pedestrian : xy_step_vehicle;
  }
  Eigen::Vector4d steps(TargetClass c) const { return {xy_step(c), xy_step(c), z_step, yaw_step}; }
};

/// Initial relative placement of the UAV with respect to the target, drawn
/// once per episode and used as the regression anchor during collection.
/// x, y, yaw follow the placement table's convention: x forward along the
/// target heading, y and yaw positive toward the target's right.
struct AnchorOffset {
  double x = 0.0, y = 0.0, z = 0.0;
  double yaw = 0.0;
  Sector sector = Sector::rear;
  bool operator==(const AnchorOffset&) const = default;
};

}  // namespace uavtrack
