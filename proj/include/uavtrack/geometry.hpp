#pragma once

// Rigid-body poses, Euler rotations, egocentric alignment and pinhole
// projection.
//
// Frame conventions used throughout the library:
//   world: x east, y north, z up (right-handed).
//   body/camera: x forward (optical axis), y left, z up.
//   Euler angles are intrinsic yaw-pitch-roll. Yaw is counter-clockwise about
//   world z, pitch is positive nose-up, roll is about the forward axis.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <span>
#include <vector>

#include "uavtrack/common.hpp"

namespace uavtrack::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Pose6D {
  double x = 0.0, y = 0.0, z = 0.0;
  double roll = 0.0, pitch = 0.0, yaw = 0.0;

  Vec3 position() const { return {x, y, z}; }
  void set_position(const Vec3& p) {
    x = p.x();
    y = p.y();
    z = p.z();
  }
  /// Returns a copy with all three angles wrapped to (-pi, pi].
  Pose6D wrapped() const {
    Pose6D p = *this;
    p.roll = wrap_angle(roll);
    p.pitch = wrap_angle(pitch);
    p.yaw = wrap_angle(yaw);
    return p;
  }
  bool operator==(const Pose6D&) const = default;
};

struct CameraModel {
  Vec3 mount_offset{0.0, 0.0, -0.5};
  double mount_pitch = deg2rad(-15.0);
  double hfov = deg2rad(135.0);
  int width = 80;
  int height = 60;

  static CameraModel full_scale() {
    CameraModel c;
    c.width = 800;
    c.height = 600;
    return c;
  }

  double focal_px() const { return (0.5 * width) / std::tan(0.5 * hfov); }

  void validate() const {
    if (!(hfov > 0.0 && hfov < kPi)) throw Error("CameraModel: hfov must lie in (0, pi)");
    if (width <= 0 || height <= 0) throw Error("CameraModel: width and height must be positive");
  }
};

struct RelativePose {
  double dx = 0.0, dy = 0.0, dz = 0.0;
  double dpsi = 0.0;

  Eigen::Vector4d as_vector() const { return {dx, dy, dz, dpsi}; }
  bool operator==(const RelativePose&) const = default;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  bool in_frame = false;
};

enum class Direction { forward, inverse };

/// Body-to-world rotation for the given Euler angles.
inline Mat3 body_to_world(double roll, double pitch, double yaw) {
  const Eigen::AngleAxisd rz(yaw, Vec3::UnitZ());
  // Nose-up pitch turns +x toward +z, which is a negative rotation about +y.
  const Eigen::AngleAxisd ry(-pitch, Vec3::UnitY());
  const Eigen::AngleAxisd rx(roll, Vec3::UnitX());
  return (rz * ry * rx).toRotationMatrix();
}

/// World-to-body rotation: maps world-frame vectors into the body frame.
inline Mat3 rotation_from_euler(double roll, double pitch, double yaw) {
  return body_to_world(roll, pitch, yaw).transpose();
}

inline Mat3 rotation_from_pose(const Pose6D& p) { return rotation_from_euler(p.roll, p.pitch, p.yaw); }

/// Forward: p_ego = R (p_world - origin). Inverse undoes it.
inline std::vector<Vec3> world_to_ego(const Pose6D& camera_pose, std::span<const Vec3> points,
                                      Direction direction = Direction::forward) {
  const Mat3 r = rotation_from_pose(camera_pose);
  const Vec3 origin = camera_pose.position();
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (direction == Direction::forward)
      out.push_back(r * (p - origin));
    else
      out.push_back(r.transpose() * p + origin);
  }
  return out;
}

inline Vec3 world_to_ego(const Pose6D& camera_pose, const Vec3& point) {
  return rotation_from_pose(camera_pose) * (point - camera_pose.position());
}

inline RelativePose relative_pose(const Pose6D& uav_camera_pose, const Pose6D& target_pose) {
  const Vec3 d = world_to_ego(uav_camera_pose, target_pose.position());
  return {d.x(), d.y(), d.z(), wrap_angle(target_pose.yaw - uav_camera_pose.yaw)};
}

/// Pinhole projection; u grows to the right, v grows downward.
inline Projection project_ego(const CameraModel& cam, const Vec3& ego) {
  Projection pr;
  pr.depth = ego.x();
  const double f = cam.focal_px();
  const double cx = 0.5 * cam.width;
  const double cy = 0.5 * cam.height;
  if (pr.depth <= 0.0) {
    pr.u = cx;
    pr.v = cy;
    pr.in_frame = false;
    return pr;
  }
  pr.u = cx - f * ego.y() / pr.depth;
  pr.v = cy - f * ego.z() / pr.depth;
  pr.in_frame = pr.u >= 0.0 && pr.u < cam.width && pr.v >= 0.0 && pr.v < cam.height;
  return pr;
}

inline Projection project_point(const Pose6D& camera_pose, const CameraModel& cam, const Vec3& world_point) {
  return project_ego(cam, world_to_ego(camera_pose, world_point));
}

/// Camera pose for a UAV body pose: mount offset below the center of mass,
/// camera pitched by the mount angle, body pitch/roll held level.
inline Pose6D camera_pose_for(const Pose6D& uav, const CameraModel& cam) {
  const Vec3 offset = body_to_world(0.0, 0.0, uav.yaw) * cam.mount_offset;
  Pose6D c;
  c.set_position(uav.position() + offset);
  c.roll = 0.0;
  c.pitch = cam.mount_pitch;
  c.yaw = uav.yaw;
  return c;
}

}  // namespace uavtrack::geometry
