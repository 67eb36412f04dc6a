#pragma once

// Deck manipulator as a reach sphere with an end-mounted camera. Object
// poses move between the manipulator (MA) and carrier (DC) frames through
// the full rigid transform of the manipulator base.

#include "drone_carrier/common.hpp"
#include "drone_carrier/frames.hpp"
#include "drone_carrier/random.hpp"

#include <optional>
#include <vector>

namespace drone_carrier {

enum class GripperType { Mechanical, Suction };
enum class ObjectClass { Small, Large };

inline const char* to_string(ObjectClass c) { return c == ObjectClass::Small ? "small" : "large"; }

struct ClassThresholds {
  double uav_payload = 1.5;  // kg, single-UAV lift
  double max_small_dim = 1.0;  // m
};

inline ObjectClass classify_object(double mass, double length, double width, const ClassThresholds& th = {}) {
  return mass <= th.uav_payload && std::max(length, width) <= th.max_small_dim ? ObjectClass::Small : ObjectClass::Large;
}

struct ObjectTruth {
  int id = 0;
  Vec3 position = Vec3::Zero();  // inertial or DC per context
  double heading = 0.0;
  double mass = 1.0;
  double length = 0.5;
  double width = 0.5;
  double height = 0.3;
};

struct ObjectEstimate {
  int id = 0;
  Vec3 position = Vec3::Zero();
  FrameId frame{FrameKind::Manipulator, 0};
  double mass = 0.0;
  double length = 0.0;
  double width = 0.0;
  ObjectClass classification = ObjectClass::Small;
};

struct ManipulatorModel {
  Pose3 base{{0.0, -1.9, 0.5}, -kPi / 2, 0.0, 0.0};  // DC frame, facing starboard
  double reach = 1.5;
  double camera_range = 10.0;
  double camera_half_fov = deg2rad(60.0);
  double scan_sigma = 0.1;
  GripperType gripper = GripperType::Mechanical;
  double payload_limit = 10.0;  // kg
  std::vector<Vec3> stowage = {{0.0, 1.2, 0.1}, {-0.8, 1.2, 0.1}, {0.8, 1.2, 0.1}};

  void validate() const {
    if (!(reach > 0.0)) throw ConfigError("manipulator: reach must be positive");
    if (!(payload_limit > 0.0)) throw ConfigError("manipulator: payload limit must be positive");
    if (!(camera_range > 0.0 && camera_half_fov > 0.0)) throw ConfigError("manipulator: camera limits must be positive");
  }

  Transform ma_to_dc() const { return transform_from_pose(base); }

  /// Horizontal reach radius at the height `z` (DC frame).
  double horizontal_reach(double z) const {
    const double dz = z - base.position.z();
    return std::sqrt(std::max(0.0, reach * reach - dz * dz));
  }
};

inline Vec3 object_to_dc_frame(const Vec3& p_ma, const Transform& ma_to_dc) {
  if (!ma_to_dc.is_valid()) throw InvalidArgument("object_to_dc_frame: transform is not a valid rigid motion");
  return transform_point(ma_to_dc, p_ma);
}

/// Camera scan of objects given in the DC frame; estimates come back in MA frame.
inline std::vector<ObjectEstimate> scan_for_objects(const ManipulatorModel& m, const std::vector<ObjectTruth>& objects_dc,
                                                    RngStream& rng, const ClassThresholds& th = {}) {
  const Transform dc_to_ma = inverse(m.ma_to_dc());
  std::vector<ObjectEstimate> out;
  for (const auto& o : objects_dc) {
    const Vec3 noise = rng.normal3(m.scan_sigma);
    const Vec3 p = transform_point(dc_to_ma, o.position);
    if (p.norm() > m.camera_range) continue;
    if (std::atan2(p.head<2>().y(), p.head<2>().x()) > m.camera_half_fov ||
        std::atan2(p.head<2>().y(), p.head<2>().x()) < -m.camera_half_fov)
      continue;
    ObjectEstimate e;
    e.id = o.id;
    e.position = p + noise;
    e.frame = {FrameKind::Manipulator, 0};
    e.mass = o.mass;
    e.length = o.length;
    e.width = o.width;
    e.classification = classify_object(o.mass, o.length, o.width, th);
    out.push_back(e);
  }
  return out;
}

enum class GraspResult { Grasped, OutOfReach, OverPayload };

inline const char* to_string(GraspResult r) {
  switch (r) {
    case GraspResult::Grasped: return "grasped";
    case GraspResult::OutOfReach: return "out_of_reach";
    case GraspResult::OverPayload: return "over_payload";
  }
  return "?";
}

struct GraspOutcome {
  GraspResult result = GraspResult::OutOfReach;
  std::optional<Vec3> stowed_at;  // DC frame
};

/// `obj` position is taken in DC frame (MA-frame estimates are converted).
inline GraspOutcome attempt_grasp(const ManipulatorModel& m, const ObjectEstimate& obj, std::size_t stow_slot = 0) {
  Vec3 p = obj.position;
  if (obj.frame.kind == FrameKind::Manipulator) p = object_to_dc_frame(p, m.ma_to_dc());
  GraspOutcome out;
  if (obj.mass > m.payload_limit) {
    out.result = GraspResult::OverPayload;
  } else if ((p - m.base.position).norm() > m.reach) {
    out.result = GraspResult::OutOfReach;
  } else {
    out.result = GraspResult::Grasped;
    out.stowed_at = m.stowage.empty() ? m.base.position : m.stowage[stow_slot % m.stowage.size()];
  }
  return out;
}

}  // namespace drone_carrier
