#pragma once

// Frame registry and rigid transforms. Inertial and target-vessel frames are
// ENU; body frames (gimbal, carrier, UAVs, objects, manipulator) are FLU.
// Euler angles are applied yaw-pitch-roll (Z-Y-X intrinsic).

#include "drone_carrier/common.hpp"

#include <compare>
#include <string>

namespace drone_carrier {

enum class FrameKind { Inertial, TargetVessel, OnshoreGimbal, DroneCarrier, Uav, Object, Manipulator };

struct FrameId {
  FrameKind kind = FrameKind::Inertial;
  int index = 0;  // meaningful for Uav and Object only

  static FrameId inertial() { return {FrameKind::Inertial, 0}; }
  static FrameId uav(int i) {
    require(i >= 0, "uav frame index must be nonnegative");
    return {FrameKind::Uav, i};
  }
  static FrameId object(int j) {
    require(j >= 0, "object frame index must be nonnegative");
    return {FrameKind::Object, j};
  }

  bool is_enu() const { return kind == FrameKind::Inertial || kind == FrameKind::TargetVessel; }

  std::string name() const {
    switch (kind) {
      case FrameKind::Inertial: return "I";
      case FrameKind::TargetVessel: return "TV";
      case FrameKind::OnshoreGimbal: return "GC";
      case FrameKind::DroneCarrier: return "DC";
      case FrameKind::Uav: return "D" + std::to_string(index);
      case FrameKind::Object: return "O" + std::to_string(index);
      case FrameKind::Manipulator: return "MA";
    }
    return "?";
  }

  auto operator<=>(const FrameId&) const = default;
};

struct Pose3 {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  Pose3 normalized() const { return {position, wrap_angle(yaw), wrap_angle(pitch), wrap_angle(roll)}; }
};

inline constexpr double kOrthonormalTolerance = 1e-9;

struct Transform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Transform identity() { return {}; }

  double orthonormality_error() const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  }

  bool is_valid() const {
    return rotation.allFinite() && translation.allFinite() &&
           orthonormality_error() <= kOrthonormalTolerance &&
           std::abs(rotation.determinant() - 1.0) <= kOrthonormalTolerance;
  }
};

/// Nearest rotation in the Frobenius sense (polar decomposition via SVD).
inline Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

inline Transform rotation_from_yaw(double yaw) {
  if (!std::isfinite(yaw)) throw InvalidArgument("rotation_from_yaw: yaw must be finite");
  const double a = wrap_angle(yaw);
  const double c = std::cos(a), s = std::sin(a);
  Transform t;
  t.rotation << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return t;
}

inline Mat3 rotation_from_euler(double yaw, double pitch, double roll) {
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  Mat3 r;
  r << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,  //
      sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,   //
      -sp, cp * sr, cp * cr;
  return r;
}

/// Maps body-frame coordinates of a frame posed at `pose` into its parent.
inline Transform transform_from_pose(const Pose3& pose) {
  if (!pose.position.allFinite() || !std::isfinite(pose.yaw) || !std::isfinite(pose.pitch) ||
      !std::isfinite(pose.roll))
    throw InvalidArgument("transform_from_pose: non-finite pose");
  const Pose3 p = pose.normalized();
  return {rotation_from_euler(p.yaw, p.pitch, p.roll), p.position};
}

inline Vec3 transform_point(const Transform& t, const Vec3& p) { return t.rotation * p + t.translation; }

inline Transform inverse(const Transform& t) {
  Transform inv;
  inv.rotation = t.rotation.transpose();
  inv.translation = -(inv.rotation * t.translation);
  return inv;
}

/// a∘b: applies b first, then a.
inline Transform compose(const Transform& a, const Transform& b) {
  Transform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  if (out.orthonormality_error() > kOrthonormalTolerance) out.rotation = nearest_rotation(out.rotation);
  return out;
}

inline Transform translation_only(const Vec3& t) { return {Mat3::Identity(), t}; }

}  // namespace drone_carrier
