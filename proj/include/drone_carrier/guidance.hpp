#pragma once

// Heading guidance, docking manoeuvres and coverage plans for the carrier.
// Yaw moment is positive to port (counter-clockwise seen from above), so a
// positive heading error drives the starboard thruster harder.

#include "drone_carrier/common.hpp"
#include "drone_carrier/dubins.hpp"
#include "drone_carrier/perception.hpp"
#include "drone_carrier/usv_dynamics.hpp"

#include <cstdio>
#include <optional>
#include <ostream>
#include <vector>

namespace drone_carrier {

enum class GuidanceSource { OnshoreGimbal, OnboardGimbal, Lidar };

inline const char* to_string(GuidanceSource s) {
  switch (s) {
    case GuidanceSource::OnshoreGimbal: return "onshore_gimbal";
    case GuidanceSource::OnboardGimbal: return "onboard_gimbal";
    case GuidanceSource::Lidar: return "lidar";
  }
  return "?";
}

struct HeadingCommand {
  double beta = 0.0;   // desired inertial heading
  GuidanceSource source = GuidanceSource::OnshoreGimbal;
  double error = 0.0;  // wrap(beta - yaw_imu)
};

inline HeadingCommand heading_to_target(double yaw_imu, const Vec2& usv, const Vec2& target,
                                        GuidanceSource source = GuidanceSource::OnshoreGimbal) {
  const Vec2 d = target - usv;
  if (!(d.norm() > 1e-9)) throw GeometryError("heading_to_target: bearing undefined for coincident positions");
  const double beta = std::atan2(d.y(), d.x());
  return {beta, source, wrap_angle(beta - yaw_imu)};
}

struct HeadingGains {
  double kp = 150.0;  // N per rad of error
  double kd = 270.0;  // N per rad/s of yaw rate
};

inline ThrusterCommand heading_controller(const UsvState& s, const HeadingCommand& cmd, double cruise_thrust,
                                          const HeadingGains& gains, const HydroParams& params) {
  if (!(gains.kp > 0.0 && gains.kd > 0.0)) throw InvalidArgument("heading_controller: gains must be positive");
  const double err = wrap_angle(cmd.beta - s.yaw);
  const double u = gains.kp * err - gains.kd * s.velocity.z();
  ThrusterCommand c;
  c.t1 = std::clamp(cruise_thrust + u, -params.thrust_max, params.thrust_max);
  c.t2 = std::clamp(cruise_thrust - u, -params.thrust_max, params.thrust_max);
  return c;
}

struct TurnParams {
  double k = 6.0;        // s
  double r_floor = 3.0;  // m
};

inline double min_turn_radius(double speed, double k, double r_floor = 3.0) {
  if (!(speed >= 0.0)) throw InvalidArgument("min_turn_radius: speed must be non-negative");
  if (!(k > 0.0)) throw InvalidArgument("min_turn_radius: k must be positive");
  return std::max(k * speed, r_floor);
}

inline double min_turn_radius(double speed, const TurnParams& t = {}) { return min_turn_radius(speed, t.k, t.r_floor); }

/// Stage radii from a three-stage speed profile.
inline StageRadii stage_radii(double v_depart, double v_middle, double v_arrive, const TurnParams& t = {}) {
  return {min_turn_radius(v_depart, t), min_turn_radius(v_middle, t), min_turn_radius(v_arrive, t),
          v_depart,                     v_middle,                     v_arrive};
}

// --- circling survey ----------------------------------------------------------

struct CirclePlan {
  DubinsPath path;            // entry segments followed by one full loop
  std::size_t loop_begin = 0; // index of the loop segment
  Vec2 center = Vec2::Zero();
  double radius = 0.0;

  const PathSegment& loop() const { return path.segments[loop_begin]; }
  double entry_length() const {
    double l = 0.0;
    for (std::size_t i = 0; i < loop_begin; ++i) l += path.segments[i].length();
    return l;
  }
};

/// Counter-clockwise loop about `center`, joined tangentially from the current pose.
inline CirclePlan circle_target(const Vec2& center, double radius, const Pose2& current, double speed,
                                const TurnParams& turn = {}) {
  const double rmin = min_turn_radius(speed, turn);
  if (!(radius > rmin))
    throw InvalidArgument("circle_target: radius " + std::to_string(radius) + " m is below the minimum turn radius " +
                          std::to_string(rmin) + " m");
  const Vec2 rel = current.position - center;
  const double a = rel.norm() > 1e-9 ? std::atan2(rel.y(), rel.x()) : current.heading - kPi / 2;
  const Pose2 join{center + radius * unit(a), wrap_angle(a + kPi / 2)};
  CirclePlan plan;
  plan.center = center;
  plan.radius = radius;
  const bool on_loop = (join.position - current.position).norm() < 1e-9 &&
                       std::abs(wrap_angle(join.heading - current.heading)) < 1e-9;
  if (!on_loop) plan.path = plan_dubins(current, join, StageRadii::uniform(rmin, speed));
  plan.path.word += "+O";
  plan.loop_begin = plan.path.segments.size();
  plan.path.segments.push_back(PathSegment::arc(center, radius, a, kTwoPi, speed));
  return plan;
}

inline CirclePlan circle_target(const RectangleFit& fit, double radius, const Pose2& current, double speed,
                                const TurnParams& turn = {}) {
  return circle_target(fit.center, radius, current, speed, turn);
}

// --- lateral docking ----------------------------------------------------------

/// Target face seen from the carrier body frame.
struct DockRelative {
  double gap = 0.0;           // m, hull side to target face, positive while apart
  double misalignment = 0.0;  // rad, face direction minus carrier heading, reduced mod pi
  double along_offset = 0.0;  // m, desired docking point ahead (+) of the carrier origin
  int side = 1;               // +1 target to port, -1 to starboard
  double rel_surge = 0.0;     // m/s, carrier velocity relative to target, body axes
  double rel_sway = 0.0;
  double yaw_rate = 0.0;
};

struct DockGains {
  double v_max = 0.3;      // m/s closure cap
  double ramp = 1.5;       // m, closure ramps linearly below this gap
  double v_creep = 0.03;   // m/s, floor while still apart
  double k_sway = 600.0;   // N per m/s sway error
  double k_along = 60.0;   // N per m along-track offset
  double k_surge = 500.0;  // N per m/s relative surge
  double k_yaw = 400.0;    // N m per rad
  double k_rate = 900.0;   // N m per rad/s
  double align_limit = deg2rad(15.0);
};

struct DockCommand {
  ThrusterCommand thrusters;
  Wrench wrench;
  double closure = 0.0;  // commanded closure speed (m/s)
  bool realign = false;
};

/// Linear ramp below `ramp`, floored at the creep speed so contact is kept pressed.
inline double dock_closure_speed(double gap, const DockGains& g = {}) {
  if (gap <= 0.0) return std::min(g.v_creep, g.v_max);
  return std::max(std::min(g.v_max, g.v_max * gap / g.ramp), std::min(g.v_creep, g.v_max));
}

inline DockCommand lateral_dock_controller(const DockRelative& rel, const DockGains& g, const HydroParams& params) {
  DockCommand out;
  const double mis = wrap_angle(2.0 * rel.misalignment) / 2.0;  // face direction is defined mod pi
  const double mz = g.k_yaw * mis - g.k_rate * rel.yaw_rate;
  const double fx = g.k_along * rel.along_offset - g.k_surge * rel.rel_surge;
  if (std::abs(mis) > g.align_limit) {
    out.realign = true;
    out.wrench = {fx, -g.k_sway * rel.rel_sway, mz};
  } else {
    out.closure = dock_closure_speed(rel.gap, g);
    const double vy = rel.side * out.closure;
    out.wrench = {fx, params.damping.y() * vy + g.k_sway * (vy - rel.rel_sway), mz};
  }
  out.thrusters = allocate_vectored(out.wrench, params);
  out.wrench = actuation_vectored(out.thrusters, params).wrench;
  return out;
}

// --- deck coverage ------------------------------------------------------------

struct DeckRect {
  Vec2 center = Vec2::Zero();
  double heading = 0.0;  // direction of the length axis
  double length = 6.0;
  double width = 4.0;
};

/// Inward rectangular spiral with lane spacing `spacing`; legs are split so
/// consecutive waypoints are at most `spacing` apart.
inline std::vector<Vec2> spiral_coverage(const DeckRect& deck, double spacing) {
  if (!(spacing > 0.0)) throw InvalidArgument("spiral_coverage: spacing must be positive");
  if (!(deck.length > 0.0 && deck.width > 0.0)) throw InvalidArgument("spiral_coverage: deck dims must be positive");
  const double a = deck.length / 2, b = deck.width / 2, s = spacing;
  std::vector<Vec2> local;
  auto leg_to = [&](const Vec2& p) {
    if (local.empty()) {
      local.push_back(p);
      return;
    }
    const Vec2 q = local.back();
    const int n = std::max(1, static_cast<int>(std::ceil((p - q).norm() / s - 1e-9)));
    for (int i = 1; i <= n; ++i) local.push_back(q + (p - q) * (static_cast<double>(i) / n));
  };
  if (s >= std::min(deck.length, deck.width)) {
    const double ax = a - std::min(s / 2, a / 2), by = b - std::min(s / 2, b / 2);
    for (const Vec2& p : {Vec2(-ax, -by), Vec2(ax, -by), Vec2(ax, by), Vec2(-ax, by), Vec2(-ax, -by)}) leg_to(p);
    leg_to(Vec2::Zero());
  } else {
    // Lanes s apart starting s/2 inside the edges, turning E, N, W, S. The
    // first three legs run full length, later legs shrink by s per lap.
    const double lx = 2 * (a - s / 2), ly = 2 * (b - s / 2);
    Vec2 p(-(a - s / 2), -(b - s / 2));
    leg_to(p);
    const Vec2 dirs[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    for (int k = 0;; ++k) {
      const double len = (k % 2 == 0) ? lx - s * std::max(0, k / 2 - 1) : ly - s * ((k - 1) / 2);
      if (len <= 1e-9) break;
      p += dirs[k % 4] * len;
      leg_to(p);
    }
  }
  std::vector<Vec2> out;
  out.reserve(local.size());
  const Mat2 rot = Eigen::Rotation2Dd(deck.heading).toRotationMatrix();
  for (const auto& q : local) out.push_back(deck.center + rot * q);
  return out;
}

// --- path following -----------------------------------------------------------

/// Carrot-chasing follower over a densely sampled path. Progress along the
/// path is monotone so loops and crossings do not confuse the projection.
class PathFollower {
 public:
  PathFollower() = default;
  PathFollower(const DubinsPath& path, double lookahead, double ds = 0.5) : lookahead_(lookahead), ds_(ds) {
    if (!(lookahead > 0.0 && ds > 0.0)) throw InvalidArgument("PathFollower: lookahead and ds must be positive");
    total_ = path.length();
    const int n = std::max(1, static_cast<int>(std::ceil(total_ / ds)));
    samples_.reserve(n + 1);
    for (int i = 0; i <= n; ++i) samples_.push_back(path.pose_at(total_ * i / n));
    step_ = total_ / n;
  }

  bool empty() const { return samples_.empty(); }
  double progress() const { return idx_ * step_; }
  double total_length() const { return total_; }
  bool done() const { return samples_.empty() || idx_ + 1 >= samples_.size(); }

  /// Advances the projection (searching a bounded window ahead) and returns the carrot.
  Vec2 update(const Vec2& pos) {
    if (samples_.empty()) throw InvalidArgument("PathFollower: no path");
    const std::size_t window = static_cast<std::size_t>(std::ceil(4.0 * lookahead_ / step_)) + 1;
    std::size_t best = idx_;
    double bd = (samples_[idx_].position - pos).squaredNorm();
    for (std::size_t i = idx_ + 1; i < samples_.size() && i <= idx_ + window; ++i) {
      const double d = (samples_[i].position - pos).squaredNorm();
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    idx_ = best;
    const std::size_t ahead = std::min(samples_.size() - 1, idx_ + static_cast<std::size_t>(lookahead_ / step_));
    return samples_[ahead].position;
  }

  double cross_track(const Vec2& pos) const { return (samples_[idx_].position - pos).norm(); }

 private:
  std::vector<Pose2> samples_;
  double lookahead_ = 10.0;
  double ds_ = 0.5;
  double step_ = 0.5;
  double total_ = 0.0;
  std::size_t idx_ = 0;
};

// --- obstacle corridor ---------------------------------------------------------

struct Obstacle {
  Vec2 center = Vec2::Zero();
  double half_extent = 0.0;  // half of the longest footprint dimension
};

/// Lateral offset waypoint around the nearest obstacle that sits inside the
/// corridor on the straight line to the target, if any.
inline std::optional<Vec2> corridor_waypoint(const Vec2& usv, const Vec2& target, const std::vector<Obstacle>& obstacles,
                                             double corridor = 30.0) {
  const Vec2 d = target - usv;
  const double dist = d.norm();
  if (dist < 1e-9) return std::nullopt;
  const Vec2 u = d / dist, n(-u.y(), u.x());
  std::optional<Vec2> best;
  double best_along = dist;
  for (const auto& ob : obstacles) {
    const Vec2 r = ob.center - usv;
    const double along = r.dot(u), cross = r.dot(n);
    const double clear = corridor + ob.half_extent;
    if (along <= 0.0 || along >= best_along || std::abs(cross) >= clear) continue;
    const double side = cross > 0.0 ? -1.0 : 1.0;  // pass on the side the line already favours
    best = ob.center + side * clear * n;
    best_along = along;
  }
  return best;
}

// --- export ---------------------------------------------------------------------

inline void write_path_csv(std::ostream& os, const DubinsPath& path, double ds = 1.0) {
  os << "s,x,y,heading\n";
  double s = 0.0;
  const auto pts = path.sample(ds);
  char buf[128];
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i > 0) s += (pts[i].position - pts[i - 1].position).norm();
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f\n", s, pts[i].position.x(), pts[i].position.y(),
                  pts[i].heading);
    os << buf;
  }
}

}  // namespace drone_carrier
