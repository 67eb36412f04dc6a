#pragma once

// UAV point-mass flight under a position PID, the per-UAV task state machine,
// QR precision landing and the two-UAV drag planner. Positions are expressed
// in the carrier (DC) frame with z up from the deck surface.

#include "drone_carrier/common.hpp"
#include "drone_carrier/estimation.hpp"
#include "drone_carrier/guidance.hpp"
#include "drone_carrier/perception.hpp"
#include "drone_carrier/random.hpp"
#include "drone_carrier/sensors.hpp"

#include <array>
#include <deque>
#include <optional>
#include <vector>

namespace drone_carrier {

struct UavState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double yaw = 0.0;
  std::optional<int> carrying;
};

struct UavSetpoint {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  Vec3 velocity_ff = Vec3::Zero();
};

struct UavGains {
  double kp = 5.0;
  double ki = 0.8;
  double kd = 3.0;
  double a_max = 4.0;          // m/s^2
  double integral_max = 3.0;   // m s, per axis
  double yaw_tau = 0.5;        // s
  double wind_coupling = 0.3;  // 1/s, wind speed to disturbance acceleration
};

struct PidMemory {
  Vec3 integral = Vec3::Zero();
};

/// One control-and-integrate step. `nav` is the position/velocity the
/// controller believes; truth is integrated exactly for piecewise-constant
/// acceleration.
inline UavState step_uav(const UavState& s, PidMemory& pid, const UavSetpoint& sp, const Vec3& wind, double dt,
                         const UavGains& g = {}, const std::optional<std::pair<Vec3, Vec3>>& nav = std::nullopt) {
  if (!(dt > 0.0 && dt <= 0.1)) throw InvalidArgument("step_uav: dt must lie in (0, 0.1]");
  const Vec3 p = nav ? nav->first : s.position;
  const Vec3 v = nav ? nav->second : s.velocity;
  const Vec3 e = sp.position - p;
  Vec3 a = g.kp * e + g.ki * pid.integral + g.kd * (sp.velocity_ff - v);
  const double an = a.norm();
  const bool saturated = an > g.a_max;
  if (saturated) a *= g.a_max / an;
  else pid.integral = (pid.integral + e * dt).cwiseMax(-g.integral_max).cwiseMin(g.integral_max);
  a += g.wind_coupling * wind;

  UavState out = s;
  out.position = s.position + s.velocity * dt + 0.5 * a * dt * dt;
  out.velocity = s.velocity + a * dt;
  if (out.position.z() < 0.0) {
    out.position.z() = 0.0;
    out.velocity.z() = std::max(0.0, out.velocity.z());
  }
  out.yaw = wrap_angle(s.yaw + (1.0 - std::exp(-dt / g.yaw_tau)) * wrap_angle(sp.yaw - s.yaw));
  return out;
}

// --- mission state machine ------------------------------------------------------

enum class UavMode {
  Idle,
  Takeoff,
  TransitToSearch,
  CoverageSearch,
  HoverOverObject,
  Descend,
  Grasp,
  Ascend,
  ReturnTransit,
  QrAcquire,
  PrecisionLand,
  Landed,
  Abort
};

inline const char* to_string(UavMode m) {
  static constexpr const char* names[] = {"idle",    "takeoff", "transit_to_search", "coverage_search", "hover_over_object",
                                          "descend", "grasp",   "ascend",            "return_transit",  "qr_acquire",
                                          "precision_land", "landed", "abort"};
  return names[static_cast<int>(m)];
}

inline bool legal_transition(UavMode from, UavMode to) {
  using M = UavMode;
  if (from == to) return true;
  if (to == M::Abort) return from != M::Landed;
  switch (from) {
    case M::Idle: return to == M::Takeoff;
    case M::Takeoff: return to == M::TransitToSearch;
    case M::TransitToSearch: return to == M::CoverageSearch;
    case M::CoverageSearch: return to == M::HoverOverObject || to == M::ReturnTransit;
    case M::HoverOverObject: return to == M::Descend;
    case M::Descend: return to == M::Grasp;
    case M::Grasp: return to == M::Ascend;
    case M::Ascend: return to == M::ReturnTransit;
    case M::ReturnTransit: return to == M::QrAcquire;
    case M::QrAcquire: return to == M::PrecisionLand;
    case M::PrecisionLand: return to == M::Landed || to == M::QrAcquire;
    case M::Landed:
    case M::Abort: return false;
  }
  return false;
}

enum class UavTaskKind { Transport, Drag };

struct KeyPoints {
  Vec3 p0 = Vec3::Zero();  // takeoff point
  Vec3 p1 = Vec3::Zero();  // 3 m above P0
  Vec3 p2 = Vec3::Zero();  // 3 m above the object
  Vec3 p3 = Vec3::Zero();  // grasp point
  bool defined = false;
};

struct UavMissionConfig {
  double climb = 3.0;            // P1 and P2 height offsets
  double search_altitude = 3.5;
  double search_spacing = 2.0;
  double waypoint_radius = 0.4;
  double arrive_radius = 0.2;
  double grasp_clearance = 0.3;  // P3 above the object top
  double grasp_dwell = 1.0;      // s per grasp attempt
  int grasp_retries = 3;
  double detect_radius = 2.0;
  double detect_altitude = 4.0;
  double descent_rate = 0.4;     // m/s
  double qr_hold_after = 0.5;    // s without QR before holding altitude
  double qr_abort_after = 10.0;  // s without QR before aborting
  double touchdown_altitude = 0.05;
  double safe_altitude = 3.0;
};

struct UavMissionState {
  UavMode mode = UavMode::Idle;
  double mode_since = 0.0;
  UavTaskKind task = UavTaskKind::Transport;
  KeyPoints keys;
  std::vector<Vec3> waypoints;  // coverage spiral or drag track
  std::size_t next_waypoint = 0;
  std::optional<int> target_object;
  Vec3 object_position = Vec3::Zero();
  int grasp_attempts = 0;
  double last_qr_time = -1.0;
  double qr_lost_since = -1.0;
  bool climbing_for_qr = false;
  double hold_altitude = 0.0;
  std::optional<Vec3> last_pad;  // DC frame, from the latest valid QR fix
  std::deque<TimedPosition> pad_history;
  std::optional<double> touchdown_lateral_error;
  bool tether_attached = false;
  std::vector<std::pair<UavMode, UavMode>> transitions;
};

struct UavObservation {
  double t = 0.0;
  Vec3 nav_position = Vec3::Zero();  // fused estimate, DC frame
  Vec3 nav_velocity = Vec3::Zero();
  bool ekf_diverged = false;
  std::optional<std::pair<int, Vec3>> detection;  // object id and position, DC frame
  QrObservation qr;
};

struct CarrierCommand {
  bool takeoff = false;
  bool abort = false;
  UavTaskKind task = UavTaskKind::Transport;
  std::optional<DeckRect> search_region;   // target vessel footprint in DC frame
  std::optional<std::pair<int, Vec3>> assigned_object;  // skip search and fly straight to this object
  std::vector<Vec3> drag_track;            // synchronized drag waypoints
  double deck_height = 0.0;                // target deck height relative to carrier deck
};

namespace detail {
inline void enter(UavMissionState& ms, UavMode to, double t) {
  if (!legal_transition(ms.mode, to))
    throw ModeViolation(std::string("illegal uav transition ") + to_string(ms.mode) + " -> " + to_string(to));
  if (to == ms.mode) return;
  ms.transitions.emplace_back(ms.mode, to);
  ms.mode = to;
  ms.mode_since = t;
}
}  // namespace detail

/// QR-guided descent. Returns the setpoint; may switch to Landed or Abort.
inline UavSetpoint precision_land(UavMissionState& ms, const UavObservation& obs, double yaw,
                                  const UavMissionConfig& cfg = {}) {
  if (ms.mode != UavMode::QrAcquire && ms.mode != UavMode::PrecisionLand)
    throw ModeViolation("precision_land requires QrAcquire or PrecisionLand");
  UavSetpoint sp{obs.nav_position, yaw, Vec3::Zero()};
  const double t = obs.t;
  if (obs.qr.valid) {
    ms.last_qr_time = t;
    ms.qr_lost_since = -1.0;
    ms.climbing_for_qr = false;
    const Vec3 rel = rotation_from_yaw(yaw).rotation * obs.qr.relative;  // pad relative to UAV, level frame
    const Vec3 pad = obs.nav_position + rel;
    ms.last_pad = pad;
    ms.pad_history.push_back({t, pad});
    while (ms.pad_history.size() > 2 && t - ms.pad_history.front().t > 1.5) ms.pad_history.pop_front();
    Vec2 pad_vel = Vec2::Zero();
    if (ms.pad_history.size() >= 5) {
      const auto v = estimate_velocity({ms.pad_history.begin(), ms.pad_history.end()}, 0.05, 0.5);
      pad_vel = v.velocity.head<2>();
    }
    const double altitude = -rel.z();
    const double lateral = rel.head<2>().norm();
    if (altitude < cfg.touchdown_altitude) {
      ms.touchdown_lateral_error = lateral;
      if (ms.mode == UavMode::QrAcquire) detail::enter(ms, UavMode::PrecisionLand, t);
      detail::enter(ms, UavMode::Landed, t);
      sp.position = obs.nav_position;
      return sp;
    }
    if (ms.mode == UavMode::QrAcquire && lateral < 0.3) detail::enter(ms, UavMode::PrecisionLand, t);
    sp.position.head<2>() = pad.head<2>();
    sp.velocity_ff.head<2>() = pad_vel;
    if (ms.mode == UavMode::PrecisionLand && lateral < 0.1 + 0.1 * altitude) {
      sp.position.z() = obs.nav_position.z() - std::min(altitude, 2.0 * cfg.descent_rate);
      sp.velocity_ff.z() = -cfg.descent_rate;
    } else {
      sp.position.z() = obs.nav_position.z();
    }
    return sp;
  }
  if (ms.qr_lost_since < 0.0) ms.qr_lost_since = t;
  const double lost = t - ms.qr_lost_since;
  if (lost > cfg.qr_abort_after) {
    detail::enter(ms, UavMode::Abort, t);
    sp.position.z() = std::max(obs.nav_position.z(), cfg.safe_altitude);
    return sp;
  }
  if (lost > cfg.qr_hold_after && !ms.climbing_for_qr) {
    ms.climbing_for_qr = true;
    ms.hold_altitude = obs.nav_position.z() + 1.0;
  }
  if (ms.climbing_for_qr) {
    // Climb over the last pad fix so the pattern re-enters the camera cone.
    if (ms.last_pad) sp.position.head<2>() = ms.last_pad->head<2>();
    sp.position.z() = ms.hold_altitude;
  }
  return sp;
}

/// Advances the task machine one tick and returns the flight setpoint.
inline UavSetpoint uav_mission_step(UavMissionState& ms, UavState& s, const UavObservation& obs,
                                    const CarrierCommand& cmd, RngStream& rng, const UavMissionConfig& cfg = {}) {
  const double t = obs.t;
  const Vec3& p = obs.nav_position;
  const double yaw = s.yaw;
  UavSetpoint sp{p, yaw, Vec3::Zero()};
  auto near = [&](const Vec3& q, double r) { return (p - q).norm() < r; };

  if (ms.mode != UavMode::Landed && ms.mode != UavMode::Abort && (cmd.abort || obs.ekf_diverged)) {
    detail::enter(ms, UavMode::Abort, t);
  }

  switch (ms.mode) {
    case UavMode::Idle:
      if (cmd.takeoff) {
        ms.keys.p0 = p;
        ms.keys.p1 = p + Vec3(0, 0, cfg.climb);
        ms.keys.defined = true;
        ms.task = cmd.task;
        detail::enter(ms, UavMode::Takeoff, t);
        sp.position = ms.keys.p1;
      }
      break;
    case UavMode::Takeoff:
      sp.position = ms.keys.p1;
      if (near(ms.keys.p1, cfg.arrive_radius)) {
        ms.waypoints.clear();
        ms.next_waypoint = 0;
        if (cmd.assigned_object) {
          ms.waypoints.push_back(cmd.assigned_object->second + Vec3(0, 0, cfg.climb));
        } else if (cmd.search_region) {
          for (const auto& w : spiral_coverage(*cmd.search_region, cfg.search_spacing))
            ms.waypoints.emplace_back(w.x(), w.y(), cmd.deck_height + cfg.search_altitude);
        }
        detail::enter(ms, UavMode::TransitToSearch, t);
      }
      break;
    case UavMode::TransitToSearch:
      if (ms.waypoints.empty()) {
        detail::enter(ms, UavMode::CoverageSearch, t);
        break;
      }
      sp.position = ms.waypoints.front();
      if (near(sp.position, cfg.waypoint_radius)) detail::enter(ms, UavMode::CoverageSearch, t);
      break;
    case UavMode::CoverageSearch: {
      std::optional<std::pair<int, Vec3>> found = obs.detection;
      if (!found && cmd.assigned_object) found = cmd.assigned_object;
      if (found) {
        const Vec3 d = found->second - p;
        const bool visible = d.head<2>().norm() <= cfg.detect_radius && p.z() - found->second.z() <= cfg.detect_altitude;
        if (visible || (cmd.assigned_object && !obs.detection)) {
          ms.target_object = found->first;
          ms.object_position = found->second;
          ms.keys.p2 = found->second + Vec3(0, 0, cfg.climb);
          ms.keys.p3 = found->second + Vec3(0, 0, cfg.grasp_clearance);
          detail::enter(ms, UavMode::HoverOverObject, t);
          sp.position = ms.keys.p2;
          break;
        }
      }
      while (ms.next_waypoint < ms.waypoints.size() && near(ms.waypoints[ms.next_waypoint], cfg.waypoint_radius))
        ++ms.next_waypoint;
      if (ms.next_waypoint >= ms.waypoints.size()) {
        detail::enter(ms, UavMode::ReturnTransit, t);
        sp.position = ms.keys.p1;
      } else {
        sp.position = ms.waypoints[ms.next_waypoint];
      }
      break;
    }
    case UavMode::HoverOverObject:
      sp.position = ms.keys.p2;
      if (near(ms.keys.p2, cfg.arrive_radius) && obs.nav_velocity.norm() < 0.2) detail::enter(ms, UavMode::Descend, t);
      break;
    case UavMode::Descend:
      sp.position = ms.keys.p3;
      sp.position.z() = std::max(0.0, sp.position.z());
      if (near(sp.position, 0.1)) {
        detail::enter(ms, UavMode::Grasp, t);
        ms.grasp_attempts = 0;
      }
      break;
    case UavMode::Grasp: {
      if (ms.task == UavTaskKind::Drag && ms.tether_attached) {
        if (ms.waypoints.empty()) {  // hold until the partner is attached too
          ms.waypoints = cmd.drag_track;
          ms.next_waypoint = 0;
          sp.position = ms.keys.p3;
          if (ms.waypoints.empty()) break;
        }
        while (ms.next_waypoint < ms.waypoints.size() && near(ms.waypoints[ms.next_waypoint], cfg.arrive_radius))
          ++ms.next_waypoint;
        if (ms.next_waypoint >= ms.waypoints.size()) {
          ms.tether_attached = false;
          detail::enter(ms, UavMode::Ascend, t);
          ms.keys.p2 = p + Vec3(0, 0, cfg.climb);
          sp.position = ms.keys.p2;
        } else {
          sp.position = ms.waypoints[ms.next_waypoint];
        }
        break;
      }
      sp.position = ms.keys.p3;
      if (t - ms.mode_since >= cfg.grasp_dwell * (ms.grasp_attempts + 1)) {
        const double hover_err = (p - ms.keys.p3).head<2>().norm();
        const bool ok = rng.bernoulli(hover_err < 0.1 ? 0.95 : 0.5);
        ++ms.grasp_attempts;
        if (ok && ms.task == UavTaskKind::Drag) {
          ms.tether_attached = true;
          ms.waypoints.clear();
          ms.next_waypoint = 0;
        } else if (ok || ms.grasp_attempts >= cfg.grasp_retries) {
          if (ok) s.carrying = ms.target_object;
          detail::enter(ms, UavMode::Ascend, t);
          sp.position = ms.keys.p2;
        }
      }
      break;
    }
    case UavMode::Ascend:
      sp.position = ms.keys.p2;
      if (near(ms.keys.p2, cfg.arrive_radius)) detail::enter(ms, UavMode::ReturnTransit, t);
      break;
    case UavMode::ReturnTransit:
      sp.position = ms.keys.p1;
      if (obs.qr.valid) {
        detail::enter(ms, UavMode::QrAcquire, t);
        sp = precision_land(ms, obs, yaw, cfg);
      }
      break;
    case UavMode::QrAcquire:
    case UavMode::PrecisionLand:
      sp = precision_land(ms, obs, yaw, cfg);
      if (ms.mode == UavMode::Landed) s.carrying.reset();
      break;
    case UavMode::Landed:
      sp.position = p;
      break;
    case UavMode::Abort:
      sp.position = p;
      sp.position.z() = std::max(p.z(), cfg.safe_altitude);
      break;
  }
  sp.position.z() = std::max(0.0, sp.position.z());
  return sp;
}

// --- cooperative drag ---------------------------------------------------------------

struct DragConfig {
  double min_separation = 2.0;
  double step = 0.5;
  double margin = 0.2;
  double tether_altitude = 2.0;  // above the object
  int lag_steps = 1;             // object trails the UAV midpoint by this many steps
};

struct DragPlan {
  std::array<int, 2> end_of_uav{};                 // 0 = +long_dir end, 1 = -long_dir end
  std::array<std::vector<Vec3>, 2> waypoints;      // synchronized, equal length
  std::vector<Vec2> centroid_track;                // object centroid after each step
  bool empty() const { return waypoints[0].empty(); }
};

/// Plans a straight synchronized tow that brings the object centroid inside
/// the reach disc by the configured margin.
inline DragPlan cooperative_drag_plan(const RectangleFit& object, double object_z, const Vec2& reach_center,
                                      double reach_radius, const std::array<Vec3, 2>& uavs, const DragConfig& cfg = {}) {
  if (!(reach_radius > cfg.margin)) throw InvalidArgument("cooperative_drag_plan: reach must exceed the margin");
  DragPlan plan;
  const Vec2 to_reach = reach_center - object.center;
  const double dist = to_reach.norm();
  if (dist <= reach_radius) return plan;

  const Vec2 u = to_reach / dist;
  const Vec2 axis = object.long_dir();
  const double half = std::max(object.length / 2.0, cfg.min_separation / 2.0);
  const std::array<Vec2, 2> ends = {object.center + half * axis, object.center - half * axis};

  auto d = [&](int uav, int end) { return (uavs[uav].head<2>() - ends[end]).norm(); };
  const double straight = d(0, 0) + d(1, 1), crossed = d(0, 1) + d(1, 0);
  if (straight < crossed) plan.end_of_uav = {0, 1};
  else if (crossed < straight) plan.end_of_uav = {1, 0};
  else plan.end_of_uav = d(0, 0) <= d(0, 1) ? std::array<int, 2>{0, 1} : std::array<int, 2>{1, 0};

  const double travel = dist - (reach_radius - cfg.margin);
  const int n = static_cast<int>(std::ceil(travel / cfg.step - 1e-12));
  const double z = object_z + cfg.tether_altitude;
  for (int k = 1; k <= n + cfg.lag_steps; ++k) {
    const double shift = std::min(travel, k * cfg.step);
    for (int i = 0; i < 2; ++i) {
      const Vec2 w = ends[plan.end_of_uav[i]] + shift * u;
      plan.waypoints[i].emplace_back(w.x(), w.y(), z);
    }
    const double lagged = std::min(travel, std::max(0, k - cfg.lag_steps) * cfg.step);
    plan.centroid_track.push_back(object.center + lagged * u);
  }
  return plan;
}

}  // namespace drone_carrier
