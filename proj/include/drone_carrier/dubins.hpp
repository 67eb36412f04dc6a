#pragma once

// Dubins paths whose arcs may use different radii per stage. The first arc
// uses the departure stage radius, the last arc the arrival stage radius and
// the middle arc of a CCC word the middle stage radius. Each word is solved in
// closed form from circle tangency.

#include "drone_carrier/common.hpp"

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace drone_carrier {

struct Pose2 {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
};

struct PathSegment {
  enum class Kind { Arc, Straight };
  Kind kind = Kind::Straight;
  // arc
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
  double start_angle = 0.0;  // polar angle of the start point about the centre
  double sweep = 0.0;        // signed: positive turns left (counter-clockwise)
  // straight
  Vec2 start = Vec2::Zero();
  Vec2 end = Vec2::Zero();
  double speed = 1.0;  // planned speed over the segment (m/s)

  static PathSegment arc(const Vec2& c, double r, double a0, double sweep, double speed) {
    PathSegment s;
    s.kind = Kind::Arc;
    s.center = c;
    s.radius = r;
    s.start_angle = a0;
    s.sweep = sweep;
    s.speed = speed;
    return s;
  }
  static PathSegment straight(const Vec2& a, const Vec2& b, double speed) {
    PathSegment s;
    s.kind = Kind::Straight;
    s.start = a;
    s.end = b;
    s.speed = speed;
    return s;
  }

  double length() const { return kind == Kind::Arc ? radius * std::abs(sweep) : (end - start).norm(); }

  Pose2 at(double s) const {
    if (kind == Kind::Straight) {
      const Vec2 d = end - start;
      const double len = d.norm();
      const Vec2 u = len > 0.0 ? Vec2(d / len) : Vec2(1.0, 0.0);
      return {start + u * s, std::atan2(u.y(), u.x())};
    }
    const double dir = sweep >= 0.0 ? 1.0 : -1.0;
    const double a = start_angle + dir * s / radius;
    return {center + radius * unit(a), wrap_angle(a + dir * kPi / 2)};
  }

  double curvature() const { return kind == Kind::Arc ? 1.0 / radius : 0.0; }
};

struct DubinsPath {
  std::vector<PathSegment> segments;
  std::string word;

  double length() const {
    double l = 0.0;
    for (const auto& s : segments) l += s.length();
    return l;
  }

  Pose2 pose_at(double s) const {
    for (const auto& seg : segments) {
      const double l = seg.length();
      if (s <= l) return seg.at(std::max(0.0, s));
      s -= l;
    }
    return segments.empty() ? Pose2{} : segments.back().at(segments.back().length());
  }

  Pose2 start_pose() const { return segments.front().at(0.0); }
  Pose2 end_pose() const { return segments.back().at(segments.back().length()); }

  /// Poses every `ds` metres, always including both ends of every segment.
  std::vector<Pose2> sample(double ds) const {
    std::vector<Pose2> out;
    for (const auto& seg : segments) {
      const double l = seg.length();
      const int n = std::max(1, static_cast<int>(std::ceil(l / ds)));
      for (int i = out.empty() ? 0 : 1; i <= n; ++i) out.push_back(seg.at(l * i / n));
    }
    return out;
  }

  /// Largest position and heading mismatch between consecutive segments.
  std::pair<double, double> continuity_error() const {
    double dp = 0.0, dh = 0.0;
    for (std::size_t i = 1; i < segments.size(); ++i) {
      const Pose2 a = segments[i - 1].at(segments[i - 1].length());
      const Pose2 b = segments[i].at(0.0);
      dp = std::max(dp, (a.position - b.position).norm());
      dh = std::max(dh, std::abs(wrap_angle(a.heading - b.heading)));
    }
    return {dp, dh};
  }
};

struct StageRadii {
  double departure = 10.0;
  double middle = 10.0;
  double arrival = 10.0;
  double departure_speed = 1.0;
  double middle_speed = 1.0;
  double arrival_speed = 1.0;

  static StageRadii uniform(double r, double speed = 1.0) { return {r, r, r, speed, speed, speed}; }
};

namespace detail {

inline constexpr double kSweepSnap = 1e-9;

/// Counter-clockwise (dir=+1) or clockwise (dir=-1) sweep taking heading a to heading b, in [0, 2pi).
inline double turn_sweep(double a, double b, int dir) {
  double s = wrap_positive(dir > 0 ? b - a : a - b, kTwoPi);
  if (s > kTwoPi - kSweepSnap || s < kSweepSnap) s = 0.0;
  return dir * s;
}

inline Vec2 turn_center(const Pose2& p, double r, int dir) {
  return p.position + dir * r * Vec2(-std::sin(p.heading), std::cos(p.heading));
}

inline double polar(const Vec2& c, const Vec2& p) { return std::atan2(p.y() - c.y(), p.x() - c.x()); }

inline void push_arc(DubinsPath& path, const Vec2& c, double r, const Pose2& from, double sweep, double speed) {
  if (std::abs(sweep) * r <= 1e-12) return;
  path.segments.push_back(PathSegment::arc(c, r, polar(c, from.position), sweep, speed));
}

inline std::optional<DubinsPath> csc(const Pose2& s, const Pose2& g, const StageRadii& rad, int d1, int d3) {
  const double r1 = rad.departure, r3 = rad.arrival;
  const Vec2 c1 = turn_center(s, r1, d1), c3 = turn_center(g, r3, d3);
  const Vec2 dvec = c3 - c1;
  const double k = d3 * r3 - d1 * r1;
  const double d2 = dvec.squaredNorm();
  if (d2 < k * k || d2 < 1e-18) return std::nullopt;
  const double len = std::sqrt(d2 - k * k);
  const Vec2 u((len * dvec.x() + k * dvec.y()) / d2, (-k * dvec.x() + len * dvec.y()) / d2);
  const Vec2 n(-u.y(), u.x());
  const double psi = std::atan2(u.y(), u.x());
  const Vec2 t1 = c1 - d1 * r1 * n, t3 = c3 - d3 * r3 * n;
  DubinsPath p;
  p.word = std::string(d1 > 0 ? "L" : "R") + "S" + (d3 > 0 ? "L" : "R");
  push_arc(p, c1, r1, s, turn_sweep(s.heading, psi, d1), rad.departure_speed);
  if (len > 1e-12) p.segments.push_back(PathSegment::straight(t1, t3, rad.middle_speed));
  push_arc(p, c3, r3, {t3, psi}, turn_sweep(psi, g.heading, d3), rad.arrival_speed);
  if (p.segments.empty()) return std::nullopt;
  return p;
}

inline std::vector<DubinsPath> ccc(const Pose2& s, const Pose2& g, const StageRadii& rad, int d) {
  std::vector<DubinsPath> out;
  const double r1 = rad.departure, r2 = rad.middle, r3 = rad.arrival;
  const Vec2 c1 = turn_center(s, r1, d), c3 = turn_center(g, r3, d);
  const double a = r1 + r2, b = r2 + r3;
  const Vec2 dv = c3 - c1;
  const double dist = dv.norm();
  if (dist < 1e-12 || dist > a + b || dist < std::abs(a - b)) return out;
  const double x = (a * a - b * b + dist * dist) / (2.0 * dist);
  const double h = std::sqrt(std::max(0.0, a * a - x * x));
  const Vec2 ex = dv / dist, ey(-ex.y(), ex.x());
  for (int sign : {1, -1}) {
    const Vec2 c2 = c1 + x * ex + sign * h * ey;
    const Vec2 t12 = c1 + r1 * (c2 - c1).normalized();
    const Vec2 t23 = c3 + r3 * (c2 - c3).normalized();
    // Heading on a circle of direction dir at polar angle ang is ang + dir*pi/2.
    const double h12 = polar(c1, t12) + d * kPi / 2;
    const double h23 = polar(c3, t23) + d * kPi / 2;
    DubinsPath p;
    p.word = d > 0 ? "LRL" : "RLR";
    push_arc(p, c1, r1, s, turn_sweep(s.heading, h12, d), rad.departure_speed);
    push_arc(p, c2, r2, {t12, h12}, turn_sweep(h12, h23, -d), rad.middle_speed);
    push_arc(p, c3, r3, {t23, h23}, turn_sweep(h23, g.heading, d), rad.arrival_speed);
    if (!p.segments.empty()) out.push_back(std::move(p));
    if (h == 0.0) break;
  }
  return out;
}

}  // namespace detail

/// All feasible candidates over the six words (CCC words may yield two each).
inline std::vector<DubinsPath> dubins_candidates(const Pose2& start, const Pose2& goal, const StageRadii& radii) {
  std::vector<DubinsPath> out;
  for (auto [d1, d3] : std::array<std::pair<int, int>, 4>{{{1, 1}, {-1, -1}, {1, -1}, {-1, 1}}})
    if (auto p = detail::csc(start, goal, radii, d1, d3)) out.push_back(std::move(*p));
  for (int d : {1, -1})
    for (auto& p : detail::ccc(start, goal, radii, d)) out.push_back(std::move(p));
  return out;
}

inline DubinsPath plan_dubins(const Pose2& start, const Pose2& goal, const StageRadii& radii) {
  if (!(radii.departure > 0.0 && radii.middle > 0.0 && radii.arrival > 0.0))
    throw InvalidArgument("plan_dubins: stage radii must be positive");
  if ((start.position - goal.position).norm() < 1e-9 &&
      std::abs(wrap_angle(start.heading - goal.heading)) < 1e-9)
    throw InvalidArgument("plan_dubins: start and goal coincide");
  auto cands = dubins_candidates(start, goal, radii);
  if (cands.empty())
    throw InfeasiblePath("plan_dubins: no word is feasible (goal circles nested inside start circles for radii " +
                         std::to_string(radii.departure) + "/" + std::to_string(radii.middle) + "/" +
                         std::to_string(radii.arrival) + ")");
  std::size_t best = 0;
  for (std::size_t i = 1; i < cands.size(); ++i)
    if (cands[i].length() < cands[best].length()) best = i;
  return cands[best];
}

}  // namespace drone_carrier
