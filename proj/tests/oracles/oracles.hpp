#pragma once

// Independent reference implementations used by the oracle and acceptance tests.
// They share only the vector types with the library.

#include "drone_carrier/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

using drone_carrier::Mat3;
using drone_carrier::Vec2;
using drone_carrier::Vec3;

inline constexpr double kTwoPi = 6.283185307179586476925;

// --- clustering ----------------------------------------------------------------

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int i) {
    while (parent[static_cast<std::size_t>(i)] != i) i = parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
    return i;
  }
  void join(int a, int b) {
    a = find(a), b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

/// All-pairs eps graph, connected components of size >= min_pts, ordered by lowest index.
inline std::vector<std::vector<int>> components(const std::vector<Vec2>& pts, double eps, int min_pts) {
  const int n = static_cast<int>(pts.size());
  UnionFind uf(pts.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if ((pts[static_cast<std::size_t>(i)] - pts[static_cast<std::size_t>(j)]).norm() <= eps) uf.join(i, j);
  std::vector<std::vector<int>> by_root(pts.size());
  for (int i = 0; i < n; ++i) by_root[static_cast<std::size_t>(uf.find(i))].push_back(i);
  std::vector<std::vector<int>> out;
  for (auto& c : by_root)
    if (!c.empty() && static_cast<int>(c.size()) >= min_pts) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

// --- Dubins by first-sweep search --------------------------------------------------
//
// Every shortest path is CSC or CCC. For each word the first sweep t is scanned
// on a grid; a tangency residual is bracketed and bisected, and the remaining
// two pieces follow by construction.

struct Pose {
  Vec2 p;
  double h;
};

inline Vec2 left_normal(double h) { return {-std::sin(h), std::cos(h)}; }

inline double mod2pi(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0.0 ? a + kTwoPi : a;
}

inline Pose arc_end(const Pose& s, double r, int dir, double sweep) {
  const Vec2 c = s.p + r * dir * left_normal(s.h);
  const Vec2 d = s.p - c;
  const double a = dir * sweep;
  const Vec2 rotated(std::cos(a) * d.x() - std::sin(a) * d.y(), std::sin(a) * d.x() + std::cos(a) * d.y());
  return {c + rotated, s.h + a};
}

inline std::vector<double> roots(const std::function<double(double)>& f, int grid) {
  std::vector<double> out;
  double t0 = 0.0, f0 = f(0.0);
  for (int i = 1; i <= grid; ++i) {
    const double t1 = kTwoPi * i / grid, f1 = f(t1);
    if (f0 == 0.0) out.push_back(t0);
    else if (f0 * f1 < 0.0) {
      double a = t0, b = t1, fa = f0;
      for (int k = 0; k < 80; ++k) {
        const double m = 0.5 * (a + b), fm = f(m);
        if ((fm < 0.0) == (fa < 0.0)) a = m, fa = fm;
        else b = m;
      }
      out.push_back(0.5 * (a + b));
    }
    t0 = t1, f0 = f1;
  }
  return out;
}

inline double dubins_length(const Pose& start, const Pose& goal, double r, int grid = 4096) {
  double best = std::numeric_limits<double>::infinity();
  for (int d1 : {1, -1})
    for (int d3 : {1, -1}) {
      const Vec2 cg = goal.p + r * d3 * left_normal(goal.h);
      auto residual = [&](double t) {
        const Pose q = arc_end(start, r, d1, t);
        return (cg - q.p).dot(left_normal(q.h)) - d3 * r;
      };
      for (double t : roots(residual, grid)) {
        const Pose q = arc_end(start, r, d1, t);
        const Vec2 u(std::cos(q.h), std::sin(q.h));
        const double s = (cg - q.p).dot(u);
        if (s < -1e-9) continue;
        const double c = mod2pi(d3 * (goal.h - q.h));
        best = std::min(best, r * t + std::max(s, 0.0) + r * c);
      }
    }
  for (int d : {1, -1}) {
    const Vec2 cg = goal.p + r * d * left_normal(goal.h);
    auto middle_centre = [&](double t) {
      const Pose q = arc_end(start, r, d, t);
      return Vec2(q.p - r * d * left_normal(q.h));
    };
    auto residual = [&](double t) { return (middle_centre(t) - cg).norm() - 2.0 * r; };
    for (double t : roots(residual, grid)) {
      const Pose q = arc_end(start, r, d, t);
      const Vec2 cm = middle_centre(t), contact = 0.5 * (cm + cg);
      const double a0 = std::atan2(q.p.y() - cm.y(), q.p.x() - cm.x());
      const double a1 = std::atan2(contact.y() - cm.y(), contact.x() - cm.x());
      const double m = mod2pi(-d * (a1 - a0));
      const double c = mod2pi(d * (goal.h - (q.h - d * m)));
      best = std::min(best, r * (t + m + c));
    }
  }
  return best;
}

// --- first-order linear dynamics ----------------------------------------------------

/// Body velocity of M v' = tau - D v after time t, exactly, for SPD M and D.
struct LinearDamped {
  Mat3 x, x_inv;
  Vec3 rates;
  Vec3 v_ss;

  LinearDamped(const Mat3& m, const Mat3& d, const Vec3& tau) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat3> ges(d, m);
    x = ges.eigenvectors();
    x_inv = x.inverse();
    rates = ges.eigenvalues();
    v_ss = d.inverse() * tau;
  }

  Vec3 velocity(const Vec3& v0, double t) const {
    const Vec3 decay = (-rates * t).array().exp();
    return v_ss + x * decay.asDiagonal() * x_inv * (v0 - v_ss);
  }

  /// Integral of velocity over [0, t].
  Vec3 displacement(const Vec3& v0, double t) const {
    Vec3 w;
    for (int i = 0; i < 3; ++i) w[i] = (1.0 - std::exp(-rates[i] * t)) / rates[i];
    return v_ss * t + x * w.asDiagonal() * x_inv * (v0 - v_ss);
  }
};

// --- polyline distance ------------------------------------------------------------------

inline double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double s = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + s * ab)).norm();
}

inline double polyline_distance(const Vec2& p, const std::vector<Vec2>& path) {
  if (path.size() == 1) return (p - path[0]).norm();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < path.size(); ++i) best = std::min(best, segment_distance(p, path[i - 1], path[i]));
  return best;
}

/// Largest distance from any node of a `res` grid over the deck to the path.
inline double worst_grid_gap(const Vec2& centre, double heading, double length, double width,
                             const std::vector<Vec2>& path, double res = 0.1) {
  const Vec2 u(std::cos(heading), std::sin(heading)), v(-std::sin(heading), std::cos(heading));
  const int nx = static_cast<int>(std::lround(length / res)), ny = static_cast<int>(std::lround(width / res));
  double worst = 0.0;
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j) {
      const double x = std::min(-length / 2 + i * res, length / 2), y = std::min(-width / 2 + j * res, width / 2);
      worst = std::max(worst, polyline_distance(centre + x * u + y * v, path));
    }
  return worst;
}

}  // namespace oracle
