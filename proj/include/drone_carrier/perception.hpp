#pragma once

// Point-cloud perception: Euclidean clustering over a 2-D k-d tree, rectangle
// fitting, L-shape heading extraction and prior-based target identification.

#include "drone_carrier/common.hpp"
#include "drone_carrier/sensors.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace drone_carrier {

/// Static 2-D k-d tree supporting fixed-radius queries.
class KdTree2 {
 public:
  explicit KdTree2(const std::vector<Vec2>& pts) : pts_(pts), order_(pts.size()) {
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(pts.size());
    if (!pts.empty()) root_ = build(0, static_cast<int>(pts.size()), 0);
  }

  /// Indices of all points within `radius` (inclusive) of `q`.
  void radius_search(const Vec2& q, double radius, std::vector<int>& out) const {
    out.clear();
    if (root_ >= 0) search(root_, q, radius * radius, radius, out);
  }

 private:
  struct Node {
    int point;
    int axis;
    int left = -1;
    int right = -1;
  };

  int build(int lo, int hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 2;
    const int mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](int a, int b) { return pts_[a][axis] < pts_[b][axis]; });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({order_[mid], axis});
    const int l = build(lo, mid, depth + 1);
    const int r = build(mid + 1, hi, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(int n, const Vec2& q, double r2, double r, std::vector<int>& out) const {
    const Node& node = nodes_[n];
    const Vec2& p = pts_[node.point];
    if ((p - q).squaredNorm() <= r2) out.push_back(node.point);
    const double delta = q[node.axis] - p[node.axis];
    const int near = delta <= 0.0 ? node.left : node.right;
    const int far = delta <= 0.0 ? node.right : node.left;
    if (near >= 0) search(near, q, r2, r, out);
    if (far >= 0 && std::abs(delta) <= r) search(far, q, r2, r, out);
  }

  const std::vector<Vec2>& pts_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct Cluster {
  std::vector<int> indices;  // ascending
  Vec2 centroid = Vec2::Zero();
};

/// Region growing over the eps-neighbourhood graph; components smaller than
/// `min_pts` are dropped. Clusters are ordered by their lowest point index.
inline std::vector<Cluster> cluster_points(const std::vector<Vec2>& pts, double eps, int min_pts) {
  if (!(eps > 0.0)) throw InvalidArgument("cluster_points: eps must be positive");
  if (min_pts < 1) throw InvalidArgument("cluster_points: min_pts must be at least 1");
  std::vector<Cluster> clusters;
  if (pts.empty()) return clusters;
  const KdTree2 tree(pts);
  std::vector<char> visited(pts.size(), 0);
  std::vector<int> frontier, neighbours;
  for (std::size_t seed = 0; seed < pts.size(); ++seed) {
    if (visited[seed]) continue;
    visited[seed] = 1;
    Cluster c;
    frontier.assign(1, static_cast<int>(seed));
    while (!frontier.empty()) {
      const int i = frontier.back();
      frontier.pop_back();
      c.indices.push_back(i);
      tree.radius_search(pts[static_cast<std::size_t>(i)], eps, neighbours);
      for (int j : neighbours) {
        if (!visited[static_cast<std::size_t>(j)]) {
          visited[static_cast<std::size_t>(j)] = 1;
          frontier.push_back(j);
        }
      }
    }
    if (static_cast<int>(c.indices.size()) < min_pts) continue;
    std::sort(c.indices.begin(), c.indices.end());
    for (int i : c.indices) c.centroid += pts[static_cast<std::size_t>(i)];
    c.centroid /= static_cast<double>(c.indices.size());
    clusters.push_back(std::move(c));
  }
  return clusters;
}

/// Projects the cloud to the sea plane (z dropped) and clusters it.
inline std::vector<Cluster> cluster_points(const PointCloud& cloud, double eps, int min_pts) {
  std::vector<Vec2> flat;
  flat.reserve(cloud.size());
  for (const auto& p : cloud.points) flat.push_back(p.head<2>());
  return cluster_points(flat, eps, min_pts);
}

inline std::vector<Vec2> gather(const std::vector<Vec2>& pts, const Cluster& c) {
  std::vector<Vec2> out;
  out.reserve(c.indices.size());
  for (int i : c.indices) out.push_back(pts[static_cast<std::size_t>(i)]);
  return out;
}

struct RectangleFit {
  Vec2 center = Vec2::Zero();
  double heading = 0.0;    // [0, pi/2): one rectangle axis; the other is heading + pi/2
  double length = 0.0;
  double width = 0.0;
  double residual = 0.0;   // summed squared point-to-nearest-edge distance (m^2)
  double long_axis = 0.0;  // [0, pi): direction of the length axis

  Vec2 long_dir() const { return unit(long_axis); }
  Vec2 short_dir() const { return unit(long_axis + kPi / 2); }
};

namespace detail {

struct AxisExtents {
  double min1, max1, min2, max2;
};

inline AxisExtents extents(const std::vector<Vec2>& pts, double theta) {
  const Vec2 e1 = unit(theta), e2 = unit(theta + kPi / 2);
  AxisExtents x{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : pts) {
    const double a = p.dot(e1), b = p.dot(e2);
    x.min1 = std::min(x.min1, a);
    x.max1 = std::max(x.max1, a);
    x.min2 = std::min(x.min2, b);
    x.max2 = std::max(x.max2, b);
  }
  return x;
}

/// Sum of squared distances to the nearest edge of the theta-aligned bounding rectangle.
inline double edge_cost(const std::vector<Vec2>& pts, double theta) {
  const Vec2 e1 = unit(theta), e2 = unit(theta + kPi / 2);
  const AxisExtents x = extents(pts, theta);
  double cost = 0.0;
  for (const auto& p : pts) {
    const double a = p.dot(e1), b = p.dot(e2);
    const double d = std::min({a - x.min1, x.max1 - a, b - x.min2, x.max2 - b});
    cost += d * d;
  }
  return cost;
}

/// Two-perpendicular-line variance criterion: each point is assigned to the
/// closer of the two boundary families and the per-family variances are summed.
inline double lshape_cost(const std::vector<Vec2>& pts, double theta, int* n1 = nullptr, int* n2 = nullptr) {
  const Vec2 e1 = unit(theta), e2 = unit(theta + kPi / 2);
  const AxisExtents x = extents(pts, theta);
  double s1 = 0, q1 = 0, s2 = 0, q2 = 0;
  int c1 = 0, c2 = 0;
  for (const auto& p : pts) {
    const double a = p.dot(e1), b = p.dot(e2);
    const double d1 = std::min(a - x.min1, x.max1 - a);
    const double d2 = std::min(b - x.min2, x.max2 - b);
    if (d1 < d2) {
      s1 += d1;
      q1 += d1 * d1;
      ++c1;
    } else {
      s2 += d2;
      q2 += d2 * d2;
      ++c2;
    }
  }
  if (n1) *n1 = c1;
  if (n2) *n2 = c2;
  const double v1 = c1 > 0 ? q1 / c1 - (s1 / c1) * (s1 / c1) : 0.0;
  const double v2 = c2 > 0 ? q2 / c2 - (s2 / c2) * (s2 / c2) : 0.0;
  return std::max(0.0, v1) + std::max(0.0, v2);
}

/// Golden-section search for a minimum of `cost` on [a, b].
inline double golden_section(const std::function<double(double)>& cost, double a, double b, int iterations = 80) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = cost(x1), f2 = cost(x2);
  for (int it = 0; it < iterations && (b - a) > 1e-12; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = cost(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = cost(x2);
    }
  }
  return 0.5 * (a + b);
}

/// Coarse grid over [0, 90deg) followed by golden-section refinement around the best cell.
inline double minimise_heading(const std::function<double(double)>& cost, double step = deg2rad(0.5)) {
  const int n = static_cast<int>(std::lround((kPi / 2) / step));
  int best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    const double c = cost(k * step);
    if (c < best_cost) {
      best_cost = c;
      best = k;
    }
  }
  const double refined = golden_section(cost, best * step - step, best * step + step);
  return cost(refined) <= best_cost ? refined : best * step;
}

// Edges of the theta-aligned bounding box: 0 = min along e1, 1 = max along e1,
// 2 = min along e2, 3 = max along e2.
struct EdgeAssignment {
  std::vector<int> edge;       // nearest edge per point
  std::array<bool, 4> face{};  // edge carries a sampled hull face
};

/// A face is an edge whose assigned points span at least half its length; the
/// far ends of partly seen hulls collect only a few corner points.
inline EdgeAssignment assign_edges(const std::vector<Vec2>& pts, double theta) {
  const Vec2 e1 = unit(theta), e2 = unit(theta + kPi / 2);
  const AxisExtents x = extents(pts, theta);
  EdgeAssignment out;
  out.edge.resize(pts.size());
  std::array<int, 4> count{};
  std::array<double, 4> lo, hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double a = pts[i].dot(e1), b = pts[i].dot(e2);
    const std::array<double, 4> d = {a - x.min1, x.max1 - a, b - x.min2, x.max2 - b};
    const int k = static_cast<int>(std::min_element(d.begin(), d.end()) - d.begin());
    out.edge[i] = k;
    ++count[static_cast<std::size_t>(k)];
    const double along = k < 2 ? b : a;
    lo[static_cast<std::size_t>(k)] = std::min(lo[static_cast<std::size_t>(k)], along);
    hi[static_cast<std::size_t>(k)] = std::max(hi[static_cast<std::size_t>(k)], along);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const double span = k < 2 ? x.max2 - x.min2 : x.max1 - x.min1;
    out.face[k] = count[k] >= 3 && hi[k] - lo[k] >= 0.5 * span;
  }
  return out;
}

/// Squared scatter of face points about one free offset per face.
inline double face_line_cost(const std::vector<Vec2>& pts, double theta, const EdgeAssignment& as) {
  const Vec2 e1 = unit(theta), e2 = unit(theta + kPi / 2);
  std::array<double, 4> s{}, q{};
  std::array<int, 4> n{};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto k = static_cast<std::size_t>(as.edge[i]);
    if (!as.face[k]) continue;
    const double v = pts[i].dot(k < 2 ? e1 : e2);
    s[k] += v;
    q[k] += v * v;
    ++n[k];
  }
  double cost = 0.0;
  for (std::size_t k = 0; k < 4; ++k)
    if (n[k] > 0) cost += q[k] - s[k] * s[k] / n[k];
  return cost;
}

/// Least-squares polish of a heading against the sampled faces. The bounding
/// box is set by the most extreme points, so with range noise it tilts.
inline double refine_on_faces(const std::vector<Vec2>& pts, double theta) {
  for (int it = 0; it < 3; ++it) {
    const auto as = assign_edges(pts, theta);
    auto cost = [&](double t) { return face_line_cost(pts, t, as); };
    const double next = golden_section(cost, theta - deg2rad(2.0), theta + deg2rad(2.0));
    if (!(cost(next) < cost(theta))) break;
    theta = next;
  }
  return theta;
}

inline void check_spread(const std::vector<Vec2>& pts, const char* who) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat2 cov = Mat2::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
  if (es.eigenvalues()[0] <= 1e-12 * std::max(1.0, es.eigenvalues()[1]))
    throw GeometryError(std::string(who) + ": points are collinear");
}

inline double principal_axis(const std::vector<Vec2>& pts) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat2 cov = Mat2::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
  const Vec2 v = es.eigenvectors().col(1);
  return wrap_positive(std::atan2(v.y(), v.x()), kPi);
}

}  // namespace detail

inline RectangleFit fit_rectangle(const std::vector<Vec2>& pts) {
  if (pts.size() < 5) throw InsufficientData("fit_rectangle: at least five points are required");
  detail::check_spread(pts, "fit_rectangle");
  double theta = detail::minimise_heading([&](double th) { return detail::edge_cost(pts, th); });
  theta = detail::refine_on_faces(pts, theta);
  const auto x = detail::extents(pts, theta);
  const auto as = detail::assign_edges(pts, theta);
  const Vec2 e1 = unit(theta), e2 = unit(theta + kPi / 2);
  // Sampled faces sit at the mean of their points; unseen ends at the extreme.
  std::array<double, 4> edge = {x.min1, x.max1, x.min2, x.max2}, sum{};
  std::array<int, 4> n{};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto k = static_cast<std::size_t>(as.edge[i]);
    sum[k] += pts[i].dot(k < 2 ? e1 : e2);
    ++n[k];
  }
  for (std::size_t k = 0; k < 4; ++k)
    if (as.face[k]) edge[k] = sum[k] / n[k];
  RectangleFit fit;
  fit.center = e1 * 0.5 * (edge[0] + edge[1]) + e2 * 0.5 * (edge[2] + edge[3]);
  const double l1 = edge[1] - edge[0], l2 = edge[3] - edge[2];
  fit.length = std::max(l1, l2);
  fit.width = std::min(l1, l2);
  fit.heading = wrap_positive(theta, kPi / 2);
  fit.long_axis = wrap_positive(l1 >= l2 ? theta : theta + kPi / 2, kPi);
  fit.residual = detail::edge_cost(pts, theta);
  return fit;
}

struct LShapeHeading {
  double heading = 0.0;        // [0, pi/2)
  double dominant_leg = 0.0;   // [0, pi): direction of the leg holding more points
  bool low_confidence = false;
};

inline LShapeHeading fit_lshape_heading(const std::vector<Vec2>& pts) {
  if (pts.size() < 5) throw InsufficientData("fit_lshape_heading: at least five points are required");
  LShapeHeading out;
  double theta = detail::minimise_heading([&](double th) { return detail::lshape_cost(pts, th); });
  theta = detail::refine_on_faces(pts, theta);
  int n1 = 0, n2 = 0;
  detail::lshape_cost(pts, theta, &n1, &n2);
  const auto x = detail::extents(pts, theta);
  // Family 1 hugs lines running along e2; family 2 hugs lines along e1.
  const double leg1 = x.max2 - x.min2, leg2 = x.max1 - x.min1;
  const int minor_count = std::min(n1, n2);
  const double minor_extent = n1 < n2 ? leg1 : leg2;
  const double major_extent = n1 < n2 ? leg2 : leg1;
  if (minor_count < 3 || minor_extent < 0.05 * major_extent || major_extent <= 0.0) {
    const double axis = detail::principal_axis(pts);
    return {wrap_positive(axis, kPi / 2), axis, true};
  }
  out.heading = wrap_positive(theta, kPi / 2);
  out.dominant_leg = wrap_positive(n1 >= n2 ? theta + kPi / 2 : theta, kPi);
  return out;
}

struct DimensionPrior {
  double length = 0.0;
  double width = 0.0;
  double tolerance = 0.3;  // relative
  Vec2 position = Vec2::Zero();
};

/// Fit whose dimensions match the prior, nearest the prior position; ties go to the lower index.
inline std::optional<std::size_t> identify_target(const std::vector<RectangleFit>& fits, const DimensionPrior& prior) {
  std::optional<std::size_t> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& f = fits[i];
    if (std::abs(f.length - prior.length) > prior.tolerance * prior.length) continue;
    if (std::abs(f.width - prior.width) > prior.tolerance * prior.width) continue;
    const double d = (f.center - prior.position).norm();
    if (d < best_d - 1e-9) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace drone_carrier
