#pragma once

// Synthetic sensors. Every sensor is a pure function of truth, configuration
// and an explicit random stream, so replays are identical.

#include "drone_carrier/common.hpp"
#include "drone_carrier/frames.hpp"
#include "drone_carrier/random.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <optional>
#include <vector>

namespace drone_carrier {

// --- gimbal cameras -------------------------------------------------------------

enum class TargetClass { Unknown, Carrier, TargetVessel };

struct GimbalMeasurement {
  double theta = 0.0;  // azimuth from the GC +y axis towards +x
  double phi = 0.0;    // depression below horizontal
  double timestamp = 0.0;
  TargetClass label = TargetClass::Unknown;
};

struct GimbalCamera {
  // Sea-plane foot point and orientation of the gimbal frame; the optical
  // centre sits `height` metres above it.
  Pose3 mount;
  double height = 80.0;
  double range = 3000.0;
  double sigma = deg2rad(0.5);
  double rate_hz = 10.0;
  double phi_min = deg2rad(0.5);
  double miss_probability = 0.0;

  void validate() const {
    if (!(height > 0.0)) throw ConfigError("gimbal camera: height must be positive");
    if (!(range > 0.0)) throw ConfigError("gimbal camera: range must be positive");
    if (!(phi_min > 0.0)) throw ConfigError("gimbal camera: phi_min must be positive");
    if (sigma < 0.0) throw ConfigError("gimbal camera: sigma must be nonnegative");
  }

  Transform gc_to_inertial() const {
    return {rotation_from_yaw(mount.yaw).rotation, Vec3(mount.position.x(), mount.position.y(), 0.0)};
  }
};

/// Sea-plane target position in the GC frame from azimuth/depression angles.
inline Vec3 gimbal_project(const GimbalMeasurement& m, const GimbalCamera& cam) {
  if (!(m.phi > cam.phi_min)) throw GeometryError("gimbal_project: depression at or below horizon gate");
  const double ground = cam.height / std::tan(m.phi);
  return {ground * std::sin(m.theta), ground * std::cos(m.theta), 0.0};
}

inline Vec3 gimbal_project_inertial(const GimbalMeasurement& m, const GimbalCamera& cam) {
  return transform_point(cam.gc_to_inertial(), gimbal_project(m, cam));
}

/// Noise-free azimuth/depression of an inertial sea-plane point.
inline std::pair<double, double> gimbal_angles(const GimbalCamera& cam, const Vec3& target) {
  const Vec3 local = transform_point(inverse(cam.gc_to_inertial()), Vec3(target.x(), target.y(), 0.0));
  const double ground = std::hypot(local.x(), local.y());
  if (ground < 1e-9) throw GeometryError("gimbal_observe: target at camera nadir, azimuth undefined");
  return {std::atan2(local.x(), local.y()), std::atan2(cam.height, ground)};
}

inline std::optional<GimbalMeasurement> gimbal_observe(const GimbalCamera& cam, const Vec3& target, RngStream& rng,
                                                       double t = 0.0, TargetClass label = TargetClass::Unknown) {
  const auto [theta, phi] = gimbal_angles(cam, target);
  // Draws happen unconditionally so the stream advances identically whatever the outcome.
  const double n_theta = rng.normal(cam.sigma);
  const double n_phi = rng.normal(cam.sigma);
  const bool missed = rng.bernoulli(cam.miss_probability);
  const double ground = Vec2(target.x() - cam.mount.position.x(), target.y() - cam.mount.position.y()).norm();
  if (ground > cam.range || missed) return std::nullopt;
  GimbalMeasurement m{wrap_angle(theta + n_theta), phi + n_phi, t, label};
  if (!(m.phi > cam.phi_min) || m.phi > kPi / 2) return std::nullopt;
  return m;
}

/// Carrier-mounted pod camera: stabilised, reports bearing relative to the bow
/// (counter-clockwise positive) when the target is within range.
struct PodCamera {
  double range = 500.0;
  double sigma = deg2rad(0.5);
  double miss_probability = 0.05;
};

inline std::optional<double> pod_observe(const PodCamera& pod, const Vec2& carrier, double carrier_yaw,
                                         const Vec2& target, RngStream& rng) {
  const Vec2 d = target - carrier;
  const double noise = rng.normal(pod.sigma);
  const bool missed = rng.bernoulli(pod.miss_probability);
  if (d.norm() > pod.range || d.norm() < 1e-9 || missed) return std::nullopt;
  return wrap_angle(std::atan2(d.y(), d.x()) - carrier_yaw + noise);
}

// --- LiDAR ----------------------------------------------------------------------

struct VesselFootprint {
  int id = 0;
  Vec2 center = Vec2::Zero();
  double heading = 0.0;  // direction of the length axis
  double length = 10.0;
  double width = 4.0;
  double height = 2.0;

  std::array<Vec2, 4> corners() const {
    const Vec2 a = unit(heading) * (length / 2), b = unit(heading + kPi / 2) * (width / 2);
    return {center + a + b, center - a + b, center - a - b, center + a - b};
  }
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<double> intensities;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct LidarConfig {
  double max_range = 200.0;
  double angular_resolution = deg2rad(0.2);
  double noise_sigma = 0.03;
  double dropout = 0.05;
  std::vector<double> layer_heights = {0.6, 1.3};  // beam heights above the sea plane (m)
};

namespace detail {
/// Distance along a ray to the first crossing of a segment, or +inf.
inline double ray_segment(const Vec2& o, const Vec2& dir, const Vec2& a, const Vec2& b) {
  const Vec2 e = b - a;
  const double den = cross2(dir, e);
  if (std::abs(den) < 1e-15) return std::numeric_limits<double>::infinity();
  const Vec2 ao = a - o;
  const double t = cross2(ao, e) / den;
  const double u = cross2(ao, dir) / den;
  if (t < 0.0 || u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
  return t;
}
}  // namespace detail

/// Horizontal multi-layer ray cast against vessel hull rectangles. Points are
/// returned in the sensor frame (sensor attitude includes roll and pitch).
inline PointCloud lidar_scan(const Pose3& sensor, const std::vector<VesselFootprint>& vessels, const LidarConfig& cfg,
                             RngStream& rng) {
  if (!(cfg.max_range > 0.0)) throw InvalidArgument("lidar_scan: max_range must be positive");
  PointCloud cloud;
  const Vec2 origin = sensor.position.head<2>();
  const int n_beams = static_cast<int>(std::lround(kTwoPi / cfg.angular_resolution));
  const double res = kTwoPi / n_beams;
  std::vector<double> best(n_beams, std::numeric_limits<double>::infinity());
  std::vector<const VesselFootprint*> best_vessel(n_beams, nullptr);

  for (const auto& v : vessels) {
    const auto c = v.corners();
    const double reach = (v.center - origin).norm();
    if (reach - 0.5 * std::hypot(v.length, v.width) > cfg.max_range) continue;
    // Angular span of the hull as seen from the sensor (relative to the first corner).
    const double ref = std::atan2(c[0].y() - origin.y(), c[0].x() - origin.x());
    double lo = 0.0, hi = 0.0;
    bool inside = true;
    for (int k = 0; k < 4; ++k) {
      const double a = wrap_angle(std::atan2(c[k].y() - origin.y(), c[k].x() - origin.x()) - ref);
      lo = std::min(lo, a);
      hi = std::max(hi, a);
      const Vec2 e = c[(k + 1) % 4] - c[k];
      if (cross2(e, origin - c[k]) < 0.0) inside = false;
    }
    if (inside) continue;  // sensor inside the hull sees nothing of it
    const double start = ref + lo - sensor.yaw;
    const int k0 = static_cast<int>(std::floor(start / res));
    const int k1 = static_cast<int>(std::ceil((ref + hi - sensor.yaw) / res));
    for (int k = k0; k <= k1; ++k) {
      const int idx = ((k % n_beams) + n_beams) % n_beams;
      const Vec2 dir = unit(sensor.yaw + idx * res);
      double t = std::numeric_limits<double>::infinity();
      for (int e = 0; e < 4; ++e) t = std::min(t, detail::ray_segment(origin, dir, c[e], c[(e + 1) % 4]));
      if (t < best[idx]) {
        best[idx] = t;
        best_vessel[idx] = &v;
      }
    }
  }

  const Mat3 r_ws = rotation_from_euler(sensor.yaw, sensor.pitch, sensor.roll);
  for (int idx = 0; idx < n_beams; ++idx) {
    if (!(best[idx] <= cfg.max_range)) continue;
    const Vec2 dir = unit(sensor.yaw + idx * res);
    for (double z : cfg.layer_heights) {
      if (z > best_vessel[idx]->height) continue;
      const bool drop = rng.bernoulli(cfg.dropout);
      const double range = best[idx] + rng.normal(cfg.noise_sigma);
      if (drop || range > cfg.max_range || range <= 0.0) continue;
      const Vec2 hit = origin + dir * range;
      const Vec3 world(hit.x(), hit.y(), z);
      cloud.points.push_back(r_ws.transpose() * (world - sensor.position));
      cloud.intensities.push_back(1.0 - 0.5 * range / cfg.max_range);
    }
  }
  return cloud;
}

/// Removes sensor roll/pitch from a cloud so it can be projected to the sea plane.
inline std::vector<Vec2> level_cloud(const PointCloud& cloud, double roll, double pitch) {
  const Mat3 r = rotation_from_euler(0.0, pitch, roll);
  std::vector<Vec2> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points) out.push_back((r * p).head<2>());
  return out;
}

// --- UWB ------------------------------------------------------------------------

struct UwbAnchorSet {
  std::vector<Vec3> anchors;  // DC frame
  double sigma = 0.1;
  double dropout = 0.0;
  double service_radius = 100.0;

  void validate() const {
    if (anchors.size() < 4) throw ConfigError("uwb: at least four anchors are required");
    Vec3 mean = Vec3::Zero();
    for (const auto& a : anchors) mean += a;
    mean /= static_cast<double>(anchors.size());
    Eigen::MatrixXd centered(anchors.size(), 3);
    for (std::size_t i = 0; i < anchors.size(); ++i) centered.row(i) = (anchors[i] - mean).transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    const auto s = svd.singularValues();
    if (s(2) < 1e-6 * s(0)) throw ConfigError("uwb: anchors are coplanar");
  }

  /// Six transceivers at the deck corners and amidships masts, at varied heights.
  static UwbAnchorSet deck_default() {
    UwbAnchorSet s;
    s.anchors = {{3.0, 2.0, 0.3}, {3.0, -2.0, 2.6}, {-3.0, 2.0, 2.8}, {-3.0, -2.0, 0.4}, {0.0, 2.0, 1.5},
                 {0.0, -2.0, 3.2}};
    return s;
  }
};

struct UwbRange {
  int anchor = 0;
  double range = 0.0;
};

inline bool in_uwb_service_volume(const UwbAnchorSet& set, const Vec3& tag) {
  return tag.z() >= -1.0 && tag.head<2>().norm() <= set.service_radius;
}

inline std::vector<UwbRange> uwb_ranges(const UwbAnchorSet& set, const Vec3& tag, RngStream& rng) {
  std::vector<UwbRange> out;
  if (!in_uwb_service_volume(set, tag)) return out;
  out.reserve(set.anchors.size());
  for (std::size_t i = 0; i < set.anchors.size(); ++i) {
    const double noise = rng.normal(set.sigma);
    const bool drop = rng.bernoulli(set.dropout);
    if (drop) continue;
    out.push_back({static_cast<int>(i), std::max(0.0, (tag - set.anchors[i]).norm() + noise)});
  }
  return out;
}

// --- QR landing pads ------------------------------------------------------------

enum class QrBand { None, Coarse, Fine };

struct QrConfig {
  double fov_half_angle = deg2rad(35.0);
  double max_altitude = 8.0;   // coarse (large) pattern readable below this
  double fine_altitude = 2.0;  // nested small pattern readable below this
  double sigma_coarse = 0.10;
  double sigma_fine = 0.02;
  double lens_height = 0.2;    // optical centre above the landing gear
};

struct QrObservation {
  Vec3 relative = Vec3::Zero();  // pad position in the (level, yawed) UAV frame
  int pad_id = -1;
  bool valid = false;
  QrBand band = QrBand::None;
};

inline QrObservation qr_observe(const Pose3& uav, const Pose3& pad, const QrConfig& cfg, RngStream& rng,
                                int pad_id = 0) {
  const Vec3 noise = rng.normal3(1.0);
  QrObservation obs;
  obs.pad_id = pad_id;
  const Vec3 d = pad.position - uav.position;
  const double altitude = -d.z();
  if (altitude < 0.0 || altitude > cfg.max_altitude) return obs;
  const double lateral = d.head<2>().norm();
  if (std::atan2(lateral, altitude + cfg.lens_height) > cfg.fov_half_angle) return obs;
  obs.band = altitude <= cfg.fine_altitude ? QrBand::Fine : QrBand::Coarse;
  const double sigma = obs.band == QrBand::Fine ? cfg.sigma_fine : cfg.sigma_coarse;
  obs.relative = rotation_from_yaw(uav.yaw).rotation.transpose() * d + sigma * noise;
  obs.valid = true;
  return obs;
}

// --- proprioception ---------------------------------------------------------------

struct ProprioConfig {
  double sigma_yaw = deg2rad(0.5);
  double sigma_velocity = 0.02;
  double bias_rate = 0.0;  // rad/s, linear heading drift
};

struct ProprioReading {
  double yaw = 0.0;
  Vec3 velocity = Vec3::Zero();
};

/// Compass/IMU heading plus DVL (or flow) velocity. Holds the accumulated bias.
class ProprioSensor {
 public:
  ProprioSensor() = default;
  ProprioSensor(ProprioConfig cfg, RngStream rng) : cfg_(cfg), rng_(std::move(rng)) {}

  ProprioReading observe(double true_yaw, const Vec3& true_velocity, double dt) {
    bias_ += cfg_.bias_rate * dt;
    ProprioReading r;
    r.yaw = wrap_angle(true_yaw + bias_ + rng_.normal(cfg_.sigma_yaw));
    r.velocity = true_velocity + rng_.normal3(cfg_.sigma_velocity);
    return r;
  }

  double bias() const { return bias_; }
  const ProprioConfig& config() const { return cfg_; }

 private:
  ProprioConfig cfg_;
  RngStream rng_;
  double bias_ = 0.0;
};

inline ProprioReading proprioceptive_observe(ProprioSensor& sensor, double true_yaw, const Vec3& true_velocity,
                                             double dt) {
  return sensor.observe(true_yaw, true_velocity, dt);
}

/// Body-frame accelerometer reading for a yawed, level vehicle.
inline Vec3 imu_accel_observe(const Vec3& accel_world, double yaw, double sigma, RngStream& rng) {
  return rotation_from_yaw(yaw).rotation.transpose() * accel_world + rng.normal3(sigma);
}

}  // namespace drone_carrier
