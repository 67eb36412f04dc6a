#pragma once

// State estimators: the bearing-only target EKF, UWB trilateration, the UAV
// IMU/UWB fusion EKF, a robust window filter and a constant-velocity KF.

#include "drone_carrier/common.hpp"
#include "drone_carrier/sensors.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace drone_carrier {

struct EstimatorState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  double timestamp = 0.0;

  Eigen::Index dim() const { return mean.size(); }

  double asymmetry() const { return (covariance - covariance.transpose()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (covariance + covariance.transpose()));
    return es.eigenvalues().minCoeff();
  }
  bool covariance_ok(double tol = 1e-9) const { return asymmetry() <= tol && min_eigenvalue() >= -tol; }
};

namespace detail {
inline void symmetrize(Eigen::MatrixXd& p) { p = 0.5 * (p + p.transpose()); }

inline void check_covariance(const EstimatorState& s) {
#ifndef NDEBUG
  if (!s.covariance_ok(1e-6 * std::max(1.0, s.covariance.cwiseAbs().maxCoeff())))
    throw Error("estimator covariance lost symmetry or positive semi-definiteness");
#else
  (void)s;
#endif
}

/// Joseph-form linear update. Returns false (state untouched) when the
/// innovation fails the chi-square gate.
inline bool kalman_update(EstimatorState& s, const Eigen::VectorXd& innovation, const Eigen::MatrixXd& h,
                          const Eigen::MatrixXd& r, double gate, double* nis_out = nullptr) {
  const Eigen::MatrixXd S = h * s.covariance * h.transpose() + r;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
  const double nis = innovation.dot(ldlt.solve(innovation));
  if (nis_out) *nis_out = nis;
  if (gate > 0.0 && !(nis <= gate)) return false;
  const Eigen::MatrixXd k = ldlt.solve(h * s.covariance).transpose();
  const Eigen::MatrixXd ikh = Eigen::MatrixXd::Identity(s.dim(), s.dim()) - k * h;
  s.mean += k * innovation;
  s.covariance = ikh * s.covariance * ikh.transpose() + k * r * k.transpose();
  symmetrize(s.covariance);
  check_covariance(s);
  return true;
}
}  // namespace detail

inline double nees(const EstimatorState& s, const Eigen::VectorXd& truth) {
  const Eigen::VectorXd e = s.mean - truth;
  return e.dot(s.covariance.ldlt().solve(e));
}

// --- target EKF: state [x, y, vx, vy] in the inertial frame -------------------------

/// Mahalanobis gate on squared distance (3 sigma).
inline constexpr double kInnovationGate = 9.0;

inline EstimatorState make_target_state(const Vec2& position, double pos_sigma, double vel_sigma, double t = 0.0) {
  EstimatorState s;
  s.mean = Eigen::Vector4d(position.x(), position.y(), 0.0, 0.0);
  s.covariance = Eigen::Vector4d(pos_sigma * pos_sigma, pos_sigma * pos_sigma, vel_sigma * vel_sigma,
                                 vel_sigma * vel_sigma)
                     .asDiagonal();
  s.timestamp = t;
  return s;
}

/// Nearly-constant-velocity prediction; q is the white-acceleration intensity (m^2/s^3).
inline EstimatorState target_ekf_predict(const EstimatorState& s, double dt, double q) {
  if (dt < 0.0) throw InvalidArgument("target_ekf_predict: dt must be nonnegative");
  if (dt == 0.0) return s;
  Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
  f(0, 2) = f(1, 3) = dt;
  Eigen::Matrix4d qm = Eigen::Matrix4d::Zero();
  const double a = dt * dt * dt / 3.0, b = dt * dt / 2.0;
  qm(0, 0) = qm(1, 1) = a * q;
  qm(0, 2) = qm(2, 0) = qm(1, 3) = qm(3, 1) = b * q;
  qm(2, 2) = qm(3, 3) = dt * q;
  EstimatorState out;
  out.mean = f * s.mean;
  out.covariance = f * s.covariance * f.transpose() + qm;
  detail::symmetrize(out.covariance);
  out.timestamp = s.timestamp + dt;
  detail::check_covariance(out);
  return out;
}

struct UpdateOutcome {
  EstimatorState state;
  bool accepted = false;
  double nis = 0.0;
};

/// Update with an (azimuth, depression) pair; the measurement model is the
/// inverse of the gimbal sea-plane projection.
inline UpdateOutcome target_ekf_update_bearing(const EstimatorState& s, const GimbalMeasurement& m,
                                               const GimbalCamera& cam) {
  if (!(m.phi > cam.phi_min)) throw GeometryError("target_ekf_update_bearing: measurement below horizon gate");
  const Vec3 pos(s.mean[0], s.mean[1], 0.0);
  const auto [theta_hat, phi_hat] = gimbal_angles(cam, pos);
  const Mat2 r_gi = rotation_from_yaw(cam.mount.yaw).rotation.topLeftCorner<2, 2>().transpose();
  const Vec2 l = r_gi * (pos.head<2>() - cam.mount.position.head<2>());
  const double rho2 = l.squaredNorm(), rho = std::sqrt(rho2);
  Eigen::Matrix<double, 2, 2> dl;  // d(theta, phi) / d(local x, local y)
  dl(0, 0) = l.y() / rho2;
  dl(0, 1) = -l.x() / rho2;
  const double dphi_drho = -cam.height / (cam.height * cam.height + rho2);
  dl(1, 0) = dphi_drho * l.x() / rho;
  dl(1, 1) = dphi_drho * l.y() / rho;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 4);
  h.leftCols<2>() = dl * r_gi;
  Eigen::VectorXd nu(2);
  nu << wrap_angle(m.theta - theta_hat), m.phi - phi_hat;
  const Eigen::MatrixXd r = Eigen::Matrix2d::Identity() * cam.sigma * cam.sigma;
  UpdateOutcome out{s, false, 0.0};
  out.accepted = detail::kalman_update(out.state, nu, h, r, kInnovationGate, &out.nis);
  return out;
}

/// Direct position pseudo-measurement (e.g. a relayed fix).
inline UpdateOutcome target_ekf_update_position(const EstimatorState& s, const Vec2& p, const Mat2& r,
                                                double gate = 0.0) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 4);
  h(0, 0) = h(1, 1) = 1.0;
  UpdateOutcome out{s, false, 0.0};
  out.accepted = detail::kalman_update(out.state, p - s.mean.head<2>(), h, r, gate, &out.nis);
  return out;
}

inline UpdateOutcome target_ekf_update_velocity(const EstimatorState& s, const Vec2& v, const Mat2& r) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 4);
  h(0, 2) = h(1, 3) = 1.0;
  UpdateOutcome out{s, false, 0.0};
  out.accepted = detail::kalman_update(out.state, v - s.mean.tail<2>(), h, r, 0.0, &out.nis);
  return out;
}

/// Stateful wrapper that counts gated measurements.
class TargetEkf {
 public:
  TargetEkf() = default;
  TargetEkf(EstimatorState initial, double q) : state_(std::move(initial)), q_(q) {}

  void predict_to(double t) {
    if (t > state_.timestamp) state_ = target_ekf_predict(state_, t - state_.timestamp, q_);
  }
  bool update(const GimbalMeasurement& m, const GimbalCamera& cam) {
    predict_to(m.timestamp);
    auto r = target_ekf_update_bearing(state_, m, cam);
    if (!r.accepted) {
      ++rejected_;
      return false;
    }
    state_ = std::move(r.state);
    ++accepted_;
    return true;
  }

  const EstimatorState& state() const { return state_; }
  EstimatorState& state() { return state_; }
  Vec2 position() const { return state_.mean.head<2>(); }
  Vec2 velocity() const { return state_.mean.tail<2>(); }
  int rejected() const { return rejected_; }
  int accepted() const { return accepted_; }

 private:
  EstimatorState state_ = make_target_state(Vec2::Zero(), 50.0, 0.2);
  double q_ = 1e-4;
  int rejected_ = 0;
  int accepted_ = 0;
};

// --- trilateration --------------------------------------------------------------------

struct TrilaterationResult {
  Vec3 position = Vec3::Zero();
  double residual_rms = 0.0;
  int iterations = 0;
};

inline constexpr double kMaxTrilaterationCondition = 1e8;

/// Linearised least squares (differences against the anchor centroid)
/// refined by at most ten Gauss-Newton steps.
inline TrilaterationResult trilaterate(const UwbAnchorSet& set, const std::vector<UwbRange>& ranges) {
  if (ranges.size() < 4) throw InsufficientData("trilaterate: at least four ranges are required");
  const auto n = static_cast<Eigen::Index>(ranges.size());
  std::vector<Vec3> a(ranges.size());
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rg = ranges[static_cast<std::size_t>(i)];
    if (rg.anchor < 0 || rg.anchor >= static_cast<int>(set.anchors.size()))
      throw InvalidArgument("trilaterate: range refers to an unknown anchor");
    a[static_cast<std::size_t>(i)] = set.anchors[static_cast<std::size_t>(rg.anchor)];
    r[i] = rg.range;
  }
  Vec3 abar = Vec3::Zero();
  double mean_sq = 0.0, mean_r2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    abar += a[static_cast<std::size_t>(i)];
    mean_sq += a[static_cast<std::size_t>(i)].squaredNorm();
    mean_r2 += r[i] * r[i];
  }
  abar /= static_cast<double>(n);
  mean_sq /= static_cast<double>(n);
  mean_r2 /= static_cast<double>(n);

  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3& ai = a[static_cast<std::size_t>(i)];
    A.row(i) = -2.0 * (ai - abar).transpose();
    b[i] = r[i] * r[i] - mean_r2 - (ai.squaredNorm() - mean_sq);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto sv = svd.singularValues();
  if (sv(2) <= 0.0 || sv(0) / sv(2) > kMaxTrilaterationCondition)
    throw GeometryError("trilaterate: anchor geometry is degenerate");
  Vec3 x = svd.solve(b);

  TrilaterationResult out;
  Eigen::VectorXd f(n);
  Eigen::MatrixXd J(n, 3);
  for (int it = 0; it < 10; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec3 d = x - a[static_cast<std::size_t>(i)];
      const double dist = std::max(d.norm(), 1e-12);
      f[i] = dist - r[i];
      J.row(i) = d.transpose() / dist;
    }
    const Vec3 step = J.colPivHouseholderQr().solve(-f);
    if (!step.allFinite()) break;
    x += step;
    out.iterations = it + 1;
    if (step.norm() < 1e-13 * std::max(1.0, x.norm())) break;
  }
  for (Eigen::Index i = 0; i < n; ++i) f[i] = (x - a[static_cast<std::size_t>(i)]).norm() - r[i];
  out.position = x;
  out.residual_rms = std::sqrt(f.squaredNorm() / static_cast<double>(n));
  return out;
}

// --- UAV fusion EKF: state [p(3), v(3), yaw bias] ----------------------------------------

struct UavEkfConfig {
  double accel_sigma = 0.3;        // m/s^2, accelerometer white noise
  double bias_walk = 1e-5;         // rad^2/s
  double fix_sigma = 0.12;         // m, trilaterated position
  double fix_gate = 16.0;          // chi-square, 3 dof
  double divergence_trace = 400.0;
};

struct UavImuInput {
  Vec3 accel_body = Vec3::Zero();
  double yaw = 0.0;  // measured (biased) heading
};

struct UavFuseResult {
  EstimatorState state;
  bool fix_accepted = false;
  bool diverged = false;
};

inline EstimatorState make_uav_state(const Vec3& position, double pos_sigma, double t = 0.0) {
  EstimatorState s;
  s.mean = Eigen::VectorXd::Zero(7);
  s.mean.head<3>() = position;
  Eigen::VectorXd d(7);
  d << Vec3::Constant(pos_sigma * pos_sigma), Vec3::Constant(0.01), 0.01;
  s.covariance = d.asDiagonal();
  s.timestamp = t;
  return s;
}

inline UavFuseResult uav_ekf_fuse(const EstimatorState& s, const UavImuInput& imu, const std::optional<Vec3>& fix,
                                  double dt, const UavEkfConfig& cfg = {}, double fix_sigma_override = -1.0) {
  if (!(dt > 0.0)) throw InvalidArgument("uav_ekf_fuse: dt must be positive");
  UavFuseResult out;
  EstimatorState& x = out.state;
  x = s;
  const double psi = imu.yaw - s.mean[6];
  const double c = std::cos(psi), sn = std::sin(psi);
  Mat3 rz;
  rz << c, -sn, 0, sn, c, 0, 0, 0, 1;
  Mat3 drz;
  drz << -sn, -c, 0, c, -sn, 0, 0, 0, 0;
  const Vec3 acc = rz * imu.accel_body;
  x.mean.head<3>() += s.mean.segment<3>(3) * dt + 0.5 * acc * dt * dt;
  x.mean.segment<3>(3) += acc * dt;

  Eigen::Matrix<double, 7, 7> f = Eigen::Matrix<double, 7, 7>::Identity();
  f.block<3, 3>(0, 3) = Mat3::Identity() * dt;
  const Vec3 dacc_db = -drz * imu.accel_body;
  f.block<3, 1>(0, 6) = 0.5 * dacc_db * dt * dt;
  f.block<3, 1>(3, 6) = dacc_db * dt;
  Eigen::Matrix<double, 7, 3> g = Eigen::Matrix<double, 7, 3>::Zero();
  g.block<3, 3>(0, 0) = Mat3::Identity() * 0.5 * dt * dt;
  g.block<3, 3>(3, 0) = Mat3::Identity() * dt;
  Eigen::Matrix<double, 7, 7> q = g * g.transpose() * cfg.accel_sigma * cfg.accel_sigma;
  q(6, 6) += cfg.bias_walk * dt;
  x.covariance = f * s.covariance * f.transpose() + q;
  detail::symmetrize(x.covariance);
  x.timestamp = s.timestamp + dt;

  if (fix) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3, 7);
    h.leftCols<3>().setIdentity();
    const double sigma = fix_sigma_override > 0.0 ? fix_sigma_override : cfg.fix_sigma;
    const Eigen::MatrixXd r = Mat3::Identity() * std::max(sigma * sigma, 1e-12);
    out.fix_accepted = detail::kalman_update(x, *fix - x.mean.head<3>(), h, r, cfg.fix_gate);
  }
  out.diverged = !(x.covariance.trace() <= cfg.divergence_trace);
  return out;
}

// --- robust window filter ---------------------------------------------------------------

namespace detail {
inline double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}
}  // namespace detail

/// Outlier elimination against the component-wise median (k = 3 scaled MAD),
/// then the mean of the survivors. Falls back to the median when nothing survives.
inline Vec3 robust_position_filter(const std::vector<Vec3>& window, double k = 3.0) {
  if (window.empty()) throw InsufficientData("robust_position_filter: empty window");
  Vec3 med, mad;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> comp;
    comp.reserve(window.size());
    for (const auto& p : window) comp.push_back(p[c]);
    med[c] = detail::median(comp);
    for (auto& v : comp) v = std::abs(v - med[c]);
    mad[c] = 1.4826 * detail::median(comp);
  }
  Vec3 sum = Vec3::Zero();
  int kept = 0;
  for (const auto& p : window) {
    bool inlier = true;
    for (int c = 0; c < 3; ++c)
      if (std::abs(p[c] - med[c]) > k * mad[c]) inlier = false;
    if (inlier) {
      sum += p;
      ++kept;
    }
  }
  return kept > 0 ? Vec3(sum / kept) : med;
}

// --- constant-velocity KF over a position history ---------------------------------------

struct TimedPosition {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
};

struct VelocityEstimate {
  Vec3 velocity = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();
};

/// Two-point initialisation then sequential KF updates; exact on noise-free
/// linear motion because every later innovation is zero.
inline VelocityEstimate estimate_velocity(const std::vector<TimedPosition>& history, double sigma = 0.05,
                                          double q = 1e-3) {
  if (history.size() < 2) throw InsufficientData("estimate_velocity: at least two samples are required");
  for (std::size_t i = 1; i < history.size(); ++i)
    if (!(history[i].t > history[i - 1].t))
      throw InvalidArgument("estimate_velocity: timestamps must be strictly increasing");
  const double r = std::max(sigma * sigma, 1e-18);
  const double dt0 = history[1].t - history[0].t;
  // Per axis the state is [p, v]; axes are independent and share covariance.
  Eigen::Matrix<double, 3, 2> x;
  x.col(0) = history[1].position;
  x.col(1) = (history[1].position - history[0].position) / dt0;
  Mat2 p;
  p << r, r / dt0, r / dt0, 2.0 * r / (dt0 * dt0);
  for (std::size_t i = 2; i < history.size(); ++i) {
    const double dt = history[i].t - history[i - 1].t;
    Mat2 f;
    f << 1.0, dt, 0.0, 1.0;
    Mat2 qm;
    qm << dt * dt * dt / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt;
    x.col(0) += x.col(1) * dt;
    p = f * p * f.transpose() + q * qm;
    const double s = p(0, 0) + r;
    const Vec2 k = p.col(0) / s;
    const Vec3 innov = history[i].position - x.col(0);
    x.col(0) += k[0] * innov;
    x.col(1) += k[1] * innov;
    const Mat2 ikh = Mat2::Identity() - k * Eigen::RowVector2d(1.0, 0.0);
    p = ikh * p * ikh.transpose() + r * k * k.transpose();
  }
  return {x.col(1), Mat3::Identity() * p(1, 1)};
}

}  // namespace drone_carrier
