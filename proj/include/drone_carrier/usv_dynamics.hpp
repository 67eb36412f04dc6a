#pragma once

// Planar 3-DOF carrier model  M v' + D v = tau,  with v = [surge, sway, yaw rate]
// in the FLU body frame, two thrusters at lever arm d either side of the
// centre line, and a kinematic roll/pitch overlay driven by waves.

#include "drone_carrier/common.hpp"
#include "drone_carrier/random.hpp"

#include <algorithm>
#include <array>

namespace drone_carrier {

struct HydroParams {
  Mat3 inertia = Eigen::Vector3d(800.0, 900.0, 700.0).asDiagonal();  // kg, kg, kg m^2
  Vec3 damping = {120.0, 250.0, 180.0};                              // D_x, D_y, D_z
  double lever_arm = 1.6;                                            // d (m)
  double thrust_max = 400.0;                                         // N per thruster
  double steer_max = deg2rad(90.0);                                  // rad

  void validate() const {
    if (!inertia.allFinite() || !damping.allFinite())
      throw ConfigError("hydro params: non-finite inertia or damping");
    if ((inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-9 * inertia.cwiseAbs().maxCoeff())
      throw ConfigError("hydro params: inertia matrix is not symmetric");
    Eigen::LLT<Mat3> llt(inertia);
    if (llt.info() != Eigen::Success) throw ConfigError("hydro params: inertia matrix is not positive definite");
    if ((damping.array() <= 0.0).any()) throw ConfigError("hydro params: damping coefficients must be positive");
    if (!(lever_arm > 0.0)) throw ConfigError("hydro params: lever arm must be positive");
    if (!(thrust_max > 0.0)) throw ConfigError("hydro params: thrust limit must be positive");
    if (!(steer_max > 0.0 && steer_max <= kPi / 2 + 1e-12))
      throw ConfigError("hydro params: steering limit must lie in (0, pi/2]");
  }
};

struct UsvState {
  Vec2 position = Vec2::Zero();  // inertial ENU (m)
  double yaw = 0.0;              // rad, ENU, 0 = east
  Vec3 velocity = Vec3::Zero();  // surge m/s, sway m/s, yaw rate rad/s
  double roll = 0.0;
  double pitch = 0.0;

  double kinetic_energy(const Mat3& inertia) const { return 0.5 * velocity.dot(inertia * velocity); }
};

struct ThrusterCommand {
  double t1 = 0.0;  // starboard thruster (positive moment when pushing forward)
  double t2 = 0.0;  // port thruster
  double theta1 = 0.0;
  double theta2 = 0.0;
};

struct Wrench {
  double fx = 0.0;
  double fy = 0.0;
  double mz = 0.0;

  Vec3 vec() const { return {fx, fy, mz}; }
  static Wrench from(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
  Wrench operator+(const Wrench& o) const { return {fx + o.fx, fy + o.fy, mz + o.mz}; }
};

struct Actuation {
  Wrench wrench;
  ThrusterCommand applied;
  bool saturated = false;
};

namespace detail {
inline ThrusterCommand clamp_command(const ThrusterCommand& c, const HydroParams& p, bool& saturated) {
  ThrusterCommand out = c;
  out.t1 = std::clamp(c.t1, -p.thrust_max, p.thrust_max);
  out.t2 = std::clamp(c.t2, -p.thrust_max, p.thrust_max);
  out.theta1 = std::clamp(c.theta1, -p.steer_max, p.steer_max);
  out.theta2 = std::clamp(c.theta2, -p.steer_max, p.steer_max);
  saturated = out.t1 != c.t1 || out.t2 != c.t2 || out.theta1 != c.theta1 || out.theta2 != c.theta2;
  return out;
}
}  // namespace detail

/// Fixed-thruster model: surge force and differential yaw moment only.
inline Actuation actuation_simplified(const ThrusterCommand& cmd, const HydroParams& params) {
  if (cmd.theta1 != 0.0 || cmd.theta2 != 0.0)
    throw ModeViolation("simplified actuation requires zero steering angles");
  Actuation a;
  a.applied = detail::clamp_command(cmd, params, a.saturated);
  const double d = params.lever_arm;
  a.wrench = {a.applied.t1 + a.applied.t2, 0.0, d * a.applied.t1 - d * a.applied.t2};
  return a;
}

/// Rotating-thruster model used for lateral manoeuvres.
inline Actuation actuation_vectored(const ThrusterCommand& cmd, const HydroParams& params) {
  Actuation a;
  a.applied = detail::clamp_command(cmd, params, a.saturated);
  const auto& c = a.applied;
  const double d = params.lever_arm;
  const double c1 = std::cos(c.theta1), c2 = std::cos(c.theta2);
  a.wrench = {c.t1 * c1 + c.t2 * c2, c.t1 * std::sin(c.theta1) + c.t2 * std::sin(c.theta2),
              d * c.t1 * c1 - d * c.t2 * c2};
  return a;
}

/// Inverse of the vectored model: sway force is split evenly, surge and
/// moment fix each thruster's longitudinal share.
inline ThrusterCommand allocate_vectored(const Wrench& w, const HydroParams& params) {
  const double d = params.lever_arm;
  const std::array<Vec2, 2> f = {Vec2{(w.fx + w.mz / d) / 2.0, w.fy / 2.0},
                                 Vec2{(w.fx - w.mz / d) / 2.0, w.fy / 2.0}};
  std::array<double, 2> thrust{}, angle{};
  for (int i = 0; i < 2; ++i) {
    double t = f[i].norm();
    double th = std::atan2(f[i].y(), f[i].x());
    if (std::abs(th) > kPi / 2 + 1e-12) {  // reverse thrust keeps the angle in [-pi/2, pi/2]
      t = -t;
      th = wrap_angle(th + kPi);
    }
    thrust[i] = t;
    angle[i] = th;
  }
  return {thrust[0], thrust[1], angle[0], angle[1]};
}

/// Validated model with precomputed inverse inertia. Construction fails on
/// bad parameters so stepping never has to.
class UsvModel {
 public:
  explicit UsvModel(HydroParams params) : params_(std::move(params)) {
    params_.validate();
    inertia_inv_ = params_.inertia.inverse();
    const Mat3 a = inertia_inv_ * params_.damping.asDiagonal().toDenseMatrix();
    rate_max_ = a.eigenvalues().real().maxCoeff();
  }

  const HydroParams& params() const { return params_; }
  const Mat3& inertia_inverse() const { return inertia_inv_; }
  double fastest_mode_rate() const { return rate_max_; }

  Vec3 acceleration(const Vec3& v, const Wrench& tau) const {
    return inertia_inv_ * (tau.vec() - params_.damping.cwiseProduct(v));
  }

  /// Classic RK4 on pose and body velocity. Large steps are subdivided so that
  /// h * rate stays inside the RK4 dissipative region.
  UsvState step(const UsvState& s, const Wrench& tau, double dt) const {
    if (!(dt > 0.0 && dt <= 0.5)) throw InvalidArgument("step_dynamics: dt must lie in (0, 0.5]");
    const int n = std::max(1, static_cast<int>(std::ceil(dt * rate_max_ / 0.5)));
    const double h = dt / n;
    // x = [px, py, yaw, u, v, r]
    using Vec6 = Eigen::Matrix<double, 6, 1>;
    auto deriv = [&](const Vec6& x) {
      Vec6 dx;
      const double c = std::cos(x[2]), sn = std::sin(x[2]);
      dx[0] = c * x[3] - sn * x[4];
      dx[1] = sn * x[3] + c * x[4];
      dx[2] = x[5];
      dx.tail<3>() = acceleration(x.tail<3>(), tau);
      return dx;
    };
    Vec6 x;
    x << s.position, s.yaw, s.velocity;
    for (int i = 0; i < n; ++i) {
      const Vec6 k1 = deriv(x);
      const Vec6 k2 = deriv(x + 0.5 * h * k1);
      const Vec6 k3 = deriv(x + 0.5 * h * k2);
      const Vec6 k4 = deriv(x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    UsvState out = s;
    out.position = x.head<2>();
    out.yaw = wrap_angle(x[2]);
    out.velocity = x.tail<3>();
    if (!out.position.allFinite() || !out.velocity.allFinite()) throw Error("step_dynamics: non-finite state");
    return out;
  }

  Vec3 steady_state_velocity(const Wrench& tau) const { return tau.vec().cwiseQuotient(params_.damping); }

 private:
  HydroParams params_;
  Mat3 inertia_inv_;
  double rate_max_ = 0.0;
};

inline UsvState step_dynamics(const UsvModel& model, const UsvState& s, const Wrench& tau, double dt) {
  return model.step(s, tau, dt);
}

// --- waves ------------------------------------------------------------------

struct WaveConfig {
  // Per sea state 0..3. Sea state 3 corresponds to ~1.25-1.5 m waves.
  std::array<double, 4> roll_amplitude = {0.0, deg2rad(2.0), deg2rad(5.0), deg2rad(8.0)};
  std::array<double, 4> pitch_amplitude = {0.0, deg2rad(1.5), deg2rad(3.5), deg2rad(6.0)};
  std::array<double, 4> force_amplitude = {0.0, 15.0, 40.0, 80.0};    // N
  std::array<double, 4> moment_amplitude = {0.0, 10.0, 30.0, 60.0};   // N m
};

struct WaveSample {
  double roll = 0.0;
  double pitch = 0.0;
  Wrench force;
};

/// Sum of sinusoids with seeded phases; every channel is bounded by its
/// configured amplitude because the component weights sum to one.
class WaveField {
 public:
  static constexpr int kComponents = 4;

  WaveField() = default;
  WaveField(int sea_state, RngStream rng, WaveConfig cfg = {}) : sea_state_(sea_state) {
    if (sea_state < 0 || sea_state > 3) throw InvalidArgument("sea state must be 0..3");
    amplitude_ = {cfg.roll_amplitude[sea_state], cfg.pitch_amplitude[sea_state], cfg.force_amplitude[sea_state],
                  cfg.force_amplitude[sea_state], cfg.moment_amplitude[sea_state]};
    double wsum = 0.0;
    for (int k = 0; k < kComponents; ++k) {
      omega_[k] = kTwoPi / rng.uniform(4.0, 10.0);
      weight_[k] = rng.uniform(0.5, 1.0);
      wsum += weight_[k];
      for (auto& ph : phase_) ph[k] = rng.uniform(0.0, kTwoPi);
    }
    for (auto& w : weight_) w /= wsum;
  }

  int sea_state() const { return sea_state_; }
  double roll_bound() const { return amplitude_[0]; }
  double pitch_bound() const { return amplitude_[1]; }

  WaveSample sample(double t) const {
    if (sea_state_ == 0) return {};
    std::array<double, 5> ch{};
    for (std::size_t c = 0; c < ch.size(); ++c) {
      double acc = 0.0;
      for (int k = 0; k < kComponents; ++k) acc += weight_[k] * std::sin(omega_[k] * t + phase_[c][k]);
      ch[c] = amplitude_[c] * acc;
    }
    return {ch[0], ch[1], {ch[2], ch[3], ch[4]}};
  }

  /// Time derivative of the roll/pitch overlay (rad/s).
  Vec2 attitude_rate(double t) const {
    if (sea_state_ == 0) return Vec2::Zero();
    Vec2 r = Vec2::Zero();
    for (int c = 0; c < 2; ++c)
      for (int k = 0; k < kComponents; ++k)
        r[c] += amplitude_[c] * weight_[k] * omega_[k] * std::cos(omega_[k] * t + phase_[c][k]);
    return r;
  }

 private:
  int sea_state_ = 0;
  std::array<double, 5> amplitude_{};
  std::array<double, kComponents> omega_{};
  std::array<double, kComponents> weight_{};
  std::array<std::array<double, kComponents>, 5> phase_{};
};

inline WaveSample wave_disturbance(int sea_state, double t, const RngStream& rng, const WaveConfig& cfg = {}) {
  return WaveField(sea_state, rng, cfg).sample(t);
}

}  // namespace drone_carrier
