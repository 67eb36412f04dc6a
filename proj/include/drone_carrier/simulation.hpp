#pragma once

// World truth and the fixed-order tick loop:
//   sensors -> estimators -> planners -> controllers -> dynamics.
// Every random draw comes from a stream derived from the master seed, and
// logging only reads state, so a run is a pure function of (scenario, seed).

#include "drone_carrier/dubins.hpp"
#include "drone_carrier/estimation.hpp"
#include "drone_carrier/frames.hpp"
#include "drone_carrier/guidance.hpp"
#include "drone_carrier/manipulator.hpp"
#include "drone_carrier/mission.hpp"
#include "drone_carrier/perception.hpp"
#include "drone_carrier/random.hpp"
#include "drone_carrier/scenario.hpp"
#include "drone_carrier/sensors.hpp"
#include "drone_carrier/uav.hpp"
#include "drone_carrier/usv_dynamics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace drone_carrier {

// --- small geometry helpers -------------------------------------------------------

/// Separating-axis gap between two convex quads (negative = penetration depth).
/// `axis` receives the unit normal pointing from `b` towards `a`.
inline double quad_gap(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b, Vec2* axis = nullptr) {
  double best = -std::numeric_limits<double>::infinity();
  Vec2 best_axis(1.0, 0.0);
  auto test = [&](const std::array<Vec2, 4>& poly) {
    for (int k = 0; k < 2; ++k) {
      const Vec2 e = poly[(k + 1) % 4] - poly[k];
      const Vec2 n = Vec2(-e.y(), e.x()).normalized();
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const auto& p : a) amin = std::min(amin, p.dot(n)), amax = std::max(amax, p.dot(n));
      for (const auto& p : b) bmin = std::min(bmin, p.dot(n)), bmax = std::max(bmax, p.dot(n));
      const double s1 = amin - bmax, s2 = bmin - amax;
      if (s1 > best) best = s1, best_axis = n;
      if (s2 > best) best = s2, best_axis = -n;
    }
  };
  test(a);
  test(b);
  if (axis) *axis = best_axis;
  return best;
}

inline double point_rect_distance(const Vec2& p, const Vec2& center, double axis, double length, double width) {
  const Vec2 d = p - center;
  const double x = d.dot(unit(axis)), y = d.dot(unit(axis + kPi / 2));
  return std::hypot(std::max(std::abs(x) - length / 2, 0.0), std::max(std::abs(y) - width / 2, 0.0));
}

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw InsufficientData("percentile: empty sample");
  const auto k = static_cast<std::size_t>(std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

inline Mat3 level_rotation(double roll, double pitch) { return rotation_from_euler(0.0, pitch, roll); }

// --- configuration ------------------------------------------------------------------

struct SimConfig {
  double dt = 0.05;
  int gimbal_every = 2;        // 10 Hz
  int lidar_every = 10;        // 2 Hz in transit
  int lidar_dock_every = 4;    // 5 Hz while docking
  int uwb_every = 2;           // 10 Hz
  double max_sim_s = -1.0;     // overrides the scenario cap when positive
  std::optional<Phase> stop_after_phase;
  bool record_logs = true;

  HydroParams hydro;
  HeadingGains heading;
  TurnParams turn;
  DockGains dock;
  UavGains uav;
  UavMissionConfig uav_mission;
  UavEkfConfig uav_ekf;
  QrConfig qr;
  MissionConfig mission;
  ManipulatorModel manipulator;
  DragConfig drag;

  double target_q = 1e-4;        // target filter process intensity
  double carrier_q = 2e-3;       // carrier filter process intensity
  double circle_radius = 50.0;
  double circle_speed = 1.5;
  double approach_speed = 0.8;
  double standoff = 6.0;         // lateral clearance before sideways closing
  double cluster_eps = 2.0;
  int cluster_min_pts = 8;
  double home_tolerance = 50.0;
};

// --- UAV agent ----------------------------------------------------------------------

struct DeckState {
  double t = 0.0;
  Mat3 level_from_body = Mat3::Identity();  // removes roll/pitch
  Vec3 wind = Vec3::Zero();
};

struct DeckObject {
  int id = 0;
  Vec3 position = Vec3::Zero();  // leveled DC frame
  double mass = 0.0, length = 0.0, width = 0.0, height = 0.0;
  ObjectClass cls = ObjectClass::Small;
  bool picked = false;   // carried by a UAV
  bool stowed = false;   // on the carrier deck
  bool delivered = false;
};

struct UavAgent {
  int index = 0;
  UavState truth;
  PidMemory pid;
  EstimatorState ekf;
  std::deque<std::pair<double, Vec3>> fixes;
  UavMissionState ms;
  Vec3 pad_body = Vec3::Zero();
  Vec3 last_accel = Vec3::Zero();
  UavSetpoint last_sp;
  RngStream rng_uwb, rng_imu, rng_qr, rng_grasp, rng_detect;
  std::optional<double> landing_error;  // truth lateral error at touchdown
  bool ekf_ready = false;
  std::size_t transitions_logged = 0;

  UavAgent() = default;
  UavAgent(int i, std::uint64_t seed, const Vec3& pad)
      : index(i),
        pad_body(pad),
        rng_uwb(RngStream::derive(seed, "uwb", i)),
        rng_imu(RngStream::derive(seed, "uav_imu", i)),
        rng_qr(RngStream::derive(seed, "qr", i)),
        rng_grasp(RngStream::derive(seed, "grasp", i)),
        rng_detect(RngStream::derive(seed, "detect", i)) {
    truth.position = pad;
    ekf = make_uav_state(pad, 0.05);
  }

  Vec3 pad_level(const DeckState& d) const { return d.level_from_body * pad_body; }
  bool airborne() const { return ms.mode != UavMode::Idle && ms.mode != UavMode::Landed; }
};

inline const std::vector<Vec3>& default_pads() {
  static const std::vector<Vec3> pads = {{2.0, 1.0, 0.0}, {2.0, -1.0, 0.0}, {-2.0, 1.0, 0.0}, {-2.0, -1.0, 0.0}};
  return pads;
}

/// Deck surface height under (x, y) in the leveled frame, if over the deck.
inline std::optional<double> deck_surface(const DeckState& d, const Vec2& xy, double half_len = 3.0, double half_w = 2.0) {
  const Vec3 n = d.level_from_body.col(2);
  const Vec3 body = d.level_from_body.transpose() * Vec3(xy.x(), xy.y(), 0.0);
  if (std::abs(body.x()) > half_len || std::abs(body.y()) > half_w) return std::nullopt;
  return -(n.x() * xy.x() + n.y() * xy.y()) / n.z();
}

/// One UAV tick: UWB/IMU/QR sensing, EKF, task machine, flight dynamics.
inline void uav_agent_tick(UavAgent& a, const DeckState& deck, const CarrierCommand& cmd, std::vector<DeckObject>& objects,
                           const UwbAnchorSet& anchors_body, const SimConfig& cfg, bool uwb_tick) {
  const double dt = cfg.dt;
  if (a.ms.mode == UavMode::Idle && !cmd.takeoff) {
    a.truth.position = a.pad_level(deck);
    a.truth.velocity.setZero();
    return;
  }
  if (a.ms.mode == UavMode::Landed) {
    a.truth.position = a.pad_level(deck);
    a.truth.velocity.setZero();
    return;
  }
  if (!a.ekf_ready) {
    a.ekf = make_uav_state(a.truth.position, 0.05, deck.t);
    a.ekf.covariance.block<3, 3>(3, 3) = Mat3::Identity() * 1e-4;
    a.ekf_ready = true;
  }

  // sensors
  std::optional<Vec3> fix;
  if (uwb_tick) {
    UwbAnchorSet level = anchors_body;
    for (auto& p : level.anchors) p = deck.level_from_body * p;
    const auto ranges = uwb_ranges(level, a.truth.position, a.rng_uwb);
    if (ranges.size() >= 4) {
      try {
        a.fixes.emplace_back(deck.t, trilaterate(level, ranges).position);
        while (a.fixes.size() > 3) a.fixes.pop_front();
        std::vector<Vec3> window;
        const Vec3 v = a.ekf.mean.segment<3>(3);
        for (const auto& [tf, p] : a.fixes) window.push_back(p + v * (deck.t - tf));
        fix = robust_position_filter(window);
      } catch (const Error&) {
      }
    }
  }
  const Vec3 accel_meas = a.last_accel + a.rng_imu.normal3(0.05);
  const double yaw_meas = a.truth.yaw + a.rng_imu.normal(0.002);
  UavImuInput imu{rotation_from_yaw(a.truth.yaw).rotation.transpose() * accel_meas, yaw_meas};
  QrObservation qr = qr_observe(Pose3{a.truth.position, a.truth.yaw, 0, 0}, Pose3{a.pad_level(deck), 0, 0, 0}, cfg.qr,
                                a.rng_qr, a.index);
  std::optional<std::pair<int, Vec3>> detection;
  {
    double best = std::numeric_limits<double>::infinity();
    const Vec3 noise = a.rng_detect.normal3(0.05);
    for (const auto& o : objects) {
      if (o.picked || o.stowed || o.delivered || o.cls != ObjectClass::Small) continue;
      const Vec3 d = o.position - a.truth.position;
      const double h = d.head<2>().norm();
      if (h <= cfg.uav_mission.detect_radius && -d.z() <= cfg.uav_mission.detect_altitude && h < best) {
        best = h;
        detection = std::make_pair(o.id, o.position + noise);
      }
    }
  }

  // estimator
  const auto fused = uav_ekf_fuse(a.ekf, imu, fix, dt, cfg.uav_ekf);
  a.ekf = fused.state;
  UavObservation obs;
  obs.t = deck.t;
  obs.nav_position = a.ekf.mean.head<3>();
  obs.nav_velocity = a.ekf.mean.segment<3>(3);
  obs.ekf_diverged = fused.diverged;
  obs.qr = qr;
  // Only the searching UAV reacts to detections of objects it is not assigned to.
  if (cmd.task == UavTaskKind::Transport) obs.detection = detection;

  // planner / controller
  const UavMode before = a.ms.mode;
  const auto carrying_before = a.truth.carrying;
  a.last_sp = uav_mission_step(a.ms, a.truth, obs, cmd, a.rng_grasp, cfg.uav_mission);
  if (!carrying_before && a.truth.carrying) {
    for (auto& o : objects)
      if (o.id == *a.truth.carrying) o.picked = true;
  }
  if (carrying_before && !a.truth.carrying) {
    for (auto& o : objects)
      if (o.id == *carrying_before) o.picked = false, o.delivered = true;
  }
  if (before != UavMode::Landed && a.ms.mode == UavMode::Landed) {
    a.landing_error = (a.truth.position.head<2>() - a.pad_level(deck).head<2>()).norm();
  }

  // dynamics
  const Vec3 v0 = a.truth.velocity;
  a.truth = step_uav(a.truth, a.pid, a.last_sp, deck.wind, dt, cfg.uav,
                     std::make_pair(obs.nav_position, obs.nav_velocity));
  if (auto z = deck_surface(deck, a.truth.position.head<2>()); z && a.truth.position.z() < *z) {
    a.truth.position.z() = *z;
    a.truth.velocity.z() = std::max(0.0, a.truth.velocity.z());
  }
  a.last_accel = (a.truth.velocity - v0) / dt;
  for (auto& o : objects)
    if (o.picked && a.truth.carrying && o.id == *a.truth.carrying) o.position = a.truth.position - Vec3(0, 0, 0.3);
}

// --- landing trials -----------------------------------------------------------------

struct LandingTrial {
  bool landed = false;
  bool aborted = false;
  double lateral_error = std::numeric_limits<double>::infinity();
  double duration = 0.0;
};

/// One QR descent onto a pitching/rolling deck, starting near P1 with a random offset.
inline LandingTrial run_landing_trial(std::uint64_t seed, int sea_state, const SimConfig& cfg = {}, double max_s = 60.0,
                                      std::map<std::string, std::string>* logs = nullptr) {
  RngStream init = RngStream::derive(seed, "landing_init");
  WaveField waves(sea_state, RngStream::derive(seed, "waves"));
  const double wind_speed = sea_state == 0 ? 0.0 : init.uniform(0.0, 1.0 * sea_state);
  const double wind_dir = init.uniform(-kPi, kPi);
  const Vec3 wind(wind_speed * std::cos(wind_dir), wind_speed * std::sin(wind_dir), 0.0);
  const Vec3 pad = default_pads()[0];
  UavAgent a(0, seed, pad);
  a.ms.mode = UavMode::ReturnTransit;
  a.ms.keys = {pad, pad + Vec3(0, 0, cfg.uav_mission.climb), pad, pad, true};
  a.truth.position = a.ms.keys.p1 + Vec3(init.uniform(-0.5, 0.5), init.uniform(-0.5, 0.5), 0.0);
  a.truth.yaw = init.uniform(-kPi, kPi);
  a.ekf = make_uav_state(a.truth.position, 0.1);
  a.ekf_ready = true;
  const auto anchors = UwbAnchorSet::deck_default();
  std::vector<DeckObject> none;
  CarrierCommand cmd;
  LandingTrial out;
  const int n = static_cast<int>(std::ceil(max_s / cfg.dt));
  for (int k = 0; k < n; ++k) {
    DeckState deck;
    deck.t = k * cfg.dt;
    const auto w = waves.sample(deck.t);
    deck.level_from_body = level_rotation(w.roll, w.pitch);
    deck.wind = wind;
    uav_agent_tick(a, deck, cmd, none, anchors, cfg, k % cfg.uwb_every == 0);
    if (logs && k % 4 == 0) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", deck.t, w.roll, w.pitch);
      (*logs)["roll_pitch.csv"] += buf;
      std::snprintf(buf, sizeof buf, "%.6f,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", deck.t, to_string(a.ms.mode),
                    a.truth.position.x(), a.truth.position.y(), a.truth.position.z(), a.last_sp.position.x(),
                    a.last_sp.position.y(), a.last_sp.position.z(), a.ekf.mean[0], a.ekf.mean[1], a.ekf.mean[2]);
      (*logs)["uav_0.csv"] += buf;
    }
    if (a.ms.mode == UavMode::Landed) {
      out.landed = true;
      out.lateral_error = *a.landing_error;
      out.duration = deck.t;
      return out;
    }
    if (a.ms.mode == UavMode::Abort) {
      out.aborted = true;
      out.duration = deck.t;
      return out;
    }
  }
  out.duration = max_s;
  return out;
}

// --- run report -----------------------------------------------------------------------

enum class Outcome { Success, PhaseFailure, Timeout };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::PhaseFailure: return "phase_failure";
    case Outcome::Timeout: return "timeout";
  }
  return "?";
}

struct RunMetrics {
  std::optional<double> final_localization_error;  // target filter error at end of phase II (m)
  std::optional<double> docking_time;              // phase IV entry to latch (s)
  std::vector<double> landing_errors;
  int objects_delivered = 0;
  bool small_object_delivered = false;
  bool large_object_stowed = false;
  std::optional<double> home_error;
};

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::Timeout;
  Phase phase_at_end = Phase::I_Preparation;
  std::string failure_reason;
  RunMetrics metrics;
  double sim_time = 0.0;
  std::vector<std::pair<Phase, double>> phase_history;
  bool phase_sequence_ok = true;
  bool docked = false;
  std::string events_jsonl;
  std::map<std::string, std::string> logs;  // file name -> contents
  std::vector<std::string> log_paths;

  bool success() const { return outcome == Outcome::Success; }

  nlohmann::ordered_json summary() const {
    nlohmann::ordered_json j;
    j["scenario"] = scenario;
    j["seed"] = seed;
    j["outcome"] = to_string(outcome);
    j["phase_at_end"] = to_string(phase_at_end);
    if (!failure_reason.empty()) j["failure_reason"] = failure_reason;
    j["docked"] = docked;
    j["objects_delivered"] = metrics.objects_delivered;
    j["landing_errors"] = metrics.landing_errors;
    if (metrics.final_localization_error) j["final_localization_error_m"] = *metrics.final_localization_error;
    if (metrics.docking_time) j["docking_time_s"] = *metrics.docking_time;
    if (metrics.home_error) j["home_error_m"] = *metrics.home_error;
    nlohmann::ordered_json durations = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < phase_history.size(); ++i) {
      const double end = i + 1 < phase_history.size() ? phase_history[i + 1].second : sim_time;
      const std::string key = to_string(phase_history[i].first);
      durations[key] = (durations.contains(key) ? durations[key].get<double>() : 0.0) + (end - phase_history[i].second);
    }
    j["phase_durations"] = durations;
    j["phase_sequence_ok"] = phase_sequence_ok;
    j["sim_time_s"] = sim_time;
    return j;
  }
};

// --- world ------------------------------------------------------------------------------

enum class DockStage { Circling, Transit, Lateral, Latched };

class World {
 public:
  World(const Scenario& sc, std::uint64_t seed, SimConfig cfg = {})
      : sc_(sc),
        seed_(seed),
        cfg_(std::move(cfg)),
        model_(cfg_.hydro),
        waves_(sc.sea_state, RngStream::derive(seed, "waves")),
        rng_gimbal_(RngStream::derive(seed, "gimbal")),
        rng_pod_(RngStream::derive(seed, "pod")),
        rng_lidar_(RngStream::derive(seed, "lidar")),
        rng_misc_(RngStream::derive(seed, "misc")),
        rng_manip_(RngStream::derive(seed, "manipulator")),
        proprio_(ProprioConfig{deg2rad(0.2), 0.02, 1e-5}, RngStream::derive(seed, "proprio")),
        link_(CommLink::data_link(), RngStream::derive(seed, "link")),
        machine_(cfg_.mission, &log_) {
    validate(sc_);
    max_t_ = cfg_.max_sim_s > 0.0 ? cfg_.max_sim_s : sc_.max_sim_s;
    camera_.mount = Pose3{{sc_.sensors.gimbal_x, sc_.sensors.gimbal_y, 0.0}, 0.0, 0.0, 0.0};
    camera_.height = sc_.sensors.gimbal_height;
    camera_.range = sc_.sensors.gimbal_range;
    camera_.sigma = deg2rad(sc_.sensors.gimbal_sigma_deg);
    camera_.rate_hz = sc_.sensors.gimbal_rate_hz;
    camera_.validate();
    pod_.range = sc_.sensors.pod_range;
    pod_.sigma = deg2rad(sc_.sensors.pod_sigma_deg);
    lidar_.max_range = sc_.sensors.lidar_range;
    lidar_.noise_sigma = sc_.sensors.lidar_sigma;
    anchors_ = UwbAnchorSet::deck_default();
    anchors_.sigma = sc_.sensors.uwb_sigma;
    cfg_.qr.sigma_coarse = sc_.sensors.qr_sigma_coarse;
    cfg_.qr.sigma_fine = sc_.sensors.qr_sigma_fine;

    carrier_.position = {sc_.carrier.start_x, sc_.carrier.start_y};
    carrier_.yaw = sc_.carrier.start_yaw;
    carrier_nav_ = make_target_state(carrier_.position, 3.0, 0.05);
    target_ekf_ = TargetEkf(make_target_state(sc_.prior(), 50.0, 0.15), cfg_.target_q);
    dvl_path_ = carrier_.position;
    const double wind_speed = sc_.sea_state == 0 ? 0.0 : rng_misc_.uniform(0.0, 1.0 * sc_.sea_state);
    const double wind_dir = rng_misc_.uniform(-kPi, kPi);
    wind_ = Vec3(wind_speed * std::cos(wind_dir), wind_speed * std::sin(wind_dir), 0.0);
    for (int i = 0; i < sc_.uav_count; ++i)
      uavs_.emplace_back(i, seed_, default_pads()[static_cast<std::size_t>(i) % default_pads().size()]);
    log_.add(0.0, "run_start", Phase::I_Preparation,
             {{"scenario", sc_.name}, {"seed", seed_}, {"sea_state", sc_.sea_state}});
  }

  RunReport run() {
    if (sc_.mode == ScenarioMode::LandingOnly) return run_landing_only();
    while (!done_) step();
    return finish();
  }

  double time() const { return t_; }
  const UsvState& carrier() const { return carrier_; }
  Phase phase() const { return machine_.current().phase; }

 private:
  // ---- truth helpers
  Vec2 target_pos(double t) const {
    return Vec2(sc_.target.x, sc_.target.y) + sc_.target.drift_speed * t * unit(sc_.target.drift_heading);
  }
  VesselFootprint target_footprint(double t) const {
    return {0, target_pos(t), sc_.target.heading, sc_.target.length, sc_.target.width, sc_.target.height};
  }
  std::vector<VesselFootprint> vessels(double t) const {
    std::vector<VesselFootprint> out = {target_footprint(t)};
    for (std::size_t i = 0; i < sc_.distractors.size(); ++i) {
      const auto& d = sc_.distractors[i];
      out.push_back({static_cast<int>(i + 1), Vec2(d.x, d.y) + d.drift_speed * t * unit(d.drift_heading), d.heading,
                     d.length, d.width, d.height});
    }
    return out;
  }
  std::array<Vec2, 4> carrier_corners() const {
    return VesselFootprint{-1, carrier_.position, carrier_.yaw, sc_.carrier.length, sc_.carrier.width, 1.0}.corners();
  }
  Vec2 body_to_inertial(const Vec2& b) const { return Eigen::Rotation2Dd(carrier_.yaw) * b; }

  void fail(Outcome o, std::string why) {
    if (done_) return;
    outcome_ = o;
    failure_reason_ = std::move(why);
    log_.add(t_, o == Outcome::Timeout ? "timeout" : "phase_failure", phase(), {{"reason", failure_reason_}});
    done_ = true;
  }

  // ---- main tick
  void step() {
    const int k = tick_++;
    t_ = k * cfg_.dt;
    if (t_ >= max_t_) {
      fail(Outcome::Timeout, "simulation cap reached");
      return;
    }
    const auto wave = waves_.sample(t_);
    carrier_.roll = wave.roll;
    carrier_.pitch = wave.pitch;

    // sensors
    const auto prop = proprio_.observe(carrier_.yaw, carrier_.velocity, cfg_.dt);
    yaw_imu_ = prop.yaw;
    dvl_ = prop.velocity;
    yaw_rate_meas_ = carrier_.velocity.z() + rng_misc_.normal(0.002);
    MissionInputs in;
    in.t = t_;
    if (k % cfg_.gimbal_every == 0) gimbal_tick(in);
    else {
      in.onshore_has_carrier = onshore_carrier_seen_;
      in.onshore_has_target = onshore_target_seen_;
    }
    pod_tick(in);
    const bool docking = phase() == Phase::IV_MeasureAndDock && stage_ != DockStage::Circling;
    if (stage_ != DockStage::Latched && (k % (docking ? cfg_.lidar_dock_every : cfg_.lidar_every) == 0)) lidar_tick(in);
    else if (lidar_recent_ && t_ - lidar_seen_t_ < 1.0) in.lidar_fit_range = lidar_range_;

    // estimators
    carrier_nav_tick();

    // contact and hook (truth contact sensor)
    if (phase() == Phase::IV_MeasureAndDock || stage_ == DockStage::Latched) {
      const bool contact = truth_gap_ <= 0.05;
      const auto before = hook_.state;
      hook_ = docking_trigger(hook_, contact && !returning_, t_);
      if (hook_.state != before) log_.add(t_, "hook", phase(), {{"state", to_string(hook_.state)}});
      if (hook_.state == HookState::Latched && stage_ != DockStage::Latched) latch();
    }
    in.hook = hook_.state;
    in.alongside = alongside_;

    // mission phase machine
    const Phase before = phase();
    const auto cmds = machine_.tick(in);
    if (cmds.phase_changed) on_phase_change(before, phase(), cmds);
    if (done_) return;
    if (cfg_.stop_after_phase && static_cast<int>(phase()) > static_cast<int>(*cfg_.stop_after_phase)) {
      done_ = true;
      outcome_ = Outcome::Success;
      return;
    }

    // planners + controllers
    Wrench tau;
    switch (phase()) {
      case Phase::I_Preparation: break;
      case Phase::II_OnshoreGcGuidance: tau = cruise_control(onshore_heading(), sc_.carrier.cruise_speed); break;
      case Phase::III_OnboardGcGuidance: tau = cruise_control(pod_heading(), sc_.carrier.cruise_speed); break;
      case Phase::IV_MeasureAndDock: tau = dock_control(); break;
      case Phase::V_DockedOperations: tau = docked_ops(); break;
    }
    if (done_) return;

    // dynamics
    carrier_dynamics(tau, wave);
    if (cfg_.record_logs) record(k);
  }

  // ---- sensing
  void gimbal_tick(MissionInputs& in) {
    const Vec3 c(carrier_.position.x(), carrier_.position.y(), 0.0);
    const Vec2 tp = target_pos(t_);
    std::optional<GimbalMeasurement> mc, mt;
    try {
      mc = gimbal_observe(camera_, c, rng_gimbal_, t_, TargetClass::Carrier);
    } catch (const GeometryError&) {
    }
    try {
      mt = gimbal_observe(camera_, Vec3(tp.x(), tp.y(), 0.0), rng_gimbal_, t_, TargetClass::TargetVessel);
    } catch (const GeometryError&) {
    }
    onshore_carrier_seen_ = mc.has_value();
    onshore_target_seen_ = mt.has_value();
    in.onshore_has_carrier = onshore_carrier_seen_;
    in.onshore_has_target = onshore_target_seen_;
    if (mt) {
      target_ekf_.update(*mt, camera_);
      if (!target_relay_t_ || t_ - *target_relay_t_ >= 1.0) {
        target_relay_t_ = t_;
        target_queue_.push_back({t_ + link_.link().latency, target_ekf_.position()});
      }
    }
    if (mc) link_.send(*mc, t_, Vec3(camera_.mount.position.x(), camera_.mount.position.y(), camera_.height), c);
    while (!target_queue_.empty() && target_queue_.front().first <= t_ + 1e-12) {
      target_relayed_ = target_queue_.front().second;
      target_queue_.pop_front();
    }
  }

  void pod_tick(MissionInputs& in) {
    pod_bearing_ = pod_observe(pod_, carrier_.position, carrier_.yaw, target_pos(t_), rng_pod_);
    if (pod_bearing_) {
      in.pod_lock_range = (target_pos(t_) - carrier_.position).norm();
      pod_last_ = *pod_bearing_;
      pod_last_t_ = t_;
    }
  }

  struct Blob {
    std::vector<Vec2> pts;  // leveled body frame
    Vec2 centroid;
  };

  void lidar_tick(MissionInputs& in) {
    const Pose3 sensor{{carrier_.position.x(), carrier_.position.y(), 1.0}, carrier_.yaw, carrier_.pitch, carrier_.roll};
    const auto cloud = lidar_scan(sensor, vessels(t_), lidar_, rng_lidar_);
    const auto pts = level_cloud(cloud, carrier_.roll, carrier_.pitch);
    blobs_.clear();
    if (pts.size() >= static_cast<std::size_t>(cfg_.cluster_min_pts)) {
      for (const auto& c : cluster_points(pts, cfg_.cluster_eps, cfg_.cluster_min_pts))
        blobs_.push_back({gather(pts, c), c.centroid});
    }
    lidar_recent_ = false;
    const Phase ph = phase();
    if (ph == Phase::III_OnboardGcGuidance || ph == Phase::II_OnshoreGcGuidance) {
      // Target blob: centroid bearing agrees with the pod bearing.
      if (pod_last_t_ >= 0.0 && t_ - pod_last_t_ < 2.0) {
        for (const auto& b : blobs_) {
          const double brg = std::atan2(b.centroid.y(), b.centroid.x());
          if (std::abs(wrap_angle(brg - pod_last_)) < deg2rad(3.0) && b.centroid.norm() <= sc_.sensors.lidar_range) {
            lidar_recent_ = true;
            lidar_range_ = b.centroid.norm();
            lidar_seen_t_ = t_;
            target_blob_body_ = b.centroid;
          }
        }
      }
    } else if (ph == Phase::IV_MeasureAndDock) {
      dock_lidar_update();
    }
    if (lidar_recent_) in.lidar_fit_range = lidar_range_;
  }

  // ---- carrier navigation filter (DVL dead reckoning + relayed onshore bearings)
  void carrier_nav_tick() {
    const Vec2 v_in = Eigen::Rotation2Dd(yaw_imu_) * dvl_.head<2>();
    dvl_path_ += v_in * cfg_.dt;
    carrier_nav_ = target_ekf_predict(carrier_nav_, cfg_.dt, cfg_.carrier_q);
    carrier_nav_ = target_ekf_update_velocity(carrier_nav_, v_in, Mat2::Identity() * (0.03 * 0.03)).state;
    for (const auto& m : link_.receive(t_)) {
      try {
        auto r = target_ekf_update_bearing(carrier_nav_, m, camera_);
        if (r.accepted) carrier_nav_ = r.state;
      } catch (const GeometryError&) {
      }
    }
    rel_pos_ += v_in * cfg_.dt;
  }

  Vec2 carrier_est() const { return carrier_nav_.mean.head<2>(); }

  // ---- guidance
  HeadingCommand onshore_heading() {
    const Vec2 goal = target_relayed_ ? *target_relayed_ : sc_.prior();
    Vec2 aim = goal;
    if (auto wp = obstacle_waypoint((goal - carrier_est()))) aim = carrier_est() + *wp;
    if ((aim - carrier_est()).norm() < 1e-6) return {yaw_imu_, GuidanceSource::OnshoreGimbal, 0.0};
    return heading_to_target(yaw_imu_, carrier_est(), aim, GuidanceSource::OnshoreGimbal);
  }

  HeadingCommand pod_heading() {
    // beta = yaw + pod bearing; keep the last bearing through short dropouts.
    const Vec2 to_target = 300.0 * unit(yaw_imu_ + pod_last_);
    Vec2 aim = to_target;
    if (auto wp = obstacle_waypoint(to_target)) aim = *wp;
    return heading_to_target(yaw_imu_, Vec2::Zero(), aim, GuidanceSource::OnboardGimbal);
  }

  /// Offset waypoint (carrier-relative, inertial axes) around LiDAR obstacles.
  std::optional<Vec2> obstacle_waypoint(const Vec2& to_goal) const {
    if (t_ - obstacles_t_ > 2.0) return std::nullopt;
    return corridor_waypoint(Vec2::Zero(), to_goal, obstacles_, 30.0);
  }

  Wrench cruise_control(const HeadingCommand& cmd, double speed) {
    heading_source_ = cmd.source;
    beta_ = cmd.beta;
    UsvState est = carrier_;
    est.yaw = yaw_imu_;
    est.velocity.z() = yaw_rate_meas_;
    const double cruise = cfg_.hydro.damping.x() * speed / 2.0;
    last_cmd_ = heading_controller(est, cmd, cruise, cfg_.heading, cfg_.hydro);
    return actuation_simplified(last_cmd_, cfg_.hydro).wrench;
  }

  // ---- phase IV: circling, transit, lateral closing
  void dock_lidar_update() {
    // Track the target blob near its predicted body-frame position.
    const Vec2 pred_in = -rel_pos_;
    const Vec2 pred_body = Eigen::Rotation2Dd(-yaw_imu_) * pred_in;
    const Blob* best = nullptr;
    double bd = 15.0;
    for (const auto& b : blobs_) {
      const double d = (b.centroid - pred_body).norm();
      if (d < bd) bd = d, best = &b;
    }
    obstacles_.clear();
    for (const auto& b : blobs_)
      if (&b != best) obstacles_.push_back({Eigen::Rotation2Dd(yaw_imu_) * b.centroid, 10.0});
    obstacles_t_ = t_;
    if (!best || best->pts.size() < 5) return;
    lidar_recent_ = true;
    lidar_seen_t_ = t_;
    lidar_range_ = best->centroid.norm();
    target_pts_body_ = best->pts;
    RectangleFit fit;
    try {
      fit = fit_rectangle(best->pts);
    } catch (const Error&) {
      return;
    }
    bool two_faces = false;
    try {
      two_faces = !fit_lshape_heading(best->pts).low_confidence;
    } catch (const Error&) {
    }
    if (two_faces) {
      fit_lengths_.push_back(fit.length);
      fit_widths_.push_back(fit.width);
      const double axis_in = wrap_positive(fit.long_axis + yaw_imu_, kPi);
      fit_axes_.push_back(axis_in);
      dims_log_.emplace_back(t_, fit.length, fit.width, axis_in);
    }
    // Centre estimate, corrected for unseen faces once dimensions are known.
    Vec2 c = fit.center;
    if (have_dims()) {
      const double l = known_length(), w = known_width();
      const Vec2 away_s = fit.short_dir() * (fit.short_dir().dot(fit.center) >= 0.0 ? 1.0 : -1.0);
      const Vec2 away_l = fit.long_dir() * (fit.long_dir().dot(fit.center) >= 0.0 ? 1.0 : -1.0);
      if (fit.width < w) c += away_s * (w - fit.width) / 2;
      if (fit.length < l) c += away_l * (l - fit.length) / 2;
    }
    const Vec2 meas = -(Eigen::Rotation2Dd(yaw_imu_) * c);
    rel_pos_ += 0.5 * (meas - rel_pos_);
    lidar_target_log_.emplace_back(t_, c);
  }

  bool have_dims() const { return fit_lengths_.size() >= 5; }
  double known_length() const { return percentile(fit_lengths_, 0.5); }
  double known_width() const { return percentile(fit_widths_, 0.5); }
  double known_axis() const {
    double s = 0.0, c = 0.0;
    for (double a : fit_axes_) s += std::sin(2 * a), c += std::cos(2 * a);
    return wrap_positive(std::atan2(s, c) / 2, kPi);
  }

  Wrench follow(PathFollower& f, double speed) {
    const Vec2 carrot = f.update(rel_pos_);
    const Vec2 d = carrot - rel_pos_;
    const double beta = d.norm() > 1e-6 ? std::atan2(d.y(), d.x()) : yaw_imu_;
    return cruise_control({beta, GuidanceSource::Lidar, wrap_angle(beta - yaw_imu_)}, speed);
  }

  Wrench dock_control() {
    switch (stage_) {
      case DockStage::Circling: {
        if (!follower_ready_) {
          circle_ = circle_target(Vec2::Zero(), cfg_.circle_radius, {rel_pos_, yaw_imu_}, cfg_.circle_speed, cfg_.turn);
          follower_ = PathFollower(circle_.path, 10.0);
          follower_ready_ = true;
          loop_start_progress_ = circle_.entry_length();
          record_path("circle", circle_.path);
        }
        const double loop_len = kTwoPi * cfg_.circle_radius;
        const bool loop_done = follower_.progress() >= loop_start_progress_ + loop_len - 15.0 || follower_.done();
        if (loop_done && have_dims() && t_ - last_plan_try_ >= 1.0) {
          last_plan_try_ = t_;
          if (plan_approach()) {
            stage_ = DockStage::Transit;
            log_.add(t_, "approach_planned", phase(),
                     {{"word", approach_.word}, {"length_m", approach_.length()},
                      {"fit_length_m", known_length()}, {"fit_width_m", known_width()}});
            return follow(follower_, cfg_.circle_speed);
          }
        }
        if (follower_.done()) {
          circle_ = circle_target(Vec2::Zero(), cfg_.circle_radius, {rel_pos_, yaw_imu_}, cfg_.circle_speed, cfg_.turn);
          follower_ = PathFollower(circle_.path, 10.0);
        }
        return follow(follower_, cfg_.circle_speed);
      }
      case DockStage::Transit: {
        const double remaining = follower_.total_length() - follower_.progress();
        const double v = std::clamp(cfg_.approach_speed + 0.03 * remaining, cfg_.approach_speed, cfg_.circle_speed);
        if (follower_.done() || remaining < 2.0) {
          stage_ = DockStage::Lateral;
          lateral_since_ = t_;
          log_.add(t_, "lateral_closing", phase(), {{"standoff_m", cfg_.standoff}});
          return lateral_control();
        }
        return follow(follower_, v);
      }
      case DockStage::Lateral:
        if (t_ - lateral_since_ > 400.0) {
          fail(Outcome::PhaseFailure, "lateral docking did not latch");
          return {};
        }
        return lateral_control();
      case DockStage::Latched: return {};
    }
    return {};
  }

  /// Chooses the hull side and heading for the final approach and plans a
  /// collision-free variable-radius Dubins path to a pre-standoff point.
  bool plan_approach() {
    const double axis = known_axis();
    const double l = known_length(), w = known_width();
    const double off = w / 2 + sc_.carrier.width / 2 + cfg_.standoff;
    std::optional<DubinsPath> best;
    double best_psi = 0.0;
    for (double psi : {axis, axis + kPi}) {
      const Vec2 starboard(std::sin(psi), -std::cos(psi));
      const Vec2 standoff = -starboard * off;
      const Vec2 pre = standoff - unit(psi) * (l / 2 + 20.0);
      const StageRadii radii = stage_radii(cfg_.circle_speed, cfg_.circle_speed, cfg_.approach_speed, cfg_.turn);
      try {
        DubinsPath p = plan_dubins({rel_pos_, yaw_imu_}, {pre, wrap_angle(psi)}, radii);
        p.segments.push_back(PathSegment::straight(pre, standoff, cfg_.approach_speed));
        bool clear = true;
        for (const auto& s : p.sample(1.0))
          if (point_rect_distance(s.position, Vec2::Zero(), axis, l, w) < 6.0) clear = false;
        if (clear && (!best || p.length() < best->length())) best = p, best_psi = psi;
      } catch (const Error&) {
      }
    }
    if (!best) return false;
    approach_ = *best;
    dock_heading_ = wrap_angle(best_psi);
    follower_ = PathFollower(approach_, 6.0);
    record_path("approach", approach_);
    return true;
  }

  Wrench lateral_control() {
    const int side = -1;  // target to starboard
    DockRelative rel;
    rel.side = side;
    rel.yaw_rate = yaw_rate_meas_;
    bool fresh = false;
    if (!target_pts_body_.empty() && t_ - lidar_seen_t_ < 1.0) {
      try {
        const RectangleFit fit = fit_rectangle(target_pts_body_);
        const double mis = wrap_angle(2.0 * fit.long_axis) / 2.0;
        std::vector<double> ys, xs;
        const double hl = sc_.carrier.length / 2 + 1.0;
        for (const auto& p : target_pts_body_) {
          xs.push_back(p.x());
          if (std::abs(p.x()) <= hl && side * p.y() > 0.0) ys.push_back(std::abs(p.y()));
        }
        if (ys.empty())
          for (const auto& p : target_pts_body_) ys.push_back(std::abs(p.y()));
        const double gap = percentile(ys, 0.1) - sc_.carrier.width / 2;
        const double along = 0.5 * (percentile(xs, 0.02) + percentile(xs, 0.98));
        dock_meas_ = {mis, gap, along};
        fresh = true;
        dock_hist_.push_back({t_, Vec3(along, gap, 0.0)});
        while (dock_hist_.size() > 2 && t_ - dock_hist_.front().t > 2.0) dock_hist_.pop_front();
      } catch (const Error&) {
      }
    }
    (void)fresh;
    rel.misalignment = dock_meas_.x();
    rel.gap = dock_meas_.y();
    rel.along_offset = dock_meas_.z();
    if (dock_hist_.size() >= 3) {
      const auto v = estimate_velocity({dock_hist_.begin(), dock_hist_.end()}, 0.05, 0.05);
      rel.rel_surge = -v.velocity.x();
      rel.rel_sway = -side * v.velocity.y();
    }
    alongside_ = rel.gap < 0.3 && std::abs(rel.misalignment) < deg2rad(5.0);
    const DockCommand dc = lateral_dock_controller(rel, cfg_.dock, cfg_.hydro);
    if (dc.realign && !realign_logged_) {
      realign_logged_ = true;
      log_.add(t_, "realign_requested", phase(), {{"misalignment_rad", rel.misalignment}});
    }
    heading_source_ = GuidanceSource::Lidar;
    last_cmd_ = dc.thrusters;
    return dc.wrench;
  }

  void latch() {
    stage_ = DockStage::Latched;
    const auto tf = target_footprint(t_);
    latch_rel_pos_ = Eigen::Rotation2Dd(-tf.heading) * (carrier_.position - tf.center);
    latch_rel_yaw_ = wrap_angle(carrier_.yaw - tf.heading);
    docking_time_ = t_ - phase_iv_entry_;
    docked_ = true;
    // Alongside is confirmed from the LiDAR gap measured at latch time.
    alongside_ = dock_meas_.y() < 0.3 && std::abs(dock_meas_.x()) < deg2rad(5.0);
    log_.add(t_, "latched", phase(), {{"docking_time_s", docking_time_}, {"gap_m", dock_meas_.y()}});
  }

  // ---- phase V
  Vec3 to_dc(const Vec2& inertial_xy, double z) const {
    const Vec2 b = Eigen::Rotation2Dd(-carrier_.yaw) * (inertial_xy - carrier_.position);
    return {b.x(), b.y(), z};
  }

  void start_docked_ops() {
    // Target deck footprint and objects in the leveled DC frame.
    const auto tf = target_footprint(t_);
    const Vec3 tc = to_dc(tf.center, 0.0);
    const double rel_heading = wrap_angle(tf.heading - carrier_.yaw);
    for (const auto& o : sc_.objects) {
      const Vec2 p = tf.center + Eigen::Rotation2Dd(tf.heading) * Vec2(o.deck_x, o.deck_y);
      DeckObject d;
      d.id = o.id;
      d.position = to_dc(p, sc_.target_deck_height + o.height / 2);
      d.mass = o.mass;
      d.length = o.length;
      d.width = o.width;
      d.height = o.height;
      d.cls = classify_object(o.mass, o.length, o.width);
      objects_.push_back(d);
    }
    // Footprint from the LiDAR estimate, expressed in the DC frame.
    DeckRect region;
    region.center = Eigen::Rotation2Dd(-yaw_imu_) * (-rel_pos_);
    region.heading = wrap_angle(known_axis() - yaw_imu_);
    region.length = known_length();
    region.width = known_width();
    search_region_ = region;
    (void)tc;
    (void)rel_heading;

    // Manipulator scan: rough positions of everything on the target deck.
    std::vector<ObjectTruth> truths;
    for (const auto& o : objects_) truths.push_back({o.id, o.position, 0.0, o.mass, o.length, o.width, o.height});
    scans_ = scan_for_objects(cfg_.manipulator, truths, rng_manip_);
    for (auto& e : scans_) {
      e.position = object_to_dc_frame(e.position, cfg_.manipulator.ma_to_dc());
      e.frame = {FrameKind::DroneCarrier, 0};
    }
    nlohmann::json found = nlohmann::json::array();
    for (const auto& e : scans_) found.push_back({{"id", e.id}, {"class", to_string(e.classification)}});
    log_.add(t_, "manipulator_scan", phase(), {{"objects", found}});

    // Task assignment: UAV 0 searches for small objects, UAVs 1 and 2 drag the first large one.
    cmds_.assign(uavs_.size(), CarrierCommand{});
    for (std::size_t i = 0; i < uavs_.size(); ++i) {
      cmds_[i].deck_height = sc_.target_deck_height;
      cmds_[i].search_region = search_region_;
    }
    if (!uavs_.empty()) cmds_[0].takeoff = true;
    for (const auto& e : scans_) {
      if (e.classification != ObjectClass::Large || uavs_.size() < 3 || drag_object_) continue;
      const auto out = attempt_grasp(cfg_.manipulator, e);
      if (out.result == GraspResult::Grasped) {
        stow(e.id, *out.stowed_at);
        continue;
      }
      if (out.result != GraspResult::OutOfReach) continue;
      const DeckObject* obj = nullptr;
      for (const auto& o : objects_)
        if (o.id == e.id) obj = &o;
      RectangleFit of;
      of.center = e.position.head<2>();
      of.long_axis = wrap_positive(sc_.target.heading - carrier_.yaw, kPi);
      of.heading = wrap_positive(of.long_axis, kPi / 2);
      of.length = obj->length;
      of.width = obj->width;
      const Vec2 reach_c = cfg_.manipulator.base.position.head<2>();
      const double reach_r = cfg_.manipulator.horizontal_reach(e.position.z());
      drag_plan_ = cooperative_drag_plan(of, e.position.z(), reach_c, reach_r,
                                         {uavs_[1].truth.position, uavs_[2].truth.position}, cfg_.drag);
      if (drag_plan_.empty()) continue;
      drag_object_ = e.id;
      for (int i = 0; i < 2; ++i) {
        const Vec3 wp0 = drag_plan_.waypoints[i].front();
        const Vec2 end = wp0.head<2>() - (drag_plan_.waypoints[i].size() > 1
                                               ? Vec2(drag_plan_.waypoints[i][1].head<2>() - wp0.head<2>())
                                               : Vec2::Zero());
        auto& c = cmds_[static_cast<std::size_t>(i + 1)];
        c.takeoff = true;
        c.task = UavTaskKind::Drag;
        c.assigned_object = std::make_pair(e.id, Vec3(end.x(), end.y(), e.position.z()));
      }
      log_.add(t_, "drag_planned", phase(),
               {{"object", e.id}, {"steps", drag_plan_.waypoints[0].size()},
                {"end_of_uav", {drag_plan_.end_of_uav[0], drag_plan_.end_of_uav[1]}}});
    }
    ops_started_ = true;
  }

  void stow(int id, const Vec3& where) {
    for (auto& o : objects_)
      if (o.id == id) {
        o.stowed = true;
        o.position = where;
        ++objects_delivered_;
        if (o.cls == ObjectClass::Large) large_stowed_ = true;
      }
    log_.add(t_, "object_stowed", phase(), {{"object", id}});
  }

  Wrench docked_ops() {
    if (returning_) return return_leg();
    if (!ops_started_) start_docked_ops();
    DeckState deck;
    deck.t = t_;
    deck.level_from_body = level_rotation(carrier_.roll, carrier_.pitch);
    const Vec2 wb = Eigen::Rotation2Dd(-carrier_.yaw) * Vec2(wind_.head<2>());
    deck.wind = Vec3(wb.x(), wb.y(), 0.0);

    // Drag synchronisation: release the track once both tethers are attached.
    if (drag_object_ && uavs_.size() >= 3) {
      const bool both = uavs_[1].ms.tether_attached && uavs_[2].ms.tether_attached;
      if (both && !drag_started_) {
        drag_started_ = true;
        for (auto& o : objects_)
          if (o.id == *drag_object_) drag_offset_ = o.position.head<2>() - drag_mid();
        for (int i = 0; i < 2; ++i) cmds_[static_cast<std::size_t>(i + 1)].drag_track = drag_plan_.waypoints[i];
        log_.add(t_, "drag_started", phase(), {{"object", *drag_object_}});
      }
    }
    for (std::size_t i = 0; i < uavs_.size(); ++i) {
      auto& a = uavs_[i];
      uav_agent_tick(a, deck, cmds_[i], objects_, anchors_, cfg_, tick_ % cfg_.uwb_every == 0);
      cmds_[i].takeoff = cmds_[i].takeoff && a.ms.mode == UavMode::Idle;
      log_uav_transitions(a);
      if (a.landing_error && !landing_logged_[i]) {
        landing_logged_[i] = true;
        landing_errors_.push_back(*a.landing_error);
        log_.add(t_, "uav_landed", phase(), {{"uav", a.index}, {"lateral_error_m", *a.landing_error}});
      }
    }
    for (const auto& o : objects_)
      if (o.delivered && !delivered_logged_.count(o.id)) {
        delivered_logged_.insert(o.id);
        ++objects_delivered_;
        if (o.cls == ObjectClass::Small) small_delivered_ = true;
        log_.add(t_, "object_delivered", phase(), {{"object", o.id}, {"uav", 0}});
      }
    // Tethered object follows the UAV-pair midpoint with a first-order lag.
    if (drag_started_ && drag_object_ && !drag_done_) {
      for (auto& o : objects_)
        if (o.id == *drag_object_) {
          const Vec2 goal = drag_mid() + drag_offset_;
          o.position.head<2>() += (goal - o.position.head<2>()) * std::min(1.0, cfg_.dt / 1.0);
        }
      if (!uavs_[1].ms.tether_attached && !uavs_[2].ms.tether_attached) {
        drag_done_ = true;
        for (auto& o : objects_)
          if (o.id == *drag_object_) {
            std::vector<ObjectTruth> one = {{o.id, o.position, 0.0, o.mass, o.length, o.width, o.height}};
            auto est = scan_for_objects(cfg_.manipulator, one, rng_manip_);
            log_.add(t_, "drag_finished", phase(), {{"object", o.id}});
            if (!est.empty()) {
              const auto g = attempt_grasp(cfg_.manipulator, est.front(), 0);
              log_.add(t_, "grasp", phase(), {{"object", o.id}, {"result", to_string(g.result)}});
              if (g.result == GraspResult::Grasped) stow(o.id, *g.stowed_at);
            }
          }
      }
    }
    for (const auto& a : uavs_)
      if (a.ms.mode == UavMode::Abort) {
        fail(Outcome::PhaseFailure, "uav " + std::to_string(a.index) + " aborted");
        return {};
      }
    const bool any_tasked = std::any_of(uavs_.begin(), uavs_.end(), [](const UavAgent& a) { return a.ms.mode != UavMode::Idle; });
    const bool transport_done = uavs_.empty() || uavs_[0].ms.mode == UavMode::Landed;
    if (any_tasked && transport_done && t_ - last_recovery_try_ >= 1.0) {
      last_recovery_try_ = t_;
      std::vector<UavMissionState> ms;
      for (const auto& a : uavs_) ms.push_back(a.ms);
      const auto dec = recovery_return(ms, hook_);
      if (dec.accepted) {
        log_.add(t_, "hook", phase(), {{"state", to_string(hook_.state)}});
        returning_ = true;
        return_since_ = t_;
        stage_ = DockStage::Circling;
        machine_.begin_return(t_);
      } else if (dec.diagnostic != last_refusal_) {
        last_refusal_ = dec.diagnostic;
        log_.add(t_, "recovery_refused", phase(), {{"reason", dec.diagnostic}});
      }
    }
    return {};
  }

  Vec2 drag_mid() const { return 0.5 * (uavs_[1].truth.position.head<2>() + uavs_[2].truth.position.head<2>()); }

  void log_uav_transitions(UavAgent& a) {
    for (; a.transitions_logged < a.ms.transitions.size(); ++a.transitions_logged) {
      const auto& tr = a.ms.transitions[a.transitions_logged];
      log_.add(t_, "uav_mode", phase(), {{"uav", a.index}, {"from", to_string(tr.first)}, {"to", to_string(tr.second)}});
    }
  }

  Wrench return_leg() {
    const Vec2 home(sc_.carrier.home_x, sc_.carrier.home_y);
    if (t_ - return_since_ < 15.0) {  // back off to port, clear of the hull
      last_cmd_ = allocate_vectored({-200.0 * carrier_.velocity.x(), 150.0, -400.0 * yaw_rate_meas_}, cfg_.hydro);
      return actuation_vectored(last_cmd_, cfg_.hydro).wrench;
    }
    const Vec2 d = home - carrier_est();
    if (d.norm() < 10.0) {
      const double err = (carrier_.position - home).norm();
      home_error_ = err;
      log_.add(t_, "arrived_home", phase(), {{"error_m", err}});
      if (err <= cfg_.home_tolerance) {
        outcome_ = Outcome::Success;
        done_ = true;
      } else {
        fail(Outcome::PhaseFailure, "return leg ended outside the home tolerance");
      }
      return {};
    }
    const double speed = std::clamp(d.norm() / 20.0, 0.6, sc_.carrier.cruise_speed);
    return cruise_control(heading_to_target(yaw_imu_, carrier_est(), home, GuidanceSource::OnshoreGimbal), speed);
  }

  // ---- phase change bookkeeping
  void on_phase_change(Phase from, Phase to, const MissionCommands& cmds) {
    if (from == Phase::II_OnshoreGcGuidance && to == Phase::III_OnboardGcGuidance && !final_loc_err_) {
      final_loc_err_ = (target_ekf_.position() - target_pos(t_)).norm();
      log_.add(t_, "target_localization", to, {{"error_m", *final_loc_err_}});
    }
    if (to == Phase::IV_MeasureAndDock && !cmds.regressed) {
      phase_iv_entry_ = t_;
      // Seed the target-relative navigation from the confirming blob.
      rel_pos_ = -(Eigen::Rotation2Dd(yaw_imu_) * target_blob_body_);
      stage_ = DockStage::Circling;
      follower_ready_ = false;
    }
    if (to == Phase::V_DockedOperations) {
      landing_logged_.assign(uavs_.size(), false);
      if (cmds.uav_takeoff) log_.add(t_, "uav_takeoff_command", to, {{"uavs", uavs_.size()}});
    }
  }

  // ---- dynamics
  void carrier_dynamics(const Wrench& tau, const WaveSample& wave) {
    if (stage_ == DockStage::Latched && !returning_) {
      const auto tf = target_footprint(t_ + cfg_.dt);
      carrier_.position = tf.center + Eigen::Rotation2Dd(tf.heading) * latch_rel_pos_;
      carrier_.yaw = wrap_angle(tf.heading + latch_rel_yaw_);
      const Vec2 drift = sc_.target.drift_speed * unit(sc_.target.drift_heading);
      const Vec2 vb = Eigen::Rotation2Dd(-carrier_.yaw) * drift;
      carrier_.velocity = {vb.x(), vb.y(), 0.0};
      truth_gap_ = 0.0;
      return;
    }
    carrier_ = model_.step(carrier_, tau + wave.force, cfg_.dt);
    // Hull contact with the target: no interpenetration, inward relative velocity removed.
    Vec2 n;
    const auto tf = target_footprint(t_ + cfg_.dt);
    truth_gap_ = quad_gap(carrier_corners(), tf.corners(), &n);
    if (truth_gap_ < 0.0) {
      carrier_.position -= n * truth_gap_;
      const Vec2 drift = sc_.target.drift_speed * unit(sc_.target.drift_heading);
      Vec2 v = body_to_inertial(carrier_.velocity.head<2>()) - drift;
      const double vn = v.dot(n);
      if (vn < 0.0) v -= vn * n;
      const Vec2 vb = Eigen::Rotation2Dd(-carrier_.yaw) * (v + drift);
      carrier_.velocity.head<2>() = vb;
      truth_gap_ = 0.0;
    }
  }

  // ---- logging
  static std::string fmt(const char* f, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
  }

  void record(int k) {
    auto& L = logs_;
    auto f6 = [](double v) { return fmt("%.6f", v); };
    if (k % 20 == 0) {
      L["carrier.csv"] += f6(t_) + "," + f6(carrier_.position.x()) + "," + f6(carrier_.position.y()) + "," +
                          f6(carrier_.yaw) + "," + f6(carrier_.velocity.x()) + "," + f6(carrier_.velocity.y()) + "," +
                          f6(carrier_.velocity.z()) + "," + to_string(phase()) + "," + to_string(heading_source_) + "," +
                          f6(beta_) + "," + f6(carrier_est().x()) + "," + f6(carrier_est().y()) + "," +
                          f6(last_cmd_.t1) + "," + f6(last_cmd_.t2) + "," + f6(last_cmd_.theta1) + "," +
                          f6(last_cmd_.theta2) + "\n";
      L["dvl_path.csv"] += f6(t_) + "," + f6(dvl_path_.x()) + "," + f6(dvl_path_.y()) + "\n";
      const Vec2 tp = target_pos(t_);
      L["target_ekf.csv"] += f6(t_) + "," + f6(target_ekf_.position().x()) + "," + f6(target_ekf_.position().y()) +
                             "," + f6(tp.x()) + "," + f6(tp.y()) + "," + f6(target_ekf_.state().covariance.trace()) + "\n";
    }
    if (k % 4 == 0) {
      L["roll_pitch.csv"] += f6(t_) + "," + f6(carrier_.roll) + "," + f6(carrier_.pitch) + "\n";
      if (phase() == Phase::V_DockedOperations && !returning_) {
        for (const auto& a : uavs_) {
          if (a.ms.mode == UavMode::Idle) continue;
          L["uav_" + std::to_string(a.index) + ".csv"] +=
              f6(t_) + "," + to_string(a.ms.mode) + "," + f6(a.truth.position.x()) + "," + f6(a.truth.position.y()) +
              "," + f6(a.truth.position.z()) + "," + f6(a.last_sp.position.x()) + "," + f6(a.last_sp.position.y()) +
              "," + f6(a.last_sp.position.z()) + "," + f6(a.ekf.mean[0]) + "," + f6(a.ekf.mean[1]) + "," +
              f6(a.ekf.mean[2]) + "\n";
        }
      }
    }
    for (; dims_logged_ < dims_log_.size(); ++dims_logged_) {
      const auto& [t, l, w, h] = dims_log_[dims_logged_];
      L["fit_dims.csv"] += f6(t) + "," + f6(l) + "," + f6(w) + "," + f6(h) + "\n";
    }
    for (; lidar_logged_ < lidar_target_log_.size(); ++lidar_logged_) {
      const auto& [t, c] = lidar_target_log_[lidar_logged_];
      L["lidar_target.csv"] += f6(t) + "," + f6(c.x()) + "," + f6(c.y()) + "," + f6(c.norm()) + "\n";
    }
  }

  void record_path(const std::string& id, const DubinsPath& p) {
    if (!cfg_.record_logs) return;
    // Paths are planned target-relative; store them in the inertial frame at planning time.
    const Vec2 origin = carrier_.position - rel_pos_;
    for (const auto& s : p.sample(2.0)) {
      const Vec2 q = origin + s.position;
      logs_["paths.csv"] += id + "," + fmt("%.6f", t_) + "," + fmt("%.6f", q.x()) + "," + fmt("%.6f", q.y()) + "," +
                            fmt("%.6f", s.heading) + "\n";
    }
  }

  RunReport finish() {
    RunReport r;
    r.scenario = sc_.name;
    r.seed = seed_;
    r.outcome = outcome_;
    r.failure_reason = failure_reason_;
    r.phase_at_end = phase();
    r.sim_time = t_;
    r.phase_history = machine_.history();
    r.phase_sequence_ok = phase_sequence_valid(r.phase_history, log_.count("guidance_source_lost"));
    r.docked = docked_;
    r.metrics.final_localization_error = final_loc_err_;
    if (!final_loc_err_ && cfg_.stop_after_phase)
      r.metrics.final_localization_error = (target_ekf_.position() - target_pos(t_)).norm();
    if (docked_) r.metrics.docking_time = docking_time_;
    r.metrics.landing_errors = landing_errors_;
    r.metrics.objects_delivered = objects_delivered_;
    r.metrics.small_object_delivered = small_delivered_;
    r.metrics.large_object_stowed = large_stowed_;
    r.metrics.home_error = home_error_;
    if (outcome_ == Outcome::Success && !cfg_.stop_after_phase) {
      const bool ok = docked_ && small_delivered_ && !uavs_.empty() && uavs_[0].ms.mode == UavMode::Landed;
      if (!ok) {
        r.outcome = Outcome::PhaseFailure;
        r.failure_reason = "mission goals incomplete";
      }
    }
    log_.add(t_, "run_end", phase(), {{"outcome", to_string(r.outcome)}});
    std::ostringstream os;
    log_.write_jsonl(os);
    r.events_jsonl = os.str();
    if (cfg_.record_logs) r.logs = with_headers(logs_);
    return r;
  }

  static std::map<std::string, std::string> with_headers(const std::map<std::string, std::string>& in) {
    static const std::map<std::string, std::string> headers = {
        {"carrier.csv", "t,x_m,y_m,yaw_rad,u_mps,v_mps,r_radps,phase,heading_source,beta_rad,est_x_m,est_y_m,t1_n,t2_n,theta1_rad,theta2_rad"},
        {"dvl_path.csv", "t,x_m,y_m"},
        {"target_ekf.csv", "t,est_x_m,est_y_m,true_x_m,true_y_m,cov_trace_m2"},
        {"roll_pitch.csv", "t,roll_rad,pitch_rad"},
        {"fit_dims.csv", "t,length_m,width_m,long_axis_rad"},
        {"lidar_target.csv", "t,rel_x_m,rel_y_m,range_m"},
        {"paths.csv", "path_id,t_planned,x_m,y_m,heading_rad"},
    };
    std::map<std::string, std::string> out;
    for (const auto& [name, body] : in) {
      auto it = headers.find(name);
      const std::string h = it != headers.end() ? it->second
                                                : "t,mode,x_m,y_m,z_m,sp_x_m,sp_y_m,sp_z_m,est_x_m,est_y_m,est_z_m";
      out[name] = h + "\n" + body;
    }
    return out;
  }

  RunReport run_landing_only() {
    RunReport r;
    r.scenario = sc_.name;
    r.seed = seed_;
    const auto trial = run_landing_trial(seed_, sc_.sea_state, cfg_, std::min(max_t_, 60.0), cfg_.record_logs ? &logs_ : nullptr);
    log_.add(trial.duration, trial.landed ? "uav_landed" : (trial.aborted ? "uav_abort" : "timeout"),
             Phase::V_DockedOperations,
             trial.landed ? nlohmann::json{{"uav", 0}, {"lateral_error_m", trial.lateral_error}} : nlohmann::json::object());
    r.phase_at_end = Phase::V_DockedOperations;
    r.sim_time = trial.duration;
    r.phase_history = {{Phase::I_Preparation, 0.0}};
    if (trial.landed) r.metrics.landing_errors.push_back(trial.lateral_error);
    r.outcome = trial.landed && trial.lateral_error <= 0.2 ? Outcome::Success
                : trial.aborted                             ? Outcome::PhaseFailure
                                                            : Outcome::Timeout;
    log_.add(trial.duration, "run_end", Phase::V_DockedOperations, {{"outcome", to_string(r.outcome)}});
    std::ostringstream os;
    log_.write_jsonl(os);
    r.events_jsonl = os.str();
    if (cfg_.record_logs) r.logs = with_headers(logs_);
    return r;
  }

  // ---- state
  Scenario sc_;
  std::uint64_t seed_;
  SimConfig cfg_;
  UsvModel model_;
  WaveField waves_;
  RngStream rng_gimbal_, rng_pod_, rng_lidar_, rng_misc_, rng_manip_;
  ProprioSensor proprio_;
  LinkQueue<GimbalMeasurement> link_;
  EventLog log_;
  PhaseMachine machine_;
  GimbalCamera camera_;
  PodCamera pod_;
  LidarConfig lidar_;
  UwbAnchorSet anchors_;

  double t_ = 0.0, max_t_ = 0.0;
  int tick_ = 0;
  bool done_ = false;
  Outcome outcome_ = Outcome::Timeout;
  std::string failure_reason_;

  UsvState carrier_;
  Vec3 wind_ = Vec3::Zero();
  double yaw_imu_ = 0.0, yaw_rate_meas_ = 0.0;
  Vec3 dvl_ = Vec3::Zero();
  Vec2 dvl_path_ = Vec2::Zero();
  EstimatorState carrier_nav_;
  TargetEkf target_ekf_;
  std::optional<double> target_relay_t_;
  std::deque<std::pair<double, Vec2>> target_queue_;
  std::optional<Vec2> target_relayed_;
  bool onshore_carrier_seen_ = false, onshore_target_seen_ = false;
  std::optional<double> pod_bearing_;
  double pod_last_ = 0.0, pod_last_t_ = -1.0;
  std::vector<Blob> blobs_;
  std::vector<Obstacle> obstacles_;
  double obstacles_t_ = -1e9;
  bool lidar_recent_ = false;
  double lidar_range_ = 0.0, lidar_seen_t_ = -1e9;
  Vec2 target_blob_body_ = Vec2::Zero();
  std::vector<Vec2> target_pts_body_;
  GuidanceSource heading_source_ = GuidanceSource::OnshoreGimbal;
  double beta_ = 0.0;
  ThrusterCommand last_cmd_;

  // phase IV
  DockStage stage_ = DockStage::Circling;
  Vec2 rel_pos_ = Vec2::Zero();  // carrier relative to target centre, inertial axes
  CirclePlan circle_;
  DubinsPath approach_;
  PathFollower follower_;
  bool follower_ready_ = false;
  double loop_start_progress_ = 0.0, last_plan_try_ = -1e9, dock_heading_ = 0.0;
  std::vector<double> fit_lengths_, fit_widths_, fit_axes_;
  std::vector<std::tuple<double, double, double, double>> dims_log_;
  std::vector<std::pair<double, Vec2>> lidar_target_log_;
  Vec3 dock_meas_{0.0, 1e9, 0.0};  // misalignment, gap, along offset
  std::deque<TimedPosition> dock_hist_;
  double lateral_since_ = 0.0, phase_iv_entry_ = 0.0, docking_time_ = 0.0;
  bool alongside_ = false, realign_logged_ = false, docked_ = false;
  double truth_gap_ = 1e9;
  DockingHook hook_;
  Vec2 latch_rel_pos_ = Vec2::Zero();
  double latch_rel_yaw_ = 0.0;

  // phase V
  std::vector<UavAgent> uavs_;
  std::vector<CarrierCommand> cmds_;
  std::vector<DeckObject> objects_;
  std::vector<ObjectEstimate> scans_;
  std::optional<DeckRect> search_region_;
  DragPlan drag_plan_;
  std::optional<int> drag_object_;
  bool drag_started_ = false, drag_done_ = false;
  Vec2 drag_offset_ = Vec2::Zero();
  bool ops_started_ = false, small_delivered_ = false, large_stowed_ = false;
  int objects_delivered_ = 0;
  std::vector<bool> landing_logged_;
  std::vector<double> landing_errors_;
  std::set<int> delivered_logged_;
  double last_recovery_try_ = -1e9;
  std::string last_refusal_;
  bool returning_ = false;
  double return_since_ = 0.0;
  std::optional<double> home_error_;
  std::optional<double> final_loc_err_;

  std::map<std::string, std::string> logs_;
  std::size_t dims_logged_ = 0, lidar_logged_ = 0;
};

inline RunReport run_scenario(const Scenario& sc, std::uint64_t seed, const SimConfig& cfg = {}) {
  World w(sc, seed, cfg);
  return w.run();
}

/// Writes the report's logs, events and summary under `dir`; returns the paths written.
inline std::vector<std::string> write_run_outputs(RunReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  auto put = [&](const std::string& name, const std::string& body) {
    const auto p = dir / name;
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    os << body;
    paths.push_back(p.string());
  };
  for (const auto& [name, body] : r.logs) put(name, body);
  put("events.jsonl", r.events_jsonl);
  put("summary.json", r.summary().dump(2) + "\n");
  r.log_paths = paths;
  return paths;
}

}  // namespace drone_carrier
