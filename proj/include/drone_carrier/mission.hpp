#pragma once

// Carrier phase machine, docking hook, message links and the mission event log.

#include "drone_carrier/common.hpp"
#include "drone_carrier/random.hpp"
#include "drone_carrier/uav.hpp"

#include <json.hpp>

#include <deque>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace drone_carrier {

enum class Phase { I_Preparation = 1, II_OnshoreGcGuidance, III_OnboardGcGuidance, IV_MeasureAndDock, V_DockedOperations };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::I_Preparation: return "I";
    case Phase::II_OnshoreGcGuidance: return "II";
    case Phase::III_OnboardGcGuidance: return "III";
    case Phase::IV_MeasureAndDock: return "IV";
    case Phase::V_DockedOperations: return "V";
  }
  return "?";
}

struct MissionPhase {
  Phase phase = Phase::I_Preparation;
  double entered = 0.0;
};

// --- event log ------------------------------------------------------------------

struct Event {
  double t = 0.0;
  std::string name;
  Phase phase = Phase::I_Preparation;
  nlohmann::json payload = nlohmann::json::object();
};

class EventLog {
 public:
  void add(double t, std::string name, Phase phase, nlohmann::json payload = nlohmann::json::object()) {
    events_.push_back({t, std::move(name), phase, std::move(payload)});
  }
  const std::vector<Event>& events() const { return events_; }
  std::size_t count(const std::string& name) const {
    std::size_t n = 0;
    for (const auto& e : events_) n += e.name == name;
    return n;
  }

  /// One JSON object per line, keys in a fixed order.
  void write_jsonl(std::ostream& os) const {
    for (const auto& e : events_) {
      nlohmann::ordered_json j;
      j["t"] = std::round(e.t * 1e6) / 1e6;
      j["event"] = e.name;
      j["phase"] = to_string(e.phase);
      j["payload"] = e.payload;
      os << j.dump() << '\n';
    }
  }

 private:
  std::vector<Event> events_;
};

// --- docking hook ----------------------------------------------------------------

enum class HookState { Stowed, Released, Latched };

inline const char* to_string(HookState h) {
  switch (h) {
    case HookState::Stowed: return "stowed";
    case HookState::Released: return "released";
    case HookState::Latched: return "latched";
  }
  return "?";
}

struct DockingHook {
  HookState state = HookState::Stowed;
  bool contact = false;
  double contact_since = -1.0;
  double latch_after = 2.0;  // s of sustained contact
};

inline DockingHook docking_trigger(DockingHook hook, bool contact, double t) {
  if (contact && !hook.contact) hook.contact_since = t;
  if (!contact) hook.contact_since = -1.0;
  hook.contact = contact;
  switch (hook.state) {
    case HookState::Stowed:
      if (contact) hook.state = HookState::Released;
      break;
    case HookState::Released:
      if (contact && t - hook.contact_since >= hook.latch_after) hook.state = HookState::Latched;
      break;
    case HookState::Latched:
      break;
  }
  return hook;
}

inline DockingHook retract_hook(DockingHook hook) {
  hook.state = HookState::Stowed;
  hook.contact = false;
  hook.contact_since = -1.0;
  return hook;
}

// --- links ------------------------------------------------------------------------

enum class LinkKind { DataLink, DeckWifi };

struct CommLink {
  double latency = 0.1;       // s
  double drop = 0.0;          // per-message probability
  double range = 5000.0;      // m
  LinkKind kind = LinkKind::DataLink;

  void validate() const {
    if (!(latency >= 0.0)) throw ConfigError("comm link: latency must be non-negative");
    if (!(drop >= 0.0 && drop < 1.0)) throw ConfigError("comm link: drop probability must lie in [0, 1)");
    if (!(range > 0.0)) throw ConfigError("comm link: range must be positive");
  }

  static CommLink data_link() { return {0.2, 0.0, 5000.0, LinkKind::DataLink}; }
  static CommLink deck_wifi() { return {0.02, 0.0, 150.0, LinkKind::DeckWifi}; }
};

template <class Msg>
struct Delivery {
  double deliver_at = 0.0;
  Msg msg;
};

/// FIFO message queue over one link. Delivery time is monotone in send order
/// because the latency is fixed per link.
template <class Msg>
class LinkQueue {
 public:
  LinkQueue() = default;
  LinkQueue(CommLink link, RngStream rng) : link_(link), rng_(std::move(rng)) { link_.validate(); }

  const CommLink& link() const { return link_; }
  std::size_t sent() const { return sent_; }
  std::size_t dropped() const { return dropped_; }

  bool send(const Msg& msg, double t, const Vec3& from, const Vec3& to) {
    ++sent_;
    const bool lost = rng_.bernoulli(link_.drop);
    if ((from - to).norm() > link_.range || lost) {
      ++dropped_;
      return false;
    }
    double at = t + link_.latency;
    if (!queue_.empty()) at = std::max(at, queue_.back().deliver_at);
    queue_.push_back({at, msg});
    return true;
  }

  std::vector<Msg> receive(double t) {
    std::vector<Msg> out;
    while (!queue_.empty() && queue_.front().deliver_at <= t + 1e-12) {
      out.push_back(std::move(queue_.front().msg));
      queue_.pop_front();
    }
    return out;
  }

  std::size_t pending() const { return queue_.size(); }

 private:
  CommLink link_;
  RngStream rng_{0};
  std::deque<Delivery<Msg>> queue_;
  std::size_t sent_ = 0;
  std::size_t dropped_ = 0;
};

/// Single-message form: delivery time, or nullopt if dropped.
inline std::optional<double> comm_deliver(const CommLink& link, double t, const Vec3& from, const Vec3& to, RngStream& rng) {
  const bool lost = rng.bernoulli(link.drop);
  if ((from - to).norm() > link.range || lost) return std::nullopt;
  return t + link.latency;
}

// --- phase machine ------------------------------------------------------------------

struct MissionInputs {
  double t = 0.0;
  bool onshore_has_carrier = false;
  bool onshore_has_target = false;
  std::optional<double> pod_lock_range;      // onboard camera lock on target
  std::optional<double> lidar_fit_range;     // LiDAR target fit confirmed at this range
  HookState hook = HookState::Stowed;
  bool alongside = false;                    // LiDAR confirms carrier alongside
};

struct MissionConfig {
  double pod_handover_range = 500.0;
  double lidar_confirm_range = 200.0;
  double source_loss_timeout = 30.0;
};

struct MissionCommands {
  bool uav_takeoff = false;
  bool phase_changed = false;
  bool regressed = false;
};

class PhaseMachine {
 public:
  explicit PhaseMachine(MissionConfig cfg = {}, EventLog* log = nullptr) : cfg_(cfg), log_(log) {}

  const MissionPhase& current() const { return phase_; }
  const std::vector<std::pair<Phase, double>>& history() const { return history_; }
  bool returning() const { return returning_; }

  /// Heading source of the current phase is visible this tick.
  bool source_visible(const MissionInputs& in) const {
    switch (phase_.phase) {
      case Phase::I_Preparation: return true;
      case Phase::II_OnshoreGcGuidance: return in.onshore_has_carrier && in.onshore_has_target;
      case Phase::III_OnboardGcGuidance: return in.pod_lock_range.has_value();
      case Phase::IV_MeasureAndDock: return in.lidar_fit_range.has_value() || in.hook != HookState::Stowed;
      case Phase::V_DockedOperations: return true;
    }
    return true;
  }

  MissionCommands tick(const MissionInputs& in) {
    MissionCommands out;
    if (history_.empty()) history_.emplace_back(phase_.phase, in.t);
    if (returning_) return out;

    if (source_visible(in)) last_seen_ = in.t;
    else if (last_seen_ < 0.0) last_seen_ = in.t;

    switch (phase_.phase) {
      case Phase::I_Preparation:
        if (in.onshore_has_carrier && in.onshore_has_target) advance(Phase::II_OnshoreGcGuidance, in.t, out, "onshore_tracks_acquired");
        break;
      case Phase::II_OnshoreGcGuidance:
        if (in.pod_lock_range && *in.pod_lock_range <= cfg_.pod_handover_range)
          advance(Phase::III_OnboardGcGuidance, in.t, out, "onboard_lock", {{"range_m", *in.pod_lock_range}});
        break;
      case Phase::III_OnboardGcGuidance:
        if (in.lidar_fit_range && *in.lidar_fit_range <= cfg_.lidar_confirm_range)
          advance(Phase::IV_MeasureAndDock, in.t, out, "lidar_fit_confirmed", {{"range_m", *in.lidar_fit_range}});
        break;
      case Phase::IV_MeasureAndDock:
        if (in.hook == HookState::Latched && in.alongside) {
          advance(Phase::V_DockedOperations, in.t, out, "docked");
          out.uav_takeoff = true;
        }
        break;
      case Phase::V_DockedOperations:
        break;
    }

    if (!out.phase_changed && phase_.phase != Phase::I_Preparation && phase_.phase != Phase::V_DockedOperations &&
        in.t - last_seen_ > cfg_.source_loss_timeout && in.t - phase_.entered > cfg_.source_loss_timeout) {
      const Phase back = static_cast<Phase>(static_cast<int>(phase_.phase) - 1);
      if (log_) log_->add(in.t, "guidance_source_lost", phase_.phase, {{"lost_s", in.t - last_seen_}});
      enter(back, in.t);
      out.phase_changed = out.regressed = true;
      last_seen_ = in.t;
    }
    return out;
  }

  void begin_return(double t) {
    returning_ = true;
    if (log_) log_->add(t, "return_leg_started", phase_.phase);
  }

 private:
  void advance(Phase to, double t, MissionCommands& out, const char* why, nlohmann::json payload = nlohmann::json::object()) {
    payload["reason"] = why;
    enter(to, t, std::move(payload));
    out.phase_changed = true;
    last_seen_ = t;
  }

  void enter(Phase to, double t, nlohmann::json payload = nlohmann::json::object()) {
    payload["from"] = to_string(phase_.phase);
    phase_ = {to, t};
    history_.emplace_back(to, t);
    if (log_) log_->add(t, "phase_enter", to, std::move(payload));
  }

  MissionConfig cfg_;
  EventLog* log_ = nullptr;
  MissionPhase phase_;
  std::vector<std::pair<Phase, double>> history_;
  double last_seen_ = -1.0;
  bool returning_ = false;
};

/// Sequence check: forward steps of one and single-step regressions only,
/// each regression preceded by a loss event.
inline bool phase_sequence_valid(const std::vector<std::pair<Phase, double>>& history, std::size_t loss_events) {
  if (history.empty()) return true;
  if (history.front().first != Phase::I_Preparation) return false;
  std::size_t regressions = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const int step = static_cast<int>(history[i].first) - static_cast<int>(history[i - 1].first);
    if (step == -1) ++regressions;
    else if (step != 1) return false;
  }
  return regressions == loss_events;
}

struct RecoveryDecision {
  bool accepted = false;
  std::string diagnostic;
};

inline RecoveryDecision recovery_return(const std::vector<UavMissionState>& uavs, DockingHook& hook) {
  for (std::size_t i = 0; i < uavs.size(); ++i) {
    const auto m = uavs[i].mode;
    if (m != UavMode::Landed && m != UavMode::Idle)
      return {false, "uav " + std::to_string(i) + " is airborne in mode " + to_string(m)};
  }
  hook = retract_hook(hook);
  return {true, ""};
}

}  // namespace drone_carrier
