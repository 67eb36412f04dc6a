#pragma once

// Scenario definition, YAML loading with unit-suffixed keys, validation and
// the bundled scenarios. Numbers are written in shortest round-trip form so
// load(serialize(s)) == s exactly.

#include "drone_carrier/common.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdint>
#include <set>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace drone_carrier {

struct AreaBounds {
  double x_min = -866.0, x_max = 866.0, y_min = 0.0, y_max = 1732.0;
  bool contains(const Vec2& p) const { return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max; }
  bool operator==(const AreaBounds&) const = default;
};

struct VesselSpec {
  double length = 12.0, width = 5.0, height = 2.5;
  double x = 0.0, y = 0.0, heading = 0.0;
  double drift_speed = 0.0, drift_heading = 0.0;
  bool operator==(const VesselSpec&) const = default;
};

struct ObjectSpec {
  int id = 0;
  double mass = 1.0, length = 0.5, width = 0.5, height = 0.3;
  double deck_x = 0.0, deck_y = 0.0;  // target body frame (m)
  bool operator==(const ObjectSpec&) const = default;
};

struct CarrierSpec {
  double length = 6.0, width = 4.0;
  double start_x = 0.0, start_y = 60.0, start_yaw = kPi / 2;
  double home_x = 0.0, home_y = 60.0;
  double cruise_speed = 2.0;  // m/s, open-water transit
  bool operator==(const CarrierSpec&) const = default;
};

struct SensorSpec {
  double gimbal_x = 0.0, gimbal_y = -20.0, gimbal_height = 80.0;
  double gimbal_range = 3000.0, gimbal_sigma_deg = 0.5, gimbal_rate_hz = 10.0;
  double pod_range = 500.0, pod_sigma_deg = 0.5;
  double lidar_range = 200.0, lidar_sigma = 0.03;
  double uwb_sigma = 0.1;
  double qr_sigma_coarse = 0.10, qr_sigma_fine = 0.02;
  bool operator==(const SensorSpec&) const = default;
};

enum class ScenarioMode { Full, LandingOnly };

struct Scenario {
  std::string name = "unnamed";
  std::uint64_t seed = 1;
  ScenarioMode mode = ScenarioMode::Full;
  int sea_state = 0;
  double max_sim_s = 3600.0;
  AreaBounds area;
  CarrierSpec carrier;
  VesselSpec target;
  double target_deck_height = -0.3;  // relative to the carrier deck (m)
  double prior_x = 0.0, prior_y = 0.0;
  std::vector<VesselSpec> distractors;
  std::vector<ObjectSpec> objects;
  int uav_count = 4;
  SensorSpec sensors;

  Vec2 prior() const { return {prior_x, prior_y}; }
  bool operator==(const Scenario&) const = default;
};

// --- validation -----------------------------------------------------------------

inline void validate(const Scenario& s) {
  auto fail = [](const char* inv, const std::string& what) { throw ValidationError(inv, what); };
  if (!(s.area.x_min < s.area.x_max && s.area.y_min < s.area.y_max)) fail("area_nonempty", "area bounds are empty");
  if (s.sea_state < 0 || s.sea_state > 3) fail("sea_state_range", "sea state must be 0..3");
  if (s.uav_count < 0 || s.uav_count > 8) fail("uav_count_range", "uav count must be 0..8");
  if (!(s.max_sim_s > 0.0)) fail("duration_positive", "max_sim_s must be positive");
  if (!(s.carrier.length > 0.0 && s.carrier.width > 0.0)) fail("carrier_dims_positive", "carrier dims must be positive");
  if (!(s.target.length > 0.0 && s.target.width > 0.0)) fail("target_dims_positive", "target dims must be positive");
  if (s.target.length > 2.0 * s.carrier.length || s.target.width > 2.0 * s.carrier.width)
    fail("target_size_bound", "target is more than twice the carrier size");
  if (!s.area.contains({s.target.x, s.target.y})) fail("target_in_area", "target lies outside the area");
  if ((s.prior() - Vec2(s.target.x, s.target.y)).norm() > 50.0)
    fail("prior_accuracy", "target prior is more than 50 m from the target");
  if (s.target.drift_speed < 0.0 || s.target.drift_speed > 0.5) fail("drift_bound", "target drift must be 0..0.5 m/s");
  std::set<int> ids;
  for (const auto& o : s.objects) {
    if (!ids.insert(o.id).second) fail("object_ids_unique", "duplicate object id " + std::to_string(o.id));
    if (!(o.mass > 0.0 && o.length > 0.0 && o.width > 0.0 && o.height > 0.0))
      fail("object_dims_positive", "object " + std::to_string(o.id) + " has non-positive mass or size");
    if (std::abs(o.deck_x) > s.target.length / 2 || std::abs(o.deck_y) > s.target.width / 2)
      fail("object_on_deck", "object " + std::to_string(o.id) + " lies off the target deck");
  }
  for (std::size_t i = 0; i < s.distractors.size(); ++i) {
    const auto& d = s.distractors[i];
    if (!(d.length > 0.0 && d.width > 0.0)) fail("distractor_dims_positive", "distractor " + std::to_string(i));
    if (!s.area.contains({d.x, d.y})) fail("distractor_in_area", "distractor " + std::to_string(i) + " outside area");
  }
  if (s.sensors.gimbal_height <= 0.0 || s.sensors.gimbal_range <= 0.0 || s.sensors.gimbal_sigma_deg < 0.0)
    fail("gimbal_params", "gimbal height/range must be positive and sigma non-negative");
}

// --- parsing ----------------------------------------------------------------------

namespace detail {

class Reader {
 public:
  Reader(const YAML::Node& n, std::string path) : node_(n), path_(std::move(path)) {
    if (!n.IsMap()) throw ParseError(path_.empty() ? "/" : path_, "expected a mapping");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const YAML::Node v = node_[key];
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ParseError(child(key), "wrong value type");
    }
  }

  void get_angle_rad(const char* key, double& out) { get(key, out); }

  YAML::Node sub(const char* key) {
    seen_.insert(key);
    return node_[key];
  }

  std::string child(const std::string& key) const { return path_ + "/" + key; }

  void finish() const {
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      if (!seen_.count(k)) throw ParseError(child(k), "unknown key");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

inline VesselSpec read_vessel(const YAML::Node& n, const std::string& path) {
  Reader r(n, path);
  VesselSpec v;
  r.get("length_m", v.length);
  r.get("width_m", v.width);
  r.get("height_m", v.height);
  r.get("x_m", v.x);
  r.get("y_m", v.y);
  r.get("heading_rad", v.heading);
  r.get("drift_speed_mps", v.drift_speed);
  r.get("drift_heading_rad", v.drift_heading);
  r.finish();
  return v;
}

inline ObjectSpec read_object(const YAML::Node& n, const std::string& path) {
  Reader r(n, path);
  ObjectSpec o;
  r.get("id", o.id);
  r.get("mass_kg", o.mass);
  r.get("length_m", o.length);
  r.get("width_m", o.width);
  r.get("height_m", o.height);
  r.get("deck_x_m", o.deck_x);
  r.get("deck_y_m", o.deck_y);
  r.finish();
  return o;
}

}  // namespace detail

inline Scenario parse_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ParseError("/", std::string("malformed document: ") + e.what());
  }
  Scenario s;
  detail::Reader r(root, "");
  r.get("name", s.name);
  r.get("seed", s.seed);
  std::string mode = "full";
  r.get("mode", mode);
  if (mode == "full") s.mode = ScenarioMode::Full;
  else if (mode == "landing_only") s.mode = ScenarioMode::LandingOnly;
  else throw ParseError("/mode", "expected full or landing_only");
  r.get("sea_state", s.sea_state);
  r.get("max_sim_s", s.max_sim_s);
  r.get("uav_count", s.uav_count);
  r.get("target_deck_height_m", s.target_deck_height);
  r.get("prior_x_m", s.prior_x);
  r.get("prior_y_m", s.prior_y);
  if (auto n = r.sub("area")) {
    detail::Reader a(n, "/area");
    a.get("x_min_m", s.area.x_min);
    a.get("x_max_m", s.area.x_max);
    a.get("y_min_m", s.area.y_min);
    a.get("y_max_m", s.area.y_max);
    a.finish();
  }
  if (auto n = r.sub("carrier")) {
    detail::Reader c(n, "/carrier");
    c.get("length_m", s.carrier.length);
    c.get("width_m", s.carrier.width);
    c.get("start_x_m", s.carrier.start_x);
    c.get("start_y_m", s.carrier.start_y);
    c.get("start_yaw_rad", s.carrier.start_yaw);
    c.get("home_x_m", s.carrier.home_x);
    c.get("home_y_m", s.carrier.home_y);
    c.get("cruise_speed_mps", s.carrier.cruise_speed);
    c.finish();
  }
  if (auto n = r.sub("target")) s.target = detail::read_vessel(n, "/target");
  if (auto n = r.sub("distractors")) {
    if (!n.IsSequence()) throw ParseError("/distractors", "expected a list");
    for (std::size_t i = 0; i < n.size(); ++i)
      s.distractors.push_back(detail::read_vessel(n[i], "/distractors/" + std::to_string(i)));
  }
  if (auto n = r.sub("objects")) {
    if (!n.IsSequence()) throw ParseError("/objects", "expected a list");
    for (std::size_t i = 0; i < n.size(); ++i)
      s.objects.push_back(detail::read_object(n[i], "/objects/" + std::to_string(i)));
  }
  if (auto n = r.sub("sensors")) {
    detail::Reader c(n, "/sensors");
    auto& z = s.sensors;
    c.get("gimbal_x_m", z.gimbal_x);
    c.get("gimbal_y_m", z.gimbal_y);
    c.get("gimbal_height_m", z.gimbal_height);
    c.get("gimbal_range_m", z.gimbal_range);
    c.get("gimbal_sigma_deg", z.gimbal_sigma_deg);
    c.get("gimbal_rate_hz", z.gimbal_rate_hz);
    c.get("pod_range_m", z.pod_range);
    c.get("pod_sigma_deg", z.pod_sigma_deg);
    c.get("lidar_range_m", z.lidar_range);
    c.get("lidar_sigma_m", z.lidar_sigma);
    c.get("uwb_sigma_m", z.uwb_sigma);
    c.get("qr_sigma_coarse_m", z.qr_sigma_coarse);
    c.get("qr_sigma_fine_m", z.qr_sigma_fine);
    c.finish();
  }
  r.finish();
  return s;
}

inline Scenario load_scenario(const std::string& text) {
  Scenario s = parse_scenario(text);
  validate(s);
  return s;
}

inline Scenario load_scenario_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError(path, "cannot open scenario file");
  std::stringstream ss;
  ss << is.rdbuf();
  return load_scenario(ss.str());
}

// --- serialization ------------------------------------------------------------------

namespace detail {
inline std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEni") == std::string::npos) s += ".0";
  return s;
}

inline void write_vessel(std::ostream& os, const VesselSpec& v, const std::string& ind, bool list_item) {
  const std::string first = list_item ? ind.substr(0, ind.size() - 2) + "- " : ind;
  os << first << "length_m: " << num(v.length) << '\n';
  os << ind << "width_m: " << num(v.width) << '\n';
  os << ind << "height_m: " << num(v.height) << '\n';
  os << ind << "x_m: " << num(v.x) << '\n';
  os << ind << "y_m: " << num(v.y) << '\n';
  os << ind << "heading_rad: " << num(v.heading) << '\n';
  os << ind << "drift_speed_mps: " << num(v.drift_speed) << '\n';
  os << ind << "drift_heading_rad: " << num(v.drift_heading) << '\n';
}
}  // namespace detail

inline std::string serialize(const Scenario& s) {
  using detail::num;
  std::ostringstream os;
  os << "name: " << s.name << '\n';
  os << "seed: " << s.seed << '\n';
  os << "mode: " << (s.mode == ScenarioMode::Full ? "full" : "landing_only") << '\n';
  os << "sea_state: " << s.sea_state << '\n';
  os << "max_sim_s: " << num(s.max_sim_s) << '\n';
  os << "uav_count: " << s.uav_count << '\n';
  os << "target_deck_height_m: " << num(s.target_deck_height) << '\n';
  os << "prior_x_m: " << num(s.prior_x) << '\n';
  os << "prior_y_m: " << num(s.prior_y) << '\n';
  os << "area:\n";
  os << "  x_min_m: " << num(s.area.x_min) << "\n  x_max_m: " << num(s.area.x_max) << '\n';
  os << "  y_min_m: " << num(s.area.y_min) << "\n  y_max_m: " << num(s.area.y_max) << '\n';
  const auto& c = s.carrier;
  os << "carrier:\n";
  os << "  length_m: " << num(c.length) << "\n  width_m: " << num(c.width) << '\n';
  os << "  start_x_m: " << num(c.start_x) << "\n  start_y_m: " << num(c.start_y) << '\n';
  os << "  start_yaw_rad: " << num(c.start_yaw) << '\n';
  os << "  home_x_m: " << num(c.home_x) << "\n  home_y_m: " << num(c.home_y) << '\n';
  os << "  cruise_speed_mps: " << num(c.cruise_speed) << '\n';
  os << "target:\n";
  detail::write_vessel(os, s.target, "  ", false);
  os << "distractors:" << (s.distractors.empty() ? " []\n" : "\n");
  for (const auto& d : s.distractors) detail::write_vessel(os, d, "    ", true);
  os << "objects:" << (s.objects.empty() ? " []\n" : "\n");
  for (const auto& o : s.objects) {
    os << "  - id: " << o.id << '\n';
    os << "    mass_kg: " << num(o.mass) << "\n    length_m: " << num(o.length) << '\n';
    os << "    width_m: " << num(o.width) << "\n    height_m: " << num(o.height) << '\n';
    os << "    deck_x_m: " << num(o.deck_x) << "\n    deck_y_m: " << num(o.deck_y) << '\n';
  }
  const auto& z = s.sensors;
  os << "sensors:\n";
  os << "  gimbal_x_m: " << num(z.gimbal_x) << "\n  gimbal_y_m: " << num(z.gimbal_y) << '\n';
  os << "  gimbal_height_m: " << num(z.gimbal_height) << "\n  gimbal_range_m: " << num(z.gimbal_range) << '\n';
  os << "  gimbal_sigma_deg: " << num(z.gimbal_sigma_deg) << "\n  gimbal_rate_hz: " << num(z.gimbal_rate_hz) << '\n';
  os << "  pod_range_m: " << num(z.pod_range) << "\n  pod_sigma_deg: " << num(z.pod_sigma_deg) << '\n';
  os << "  lidar_range_m: " << num(z.lidar_range) << "\n  lidar_sigma_m: " << num(z.lidar_sigma) << '\n';
  os << "  uwb_sigma_m: " << num(z.uwb_sigma) << '\n';
  os << "  qr_sigma_coarse_m: " << num(z.qr_sigma_coarse) << "\n  qr_sigma_fine_m: " << num(z.qr_sigma_fine) << '\n';
  return os.str();
}

// --- bundled scenarios ----------------------------------------------------------------

/// Field layout: 3 km^2 box, shore gimbal at the south edge, one 12 x 5 m
/// target and seven distractors of assorted sizes.
inline Scenario mbzirc_field() {
  Scenario s;
  s.name = "mbzirc-field";
  s.seed = 42;
  s.sea_state = 3;
  s.max_sim_s = 3600.0;
  s.target = {12.0, 5.0, 2.5, 430.0, 1480.0, 0.6, 0.05, 2.2};
  s.prior_x = 455.0;
  s.prior_y = 1450.0;
  s.distractors = {
      {6.0, 2.5, 1.8, 150.0, 900.0, 1.1, 0.1, 0.3},     {18.0, 6.0, 3.0, -300.0, 1200.0, 0.2, 0.05, 1.0},
      {8.0, 3.0, 2.0, 650.0, 1100.0, 2.5, 0.0, 0.0},    {25.0, 8.0, 3.5, -600.0, 1600.0, 0.9, 0.08, 4.0},
      {4.0, 2.0, 1.5, 300.0, 1650.0, 1.9, 0.1, 5.5},    {30.0, 9.0, 4.0, 800.0, 1650.0, 0.4, 0.0, 0.0},
      {16.0, 7.0, 3.0, 20.0, 500.0, 2.8, 0.12, 2.0},
  };
  s.objects = {{1, 0.8, 0.4, 0.3, 0.25, 2.5, 0.8}, {2, 6.0, 2.0, 0.6, 0.4, -0.5, 0.0}};
  s.uav_count = 4;
  return s;
}

inline Scenario calm_dock() {
  Scenario s = mbzirc_field();
  s.name = "calm-dock";
  s.sea_state = 0;
  s.max_sim_s = 2400.0;
  s.target.x = 0.0;
  s.target.y = 560.0;
  s.target.drift_speed = 0.0;
  s.prior_x = 10.0;
  s.prior_y = 540.0;
  s.distractors.clear();
  return s;
}

inline Scenario landing_stress() {
  Scenario s = mbzirc_field();
  s.name = "landing-stress";
  s.mode = ScenarioMode::LandingOnly;
  s.max_sim_s = 60.0;
  s.uav_count = 1;
  s.distractors.clear();
  s.objects.clear();
  return s;
}

inline std::vector<Scenario> builtin_scenarios() { return {mbzirc_field(), calm_dock(), landing_stress()}; }

inline Scenario builtin_scenario(const std::string& name) {
  for (auto& s : builtin_scenarios())
    if (s.name == name) return s;
  throw InvalidArgument("unknown builtin scenario '" + name + "'");
}

}  // namespace drone_carrier
