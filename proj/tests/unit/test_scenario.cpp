#include "drone_carrier/scenario.hpp"
#include "drone_carrier/random.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

using namespace drone_carrier;

namespace {

VesselSpec random_vessel(RngStream& rng, const AreaBounds& a) {
  VesselSpec v;
  v.length = rng.uniform(3.0, 30.0);
  v.width = rng.uniform(1.5, 9.0);
  v.height = rng.uniform(1.0, 4.0);
  v.x = rng.uniform(a.x_min, a.x_max);
  v.y = rng.uniform(a.y_min, a.y_max);
  v.heading = rng.uniform(-kPi, kPi);
  v.drift_speed = rng.uniform(0.0, 0.5);
  v.drift_heading = rng.uniform(-kPi, kPi);
  return v;
}

Scenario random_scenario(RngStream& rng, int k) {
  Scenario s;
  s.name = "random-" + std::to_string(k);
  s.seed = static_cast<std::uint64_t>(rng.uniform(0.0, 1e15));
  s.mode = rng.bernoulli(0.5) ? ScenarioMode::Full : ScenarioMode::LandingOnly;
  s.sea_state = static_cast<int>(rng.uniform(0.0, 3.999));
  s.max_sim_s = rng.uniform(10.0, 5000.0);
  s.area = {rng.uniform(-2000, -100), rng.uniform(100, 2000), rng.uniform(-500, 0), rng.uniform(500, 3000)};
  s.carrier.length = rng.uniform(4.0, 8.0);
  s.carrier.width = rng.uniform(2.0, 5.0);
  s.carrier.start_yaw = rng.uniform(-kPi, kPi);
  s.carrier.cruise_speed = rng.uniform(0.5, 4.0);
  s.target = random_vessel(rng, s.area);
  s.target.length = rng.uniform(1.0, 2.0) * s.carrier.length;
  s.target.width = rng.uniform(1.0, 2.0) * s.carrier.width;
  const double r = rng.uniform(0.0, 49.0), a = rng.uniform(-kPi, kPi);
  s.prior_x = s.target.x + r * std::cos(a);
  s.prior_y = s.target.y + r * std::sin(a);
  s.target_deck_height = rng.uniform(-1.0, 1.0);
  const int nd = static_cast<int>(rng.uniform(0, 9));
  for (int i = 0; i < nd; ++i) s.distractors.push_back(random_vessel(rng, s.area));
  const int no = static_cast<int>(rng.uniform(0, 5));
  for (int i = 0; i < no; ++i)
    s.objects.push_back({10 * i + 3, rng.uniform(0.1, 9.0), rng.uniform(0.1, 2.0), rng.uniform(0.1, 1.0),
                         rng.uniform(0.1, 0.8), rng.uniform(-0.5, 0.5) * s.target.length,
                         rng.uniform(-0.5, 0.5) * s.target.width});
  s.uav_count = static_cast<int>(rng.uniform(0, 8.999));
  s.sensors.gimbal_sigma_deg = rng.uniform(0.0, 2.0);
  s.sensors.uwb_sigma = rng.uniform(0.01, 0.3);
  return s;
}

std::string path_of_parse_error(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const ParseError& e) {
    return e.path();
  }
  return "<no error>";
}

std::string invariant_of(const Scenario& s) {
  try {
    validate(s);
  } catch (const ValidationError& e) {
    return e.invariant();
  }
  return "<valid>";
}

}  // namespace

TEST(Builtins, FieldLayout) {
  const auto s = load_scenario(serialize(builtin_scenario("mbzirc-field")));
  const double area_km2 = (s.area.x_max - s.area.x_min) * (s.area.y_max - s.area.y_min) / 1e6;
  EXPECT_NEAR(area_km2, 3.0, 0.01);
  EXPECT_EQ(s.distractors.size(), 7u);
  EXPECT_EQ(s.sea_state, 3);
  EXPECT_EQ(s.uav_count, 4);
  EXPECT_EQ(s.mode, ScenarioMode::Full);
}

TEST(Builtins, AllValidateAndNamesAreUnique) {
  std::set<std::string> names;
  for (const auto& s : builtin_scenarios()) {
    EXPECT_NO_THROW(validate(s)) << s.name;
    names.insert(s.name);
  }
  EXPECT_TRUE(names.count("mbzirc-field"));
  EXPECT_TRUE(names.count("calm-dock"));
  EXPECT_TRUE(names.count("landing-stress"));
  EXPECT_EQ(names.size(), builtin_scenarios().size());
}

TEST(Builtins, CalmDockAndLandingStress) {
  const auto calm = builtin_scenario("calm-dock");
  EXPECT_EQ(calm.sea_state, 0);
  const Vec2 start(calm.carrier.start_x, calm.carrier.start_y);
  EXPECT_NEAR((Vec2(calm.target.x, calm.target.y) - start).norm(), 500.0, 1.0);
  const auto stress = builtin_scenario("landing-stress");
  EXPECT_EQ(stress.sea_state, 3);
  EXPECT_EQ(stress.mode, ScenarioMode::LandingOnly);
  EXPECT_THROW(builtin_scenario("no-such"), InvalidArgument);
}

TEST(RoundTrip, Builtins) {
  for (const auto& s : builtin_scenarios()) EXPECT_EQ(load_scenario(serialize(s)), s) << s.name;
}

TEST(RoundTrip, RandomValidScenarios) {
  RngStream rng(11);
  for (int k = 0; k < 300; ++k) {
    const auto s = random_scenario(rng, k);
    ASSERT_NO_THROW(validate(s)) << k;
    const auto text = serialize(s);
    EXPECT_EQ(load_scenario(text), s) << text;
    EXPECT_EQ(serialize(load_scenario(text)), text);
  }
}

TEST(Parse, DefaultsFromEmptyMapping) {
  const auto s = parse_scenario("{}");
  EXPECT_EQ(s, Scenario{});
}

TEST(Parse, UnknownKeysCarryPath) {
  EXPECT_EQ(path_of_parse_error("bogus: 1\n"), "/bogus");
  EXPECT_EQ(path_of_parse_error("target:\n  length_m: 5\n  speed: 2\n"), "/target/speed");
  EXPECT_EQ(path_of_parse_error("objects:\n  - id: 1\n  - id: 2\n    colour: red\n"), "/objects/1/colour");
  EXPECT_EQ(path_of_parse_error("sensors:\n  lidar_hz: 10\n"), "/sensors/lidar_hz");
}

TEST(Parse, SchemaViolations) {
  EXPECT_EQ(path_of_parse_error("sea_state: rough\n"), "/sea_state");
  EXPECT_EQ(path_of_parse_error("mode: sometimes\n"), "/mode");
  EXPECT_EQ(path_of_parse_error("distractors: 3\n"), "/distractors");
  EXPECT_EQ(path_of_parse_error("[1, 2]\n"), "/");
  EXPECT_EQ(path_of_parse_error("a: [1,\n"), "/");
}

TEST(Validation, TargetThreeTimesCarrier) {
  auto s = mbzirc_field();
  s.target.length = 3.0 * s.carrier.length;
  s.target.width = 3.0 * s.carrier.width;
  EXPECT_EQ(invariant_of(s), "target_size_bound");
  EXPECT_THROW(load_scenario(serialize(s)), ValidationError);
}

TEST(Validation, DuplicateObjectIds) {
  auto s = mbzirc_field();
  s.objects[1].id = s.objects[0].id;
  EXPECT_EQ(invariant_of(s), "object_ids_unique");
}

TEST(Validation, NamedInvariants) {
  auto s = mbzirc_field();
  s.target.x = s.area.x_max + 10.0;
  s.prior_x = s.target.x;
  EXPECT_EQ(invariant_of(s), "target_in_area");

  s = mbzirc_field();
  s.prior_x = s.target.x + 50.5;
  s.prior_y = s.target.y;
  EXPECT_EQ(invariant_of(s), "prior_accuracy");
  s.prior_x = s.target.x + 49.5;
  EXPECT_EQ(invariant_of(s), "<valid>");

  s = mbzirc_field();
  s.sea_state = 4;
  EXPECT_EQ(invariant_of(s), "sea_state_range");

  s = mbzirc_field();
  s.objects[0].deck_x = s.target.length;
  EXPECT_EQ(invariant_of(s), "object_on_deck");

  s = mbzirc_field();
  s.distractors[0].y = -1.0;
  EXPECT_EQ(invariant_of(s), "distractor_in_area");
}

TEST(Files, MissingFileIsParseError) {
  const auto p = std::filesystem::temp_directory_path() / "dc_missing_scenario.yaml";
  std::filesystem::remove(p);
  EXPECT_THROW(load_scenario_file(p.string()), ParseError);
}

TEST(Files, WrittenBuiltinLoadsBack) {
  const auto p = std::filesystem::temp_directory_path() / "dc_calm_dock.yaml";
  {
    std::ofstream os(p);
    os << serialize(calm_dock());
  }
  EXPECT_EQ(load_scenario_file(p.string()), calm_dock());
  std::filesystem::remove(p);
}

TEST(Files, BundledScenariosMatchBuiltins) {
  for (const auto& s : builtin_scenarios()) {
    const auto p = std::filesystem::path(DC_SCENARIO_DIR) / (s.name + ".yaml");
    ASSERT_TRUE(std::filesystem::exists(p)) << p;
    EXPECT_EQ(load_scenario_file(p.string()), s) << s.name;
    std::ifstream is(p);
    const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    EXPECT_EQ(text, serialize(s)) << s.name;
  }
}
