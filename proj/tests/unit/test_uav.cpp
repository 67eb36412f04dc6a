#include "drone_carrier/uav.hpp"

#include <gtest/gtest.h>

using namespace drone_carrier;

namespace {

struct StepStats {
  double overshoot = 0.0;
  double settle = -1.0;  // last time the error left the 2% band
};

StepStats step_response(double target, double horizon) {
  UavState s;
  s.position.z() = 10.0;
  PidMemory pid;
  const UavSetpoint sp{Vec3(target, 0.0, 10.0), 0.0, Vec3::Zero()};
  StepStats out;
  const double dt = 0.01;
  for (double t = 0.0; t < horizon; t += dt) {
    s = step_uav(s, pid, sp, Vec3::Zero(), dt);
    out.overshoot = std::max(out.overshoot, s.position.x() - target);
    if (std::abs(s.position.x() - target) > 0.02 * target) out.settle = t + dt;
  }
  return out;
}

// Stationary deck, perfect navigation: flies a full transport task.
struct MissionRun {
  UavMissionState ms;
  UavState s;
  double t = 0.0;
};

MissionRun fly_transport(std::uint64_t seed, const Vec3& object, double horizon) {
  MissionRun r;
  RngStream rng(seed), qr_rng = RngStream::derive(seed, "qr");
  PidMemory pid;
  const Pose3 pad{Vec3::Zero(), 0.0, 0.0, 0.0};
  CarrierCommand cmd;
  cmd.takeoff = true;
  cmd.search_region = DeckRect{object.head<2>() + Vec2(1.0, -0.5), 0.0, 8.0, 4.0};
  const double dt = 0.05;
  for (; r.t < horizon && r.ms.mode != UavMode::Landed && r.ms.mode != UavMode::Abort; r.t += dt) {
    UavObservation obs;
    obs.t = r.t;
    obs.nav_position = r.s.position;
    obs.nav_velocity = r.s.velocity;
    if (!r.s.carrying && r.ms.mode == UavMode::CoverageSearch) obs.detection = std::make_pair(7, object);
    obs.qr = qr_observe({r.s.position, r.s.yaw, 0.0, 0.0}, pad, {}, qr_rng);
    const UavSetpoint sp = uav_mission_step(r.ms, r.s, obs, cmd, rng);
    r.s = step_uav(r.s, pid, sp, Vec3::Zero(), dt);
    EXPECT_GE(r.s.position.z(), 0.0);
  }
  return r;
}

}  // namespace

TEST(UavFlight, EquilibriumHolds) {
  UavState s;
  s.position = {1.0, -2.0, 3.0};
  PidMemory pid;
  for (int i = 0; i < 1000; ++i) s = step_uav(s, pid, {s.position, 0.0, Vec3::Zero()}, Vec3::Zero(), 0.05);
  EXPECT_LT((s.position - Vec3(1.0, -2.0, 3.0)).norm(), 1e-9);
  EXPECT_LT(s.velocity.norm(), 1e-9);
}

TEST(UavFlight, FiveMetreStepResponse) {
  const auto r = step_response(5.0, 20.0);
  EXPECT_LT(r.overshoot, 0.15 * 5.0);
  EXPECT_GE(r.settle, 0.0);
  EXPECT_LT(r.settle, 8.0);
}

TEST(UavFlight, IntegralRemovesWindOffset) {
  UavState s;
  s.position = {0.0, 0.0, 5.0};
  PidMemory pid;
  const UavSetpoint sp{s.position, 0.0, Vec3::Zero()};
  const Vec3 wind(2.0, 0.0, 0.0);
  double peak = 0.0;
  for (double t = 0.0; t < 20.0; t += 0.01) {
    s = step_uav(s, pid, sp, wind, 0.01);
    peak = std::max(peak, (s.position - sp.position).norm());
  }
  EXPECT_GT(peak, 0.05);
  EXPECT_LT((s.position - sp.position).norm(), 0.02);
}

TEST(UavFlight, GroundClampAndDtRange) {
  UavState s;
  s.position = {0.0, 0.0, 0.01};
  s.velocity = {0.0, 0.0, -3.0};
  PidMemory pid;
  s = step_uav(s, pid, {Vec3(0, 0, -5), 0.0, Vec3::Zero()}, Vec3::Zero(), 0.1);
  EXPECT_EQ(s.position.z(), 0.0);
  EXPECT_GE(s.velocity.z(), 0.0);
  EXPECT_THROW(step_uav(s, pid, {}, Vec3::Zero(), 0.0), InvalidArgument);
  EXPECT_THROW(step_uav(s, pid, {}, Vec3::Zero(), 0.11), InvalidArgument);
}

TEST(UavMission, TakeoffTargetsP1) {
  UavMissionState ms;
  UavState s;
  s.position = {2.0, 1.0, 0.0};
  RngStream rng(1);
  CarrierCommand cmd;
  cmd.takeoff = true;
  UavObservation obs;
  obs.nav_position = s.position;
  const auto sp = uav_mission_step(ms, s, obs, cmd, rng);
  EXPECT_EQ(ms.mode, UavMode::Takeoff);
  EXPECT_TRUE(ms.keys.defined);
  EXPECT_LT((sp.position - Vec3(2.0, 1.0, 3.0)).norm(), 1e-12);
  EXPECT_LT((ms.keys.p1 - ms.keys.p0 - Vec3(0, 0, 3)).norm(), 1e-12);
}

TEST(UavMission, DetectionHoversAboveObject) {
  UavMissionState ms;
  ms.mode = UavMode::CoverageSearch;
  ms.waypoints = {{0, 0, 3.5}, {5, 0, 3.5}};
  UavState s;
  s.position = {10.0, 5.0, 3.5};
  RngStream rng(1);
  UavObservation obs;
  obs.nav_position = s.position;
  obs.detection = std::make_pair(3, Vec3(10.5, 5.5, 0.2));
  const auto sp = uav_mission_step(ms, s, obs, {}, rng);
  EXPECT_EQ(ms.mode, UavMode::HoverOverObject);
  EXPECT_EQ(ms.target_object, 3);
  EXPECT_LT((sp.position - Vec3(10.5, 5.5, 3.2)).norm(), 1e-12);
}

TEST(UavMission, QrGatesReturnTransit) {
  UavMissionState ms;
  ms.mode = UavMode::ReturnTransit;
  UavState s;
  s.position = {0.0, 0.0, 3.0};
  RngStream rng(1);
  UavObservation obs;
  obs.nav_position = s.position;
  uav_mission_step(ms, s, obs, {}, rng);
  EXPECT_EQ(ms.mode, UavMode::ReturnTransit);
  obs.qr.valid = true;
  obs.qr.relative = {1.0, 0.0, -3.0};
  uav_mission_step(ms, s, obs, {}, rng);
  EXPECT_EQ(ms.mode, UavMode::QrAcquire);
}

TEST(UavMission, QrNeverValidAbortsAfterTenSeconds) {
  UavMissionState ms;
  ms.mode = UavMode::QrAcquire;
  UavObservation obs;
  obs.nav_position = {0.0, 0.0, 4.0};
  double t = 0.0;
  for (; t < 20.0 && ms.mode != UavMode::Abort; t += 0.05) {
    obs.t = t;
    const auto sp = precision_land(ms, obs, 0.0);
    if (t > 1.0 && ms.mode != UavMode::Abort) {
      EXPECT_NEAR(sp.position.z(), 5.0, 1e-12);
    }
  }
  EXPECT_EQ(ms.mode, UavMode::Abort);
  EXPECT_NEAR(t, 10.0, 0.11);
}

TEST(UavMission, PrecisionLandRequiresLandingMode) {
  UavMissionState ms;
  EXPECT_THROW(precision_land(ms, {}, 0.0), ModeViolation);
}

TEST(UavMission, AbortFromAnyActiveMode) {
  for (int m = 0; m <= static_cast<int>(UavMode::PrecisionLand); ++m) {
    UavMissionState ms;
    ms.mode = static_cast<UavMode>(m);
    UavState s;
    s.position = {0, 0, 2};
    RngStream rng(2);
    UavObservation obs;
    obs.nav_position = s.position;
    obs.ekf_diverged = true;
    uav_mission_step(ms, s, obs, {}, rng);
    EXPECT_EQ(ms.mode, UavMode::Abort) << m;
  }
}

TEST(UavMission, FullTransportCycle) {
  const auto r = fly_transport(5, Vec3(12.0, 4.0, 0.3), 300.0);
  ASSERT_EQ(r.ms.mode, UavMode::Landed);
  ASSERT_TRUE(r.ms.touchdown_lateral_error.has_value());
  EXPECT_LE(*r.ms.touchdown_lateral_error, 0.2);
  EXPECT_FALSE(r.s.carrying.has_value());
  const std::vector<UavMode> expected = {UavMode::Idle,           UavMode::Takeoff,        UavMode::TransitToSearch,
                                         UavMode::CoverageSearch, UavMode::HoverOverObject, UavMode::Descend,
                                         UavMode::Grasp,          UavMode::Ascend,          UavMode::ReturnTransit,
                                         UavMode::QrAcquire,      UavMode::PrecisionLand,   UavMode::Landed};
  std::vector<UavMode> seen = {UavMode::Idle};
  for (const auto& [from, to] : r.ms.transitions) seen.push_back(to);
  EXPECT_EQ(seen, expected);
}

TEST(UavMission, CarryingSetOnlyByGrasp) {
  RngStream rng(3);
  UavMissionState ms;
  ms.mode = UavMode::Grasp;
  ms.target_object = 4;
  ms.keys.p3 = {1, 1, 0.5};
  ms.keys.p2 = {1, 1, 3.2};
  UavState s;
  s.position = ms.keys.p3;
  UavObservation obs;
  obs.nav_position = s.position;
  for (double t = 0.0; t < 5.0 && ms.mode == UavMode::Grasp; t += 0.05) {
    obs.t = t;
    uav_mission_step(ms, s, obs, {}, rng);
  }
  EXPECT_EQ(ms.mode, UavMode::Ascend);
  EXPECT_EQ(s.carrying, 4);
}

TEST(UavMission, RandomObservationStreamsStayOnGraph) {
  RngStream rng(99);
  for (int run = 0; run < 200; ++run) {
    UavMissionState ms;
    UavState s;
    s.position = {rng.uniform(-3, 3), rng.uniform(-3, 3), 0.0};
    std::optional<int> carrying_before;
    for (int k = 0; k < 400; ++k) {
      UavObservation obs;
      obs.t = 0.1 * k;
      obs.nav_position = s.position + rng.normal3(0.3);
      obs.nav_position.z() = std::max(0.0, obs.nav_position.z());
      obs.nav_velocity = rng.normal3(0.2);
      obs.ekf_diverged = rng.bernoulli(0.002);
      if (rng.bernoulli(0.2)) obs.detection = std::make_pair(1, Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), 0.2));
      if (rng.bernoulli(0.4)) {
        obs.qr.valid = true;
        obs.qr.relative = Vec3(rng.normal(0.3), rng.normal(0.3), -std::abs(rng.normal(2.0)));
      }
      CarrierCommand cmd;
      cmd.takeoff = rng.bernoulli(0.5);
      cmd.abort = rng.bernoulli(0.001);
      cmd.task = rng.bernoulli(0.3) ? UavTaskKind::Drag : UavTaskKind::Transport;
      if (rng.bernoulli(0.5)) cmd.search_region = DeckRect{{0, 0}, 0.0, 6.0, 4.0};
      if (rng.bernoulli(0.3)) cmd.drag_track = {{1, 0, 2}, {2, 0, 2}};
      const UavMode before = ms.mode;
      const std::size_t logged = ms.transitions.size();
      const auto sp = uav_mission_step(ms, s, obs, cmd, rng);
      UavMode chain = before;
      for (std::size_t i = logged; i < ms.transitions.size(); ++i) {
        EXPECT_EQ(ms.transitions[i].first, chain);
        EXPECT_TRUE(legal_transition(chain, ms.transitions[i].second));
        chain = ms.transitions[i].second;
      }
      EXPECT_EQ(chain, ms.mode);
      EXPECT_GE(sp.position.z(), 0.0);
      if (s.carrying != carrying_before) {
        EXPECT_TRUE(before == UavMode::Grasp || ms.mode == UavMode::Landed);
        carrying_before = s.carrying;
      }
      // Move the truth part of the way to the setpoint so the machine progresses.
      s.position += 0.5 * (sp.position - s.position);
    }
    for (const auto& [from, to] : ms.transitions) EXPECT_TRUE(legal_transition(from, to));
  }
}

TEST(UavMission, CoverageVisitsSpiralPrefix) {
  const DeckRect region{{20, 0}, 0.3, 8.0, 4.0};
  const auto spiral = spiral_coverage(region, 2.0);
  UavMissionState ms;
  UavState s;
  RngStream rng(8);
  CarrierCommand cmd;
  cmd.takeoff = true;
  cmd.search_region = region;
  std::vector<Vec2> visited;
  for (int k = 0; k < 2000 && ms.mode != UavMode::ReturnTransit; ++k) {
    UavObservation obs;
    obs.t = 0.05 * k;
    obs.nav_position = s.position;
    const std::size_t before = ms.next_waypoint;
    const auto sp = uav_mission_step(ms, s, obs, cmd, rng);
    if (ms.mode == UavMode::CoverageSearch || ms.mode == UavMode::ReturnTransit)
      for (std::size_t i = before; i < ms.next_waypoint; ++i) visited.push_back(ms.waypoints[i].head<2>());
    s.position = sp.position;
  }
  ASSERT_EQ(ms.mode, UavMode::ReturnTransit);
  ASSERT_LE(visited.size(), spiral.size());
  for (std::size_t i = 0; i < visited.size(); ++i) EXPECT_LT((visited[i] - spiral[i]).norm(), 1e-12);
}

TEST(DragPlan, ReachesDiscWithSeparation) {
  RectangleFit obj;
  obj.center = {6.0 + 1.5, 0.0};
  obj.length = 3.0;
  obj.width = 1.0;
  obj.long_axis = kPi / 2;
  const auto plan = cooperative_drag_plan(obj, 0.2, {0.0, 0.0}, 1.5, {Vec3(5, 5, 3), Vec3(5, -5, 3)});
  ASSERT_FALSE(plan.empty());
  ASSERT_EQ(plan.waypoints[0].size(), plan.waypoints[1].size());
  for (std::size_t k = 0; k < plan.waypoints[0].size(); ++k)
    EXPECT_GE((plan.waypoints[0][k] - plan.waypoints[1][k]).norm(), 2.0 - 1e-12);
  EXPECT_LE(plan.centroid_track.back().norm(), 1.5 - 0.2 + 1e-9);
  EXPECT_EQ(plan.end_of_uav[0], 0);  // uav 0 sits on the +y side, nearest the +long end
}

TEST(DragPlan, AssignmentMinimisesTransit) {
  RectangleFit obj;
  obj.center = {10.0, 0.0};
  obj.length = 4.0;
  obj.width = 1.0;
  obj.long_axis = 0.0;
  const auto a = cooperative_drag_plan(obj, 0.0, {0, 0}, 1.5, {Vec3(0, 0, 3), Vec3(20, 0, 3)});
  EXPECT_EQ(a.end_of_uav, (std::array<int, 2>{1, 0}));
  // Equal totals: lower index takes its nearer end.
  const auto b = cooperative_drag_plan(obj, 0.0, {0, 0}, 1.5, {Vec3(13, 0, 3), Vec3(17, 0, 3)});
  EXPECT_EQ(b.end_of_uav, (std::array<int, 2>{0, 1}));
  const auto c = cooperative_drag_plan(obj, 0.0, {0, 0}, 1.5, {Vec3(7, 0, 3), Vec3(3, 0, 3)});
  EXPECT_EQ(c.end_of_uav, (std::array<int, 2>{1, 0}));
}

TEST(DragPlan, InsideReachIsEmpty) {
  RectangleFit obj;
  obj.center = {0.5, 0.5};
  obj.length = 2.0;
  obj.width = 1.0;
  EXPECT_TRUE(cooperative_drag_plan(obj, 0.0, {0, 0}, 1.5, {Vec3(0, 0, 3), Vec3(1, 0, 3)}).empty());
}
