#include "drone_carrier/manipulator.hpp"

#include <gtest/gtest.h>

using namespace drone_carrier;

namespace {

ManipulatorModel quiet() {
  ManipulatorModel m;
  m.scan_sigma = 0.0;
  return m;
}

// Point ahead of the arm camera at range r, in DC frame.
Vec3 ahead(const ManipulatorModel& m, double r, double z = 0.5) {
  return transform_point(m.ma_to_dc(), Vec3(r, 0.0, z - m.base.position.z()));
}

ObjectEstimate at_dc(const Vec3& p, double mass) {
  ObjectEstimate e;
  e.position = p;
  e.frame = {FrameKind::DroneCarrier, 0};
  e.mass = mass;
  return e;
}

}  // namespace

TEST(Manipulator, ValidateRejectsBadLimits) {
  ManipulatorModel m;
  EXPECT_NO_THROW(m.validate());
  m.reach = 0.0;
  EXPECT_THROW(m.validate(), ConfigError);
  m = ManipulatorModel{};
  m.payload_limit = -1.0;
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Manipulator, ClassificationThresholds) {
  EXPECT_EQ(classify_object(1.0, 0.5, 0.4), ObjectClass::Small);
  EXPECT_EQ(classify_object(2.0, 0.5, 0.4), ObjectClass::Large);
  EXPECT_EQ(classify_object(1.0, 1.6, 0.4), ObjectClass::Large);
}

TEST(Scan, OutOfRangeAbsent) {
  const auto m = quiet();
  RngStream rng(1);
  const std::vector<ObjectTruth> objs = {{1, ahead(m, 12.0)}, {2, ahead(m, 4.0)}};
  const auto est = scan_for_objects(m, objs, rng);
  ASSERT_EQ(est.size(), 1u);
  EXPECT_EQ(est[0].id, 2);
}

TEST(Scan, OutsideFieldOfViewAbsent) {
  const auto m = quiet();
  RngStream rng(1);
  const Vec3 behind = transform_point(m.ma_to_dc(), Vec3(-3.0, 0.0, 0.0));
  EXPECT_TRUE(scan_for_objects(m, {{1, behind}}, rng).empty());
}

TEST(Scan, NoiseFreeExactInArmFrame) {
  const auto m = quiet();
  RngStream rng(1);
  const Vec3 p_ma(3.0, 1.0, -0.4);
  const auto est = scan_for_objects(m, {{5, transform_point(m.ma_to_dc(), p_ma), 0.0, 0.8, 0.5, 0.4}}, rng);
  ASSERT_EQ(est.size(), 1u);
  EXPECT_LT((est[0].position - p_ma).norm(), 1e-12);
  EXPECT_EQ(est[0].frame.kind, FrameKind::Manipulator);
  EXPECT_EQ(est[0].classification, ObjectClass::Small);
}

TEST(Scan, MeanOfNoisyScansConverges) {
  const ManipulatorModel m;
  RngStream rng(2);
  const Vec3 truth = ahead(m, 5.0);
  const Vec3 truth_ma = transform_point(inverse(m.ma_to_dc()), truth);
  Vec3 sum = Vec3::Zero();
  int inside = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const auto est = scan_for_objects(m, {{1, truth}}, rng);
    ASSERT_EQ(est.size(), 1u);
    sum += est[0].position;
    const Vec3 back = object_to_dc_frame(est[0].position, m.ma_to_dc());
    inside += ((back - truth).cwiseAbs().array() <= 3.0 * m.scan_sigma).all();
  }
  EXPECT_LT((sum / n - truth_ma).norm(), 0.01);
  EXPECT_GE(inside, 990);
}

TEST(FrameConversion, IdentityOriginAndRoundTrip) {
  const Vec3 p(0.3, -2.0, 1.1);
  EXPECT_LT((object_to_dc_frame(p, Transform{}) - p).norm(), 1e-15);
  const ManipulatorModel m;
  EXPECT_LT((object_to_dc_frame(Vec3::Zero(), m.ma_to_dc()) - m.base.position).norm(), 1e-15);
  RngStream rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Pose3 base{rng.normal3(3.0), rng.uniform(-kPi, kPi), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    const Transform t = transform_from_pose(base);
    const Vec3 q = rng.normal3(5.0);
    EXPECT_LT((transform_point(inverse(t), object_to_dc_frame(q, t)) - q).norm(), 1e-12);
  }
}

TEST(FrameConversion, InvalidTransformRejected) {
  Transform bad;
  bad.rotation(0, 0) = 2.0;
  EXPECT_THROW(object_to_dc_frame(Vec3::Zero(), bad), InvalidArgument);
}

TEST(Grasp, BoundaryInsideReach) {
  const ManipulatorModel m;
  const Vec3 p = m.base.position + Vec3(m.reach - 0.01, 0.0, 0.0);
  const auto g = attempt_grasp(m, at_dc(p, 5.0));
  EXPECT_EQ(g.result, GraspResult::Grasped);
  ASSERT_TRUE(g.stowed_at.has_value());
  EXPECT_EQ(*g.stowed_at, m.stowage[0]);
}

TEST(Grasp, OverPayload) {
  const ManipulatorModel m;
  EXPECT_EQ(attempt_grasp(m, at_dc(m.base.position + Vec3(0.5, 0, 0), 12.0)).result, GraspResult::OverPayload);
}

TEST(Grasp, OutOfReach) {
  const ManipulatorModel m;
  const auto g = attempt_grasp(m, at_dc(m.base.position + Vec3(0, m.reach + 0.5, 0), 2.0));
  EXPECT_EQ(g.result, GraspResult::OutOfReach);
  EXPECT_FALSE(g.stowed_at.has_value());
}

TEST(Grasp, ArmFrameEstimateConverted) {
  const ManipulatorModel m;
  ObjectEstimate e;
  e.position = {1.2, 0.0, 0.0};
  e.mass = 3.0;
  EXPECT_EQ(attempt_grasp(m, e, 1).result, GraspResult::Grasped);
  e.position = {2.0, 0.0, 0.0};
  EXPECT_EQ(attempt_grasp(m, e).result, GraspResult::OutOfReach);
}

TEST(Grasp, PureFunctionOfDistanceAndMass) {
  const ManipulatorModel m;
  RngStream rng(4);
  std::vector<ObjectEstimate> objs;
  for (int i = 0; i < 200; ++i) objs.push_back(at_dc(m.base.position + rng.normal3(1.0), rng.uniform(0.0, 15.0)));
  std::vector<GraspResult> first;
  for (const auto& o : objs) first.push_back(attempt_grasp(m, o).result);
  for (std::size_t i = objs.size(); i-- > 0;) {
    const auto& o = objs[i];
    const double d = (o.position - m.base.position).norm();
    const GraspResult want =
        o.mass > m.payload_limit ? GraspResult::OverPayload : d > m.reach ? GraspResult::OutOfReach : GraspResult::Grasped;
    EXPECT_EQ(attempt_grasp(m, o).result, want);
    EXPECT_EQ(first[i], want);
  }
  EXPECT_STREQ(to_string(GraspResult::OutOfReach), "out_of_reach");
}
