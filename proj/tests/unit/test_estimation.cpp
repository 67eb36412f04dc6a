#include "drone_carrier/estimation.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace drone_carrier;

namespace {

GimbalCamera tower() {
  GimbalCamera c;
  c.height = 80.0;
  c.sigma = deg2rad(0.5);
  return c;
}

GimbalMeasurement exact_bearing(const GimbalCamera& cam, const Vec2& p, double t) {
  const auto [theta, phi] = gimbal_angles(cam, Vec3(p.x(), p.y(), 0.0));
  return {theta, phi, t};
}

std::vector<UwbRange> exact_ranges(const UwbAnchorSet& set, const Vec3& tag) {
  std::vector<UwbRange> out;
  for (std::size_t i = 0; i < set.anchors.size(); ++i)
    out.push_back({static_cast<int>(i), (tag - set.anchors[i]).norm()});
  return out;
}

}  // namespace

TEST(TargetEkf, PredictZeroDtIsIdentity) {
  EstimatorState s = make_target_state({10.0, -4.0}, 5.0, 0.5, 3.0);
  s.mean[2] = 1.0;
  const auto p = target_ekf_predict(s, 0.0, 1e-3);
  EXPECT_EQ(p.mean, s.mean);
  EXPECT_EQ(p.covariance, s.covariance);
  EXPECT_EQ(p.timestamp, s.timestamp);
}

TEST(TargetEkf, PredictStationaryInflatesCovariance) {
  const EstimatorState s = make_target_state({10.0, -4.0}, 5.0, 0.5);
  const auto p = target_ekf_predict(s, 2.0, 1e-3);
  EXPECT_NEAR(p.mean[0], 10.0, 1e-12);
  EXPECT_NEAR(p.mean[1], -4.0, 1e-12);
  EXPECT_GT(p.covariance.trace(), s.covariance.trace());
}

TEST(TargetEkf, PredictLinearPropagation) {
  EstimatorState s = make_target_state({0.0, 0.0}, 1.0, 1.0);
  s.mean[2] = 2.0;
  const auto p = target_ekf_predict(s, 1.0, 1e-4);
  EXPECT_NEAR(p.mean[0], 2.0, 1e-12);
  EXPECT_NEAR(p.mean[1], 0.0, 1e-12);
  EXPECT_NEAR(p.timestamp, 1.0, 1e-12);
}

TEST(TargetEkf, NegativeDtRejected) {
  EXPECT_THROW(target_ekf_predict(make_target_state({0, 0}, 1, 1), -0.1, 1e-4), InvalidArgument);
}

TEST(TargetEkf, NoiseFreeBearingsConverge) {
  const GimbalCamera cam = tower();
  const Vec2 truth(120.0, 220.0);
  TargetEkf ekf(make_target_state(truth + Vec2(10.0, -12.0), 50.0, 0.2), 1e-4);
  for (int k = 1; k <= 50; ++k) EXPECT_TRUE(ekf.update(exact_bearing(cam, truth, 0.1 * k), cam));
  EXPECT_LT((ekf.position() - truth).norm(), 0.1);
  EXPECT_EQ(ekf.rejected(), 0);
}

TEST(TargetEkf, MeasurementAtPredictionShrinksCovariance) {
  const GimbalCamera cam = tower();
  const EstimatorState s = make_target_state({200.0, 500.0}, 20.0, 0.5);
  const auto r = target_ekf_update_bearing(s, exact_bearing(cam, s.mean.head<2>(), 0.0), cam);
  ASSERT_TRUE(r.accepted);
  EXPECT_LT((r.state.mean - s.mean).norm(), 1e-9);
  EXPECT_LT(r.state.covariance.trace(), s.covariance.trace());
  EXPECT_TRUE(r.state.covariance_ok());
}

TEST(TargetEkf, WildOutlierRejected) {
  const GimbalCamera cam = tower();
  TargetEkf ekf(make_target_state({200.0, 500.0}, 2.0, 0.1), 1e-4);
  ASSERT_TRUE(ekf.update(exact_bearing(cam, {200.0, 500.0}, 0.0), cam));
  const EstimatorState before = ekf.state();
  GimbalMeasurement m = exact_bearing(cam, {200.0, 500.0}, 0.0);
  m.theta += 20.0 * cam.sigma;
  EXPECT_FALSE(ekf.update(m, cam));
  EXPECT_EQ(ekf.state().mean, before.mean);
  EXPECT_EQ(ekf.state().covariance, before.covariance);
  EXPECT_EQ(ekf.rejected(), 1);
}

TEST(TargetEkf, BelowHorizonGateThrows) {
  const GimbalCamera cam = tower();
  EXPECT_THROW(target_ekf_update_bearing(make_target_state({0, 100}, 1, 1), {0.0, 0.0, 0.0}, cam), GeometryError);
}

TEST(TargetEkf, TraceMonotoneUnderPredictAndUpdate) {
  const GimbalCamera cam = tower();
  RngStream rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec2 truth(rng.uniform(-800, 800), rng.uniform(100, 900));
    EstimatorState s = make_target_state(truth + Vec2(rng.normal(10), rng.normal(10)), 15.0, 0.3);
    for (int k = 0; k < 10; ++k) {
      const auto p = target_ekf_predict(s, 0.5, 1e-3);
      EXPECT_GE(p.covariance.trace(), s.covariance.trace());
      EXPECT_TRUE(p.covariance_ok());
      auto m = gimbal_observe(cam, Vec3(truth.x(), truth.y(), 0.0), rng);
      if (!m) {
        s = p;
        continue;
      }
      const auto u = target_ekf_update_bearing(p, *m, cam);
      EXPECT_LE(u.state.covariance.trace(), p.covariance.trace() + 1e-12);
      EXPECT_TRUE(u.state.covariance_ok());
      s = u.state;
    }
  }
}

TEST(Trilateration, CentroidExact) {
  const auto set = UwbAnchorSet::deck_default();
  Vec3 c = Vec3::Zero();
  for (const auto& a : set.anchors) c += a;
  c /= static_cast<double>(set.anchors.size());
  const auto r = trilaterate(set, exact_ranges(set, c));
  EXPECT_LT((r.position - c).norm(), 1e-9);
  EXPECT_LE(r.iterations, 10);
}

TEST(Trilateration, RandomTagsExact) {
  const auto set = UwbAnchorSet::deck_default();
  RngStream rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 tag(rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(0, 8));
    const auto r = trilaterate(set, exact_ranges(set, tag));
    EXPECT_LT((r.position - tag).norm(), 1e-6) << tag.transpose();
    EXPECT_LT(r.residual_rms, 1e-6);
  }
}

TEST(Trilateration, TranslationEquivariant) {
  const auto base = UwbAnchorSet::deck_default();
  RngStream rng(8);
  for (int i = 0; i < 200; ++i) {
    const Vec3 tag(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(0.5, 5));
    const Vec3 shift(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-5, 5));
    UwbAnchorSet moved = base;
    for (auto& a : moved.anchors) a += shift;
    const Vec3 p0 = trilaterate(base, exact_ranges(base, tag)).position;
    const Vec3 p1 = trilaterate(moved, exact_ranges(moved, tag + shift)).position;
    EXPECT_LT((p1 - (p0 + shift)).norm(), 1e-9);
  }
}

TEST(Trilateration, NoisyRangesRmse) {
  const auto set = UwbAnchorSet::deck_default();
  RngStream rng(21);
  double sq = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Vec3 tag(rng.uniform(-3, 3), rng.uniform(-2, 2), rng.uniform(0.5, 6));
    const auto r = trilaterate(set, uwb_ranges(set, tag, rng));
    sq += (r.position - tag).squaredNorm();
  }
  EXPECT_LE(std::sqrt(sq / n), 0.15);
}

TEST(Trilateration, Errors) {
  const auto set = UwbAnchorSet::deck_default();
  auto r = exact_ranges(set, {0, 0, 1});
  r.resize(3);
  EXPECT_THROW(trilaterate(set, r), InsufficientData);
  UwbAnchorSet flat;
  flat.anchors = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 3, 0}};
  EXPECT_THROW(trilaterate(flat, exact_ranges(flat, {0.3, 0.3, 1.0})), GeometryError);
}

TEST(UavEkf, NoiseFreeFixesTrackTruth) {
  EstimatorState s = make_uav_state({0, 0, 2}, 0.01);
  const double dt = 0.02;
  const Vec3 acc(0.5, -0.2, 0.1);
  Vec3 p(0, 0, 2), v = Vec3::Zero();
  for (int k = 0; k < 500; ++k) {
    p += v * dt + 0.5 * acc * dt * dt;
    v += acc * dt;
    auto r = uav_ekf_fuse(s, {acc, 0.0}, p, dt, {}, 1e-9);
    ASSERT_TRUE(r.fix_accepted);
    s = r.state;
    EXPECT_LT((s.mean.head<3>() - p).norm(), 1e-6);
  }
}

TEST(UavEkf, DropoutExtrapolatesConstantVelocity) {
  const double dt = 0.02;
  const Vec3 vel(1.5, -0.5, 0.2);
  Vec3 p(0, 0, 3);
  EstimatorState s = make_uav_state(p, 0.1);
  RngStream rng(5);
  UavEkfConfig cfg;
  for (int k = 0; k < 500; ++k) {
    p += vel * dt;
    s = uav_ekf_fuse(s, {imu_accel_observe(Vec3::Zero(), 0.0, 0.05, rng), 0.0}, Vec3(p + rng.normal3(0.12)), dt, cfg)
            .state;
  }
  const double start_err = (s.mean.head<3>() - p).norm();
  for (int k = 0; k < 50; ++k) {
    p += vel * dt;
    s = uav_ekf_fuse(s, {imu_accel_observe(Vec3::Zero(), 0.0, 0.05, rng), 0.0}, std::nullopt, dt, cfg).state;
  }
  // Dead-reckoning bound: start error plus 3 sigma of the velocity estimate over 1 s.
  const double vel_sigma = std::sqrt(s.covariance.block<3, 3>(3, 3).trace());
  EXPECT_LT((s.mean.head<3>() - p).norm(), start_err + 3.0 * vel_sigma * 1.0 + 0.05);
}

TEST(UavEkf, BiasedYawDriftsWithoutFixes) {
  const double dt = 0.02, w = 0.4, rad = 4.0;
  auto truth = [&](double t) { return Vec3(rad * std::cos(w * t), rad * std::sin(w * t), 3.0); };
  auto accel = [&](double t) { return Vec3(-w * w * rad * std::cos(w * t), -w * w * rad * std::sin(w * t), 0.0); };
  EstimatorState open = make_uav_state(truth(0), 0.01), closed = open;
  open.mean.segment<3>(3) = closed.mean.segment<3>(3) = Vec3(0.0, rad * w, 0.0);
  RngStream rng(9);
  std::vector<double> open_err, closed_err;
  for (int k = 1; k <= 1500; ++k) {
    const double t = k * dt;
    const UavImuInput imu{accel(t), 0.08};  // constant yaw bias, true yaw 0
    open = uav_ekf_fuse(open, imu, std::nullopt, dt).state;
    closed = uav_ekf_fuse(closed, imu, Vec3(truth(t) + rng.normal3(0.12)), dt).state;
    open_err.push_back((open.mean.head<3>() - truth(t)).norm());
    closed_err.push_back((closed.mean.head<3>() - truth(t)).norm());
  }
  EXPECT_GT(open_err.back(), open_err[250]);
  EXPECT_GT(open_err.back(), 1.0);
  EXPECT_LT(*std::max_element(closed_err.begin() + 250, closed_err.end()), 0.5);
}

TEST(UavEkf, SmootherThanRawTrilateration) {
  const auto set = UwbAnchorSet::deck_default();
  const double dt = 0.05;
  RngStream rng(13);
  auto truth = [](double t) { return Vec3(2.0 * std::sin(0.3 * t), 1.5 * std::cos(0.2 * t), 2.0 + 0.5 * std::sin(0.1 * t)); };
  auto accel = [](double t) {
    return Vec3(-0.18 * std::sin(0.3 * t), -0.06 * std::cos(0.2 * t), -0.005 * std::sin(0.1 * t));
  };
  EstimatorState s = make_uav_state(truth(0), 0.2);
  s.mean.segment<3>(3) = Vec3(0.6, 0.0, 0.05);
  std::vector<Vec3> raw, fused;
  for (int k = 1; k <= 1200; ++k) {
    const double t = k * dt;
    const Vec3 fix = trilaterate(set, uwb_ranges(set, truth(t), rng)).position;
    s = uav_ekf_fuse(s, {imu_accel_observe(accel(t), 0.0, 0.05, rng), 0.0}, fix, dt).state;
    raw.push_back(fix);
    fused.push_back(s.mean.head<3>());
  }
  auto increment_var = [](const std::vector<Vec3>& p) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 1; i < p.size(); ++i) {
      const double d = (p[i] - p[i - 1]).norm();
      sum += d, sq += d * d;
    }
    const double n = static_cast<double>(p.size() - 1);
    return sq / n - (sum / n) * (sum / n);
  };
  EXPECT_LT(increment_var(fused), increment_var(raw));
}

TEST(UavEkf, DivergenceFlagAndDtCheck) {
  const EstimatorState s = make_uav_state({0, 0, 0}, 0.1);
  UavEkfConfig cfg;
  cfg.divergence_trace = 0.01;
  EXPECT_TRUE(uav_ekf_fuse(s, {}, std::nullopt, 0.1, cfg).diverged);
  EXPECT_FALSE(uav_ekf_fuse(s, {}, std::nullopt, 0.1).diverged);
  EXPECT_THROW(uav_ekf_fuse(s, {}, std::nullopt, 0.0), InvalidArgument);
}

TEST(RobustFilter, IdenticalPoints) {
  const Vec3 p(1.5, -2.0, 0.25);
  EXPECT_EQ(robust_position_filter({p, p, p, p}), p);
}

TEST(RobustFilter, SingleOutlierRemoved) {
  std::vector<Vec3> w(9, Vec3::Zero());
  w.push_back({100.0, 0.0, 0.0});
  EXPECT_LT(robust_position_filter(w).norm(), 1e-9);
}

TEST(RobustFilter, GaussianCloudMonteCarlo) {
  int good = 0;
  for (int seed = 0; seed < 200; ++seed) {
    RngStream rng(static_cast<std::uint64_t>(seed));
    const Vec3 truth(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 3));
    std::vector<Vec3> w;
    for (int i = 0; i < 100; ++i) w.push_back(truth + rng.normal3(0.1));
    good += (robust_position_filter(w) - truth).norm() <= 0.05;
  }
  EXPECT_GE(good, 190);
}

TEST(RobustFilter, PermutationInvariant) {
  RngStream rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> w;
    for (int i = 0; i < 12; ++i) w.push_back(rng.normal3(0.2));
    w.push_back({rng.uniform(5, 20), 0.0, 0.0});
    const Vec3 a = robust_position_filter(w);
    std::reverse(w.begin(), w.end());
    std::rotate(w.begin(), w.begin() + 5, w.end());
    EXPECT_LT((robust_position_filter(w) - a).norm(), 1e-12);
  }
}

TEST(RobustFilter, EmptyWindowThrows) { EXPECT_THROW(robust_position_filter({}), InsufficientData); }

TEST(VelocityKf, Stationary) {
  std::vector<TimedPosition> h;
  for (int i = 0; i < 20; ++i) h.push_back({0.1 * i, {3.0, 4.0, 0.0}});
  EXPECT_LT(estimate_velocity(h).velocity.norm(), 1e-9);
}

TEST(VelocityKf, ExactLinear) {
  std::vector<TimedPosition> h;
  for (int i = 0; i < 10; ++i) h.push_back({double(i), {2.0 * i, 0.0, 0.0}});
  const auto v = estimate_velocity(h);
  EXPECT_LT((v.velocity - Vec3(2.0, 0.0, 0.0)).norm(), 1e-6);
  EXPECT_GE(v.covariance.eigenvalues().real().minCoeff(), 0.0);
}

TEST(VelocityKf, NoisyLinearMonteCarlo) {
  int good = 0;
  for (int seed = 0; seed < 200; ++seed) {
    RngStream rng(static_cast<std::uint64_t>(seed) + 100);
    const Vec3 vel(rng.uniform(-2, 2), rng.uniform(-2, 2), 0.0);
    std::vector<TimedPosition> h;
    for (int i = 0; i < 40; ++i) h.push_back({0.1 * i, Vec3(vel * 0.1 * i + rng.normal3(0.05))});
    good += (estimate_velocity(h).velocity - vel).norm() <= 0.05;
  }
  EXPECT_GE(good, 190);
}

TEST(VelocityKf, Errors) {
  EXPECT_THROW(estimate_velocity({{0.0, Vec3::Zero()}}), InsufficientData);
  EXPECT_THROW(estimate_velocity({{0.0, Vec3::Zero()}, {1.0, Vec3::Zero()}, {1.0, Vec3::Zero()}}), InvalidArgument);
}
