#include <gtest/gtest.h>

#include <set>

#include "asyncbev/syncbuild.hpp"
#include "support.hpp"

using namespace asyncbev;

namespace {

Recording default_recording(double seconds = 20.0) {
  ScenarioParams p;
  p.duration_s = seconds;
  const Scenario s = generate_scenario(p);
  const SensorConfig cfg;
  return {s, cfg, record_scenario(s, cfg, p.seed)};
}

std::vector<RadarPoint> random_radar(Rng& rng, std::size_t n) {
  std::vector<RadarPoint> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({asyncbev::testing::random_point(rng, 80.0), {rng.uniform(-20, 20), rng.uniform(-20, 20)}});
  return out;
}

}  // namespace

TEST(Compensate, ZeroIntervalUnchanged) {
  const std::vector<RadarPoint> pts{{{10, 5, 0}, {2, -1}}, {{-3, 1, 0.5}, {0, 7}}};
  EXPECT_EQ(compensate_radar(pts, Timestamp(400), Timestamp(400)), pts);
}

TEST(Compensate, HandEvaluatedExample) {
  const std::vector<RadarPoint> pts{{{10, 5, 0}, {2, -1}}};
  const auto out = compensate_radar(pts, Timestamp(1'000'000), Timestamp(1'500'000));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].position, (Point3{11, 4.5, 0}));
  EXPECT_EQ(out[0].velocity, (Vec2{2, -1}));
}

TEST(Compensate, ZeroVelocityUnchangedForAnyInterval) {
  const std::vector<RadarPoint> pts{{{10, 5, 0.5}, {0, 0}}, {{-1, -2, 0.5}, {0, 0}}};
  for (std::int64_t dt : {1, 70'000, 570'000, 10'000'000}) EXPECT_EQ(compensate_radar(pts, Timestamp(0), Timestamp(dt)), pts);
}

TEST(Compensate, ZAndOrderAndVelocityPreserved) {
  Rng rng(31);
  const auto pts = random_radar(rng, 50);
  const auto out = compensate_radar(pts, Timestamp(100), Timestamp(290'100));
  ASSERT_EQ(out.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(out[i].position.z, pts[i].position.z);
    EXPECT_EQ(out[i].velocity, pts[i].velocity);
    EXPECT_EQ(out[i].position.x, pts[i].position.x + pts[i].velocity.x * 0.29);
  }
}

TEST(Compensate, CameraBeforeRadarIsPreconditionError) {
  const std::vector<RadarPoint> pts{{{1, 1, 0}, {1, 1}}};
  EXPECT_THROW(compensate_radar(pts, Timestamp(10), Timestamp(9)), PreconditionError);
}

// Floating-point addition is not associative, so chained compensation is
// compared to 1e-12 m rather than bit for bit.
TEST(CompensateProperty, Linearity) {
  Rng rng(32);
  for (int c = 0; c < 500; ++c) {
    SCOPED_TRACE(c);
    const auto pts = random_radar(rng, 10);
    const std::int64_t t0 = static_cast<std::int64_t>(rng.next_u64() % 1'000'000);
    const std::int64_t t1 = t0 + static_cast<std::int64_t>(rng.next_u64() % 600'000);
    const std::int64_t t2 = t1 + static_cast<std::int64_t>(rng.next_u64() % 600'000);
    const auto chained = compensate_radar(compensate_radar(pts, Timestamp(t0), Timestamp(t1)), Timestamp(t1), Timestamp(t2));
    const auto direct = compensate_radar(pts, Timestamp(t0), Timestamp(t2));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      EXPECT_NEAR(chained[i].position.x, direct[i].position.x, 1e-12);
      EXPECT_NEAR(chained[i].position.y, direct[i].position.y, 1e-12);
      EXPECT_EQ(chained[i].position.z, direct[i].position.z);
      EXPECT_EQ(chained[i].velocity, direct[i].velocity);
    }
  }
}

TEST(CompensateProperty, OrderOfOperations) {
  Rng rng(33);
  for (int c = 0; c < 500; ++c) {
    SCOPED_TRACE(c);
    const Pose src = asyncbev::testing::random_planar_pose(rng), dst = asyncbev::testing::random_planar_pose(rng);
    const auto pts = random_radar(rng, 10);
    const Timestamp t_radar(1'000'000), t_cam(1'000'000 + static_cast<std::int64_t>(rng.next_u64() % 600'000));
    const auto a = compensate_radar(retarget_radar(pts, src, dst), t_radar, t_cam);
    const auto b = retarget_radar(compensate_radar(pts, t_radar, t_cam), src, dst);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      EXPECT_LE(distance(a[i].position, b[i].position), 1e-9);
      EXPECT_NEAR(a[i].velocity.x, b[i].velocity.x, 1e-12);
      EXPECT_NEAR(a[i].velocity.y, b[i].velocity.y, 1e-12);
    }
  }
}

TEST(Retarget, StaticEgoLeavesPointsUnchanged) {
  const std::vector<RadarPoint> pts{{{12.25, -3.5, 0.5}, {4, 1}}};
  EXPECT_EQ(retarget_radar(pts, Pose::identity(), Pose::identity()), pts);
  const Pose ego = Pose::planar(105.3, -2.2, 0.17);
  const auto out = retarget_radar(pts, ego, ego);
  EXPECT_LE(distance(out[0].position, pts[0].position), 1e-12);
}

TEST(Retarget, VelocityRotatesWithFrame) {
  const std::vector<RadarPoint> pts{{{0, 0, 0}, {1, 0}}};
  // Reference frame yawed +90 degrees relative to the source frame.
  const auto out = retarget_radar(pts, Pose::identity(), Pose::rot_z(std::numbers::pi / 2));
  EXPECT_NEAR(out[0].velocity.x, 0.0, 1e-15);
  EXPECT_NEAR(out[0].velocity.y, -1.0, 1e-15);
}

TEST(LatencyConfig, Validation) {
  EXPECT_THROW((LatencyConfig{Modality::Lidar, 0, true}).validate(), ConfigError);
  EXPECT_THROW((LatencyConfig{Modality::Radar, -1, false}).validate(), ConfigError);
  EXPECT_NO_THROW((LatencyConfig{Modality::Radar, 570'000, true}).validate());
}

TEST(BuildVariant, DropsFirstTwoKeyframes) {
  const Recording rec = default_recording();
  const auto keys = keyframe_triggers(rec);
  ASSERT_EQ(keys.size(), 40u);
  for (auto m : {Modality::Radar, Modality::Lidar}) {
    const auto v = build_variant(rec, {m, 0, false});
    EXPECT_EQ(v.frames.size(), 38u);
    EXPECT_TRUE(v.warnings.empty());
    EXPECT_EQ(v.frames.front().keyframe_index, 2u);
    EXPECT_EQ(v.frames.front().t_cam, keys[2]->timestamp);
  }
}

TEST(BuildVariant, LidarSyncLatencyIsTheCameraOffset) {
  const Recording rec = default_recording();
  const auto v = build_variant(rec, {Modality::Lidar, 0, false});
  for (const auto& f : v.frames) EXPECT_EQ(f.achieved_latency.count(), rec.sensors.cam_front_offset_us);
}

TEST(BuildVariant, RadarSyncLatencyIsSporadic) {
  const Recording rec = default_recording();
  const auto v = build_variant(rec, {Modality::Radar, 0, false});
  std::set<std::int64_t> seen;
  const double max_gap = 1e6 / rec.sensors.radar_rate + 2.0 * static_cast<double>(rec.sensors.radar_phase_jitter_us);
  for (const auto& f : v.frames) {
    EXPECT_GE(f.achieved_latency.count(), 0);
    EXPECT_LE(static_cast<double>(f.achieved_latency.count()), max_gap);
    seen.insert(f.achieved_latency.count());
  }
  EXPECT_GT(seen.size(), 20u);
}

TEST(BuildVariant, SelectsLatestSweepOldEnough) {
  const Recording rec = default_recording(6.0);
  for (auto m : {Modality::Radar, Modality::Lidar})
    for (std::int64_t target : {0, 50'000, 70'000, 220'000, 550'000, 570'000}) {
      const auto v = build_variant(rec, {m, target, false});
      for (const auto& f : v.frames) {
        std::optional<Timestamp> best;
        for (const auto& r : rec.records)
          if (r.sensor == sensor_of(m) && r.timestamp.micros() <= f.t_cam.micros() - target) best = r.timestamp;
        ASSERT_TRUE(best);
        EXPECT_EQ(f.source_time, *best);
        EXPECT_GE(f.achieved_latency.count(), target);
        EXPECT_EQ(f.achieved_latency, f.t_cam - f.source_time);
      }
    }
}

TEST(BuildVariant, KeyframesWithoutOldEnoughSweepAreDroppedWithWarning) {
  const Recording rec = default_recording(6.0);
  const auto keys = keyframe_triggers(rec);
  const auto v = build_variant(rec, {Modality::Radar, 1'100'000, false});
  // Keyframe 2 (t=1.01 s) has no radar sweep at or before -0.09 s.
  EXPECT_EQ(v.warnings.size(), 1u);
  EXPECT_NE(v.warnings[0].find("dropped"), std::string::npos);
  EXPECT_EQ(v.frames.size(), keys.size() - 2 - v.warnings.size());
}

TEST(BuildVariant, NeedsThreeKeyframes) {
  Recording rec = default_recording(1.0);
  EXPECT_THROW(build_variant(rec, {Modality::Radar, 0, false}), PreconditionError);
}

TEST(BuildVariant, PointsAreInTheReferenceFrame) {
  const Recording rec = default_recording(6.0);
  const auto v = build_variant(rec, {Modality::Lidar, 300'000, false});
  for (const auto& f : v.frames) {
    const CaptureRecord* src = nullptr;
    for (const auto& r : rec.records)
      if (r.sensor == SensorKind::Lidar && r.timestamp == f.source_time) src = &r;
    ASSERT_NE(src, nullptr);
    ASSERT_EQ(src->lidar_points.size(), f.lidar.size());
    EXPECT_EQ(f.reference, ego_pose_at(rec.scenario, f.t_cam));
    for (std::size_t i = 0; i < f.lidar.size(); i += 97) {
      const Point3 global = apply(src->ego_pose, src->lidar_points[i].position);
      EXPECT_LE(distance(apply(f.reference, f.lidar[i].position), global), 1e-9);
    }
  }
}

TEST(BuildVariant, CompensationIsExactForNoiselessLinearMotion) {
  ScenarioParams p;
  p.duration_s = 6.0;
  const Scenario s = generate_scenario(p);
  SensorConfig cfg = SensorConfig{}.noiseless();
  cfg.max_range = 1000.0;  // no agent enters or leaves range between sweeps
  const Recording rec{s, cfg, record_scenario(s, cfg, p.seed)};
  for (std::int64_t target : {70'000, 360'000, 570'000}) {
    const auto v = build_variant(rec, {Modality::Radar, target, true});
    ASSERT_FALSE(v.frames.empty());
    for (const auto& f : v.frames) {
      const auto fresh = capture_radar(rec.scenario, f.t_cam, rec.sensors, rec.scenario.seed);
      ASSERT_EQ(fresh.radar_points.size(), f.radar.size());
      for (std::size_t i = 0; i < f.radar.size(); ++i)
        EXPECT_LE(distance(f.radar[i].position, fresh.radar_points[i].position), 1e-9);
    }
  }
}

TEST(BuildVariant, PureAndRepeatable) {
  const Recording rec = default_recording(6.0);
  const auto a = build_variant(rec, {Modality::Radar, 220'000, true});
  const auto b = build_variant(rec, {Modality::Radar, 220'000, true});
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t i = 0; i < a.frames.size(); ++i) EXPECT_EQ(a.frames[i].radar, b.frames[i].radar);
}

TEST(VariantDirectory, WritesValidLogAndManifest) {
  const Recording rec = default_recording(6.0);
  const auto v = build_variant(rec, {Modality::Radar, 290'000, true});
  const auto dir = asyncbev::testing::scratch_dir("variant");
  write_variant(v, rec, dir, "/some/source");
  const auto manifest = read_variant_manifest(dir);
  EXPECT_EQ(manifest, manifest_of(v, "/some/source"));
  EXPECT_EQ(manifest.config, v.config);

  const Recording back = read_recording(dir);
  ASSERT_EQ(back.records.size(), 2 * v.frames.size());
  for (std::size_t i = 0; i < v.frames.size(); ++i) {
    const auto& payload = back.records[2 * i];
    ASSERT_EQ(payload.sensor, SensorKind::Radar);
    EXPECT_EQ(payload.timestamp, v.frames[i].t_cam);
    ASSERT_EQ(payload.radar_points.size(), v.frames[i].radar.size());
    for (std::size_t k = 0; k < payload.radar_points.size(); ++k)
      EXPECT_EQ(payload.radar_points[k].position.x, static_cast<double>(static_cast<float>(v.frames[i].radar[k].position.x)));
  }
}
