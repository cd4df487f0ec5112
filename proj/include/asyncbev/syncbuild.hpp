#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "asyncbev/errors.hpp"
#include "asyncbev/frames.hpp"
#include "asyncbev/ingest.hpp"
#include "asyncbev/sensors.hpp"

namespace asyncbev {

enum class Modality { Radar, Lidar };

inline std::string_view modality_name(Modality m) { return m == Modality::Radar ? "RADAR" : "LIDAR"; }

inline Modality parse_modality(std::string_view s) {
  if (s == "RADAR" || s == "radar") return Modality::Radar;
  if (s == "LIDAR" || s == "lidar") return Modality::Lidar;
  throw ConfigError("unknown modality '" + std::string(s) + "'");
}

inline SensorKind sensor_of(Modality m) { return m == Modality::Radar ? SensorKind::Radar : SensorKind::Lidar; }

struct LatencyConfig {
  Modality modality = Modality::Radar;
  std::int64_t target_latency_us = 0;
  bool compensate = false;

  bool operator==(const LatencyConfig&) const = default;

  void validate() const {
    if (target_latency_us < 0) throw ConfigError("target latency must be non-negative");
    if (compensate && modality != Modality::Radar)
      throw ConfigError("velocity compensation needs radar velocities; LiDAR has none");
  }
};

struct VariantFrame {
  std::size_t keyframe_index = 0;  // index into all keyframes of the source log
  Timestamp t_cam;                 // CAM_FRONT trigger
  Pose reference;                  // ego pose at t_cam
  Timestamp source_time;           // capture time of the stale sweep
  Duration achieved_latency{0};
  std::vector<RadarPoint> radar;   // in the reference frame
  std::vector<LidarPoint> lidar;   // in the reference frame
};

struct DatasetVariant {
  LatencyConfig config;
  std::size_t source_keyframes = 0;
  std::vector<VariantFrame> frames;
  std::vector<std::string> warnings;
};

/// Re-expresses radar returns captured in src_ego in dst_ego. Velocities are
/// direction quantities and only get the relative rotation.
inline std::vector<RadarPoint> retarget_radar(std::span<const RadarPoint> pts, const Pose& src_ego, const Pose& dst_ego) {
  const Pose rel = relative_pose(src_ego, dst_ego);
  std::vector<RadarPoint> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back({apply(rel, p.position), rotate_planar(rel.rotation, p.velocity)});
  return out;
}

inline std::vector<LidarPoint> retarget_lidar(std::span<const LidarPoint> pts, const Pose& src_ego, const Pose& dst_ego) {
  const Pose rel = relative_pose(src_ego, dst_ego);
  std::vector<LidarPoint> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back({apply(rel, p.position)});
  return out;
}

/// Moves each stale radar return along its planar velocity for the time
/// between the radar sweep and the camera trigger:
///   p_cam = p_radar + (vx, vy, 0) * (t_cam - t_radar)
/// z is left alone; radar measures no vertical velocity.
inline std::vector<RadarPoint> compensate_radar(std::span<const RadarPoint> pts, Timestamp t_radar, Timestamp t_cam) {
  if (t_cam < t_radar)
    throw PreconditionError("compensate_radar: camera time " + std::to_string(t_cam.micros()) +
                            "us precedes radar time " + std::to_string(t_radar.micros()) + "us");
  const double dt = to_seconds(t_cam - t_radar);
  std::vector<RadarPoint> out(pts.begin(), pts.end());
  for (auto& p : out) {
    p.position.x += p.velocity.x * dt;
    p.position.y += p.velocity.y * dt;
  }
  return out;
}

inline std::vector<const CaptureRecord*> keyframe_triggers(const Recording& rec) {
  std::vector<const CaptureRecord*> out;
  for (const auto& r : rec.records)
    if (r.sensor == SensorKind::CamFront && r.key_frame) out.push_back(&r);
  std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->timestamp < b->timestamp; });
  return out;
}

/// Builds one synchronous (target 0) or asynchronous dataset variant. The
/// first two keyframes are skipped so that every variant has the same
/// history available. Each surviving keyframe takes the latest sweep at
/// least target_latency old, moved into the keyframe's reference frame.
inline DatasetVariant build_variant(const Recording& rec, const LatencyConfig& cfg) {
  cfg.validate();
  const auto keys = keyframe_triggers(rec);
  if (keys.size() < 3)
    throw PreconditionError("build_variant: " + std::to_string(keys.size()) + " keyframes, at least 3 required");

  const SensorKind want = sensor_of(cfg.modality);
  std::vector<const CaptureRecord*> sweeps;
  for (const auto& r : rec.records)
    if (r.sensor == want) sweeps.push_back(&r);
  std::stable_sort(sweeps.begin(), sweeps.end(), [](auto* a, auto* b) { return a->timestamp < b->timestamp; });

  DatasetVariant v;
  v.config = cfg;
  v.source_keyframes = keys.size();
  for (std::size_t k = 2; k < keys.size(); ++k) {
    const CaptureRecord& cam = *keys[k];
    const std::int64_t cutoff = cam.timestamp.micros() - cfg.target_latency_us;
    auto it = std::upper_bound(sweeps.begin(), sweeps.end(), cutoff,
                               [](std::int64_t c, const CaptureRecord* r) { return c < r->timestamp.micros(); });
    if (cutoff < 0 || it == sweeps.begin()) {
      v.warnings.push_back("keyframe " + std::to_string(k) + " at " + std::to_string(cam.timestamp.micros()) + "us: no " +
                           std::string(modality_name(cfg.modality)) + " sweep at least " +
                           std::to_string(cfg.target_latency_us) + "us old; dropped");
      continue;
    }
    const CaptureRecord& src = **(it - 1);

    VariantFrame f;
    f.keyframe_index = k;
    f.t_cam = cam.timestamp;
    f.reference = cam.ego_pose;
    f.source_time = src.timestamp;
    f.achieved_latency = cam.timestamp - src.timestamp;
    if (cfg.modality == Modality::Radar) {
      f.radar = retarget_radar(src.radar_points, src.ego_pose, cam.ego_pose);
      if (cfg.compensate) f.radar = compensate_radar(f.radar, src.timestamp, cam.timestamp);
    } else {
      f.lidar = retarget_lidar(src.lidar_points, src.ego_pose, cam.ego_pose);
    }
    v.frames.push_back(std::move(f));
  }
  return v;
}

inline DatasetVariant build_variant(const CaptureLog& log, const LatencyConfig& cfg) {
  return build_variant(to_recording(log), cfg);
}

// ---------------------------------------------------------------------------
// Variant directories: a capture log holding the retargeted payloads (one
// sweep per keyframe, stamped at t_cam with the reference pose) plus
// variant.json describing how it was built.

struct VariantManifest {
  LatencyConfig config;
  std::string source_log;
  struct Frame {
    std::size_t keyframe_index;
    std::int64_t t_cam_us;
    std::int64_t source_timestamp_us;
    std::int64_t achieved_latency_us;
    bool operator==(const Frame&) const = default;
  };
  std::vector<Frame> frames;
  std::vector<std::string> warnings;
  bool operator==(const VariantManifest&) const = default;
};

inline VariantManifest manifest_of(const DatasetVariant& v, std::string source_log) {
  VariantManifest m{v.config, std::move(source_log), {}, v.warnings};
  for (const auto& f : v.frames)
    m.frames.push_back({f.keyframe_index, f.t_cam.micros(), f.source_time.micros(), f.achieved_latency.count()});
  return m;
}

inline nlohmann::json manifest_json(const VariantManifest& m) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : m.frames)
    frames.push_back({{"keyframe_index", f.keyframe_index},
                      {"t_cam_us", f.t_cam_us},
                      {"source_timestamp_us", f.source_timestamp_us},
                      {"achieved_latency_us", f.achieved_latency_us}});
  return {{"modality", modality_name(m.config.modality)},
          {"target_latency_us", m.config.target_latency_us},
          {"compensate", m.config.compensate},
          {"source_log", m.source_log},
          {"frames", frames},
          {"warnings", m.warnings}};
}

inline VariantManifest read_variant_manifest(const std::filesystem::path& dir) {
  const auto j = detail::read_table(dir, "variant");
  detail::RowReader r(j, "variant", 0);
  VariantManifest m;
  m.config.modality = parse_modality(r.get<std::string>("modality"));
  m.config.target_latency_us = r.get<std::int64_t>("target_latency_us");
  m.config.compensate = r.get<bool>("compensate");
  m.source_log = r.get<std::string>("source_log");
  const auto& frames = r.array("frames");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    detail::RowReader fr(frames[i], "variant.frames", i);
    m.frames.push_back({fr.get<std::size_t>("keyframe_index"), fr.get<std::int64_t>("t_cam_us"),
                        fr.get<std::int64_t>("source_timestamp_us"), fr.get<std::int64_t>("achieved_latency_us")});
  }
  for (const auto& w : r.array("warnings")) m.warnings.push_back(w.get<std::string>());
  return m;
}

inline std::vector<CaptureRecord> variant_records(const DatasetVariant& v) {
  std::vector<CaptureRecord> out;
  for (const auto& f : v.frames) {
    CaptureRecord payload;
    payload.sensor = sensor_of(v.config.modality);
    payload.timestamp = f.t_cam;
    payload.ego_pose = f.reference;
    payload.key_frame = true;
    payload.radar_points = f.radar;
    payload.lidar_points = f.lidar;
    out.push_back(std::move(payload));

    CaptureRecord cam;
    cam.sensor = SensorKind::CamFront;
    cam.timestamp = f.t_cam;
    cam.ego_pose = f.reference;
    cam.key_frame = true;
    out.push_back(std::move(cam));
  }
  return out;
}

inline void write_variant(const DatasetVariant& v, const Recording& source, const std::filesystem::path& dir,
                          const std::string& source_log) {
  const auto records = variant_records(v);
  write_log(records, source.scenario, source.sensors, dir);
  detail::write_text(dir / "variant.json", detail::dump(manifest_json(manifest_of(v, source_log))));
}

}  // namespace asyncbev
