#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "asyncbev/errors.hpp"
#include "asyncbev/frames.hpp"
#include "asyncbev/random.hpp"
#include "asyncbev/worldsim.hpp"

namespace asyncbev {

enum class SensorKind { Radar, Lidar, CamFront };

inline std::string_view sensor_name(SensorKind k) {
  switch (k) {
    case SensorKind::Radar: return "RADAR";
    case SensorKind::Lidar: return "LIDAR";
    case SensorKind::CamFront: return "CAM_FRONT";
  }
  return "?";
}

inline SensorKind parse_sensor(std::string_view s) {
  if (s == "RADAR") return SensorKind::Radar;
  if (s == "LIDAR") return SensorKind::Lidar;
  if (s == "CAM_FRONT") return SensorKind::CamFront;
  throw ConfigError("unknown sensor '" + std::string(s) + "'");
}

/// Radar return in the capture ego frame. velocity is the ego-motion
/// compensated planar velocity of the reflecting object, in the same frame.
struct RadarPoint {
  Point3 position;
  Vec2 velocity;
  bool operator==(const RadarPoint&) const = default;
};

struct LidarPoint {
  Point3 position;
  bool operator==(const LidarPoint&) const = default;
};

/// One atomic sweep (or a camera trigger, which carries no payload).
struct CaptureRecord {
  SensorKind sensor = SensorKind::Lidar;
  Timestamp timestamp;
  Pose ego_pose;  // ego-to-global at timestamp
  bool key_frame = false;
  std::vector<RadarPoint> radar_points;
  std::vector<LidarPoint> lidar_points;

  bool operator==(const CaptureRecord&) const = default;
};

struct SensorConfig {
  double lidar_rate = 20.0;           // Hz
  double radar_rate = 13.0;           // Hz
  double keyframe_rate = 2.0;         // Hz
  std::int64_t radar_phase_jitter_us = 15000;   // uniform +/- per event
  std::int64_t radar_phase_offset_us = 20000;   // nominal time of the first radar sweep
  std::int64_t cam_front_offset_us = 10000;     // trigger delay after the keyframe LiDAR sweep
  int lidar_points_per_agent = 200;
  int radar_points_per_agent = 5;
  int clutter_points_per_sweep = 10;  // expected static radar clutter returns within range
  double position_noise_sigma = 0.05;            // m
  double radar_velocity_noise_bound = 0.1 / 3.6; // m/s, +/- 0.1 km/h
  double max_range = 100.0;           // m
  double radar_height = 0.5;          // z of radar returns in the ego frame

  bool operator==(const SensorConfig&) const = default;

  Duration lidar_period() const { return Duration(std::llround(1e6 / lidar_rate)); }
  Duration keyframe_period() const { return Duration(std::llround(1e6 / keyframe_rate)); }
  int sweeps_per_keyframe() const { return static_cast<int>(std::llround(lidar_rate / keyframe_rate)); }

  void validate() const {
    if (!(lidar_rate > 0 && radar_rate > 0 && keyframe_rate > 0)) throw ConfigError("sensor rates must be positive");
    if (keyframe_rate > lidar_rate) throw ConfigError("keyframe rate cannot exceed the LiDAR rate");
    const double ratio = lidar_rate / keyframe_rate;
    if (std::abs(ratio - std::round(ratio)) > 1e-9) throw ConfigError("LiDAR rate must be a multiple of the keyframe rate");
    if (radar_phase_jitter_us < 0 || radar_phase_offset_us < 0 || cam_front_offset_us < 0)
      throw ConfigError("timing offsets must be non-negative");
    if (radar_phase_offset_us < radar_phase_jitter_us) throw ConfigError("radar phase offset must cover the jitter");
    if (2.0 * static_cast<double>(radar_phase_jitter_us) >= 1e6 / radar_rate)
      throw ConfigError("radar jitter must stay below half a radar period");
    if (lidar_points_per_agent < 0 || radar_points_per_agent < 0 || clutter_points_per_sweep < 0)
      throw ConfigError("point counts must be non-negative");
    if (!(position_noise_sigma >= 0) || !(radar_velocity_noise_bound >= 0)) throw ConfigError("noise must be non-negative");
    if (!(max_range > 0)) throw ConfigError("max range must be positive");
  }

  // Zero-noise copy, used by exactness tests and the static-world rig.
  SensorConfig noiseless() const {
    SensorConfig c = *this;
    c.position_noise_sigma = 0.0;
    c.radar_velocity_noise_bound = 0.0;
    return c;
  }
};

struct ScheduledCapture {
  SensorKind sensor;
  Timestamp t;
  bool key_frame = false;
  bool operator==(const ScheduledCapture&) const = default;
};

/// Capture timeline over [0, duration). LiDAR and camera triggers sit on a
/// fixed grid; radar events get per-event phase jitter, so their offsets to
/// the keyframes wander from keyframe to keyframe.
inline std::vector<ScheduledCapture> schedule_captures(const Scenario& scenario, const SensorConfig& cfg,
                                                       std::uint64_t seed) {
  cfg.validate();
  std::vector<ScheduledCapture> out;
  const std::int64_t end = scenario.duration.count();
  const std::int64_t lidar_period = cfg.lidar_period().count();
  const int per_key = cfg.sweeps_per_keyframe();
  for (std::int64_t k = 0; k * lidar_period < end; ++k) {
    const bool key = (k % per_key) == 0;
    out.push_back({SensorKind::Lidar, Timestamp(k * lidar_period), key});
    const std::int64_t cam = k * lidar_period + cfg.cam_front_offset_us;
    if (key && cam < end) out.push_back({SensorKind::CamFront, Timestamp(cam), true});
  }

  Rng rng(derive_seed(seed, {0x7ADA2ULL}));
  const double radar_period = 1e6 / cfg.radar_rate;
  for (std::int64_t k = 0;; ++k) {
    const std::int64_t nominal = cfg.radar_phase_offset_us + std::llround(static_cast<double>(k) * radar_period);
    if (nominal - cfg.radar_phase_jitter_us >= end) break;
    std::int64_t jitter = 0;
    if (cfg.radar_phase_jitter_us > 0)
      jitter = static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(2 * cfg.radar_phase_jitter_us + 1)) -
               cfg.radar_phase_jitter_us;
    const std::int64_t t = nominal + jitter;
    if (t >= 0 && t < end) out.push_back({SensorKind::Radar, Timestamp(t), false});
  }

  std::stable_sort(out.begin(), out.end(), [](const ScheduledCapture& a, const ScheduledCapture& b) {
    return a.t != b.t ? a.t < b.t : static_cast<int>(a.sensor) < static_cast<int>(b.sensor);
  });
  return out;
}

namespace detail {

// Point on the footprint perimeter at arc length s (body frame, origin at center).
inline Vec2 perimeter_point(const Dims& d, double s) {
  const double L = d.length, W = d.width;
  const double perimeter = 2.0 * (L + W);
  s = std::fmod(s, perimeter);
  if (s < 0) s += perimeter;
  if (s < L) return {-L / 2 + s, -W / 2};
  s -= L;
  if (s < W) return {L / 2, -W / 2 + s};
  s -= W;
  if (s < L) return {L / 2 - s, W / 2};
  s -= L;
  return {-L / 2, W / 2 - s};
}

enum class ScatterKind : std::uint64_t { Radar = 1, Lidar = 2 };

}  // namespace detail

/// Persistent reflection points of one agent, in its body frame (x forward,
/// z relative to the box center). Fixed for the whole scenario given
/// (seed, agent id); position noise perturbs them horizontally once.
inline std::vector<Point3> radar_scatterers(const AgentState& a, const SensorConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(detail::ScatterKind::Radar), static_cast<std::uint64_t>(a.id)}));
  const int n = cfg.radar_points_per_agent;
  const double perimeter = 2.0 * (a.dims.length + a.dims.width);
  std::vector<Point3> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Vec2 p = detail::perimeter_point(a.dims, (i + rng.uniform()) / n * perimeter);
    const double nx = rng.normal(0.0, 1.0) * cfg.position_noise_sigma;
    const double ny = rng.normal(0.0, 1.0) * cfg.position_noise_sigma;
    pts.push_back({p.x + nx, p.y + ny, 0.0});
  }
  return pts;
}

// 60% on the side walls, 40% on the roof.
inline std::vector<Point3> lidar_scatterers(const AgentState& a, const SensorConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(detail::ScatterKind::Lidar), static_cast<std::uint64_t>(a.id)}));
  const int n = cfg.lidar_points_per_agent;
  const int walls = (n * 3) / 5;
  const Dims& d = a.dims;
  const double perimeter = 2.0 * (d.length + d.width);
  std::vector<Point3> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    Point3 p;
    if (i < walls) {
      const Vec2 q = detail::perimeter_point(d, (i + rng.uniform()) / walls * perimeter);
      p = {q.x, q.y, rng.uniform(0.3, d.height) - d.height / 2};
    } else {
      p = {rng.uniform(-d.length / 2, d.length / 2), rng.uniform(-d.width / 2, d.width / 2), d.height / 2};
    }
    p.x += rng.normal(0.0, 1.0) * cfg.position_noise_sigma;
    p.y += rng.normal(0.0, 1.0) * cfg.position_noise_sigma;
    pts.push_back(p);
  }
  return pts;
}

/// Static background reflectors in the global frame; the number within
/// max_range of any ego position is clutter_points_per_sweep on average.
inline std::vector<Point3> clutter_landmarks(const Scenario& s, const SensorConfig& cfg, std::uint64_t seed) {
  if (cfg.clutter_points_per_sweep == 0) return {};
  const double area = 4.0 * s.bounds * s.bounds;
  const double disc = std::numbers::pi * cfg.max_range * cfg.max_range;
  const auto n = static_cast<int>(std::llround(cfg.clutter_points_per_sweep * area / disc));
  Rng rng(derive_seed(seed, {0xC1077ULL}));
  std::vector<Point3> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i)
    pts.push_back({rng.uniform(-s.bounds, s.bounds), rng.uniform(-s.bounds, s.bounds), cfg.radar_height});
  return pts;
}

namespace detail {

inline Point3 body_to_global(const AgentState& a, const Point3& body) {
  const double c = std::cos(a.yaw), s = std::sin(a.yaw);
  return {a.center.x + c * body.x - s * body.y, a.center.y + s * body.x + c * body.y, a.center.z + body.z};
}

inline bool in_range(const Pose& ego, const Point3& p, double range) {
  return std::hypot(p.x - ego.translation.x, p.y - ego.translation.y) <= range;
}

}  // namespace detail

inline CaptureRecord capture_radar(const Scenario& s, Timestamp t, const SensorConfig& cfg, std::uint64_t seed) {
  require_in_range(s, t, "capture_radar");
  CaptureRecord rec;
  rec.sensor = SensorKind::Radar;
  rec.timestamp = t;
  rec.ego_pose = ego_pose_at(s, t);
  const Pose to_ego = invert(rec.ego_pose);
  Rng vel_rng(derive_seed(seed, {0x7E10C17ULL, static_cast<std::uint64_t>(t.micros())}));
  const double bound = cfg.radar_velocity_noise_bound;

  for (const auto& a0 : s.agents) {
    const AgentState a = agent_state_at(s, a0, t);
    if (!detail::in_range(rec.ego_pose, a.center, cfg.max_range)) continue;
    const Vec2 v_ego = rotate_planar(to_ego.rotation, a.velocity);
    for (const auto& body : radar_scatterers(a0, cfg, seed)) {
      Point3 g = detail::body_to_global(a, body);
      g.z = cfg.radar_height;
      Vec2 v = v_ego;
      if (bound > 0) {
        v.x += vel_rng.uniform(-bound, bound);
        v.y += vel_rng.uniform(-bound, bound);
      }
      rec.radar_points.push_back({apply(to_ego, g), v});
    }
  }
  for (const auto& c : clutter_landmarks(s, cfg, seed))
    if (detail::in_range(rec.ego_pose, c, cfg.max_range)) rec.radar_points.push_back({apply(to_ego, c), {0.0, 0.0}});
  return rec;
}

inline CaptureRecord capture_lidar(const Scenario& s, Timestamp t, const SensorConfig& cfg, std::uint64_t seed) {
  require_in_range(s, t, "capture_lidar");
  CaptureRecord rec;
  rec.sensor = SensorKind::Lidar;
  rec.timestamp = t;
  rec.ego_pose = ego_pose_at(s, t);
  const Pose to_ego = invert(rec.ego_pose);
  for (const auto& a0 : s.agents) {
    const AgentState a = agent_state_at(s, a0, t);
    if (!detail::in_range(rec.ego_pose, a.center, cfg.max_range)) continue;
    for (const auto& body : lidar_scatterers(a0, cfg, seed))
      rec.lidar_points.push_back({apply(to_ego, detail::body_to_global(a, body))});
  }
  return rec;
}

inline CaptureRecord capture_camera_trigger(const Scenario& s, Timestamp t) {
  require_in_range(s, t, "capture_camera_trigger");
  CaptureRecord rec;
  rec.sensor = SensorKind::CamFront;
  rec.timestamp = t;
  rec.ego_pose = ego_pose_at(s, t);
  rec.key_frame = true;
  return rec;
}

/// Runs the whole schedule: every capture, time-ordered.
inline std::vector<CaptureRecord> record_scenario(const Scenario& s, const SensorConfig& cfg, std::uint64_t seed) {
  std::vector<CaptureRecord> out;
  for (const auto& ev : schedule_captures(s, cfg, seed)) {
    switch (ev.sensor) {
      case SensorKind::Radar: out.push_back(capture_radar(s, ev.t, cfg, seed)); break;
      case SensorKind::Lidar: out.push_back(capture_lidar(s, ev.t, cfg, seed)); break;
      case SensorKind::CamFront: out.push_back(capture_camera_trigger(s, ev.t)); break;
    }
    out.back().key_frame = ev.key_frame;
  }
  return out;
}

}  // namespace asyncbev
