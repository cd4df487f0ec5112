#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "asyncbev/frames.hpp"
#include "asyncbev/sensors.hpp"
#include "asyncbev/worldsim.hpp"

// Capture log on disk, laid out like the nuScenes relational schema:
//
//   <dir>/scenario.json           scenario + sensor configuration
//   <dir>/sample.json             keyframes
//   <dir>/sample_data.json        every sweep / trigger
//   <dir>/ego_pose.json           ego-to-global pose per sample_data row
//   <dir>/calibrated_sensor.json  sensor-to-ego extrinsics
//   <dir>/blobs/<token>.bin       point payloads, little-endian float32
//
// Radar records are (x, y, z, vx, vy), LiDAR records (x, y, z).

namespace asyncbev {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class LogErrorKind { Schema, Parse, Referential, Blob, Ordering, InsufficientKeyframes, Io };

inline std::string_view log_error_label(LogErrorKind k) {
  switch (k) {
    case LogErrorKind::Schema: return "schema error";
    case LogErrorKind::Parse: return "parse error";
    case LogErrorKind::Referential: return "referential error";
    case LogErrorKind::Blob: return "blob error";
    case LogErrorKind::Ordering: return "ordering error";
    case LogErrorKind::InsufficientKeyframes: return "insufficient keyframes";
    case LogErrorKind::Io: return "io error";
  }
  return "error";
}

struct Violation {
  LogErrorKind kind;
  std::string message;  // starts with log_error_label(kind)
  bool operator==(const Violation&) const = default;
};

class LogError : public std::runtime_error {
 public:
  LogError(LogErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(log_error_label(kind)) + ": " + detail), kind_(kind) {}
  explicit LogError(const Violation& v) : std::runtime_error(v.message), kind_(v.kind) {}
  LogErrorKind kind() const { return kind_; }

 private:
  LogErrorKind kind_;
};

struct EgoPoseRow {
  std::string token;
  std::int64_t timestamp = 0;
  std::array<double, 4> rotation{1, 0, 0, 0};  // w, x, y, z
  std::array<double, 3> translation{0, 0, 0};
  bool operator==(const EgoPoseRow&) const = default;
};

struct CalibratedSensorRow {
  std::string token;
  SensorKind sensor = SensorKind::Lidar;
  std::array<double, 4> rotation{1, 0, 0, 0};
  std::array<double, 3> translation{0, 0, 0};
  bool operator==(const CalibratedSensorRow&) const = default;
};

struct SampleRow {
  std::string token;
  std::int64_t timestamp = 0;
  std::string prev;
  std::string next;
  bool operator==(const SampleRow&) const = default;
};

struct SampleDataRow {
  std::string token;
  std::string sample_token;  // empty unless this row belongs to a keyframe
  SensorKind sensor = SensorKind::Lidar;
  std::int64_t timestamp = 0;
  std::string ego_pose_token;
  std::string calibrated_sensor_token;
  bool is_key_frame = false;
  std::string filename;  // relative to the log directory, empty for camera triggers
  std::int64_t num_points = 0;
  bool operator==(const SampleDataRow&) const = default;
};

struct CaptureLog {
  Scenario scenario;
  SensorConfig sensors;
  std::vector<SampleRow> samples;
  std::vector<SampleDataRow> sample_data;
  std::vector<EgoPoseRow> ego_poses;
  std::vector<CalibratedSensorRow> calibrated_sensors;
  std::map<std::string, std::vector<std::uint8_t>> blobs;  // keyed by filename

  bool operator==(const CaptureLog&) const = default;
};

/// Scenario, sensor setup and the time-ordered captures in memory.
struct Recording {
  Scenario scenario;
  SensorConfig sensors;
  std::vector<CaptureRecord> records;
};

inline constexpr std::size_t blob_stride(SensorKind k) {
  switch (k) {
    case SensorKind::Radar: return 5 * sizeof(float);
    case SensorKind::Lidar: return 3 * sizeof(float);
    case SensorKind::CamFront: return 0;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Blob codec

namespace detail {

inline void put_f32(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline double get_f32(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

inline void check_blob_size(std::span<const std::uint8_t> bytes, std::size_t stride) {
  if (bytes.size() % stride != 0)
    throw LogError(LogErrorKind::Blob, "blob of " + std::to_string(bytes.size()) + " bytes is not a multiple of the " +
                                           std::to_string(stride) + "-byte stride");
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_radar(std::span<const RadarPoint> pts) {
  std::vector<std::uint8_t> out;
  out.reserve(pts.size() * blob_stride(SensorKind::Radar));
  for (const auto& p : pts) {
    detail::put_f32(out, p.position.x);
    detail::put_f32(out, p.position.y);
    detail::put_f32(out, p.position.z);
    detail::put_f32(out, p.velocity.x);
    detail::put_f32(out, p.velocity.y);
  }
  return out;
}

inline std::vector<std::uint8_t> encode_lidar(std::span<const LidarPoint> pts) {
  std::vector<std::uint8_t> out;
  out.reserve(pts.size() * blob_stride(SensorKind::Lidar));
  for (const auto& p : pts) {
    detail::put_f32(out, p.position.x);
    detail::put_f32(out, p.position.y);
    detail::put_f32(out, p.position.z);
  }
  return out;
}

inline std::vector<RadarPoint> decode_radar(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t stride = blob_stride(SensorKind::Radar);
  detail::check_blob_size(bytes, stride);
  std::vector<RadarPoint> out(bytes.size() / stride);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t o = i * stride;
    out[i] = {{detail::get_f32(bytes, o), detail::get_f32(bytes, o + 4), detail::get_f32(bytes, o + 8)},
              {detail::get_f32(bytes, o + 12), detail::get_f32(bytes, o + 16)}};
  }
  return out;
}

inline std::vector<LidarPoint> decode_lidar(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t stride = blob_stride(SensorKind::Lidar);
  detail::check_blob_size(bytes, stride);
  std::vector<LidarPoint> out(bytes.size() / stride);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t o = i * stride;
    out[i] = {{detail::get_f32(bytes, o), detail::get_f32(bytes, o + 4), detail::get_f32(bytes, o + 8)}};
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON mapping

inline json rotation_json(const Rotation& r) { return json::array({r.w(), r.x(), r.y(), r.z()}); }
inline json point_json(const Point3& p) { return json::array({p.x, p.y, p.z}); }

inline json sensor_config_json(const SensorConfig& c) {
  return {{"lidar_rate_hz", c.lidar_rate},
          {"radar_rate_hz", c.radar_rate},
          {"keyframe_rate_hz", c.keyframe_rate},
          {"radar_phase_jitter_us", c.radar_phase_jitter_us},
          {"radar_phase_offset_us", c.radar_phase_offset_us},
          {"cam_front_offset_us", c.cam_front_offset_us},
          {"lidar_points_per_agent", c.lidar_points_per_agent},
          {"radar_points_per_agent", c.radar_points_per_agent},
          {"clutter_points_per_sweep", c.clutter_points_per_sweep},
          {"position_noise_sigma_m", c.position_noise_sigma},
          {"radar_velocity_noise_mps", c.radar_velocity_noise_bound},
          {"max_range_m", c.max_range},
          {"radar_height_m", c.radar_height}};
}

inline json scenario_json(const Scenario& s, const SensorConfig& sensors) {
  json agents = json::array();
  for (const auto& a : s.agents)
    agents.push_back({{"id", a.id},
                      {"center", point_json(a.center)},
                      {"yaw", a.yaw},
                      {"dims", {a.dims.length, a.dims.width, a.dims.height}},
                      {"velocity", {a.velocity.x, a.velocity.y}},
                      {"yaw_rate", a.yaw_rate}});
  json waypoints = json::array();
  for (const auto& w : s.ego.waypoints())
    waypoints.push_back({{"timestamp", w.t.micros()},
                         {"rotation", rotation_json(w.pose.rotation)},
                         {"translation", point_json(w.pose.translation)}});
  return {{"seed", s.seed},
          {"duration_us", s.duration.count()},
          {"bounds_m", s.bounds},
          {"agents", agents},
          {"ego_waypoints", waypoints},
          {"sensor_config", sensor_config_json(sensors)}};
}

namespace detail {

// Field access that reports missing / mistyped fields as schema errors.
class RowReader {
 public:
  RowReader(const json& row, std::string_view table, std::size_t index) : row_(row), table_(table), index_(index) {
    if (!row.is_object()) fail("", "is not an object");
  }

  template <typename T>
  T get(const char* key) const {
    auto it = row_.find(key);
    if (it == row_.end()) fail(key, "is missing");
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) fail(key, "must be a string");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) fail(key, "must be a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) fail(key, "must be an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) fail(key, "must be a number");
      }
      return it->template get<T>();
    } catch (const json::exception& e) {
      fail(key, e.what());
    }
  }

  template <std::size_t N>
  std::array<double, N> numbers(const char* key) const {
    auto it = row_.find(key);
    if (it == row_.end()) fail(key, "is missing");
    if (!it->is_array() || it->size() != N) fail(key, "must be an array of " + std::to_string(N) + " numbers");
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
      if (!(*it)[i].is_number()) fail(key, "must contain numbers only");
      out[i] = (*it)[i].template get<double>();
    }
    return out;
  }

  const json& array(const char* key) const {
    auto it = row_.find(key);
    if (it == row_.end() || !it->is_array()) fail(key, "must be an array");
    return *it;
  }

  const json& object(const char* key) const {
    auto it = row_.find(key);
    if (it == row_.end() || !it->is_object()) fail(key, "must be an object");
    return *it;
  }

  [[noreturn]] void fail(std::string_view key, const std::string& what) const {
    std::string where = "table '" + std::string(table_) + "' row " + std::to_string(index_);
    if (!key.empty()) where += " field '" + std::string(key) + "'";
    throw LogError(LogErrorKind::Schema, where + " " + what);
  }

 private:
  const json& row_;
  std::string_view table_;
  std::size_t index_;
};

inline Point3 to_point(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }
inline Rotation to_rotation(const std::array<double, 4>& a) { return Rotation::from_wxyz(a[0], a[1], a[2], a[3]); }

inline std::array<double, 4> rot_array(const Rotation& r) { return {r.w(), r.x(), r.y(), r.z()}; }
inline std::array<double, 3> pt_array(const Point3& p) { return {p.x, p.y, p.z}; }

}  // namespace detail

inline SensorConfig sensor_config_from_json(const json& j) {
  detail::RowReader r(j, "scenario.sensor_config", 0);
  SensorConfig c;
  c.lidar_rate = r.get<double>("lidar_rate_hz");
  c.radar_rate = r.get<double>("radar_rate_hz");
  c.keyframe_rate = r.get<double>("keyframe_rate_hz");
  c.radar_phase_jitter_us = r.get<std::int64_t>("radar_phase_jitter_us");
  c.radar_phase_offset_us = r.get<std::int64_t>("radar_phase_offset_us");
  c.cam_front_offset_us = r.get<std::int64_t>("cam_front_offset_us");
  c.lidar_points_per_agent = r.get<int>("lidar_points_per_agent");
  c.radar_points_per_agent = r.get<int>("radar_points_per_agent");
  c.clutter_points_per_sweep = r.get<int>("clutter_points_per_sweep");
  c.position_noise_sigma = r.get<double>("position_noise_sigma_m");
  c.radar_velocity_noise_bound = r.get<double>("radar_velocity_noise_mps");
  c.max_range = r.get<double>("max_range_m");
  c.radar_height = r.get<double>("radar_height_m");
  return c;
}

inline std::pair<Scenario, SensorConfig> scenario_from_json(const json& j) {
  detail::RowReader r(j, "scenario", 0);
  Scenario s;
  s.seed = r.get<std::uint64_t>("seed");
  s.duration = Duration(r.get<std::int64_t>("duration_us"));
  s.bounds = r.get<double>("bounds_m");
  const json& agents = r.array("agents");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    detail::RowReader a(agents[i], "scenario.agents", i);
    AgentState st;
    st.id = a.get<int>("id");
    st.center = detail::to_point(a.numbers<3>("center"));
    st.yaw = a.get<double>("yaw");
    const auto d = a.numbers<3>("dims");
    st.dims = {d[0], d[1], d[2]};
    const auto v = a.numbers<2>("velocity");
    st.velocity = {v[0], v[1]};
    st.yaw_rate = a.get<double>("yaw_rate");
    s.agents.push_back(st);
  }
  const json& wps = r.array("ego_waypoints");
  std::vector<Waypoint> w;
  for (std::size_t i = 0; i < wps.size(); ++i) {
    detail::RowReader wr(wps[i], "scenario.ego_waypoints", i);
    const auto ts = wr.get<std::int64_t>("timestamp");
    if (ts < 0) wr.fail("timestamp", "must be non-negative");
    try {
      w.push_back({Timestamp(ts), {detail::to_rotation(wr.numbers<4>("rotation")),
                                   detail::to_point(wr.numbers<3>("translation"))}});
    } catch (const PreconditionError& e) {
      wr.fail("rotation", e.what());
    }
  }
  try {
    s.ego = EgoTrajectory(std::move(w));
  } catch (const ConfigError& e) {
    throw LogError(LogErrorKind::Schema, std::string("table 'scenario' ego_waypoints: ") + e.what());
  }
  SensorConfig sensors = sensor_config_from_json(r.object("sensor_config"));
  try {
    sensors.validate();
    if (s.duration.count() <= 0) throw ConfigError("duration must be positive");
    s.validate(sensors.keyframe_period());
  } catch (const ConfigError& e) {
    throw LogError(LogErrorKind::Schema, std::string("table 'scenario': ") + e.what());
  }
  return {std::move(s), sensors};
}

// ---------------------------------------------------------------------------
// Building a log from records

/// Tables and blobs for a time-ordered record list. Every camera trigger
/// becomes a sample (keyframe); extrinsics are identity.
inline CaptureLog make_log(std::span<const CaptureRecord> records, const Scenario& scenario,
                           const SensorConfig& sensors) {
  CaptureLog log;
  log.scenario = scenario;
  log.sensors = sensors;
  for (auto k : {SensorKind::Radar, SensorKind::Lidar, SensorKind::CamFront})
    log.calibrated_sensors.push_back({"cs_" + std::string(sensor_name(k)), k, {1, 0, 0, 0}, {0, 0, 0}});

  char buf[32];
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    std::snprintf(buf, sizeof buf, "%06zu", i);
    const std::string idx = buf;

    EgoPoseRow ep{"ep_" + idx, rec.timestamp.micros(), detail::rot_array(rec.ego_pose.rotation),
                  detail::pt_array(rec.ego_pose.translation)};
    log.ego_poses.push_back(ep);

    SampleDataRow sd;
    sd.token = "sd_" + idx;
    sd.sensor = rec.sensor;
    sd.timestamp = rec.timestamp.micros();
    sd.ego_pose_token = ep.token;
    sd.calibrated_sensor_token = "cs_" + std::string(sensor_name(rec.sensor));
    sd.is_key_frame = rec.key_frame;

    if (rec.sensor == SensorKind::CamFront) {
      if (rec.key_frame) {
        std::snprintf(buf, sizeof buf, "s_%04zu", log.samples.size());
        SampleRow s{buf, rec.timestamp.micros(), "", ""};
        if (!log.samples.empty()) {
          s.prev = log.samples.back().token;
          log.samples.back().next = s.token;
        }
        sd.sample_token = s.token;
        log.samples.push_back(s);
      }
    } else {
      sd.filename = "blobs/" + sd.token + ".bin";
      if (rec.sensor == SensorKind::Radar) {
        sd.num_points = static_cast<std::int64_t>(rec.radar_points.size());
        log.blobs[sd.filename] = encode_radar(rec.radar_points);
      } else {
        sd.num_points = static_cast<std::int64_t>(rec.lidar_points.size());
        log.blobs[sd.filename] = encode_lidar(rec.lidar_points);
      }
    }
    log.sample_data.push_back(std::move(sd));
  }
  return log;
}

// ---------------------------------------------------------------------------
// Validation

inline std::vector<Violation> validate_log(const CaptureLog& log) {
  std::vector<Violation> out;
  auto add = [&](LogErrorKind k, const std::string& msg) {
    out.push_back({k, std::string(log_error_label(k)) + ": " + msg});
  };

  if (log.samples.size() < 3)
    add(LogErrorKind::InsufficientKeyframes, "log has " + std::to_string(log.samples.size()) +
                                                 " keyframes, at least 3 are required (the first two are dropped)");

  auto check_rigid = [&](const std::string& what, const std::array<double, 4>& q, const std::array<double, 3>& t) {
    const double n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    if (!std::isfinite(n2) || n2 < 1e-24) add(LogErrorKind::Schema, what + " rotation is not a nonzero finite quaternion");
    if (!std::isfinite(t[0]) || !std::isfinite(t[1]) || !std::isfinite(t[2]))
      add(LogErrorKind::Schema, what + " translation is not finite");
  };

  std::map<std::string, const EgoPoseRow*> poses;
  for (const auto& p : log.ego_poses) {
    if (!poses.emplace(p.token, &p).second) add(LogErrorKind::Referential, "duplicate ego_pose token '" + p.token + "'");
    check_rigid("ego_pose '" + p.token + "'", p.rotation, p.translation);
  }
  std::map<std::string, const CalibratedSensorRow*> calib;
  for (const auto& c : log.calibrated_sensors) {
    if (!calib.emplace(c.token, &c).second)
      add(LogErrorKind::Referential, "duplicate calibrated_sensor token '" + c.token + "'");
    check_rigid("calibrated_sensor '" + c.token + "'", c.rotation, c.translation);
  }
  std::set<std::string> samples;
  for (const auto& s : log.samples)
    if (!samples.insert(s.token).second) add(LogErrorKind::Referential, "duplicate sample token '" + s.token + "'");

  for (std::size_t i = 0; i < log.samples.size(); ++i) {
    const auto& s = log.samples[i];
    for (const auto* link : {&s.prev, &s.next})
      if (!link->empty() && !samples.count(*link))
        add(LogErrorKind::Referential, "sample '" + s.token + "' links to missing sample '" + *link + "'");
    if (i > 0 && !(log.samples[i - 1].timestamp < s.timestamp))
      add(LogErrorKind::Ordering, "sample timestamps not strictly increasing at sample '" + s.token + "'");
  }

  std::map<std::string, int> cam_rows_per_sample;
  std::set<std::string> sd_tokens;
  std::map<SensorKind, const SampleDataRow*> last_by_sensor;
  for (const auto& sd : log.sample_data) {
    const std::string row = "sample_data '" + sd.token + "'";
    if (sd.timestamp < 0 || sd.timestamp > log.scenario.duration.count())
      add(LogErrorKind::Ordering, row + " timestamp " + std::to_string(sd.timestamp) + " outside the scenario");
    if (!sd_tokens.insert(sd.token).second) add(LogErrorKind::Referential, "duplicate sample_data token '" + sd.token + "'");

    auto ep = poses.find(sd.ego_pose_token);
    if (ep == poses.end())
      add(LogErrorKind::Referential, row + " references missing ego_pose '" + sd.ego_pose_token + "'");
    else if (ep->second->timestamp != sd.timestamp)
      add(LogErrorKind::Referential, row + " timestamp " + std::to_string(sd.timestamp) + " differs from ego_pose '" +
                                         sd.ego_pose_token + "' timestamp " + std::to_string(ep->second->timestamp));

    auto cs = calib.find(sd.calibrated_sensor_token);
    if (cs == calib.end())
      add(LogErrorKind::Referential,
          row + " references missing calibrated_sensor '" + sd.calibrated_sensor_token + "'");
    else if (cs->second->sensor != sd.sensor)
      add(LogErrorKind::Referential, row + " sensor " + std::string(sensor_name(sd.sensor)) +
                                         " does not match calibrated_sensor '" + sd.calibrated_sensor_token + "'");

    if (!sd.sample_token.empty()) {
      if (!samples.count(sd.sample_token))
        add(LogErrorKind::Referential, row + " references missing sample '" + sd.sample_token + "'");
      else if (sd.sensor == SensorKind::CamFront && sd.is_key_frame)
        ++cam_rows_per_sample[sd.sample_token];
    }

    if (auto prev = last_by_sensor.find(sd.sensor); prev != last_by_sensor.end() && !(prev->second->timestamp < sd.timestamp))
      add(LogErrorKind::Ordering, std::string(sensor_name(sd.sensor)) + " timestamps not strictly increasing at " + row +
                                      " (" + std::to_string(sd.timestamp) + " after " +
                                      std::to_string(prev->second->timestamp) + ")");
    last_by_sensor[sd.sensor] = &sd;

    const std::size_t stride = blob_stride(sd.sensor);
    if (sd.sensor == SensorKind::CamFront) {
      if (!sd.filename.empty() || sd.num_points != 0)
        add(LogErrorKind::Blob, row + " is a camera trigger but carries a point payload");
      continue;
    }
    if (sd.filename.empty()) {
      add(LogErrorKind::Blob, row + " has no blob filename");
      continue;
    }
    auto blob = log.blobs.find(sd.filename);
    if (blob == log.blobs.end()) {
      add(LogErrorKind::Blob, row + " blob '" + sd.filename + "' is missing");
      continue;
    }
    const auto expected = static_cast<std::uint64_t>(sd.num_points) * stride;
    if (blob->second.size() != expected)
      add(LogErrorKind::Blob, row + " blob '" + sd.filename + "' expected " + std::to_string(expected) + " bytes (" +
                                  std::to_string(sd.num_points) + " points x " + std::to_string(stride) +
                                  "-byte stride), got " + std::to_string(blob->second.size()));
  }

  for (const auto& s : log.samples) {
    const int n = cam_rows_per_sample.count(s.token) ? cam_rows_per_sample[s.token] : 0;
    if (n != 1)
      add(LogErrorKind::Referential,
          "sample '" + s.token + "' has " + std::to_string(n) + " CAM_FRONT keyframe rows, expected 1");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Disk I/O

namespace detail {

inline void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw LogError(LogErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw LogError(LogErrorKind::Io, "write failed for '" + path.string() + "'");
}

inline void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LogError(LogErrorKind::Io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline json read_table(const fs::path& dir, std::string_view table) {
  const fs::path path = dir / (std::string(table) + ".json");
  if (!fs::exists(path))
    throw LogError(LogErrorKind::Schema, "missing table '" + std::string(table) + "' (" + path.string() + ")");
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw LogError(LogErrorKind::Parse, std::string(table) + ".json at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline const json& as_array(const json& j, std::string_view table) {
  if (!j.is_array()) throw LogError(LogErrorKind::Schema, "table '" + std::string(table) + "' must be a JSON array");
  return j;
}

inline std::string dump(const json& j) { return j.dump(1) + "\n"; }

}  // namespace detail

inline void save_log(const CaptureLog& log, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "blobs", ec);
  if (ec) throw LogError(LogErrorKind::Io, "cannot create '" + (dir / "blobs").string() + "': " + ec.message());

  detail::write_text(dir / "scenario.json", detail::dump(scenario_json(log.scenario, log.sensors)));

  json samples = json::array();
  for (const auto& s : log.samples)
    samples.push_back({{"token", s.token}, {"timestamp", s.timestamp}, {"prev", s.prev}, {"next", s.next}});
  detail::write_text(dir / "sample.json", detail::dump(samples));

  json sample_data = json::array();
  for (const auto& sd : log.sample_data)
    sample_data.push_back({{"token", sd.token},
                           {"sample_token", sd.sample_token},
                           {"sensor", sensor_name(sd.sensor)},
                           {"timestamp", sd.timestamp},
                           {"ego_pose_token", sd.ego_pose_token},
                           {"calibrated_sensor_token", sd.calibrated_sensor_token},
                           {"is_key_frame", sd.is_key_frame},
                           {"filename", sd.filename},
                           {"num_points", sd.num_points}});
  detail::write_text(dir / "sample_data.json", detail::dump(sample_data));

  json poses = json::array();
  for (const auto& p : log.ego_poses)
    poses.push_back({{"token", p.token}, {"timestamp", p.timestamp}, {"rotation", p.rotation}, {"translation", p.translation}});
  detail::write_text(dir / "ego_pose.json", detail::dump(poses));

  json calib = json::array();
  for (const auto& c : log.calibrated_sensors)
    calib.push_back({{"token", c.token}, {"sensor", sensor_name(c.sensor)}, {"rotation", c.rotation}, {"translation", c.translation}});
  detail::write_text(dir / "calibrated_sensor.json", detail::dump(calib));

  for (const auto& [name, bytes] : log.blobs) detail::write_file(dir / name, bytes);
}

inline CaptureLog write_log(std::span<const CaptureRecord> records, const Scenario& scenario,
                            const SensorConfig& sensors, const fs::path& dir) {
  CaptureLog log = make_log(records, scenario, sensors);
  save_log(log, dir);
  return log;
}

/// Parses the tables and loads every referenced blob that exists, without
/// checking cross-table invariants (see validate_log).
inline CaptureLog load_log(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LogError(LogErrorKind::Io, "log directory '" + dir.string() + "' does not exist");
  CaptureLog log;

  // Presence of every table is checked before any is parsed.
  for (auto t : {"scenario", "sample", "sample_data", "ego_pose", "calibrated_sensor"})
    if (!fs::exists(dir / (std::string(t) + ".json")))
      throw LogError(LogErrorKind::Schema, "missing table '" + std::string(t) + "' (" + (dir / (std::string(t) + ".json")).string() + ")");

  std::tie(log.scenario, log.sensors) = scenario_from_json(detail::read_table(dir, "scenario"));

  auto sensor_of = [](const detail::RowReader& r) {
    const auto name = r.get<std::string>("sensor");
    try {
      return parse_sensor(name);
    } catch (const ConfigError&) {
      r.fail("sensor", "unknown sensor '" + name + "'");
    }
  };

  const json samples = detail::read_table(dir, "sample");
  for (std::size_t i = 0; i < detail::as_array(samples, "sample").size(); ++i) {
    detail::RowReader r(samples[i], "sample", i);
    log.samples.push_back(
        {r.get<std::string>("token"), r.get<std::int64_t>("timestamp"), r.get<std::string>("prev"), r.get<std::string>("next")});
  }

  const json sample_data = detail::read_table(dir, "sample_data");
  for (std::size_t i = 0; i < detail::as_array(sample_data, "sample_data").size(); ++i) {
    detail::RowReader r(sample_data[i], "sample_data", i);
    SampleDataRow sd;
    sd.token = r.get<std::string>("token");
    sd.sample_token = r.get<std::string>("sample_token");
    sd.sensor = sensor_of(r);
    sd.timestamp = r.get<std::int64_t>("timestamp");
    if (sd.timestamp < 0) r.fail("timestamp", "must be non-negative");
    sd.ego_pose_token = r.get<std::string>("ego_pose_token");
    sd.calibrated_sensor_token = r.get<std::string>("calibrated_sensor_token");
    sd.is_key_frame = r.get<bool>("is_key_frame");
    sd.filename = r.get<std::string>("filename");
    sd.num_points = r.get<std::int64_t>("num_points");
    if (sd.num_points < 0) r.fail("num_points", "must be non-negative");
    if (sd.filename.find("..") != std::string::npos || fs::path(sd.filename).is_absolute())
      r.fail("filename", "must be a relative path inside the log directory");
    log.sample_data.push_back(std::move(sd));
  }

  const json poses = detail::read_table(dir, "ego_pose");
  for (std::size_t i = 0; i < detail::as_array(poses, "ego_pose").size(); ++i) {
    detail::RowReader r(poses[i], "ego_pose", i);
    log.ego_poses.push_back({r.get<std::string>("token"), r.get<std::int64_t>("timestamp"), r.numbers<4>("rotation"),
                             r.numbers<3>("translation")});
  }

  const json calib = detail::read_table(dir, "calibrated_sensor");
  for (std::size_t i = 0; i < detail::as_array(calib, "calibrated_sensor").size(); ++i) {
    detail::RowReader r(calib[i], "calibrated_sensor", i);
    log.calibrated_sensors.push_back(
        {r.get<std::string>("token"), sensor_of(r), r.numbers<4>("rotation"), r.numbers<3>("translation")});
  }

  for (const auto& sd : log.sample_data) {
    if (sd.filename.empty()) continue;
    const fs::path p = dir / sd.filename;
    if (fs::is_regular_file(p)) log.blobs[sd.filename] = detail::read_file(p);
  }
  return log;
}

/// load_log + validate_log; the first violation is raised as a LogError.
inline CaptureLog read_log(const fs::path& dir) {
  CaptureLog log = load_log(dir);
  const auto violations = validate_log(log);
  if (!violations.empty()) throw LogError(violations.front());
  return log;
}

/// Decodes a validated log into ego-frame records (extrinsics applied).
inline Recording to_recording(const CaptureLog& log) {
  std::map<std::string, const EgoPoseRow*> poses;
  for (const auto& p : log.ego_poses) poses[p.token] = &p;
  std::map<std::string, const CalibratedSensorRow*> calib;
  for (const auto& c : log.calibrated_sensors) calib[c.token] = &c;

  Recording rec{log.scenario, log.sensors, {}};
  for (const auto& sd : log.sample_data) {
    const auto pose_it = poses.find(sd.ego_pose_token);
    const auto calib_it = calib.find(sd.calibrated_sensor_token);
    if (pose_it == poses.end() || calib_it == calib.end())
      throw LogError(LogErrorKind::Referential, "sample_data '" + sd.token + "' has unresolved references");
    const auto& ep = *pose_it->second;
    const auto& cs = *calib_it->second;

    CaptureRecord r;
    r.sensor = sd.sensor;
    r.timestamp = Timestamp(sd.timestamp);
    r.ego_pose = {detail::to_rotation(ep.rotation), detail::to_point(ep.translation)};
    r.key_frame = sd.is_key_frame;

    const Pose extrinsic{detail::to_rotation(cs.rotation), detail::to_point(cs.translation)};
    const bool identity = extrinsic == Pose::identity();
    if (sd.sensor != SensorKind::CamFront) {
      const auto blob = log.blobs.find(sd.filename);
      if (blob == log.blobs.end()) throw LogError(LogErrorKind::Blob, "sample_data '" + sd.token + "' blob missing");
      if (sd.sensor == SensorKind::Radar) {
        r.radar_points = decode_radar(blob->second);
        if (!identity)
          for (auto& p : r.radar_points) {
            p.position = apply(extrinsic, p.position);
            p.velocity = rotate_planar(extrinsic.rotation, p.velocity);
          }
      } else {
        r.lidar_points = decode_lidar(blob->second);
        if (!identity)
          for (auto& p : r.lidar_points) p.position = apply(extrinsic, p.position);
      }
    }
    rec.records.push_back(std::move(r));
  }
  std::stable_sort(rec.records.begin(), rec.records.end(),
                   [](const CaptureRecord& a, const CaptureRecord& b) { return a.timestamp < b.timestamp; });
  return rec;
}

inline Recording read_recording(const fs::path& dir) { return to_recording(read_log(dir)); }

}  // namespace asyncbev
