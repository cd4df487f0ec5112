#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "asyncbev/errors.hpp"
#include "asyncbev/eval.hpp"
#include "asyncbev/grid.hpp"
#include "asyncbev/sensors.hpp"
#include "asyncbev/worldsim.hpp"

namespace asyncbev {

/// Everything a pipeline run needs besides file paths. Populated from
/// defaults, then a key=value config file, then command-line settings.
struct RunConfig {
  ScenarioParams scenario;
  SensorConfig sensors;
  SweepParams sweep;
  Ladders ladders;

  void validate() const {
    if (!(scenario.duration_s > 0)) throw ConfigError("duration_s must be positive");
    if (scenario.agent_count < 0) throw ConfigError("agents must be non-negative");
    if (!(scenario.bounds > 0)) throw ConfigError("bounds_m must be positive");
    if (scenario.agent_speed_min < 0 || scenario.agent_speed_max < scenario.agent_speed_min)
      throw ConfigError("agent speed range must satisfy 0 <= min <= max");
    if (scenario.agent_speed_max > kMaxAgentSpeed) throw ConfigError("agent_speed_max exceeds the supported maximum");
    if (!(scenario.ego_weave_period_s > 0)) throw ConfigError("ego_weave_period_s must be positive");
    sensors.validate();
    sweep.grid.validate();
    if (sweep.dilation_radius < 0) throw ConfigError("dilation_radius must be non-negative");
    if (!(sweep.camera_sigma_per_m >= 0)) throw ConfigError("camera_sigma_per_m must be non-negative");
    if (sweep.jobs < 1) throw ConfigError("jobs must be at least 1");
    detail::check_ladder(ladders.radar, "radar");
    detail::check_ladder(ladders.lidar, "lidar");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError("'" + std::string(key) + "': cannot parse '" + std::string(text) + "' as a number");
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ConfigError("'" + std::string(key) + "': expected true/false, got '" + std::string(text) + "'");
}

// Comma-separated milliseconds -> microseconds.
inline std::vector<std::int64_t> parse_ladder_ms(std::string_view key, std::string_view text) {
  std::vector<std::int64_t> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = text.find(',', start);
    const auto item = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    out.push_back(parse_number<std::int64_t>(key, item) * 1000);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

template <typename T, typename Field>
Setter number(Field field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { field(c) = parse_number<T>(k, v); };
}

inline const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"seed", number<std::uint64_t>([](RunConfig& c) -> auto& { return c.scenario.seed; })},
      {"duration_s", number<double>([](RunConfig& c) -> auto& { return c.scenario.duration_s; })},
      {"agents", number<int>([](RunConfig& c) -> auto& { return c.scenario.agent_count; })},
      {"bounds_m", number<double>([](RunConfig& c) -> auto& { return c.scenario.bounds; })},
      {"ego_speed", number<double>([](RunConfig& c) -> auto& { return c.scenario.ego_speed; })},
      {"ego_weave_amplitude", number<double>([](RunConfig& c) -> auto& { return c.scenario.ego_weave_amplitude; })},
      {"ego_weave_period_s", number<double>([](RunConfig& c) -> auto& { return c.scenario.ego_weave_period_s; })},
      {"agent_speed_min", number<double>([](RunConfig& c) -> auto& { return c.scenario.agent_speed_min; })},
      {"agent_speed_max", number<double>([](RunConfig& c) -> auto& { return c.scenario.agent_speed_max; })},
      {"agent_yaw_rate_max", number<double>([](RunConfig& c) -> auto& { return c.scenario.agent_yaw_rate_max; })},
      {"lidar_rate_hz", number<double>([](RunConfig& c) -> auto& { return c.sensors.lidar_rate; })},
      {"radar_rate_hz", number<double>([](RunConfig& c) -> auto& { return c.sensors.radar_rate; })},
      {"keyframe_rate_hz", number<double>([](RunConfig& c) -> auto& { return c.sensors.keyframe_rate; })},
      {"radar_jitter_us", number<std::int64_t>([](RunConfig& c) -> auto& { return c.sensors.radar_phase_jitter_us; })},
      {"radar_phase_offset_us", number<std::int64_t>([](RunConfig& c) -> auto& { return c.sensors.radar_phase_offset_us; })},
      {"cam_front_offset_us", number<std::int64_t>([](RunConfig& c) -> auto& { return c.sensors.cam_front_offset_us; })},
      {"lidar_points_per_agent", number<int>([](RunConfig& c) -> auto& { return c.sensors.lidar_points_per_agent; })},
      {"radar_points_per_agent", number<int>([](RunConfig& c) -> auto& { return c.sensors.radar_points_per_agent; })},
      {"clutter_points", number<int>([](RunConfig& c) -> auto& { return c.sensors.clutter_points_per_sweep; })},
      {"position_noise_m", number<double>([](RunConfig& c) -> auto& { return c.sensors.position_noise_sigma; })},
      {"velocity_noise_mps", number<double>([](RunConfig& c) -> auto& { return c.sensors.radar_velocity_noise_bound; })},
      {"max_range_m", number<double>([](RunConfig& c) -> auto& { return c.sensors.max_range; })},
      {"grid_cells_x", number<int>([](RunConfig& c) -> auto& { return c.sweep.grid.cells_x; })},
      {"grid_cells_y", number<int>([](RunConfig& c) -> auto& { return c.sweep.grid.cells_y; })},
      {"grid_cells_z", number<int>([](RunConfig& c) -> auto& { return c.sweep.grid.cells_z; })},
      {"grid_extent_m", number<double>([](RunConfig& c) -> auto& { return c.sweep.grid.extent; })},
      {"grid_z_min", number<double>([](RunConfig& c) -> auto& { return c.sweep.grid.z_min; })},
      {"grid_z_max", number<double>([](RunConfig& c) -> auto& { return c.sweep.grid.z_max; })},
      {"dilation_radius", number<int>([](RunConfig& c) -> auto& { return c.sweep.dilation_radius; })},
      {"camera_sigma_per_m", number<double>([](RunConfig& c) -> auto& { return c.sweep.camera_sigma_per_m; })},
      {"camera_seed",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.sweep.seed = parse_number<std::uint64_t>(k, v); }},
      {"jobs", number<unsigned>([](RunConfig& c) -> auto& { return c.sweep.jobs; })},
      {"radar_ladder_ms",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.ladders.radar = parse_ladder_ms(k, v); }},
      {"lidar_ladder_ms",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.ladders.lidar = parse_ladder_ms(k, v); }},
  };
  return table;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : detail::setters()) out.push_back(k);
  return out;
}

inline void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  const auto it = detail::setters().find(key);
  if (it == detail::setters().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(c, key, detail::trim(value));
}

/// "key=value" form used by --set.
inline void apply_assignment(RunConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  apply_setting(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// Applies a config file: one `key = value` per line, `#` starts a comment,
/// blank lines ignored. Later lines win. Errors name the line.
inline void apply_config_text(RunConfig& c, std::string_view text, std::string_view origin = "config") {
  std::istringstream is{std::string(text)};
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    try {
      apply_assignment(c, line);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  apply_config_text(c, ss.str(), path.string());
}

/// ASYNCBEV_JOBS, when set, replaces whatever the config file said about
/// jobs; an explicit --jobs flag is applied afterwards and wins.
inline void apply_jobs_env(RunConfig& c, const char* env_value) {
  if (env_value == nullptr || *env_value == '\0') return;
  try {
    c.sweep.jobs = detail::parse_number<unsigned>("ASYNCBEV_JOBS", detail::trim(env_value));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("environment: ") + e.what());
  }
}

}  // namespace asyncbev
