#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "asyncbev/errors.hpp"
#include "asyncbev/frames.hpp"
#include "asyncbev/grid.hpp"
#include "asyncbev/random.hpp"

namespace asyncbev {

struct Dims {
  double length = 4.5;
  double width = 1.9;
  double height = 1.6;
  bool operator==(const Dims&) const = default;
};

inline constexpr double kMaxAgentSpeed = 40.0;

/// Vehicle state in the global frame. center.z is the box center height.
struct AgentState {
  int id = 0;
  Point3 center;
  double yaw = 0.0;
  Dims dims;
  Vec2 velocity;  // global, planar
  double yaw_rate = 0.0;

  bool operator==(const AgentState&) const = default;

  void validate() const {
    if (!(dims.length > 0 && dims.width > 0 && dims.height > 0)) throw ConfigError("agent dims must be positive");
    if (!(velocity.norm() <= kMaxAgentSpeed)) throw ConfigError("agent speed exceeds 40 m/s");
    if (!center.finite() || !std::isfinite(yaw) || !std::isfinite(yaw_rate)) throw ConfigError("agent state not finite");
  }

  Footprint footprint() const { return {center.x, center.y, yaw, dims.length, dims.width}; }
};

/// Constant turn rate and velocity propagation by dt seconds. The velocity
/// vector rotates with the yaw; yaw_rate == 0 is exact linear motion.
inline AgentState propagate(const AgentState& a, double dt) {
  AgentState out = a;
  const double w = a.yaw_rate;
  if (w == 0.0) {
    out.center.x = a.center.x + a.velocity.x * dt;
    out.center.y = a.center.y + a.velocity.y * dt;
    return out;
  }
  const double s = std::sin(w * dt), c = std::cos(w * dt);
  // integral of R(w*tau) * v over [0, dt]
  const double a11 = s / w, a12 = -(1.0 - c) / w;
  out.center.x = a.center.x + a11 * a.velocity.x + a12 * a.velocity.y;
  out.center.y = a.center.y - a12 * a.velocity.x + a11 * a.velocity.y;
  out.velocity = {c * a.velocity.x - s * a.velocity.y, s * a.velocity.x + c * a.velocity.y};
  out.yaw = a.yaw + w * dt;
  return out;
}

struct Waypoint {
  Timestamp t;
  Pose pose;  // ego-to-global
  bool operator==(const Waypoint&) const = default;
};

/// Time-ordered ego-to-global samples, interpolated linearly (translation)
/// and spherically (rotation).
class EgoTrajectory {
 public:
  static constexpr double kMaxStep = 2.0;  // meters between consecutive waypoints

  EgoTrajectory() = default;
  explicit EgoTrajectory(std::vector<Waypoint> waypoints) : waypoints_(std::move(waypoints)) {
    if (waypoints_.empty()) throw ConfigError("ego trajectory needs at least one waypoint");
    for (std::size_t i = 1; i < waypoints_.size(); ++i) {
      if (!(waypoints_[i - 1].t < waypoints_[i].t))
        throw ConfigError("ego trajectory timestamps must strictly increase");
      if (distance(waypoints_[i - 1].pose.translation, waypoints_[i].pose.translation) > kMaxStep)
        throw ConfigError("ego trajectory waypoints more than 2 m apart");
    }
  }

  const std::vector<Waypoint>& waypoints() const { return waypoints_; }
  Timestamp start() const { return waypoints_.front().t; }
  Timestamp end() const { return waypoints_.back().t; }

  bool operator==(const EgoTrajectory&) const = default;

 private:
  std::vector<Waypoint> waypoints_;
};

inline Pose ego_pose_at(const EgoTrajectory& traj, Timestamp t) {
  const auto& w = traj.waypoints();
  if (w.empty() || t < traj.start() || t > traj.end())
    throw RangeError("ego_pose_at: t=" + std::to_string(t.micros()) + "us outside trajectory");
  auto hi = std::lower_bound(w.begin(), w.end(), t, [](const Waypoint& a, Timestamp b) { return a.t < b; });
  if (hi->t == t) return hi->pose;
  auto lo = hi - 1;
  const double f = static_cast<double>((t - lo->t).count()) / static_cast<double>((hi->t - lo->t).count());
  const Point3& a = lo->pose.translation;
  const Point3& b = hi->pose.translation;
  return {lo->pose.rotation.slerp(hi->pose.rotation, f),
          {a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f, a.z + (b.z - a.z) * f}};
}

struct Scenario {
  std::uint64_t seed = 0;
  Duration duration{0};
  std::vector<AgentState> agents;  // states at t = 0
  EgoTrajectory ego;
  double bounds = 200.0;  // square half-extent, meters

  bool operator==(const Scenario&) const = default;

  Timestamp end() const { return Timestamp(duration.count()); }

  void validate(Duration keyframe_period = Duration(500000)) const {
    if (duration < 2 * keyframe_period) throw ConfigError("scenario shorter than two keyframe periods");
    if (ego.waypoints().empty() || ego.start() > Timestamp(0) || ego.end() < end())
      throw ConfigError("ego trajectory does not cover the scenario duration");
    for (const auto& a : agents) {
      a.validate();
      if (std::abs(a.center.x) > bounds || std::abs(a.center.y) > bounds)
        throw ConfigError("agent " + std::to_string(a.id) + " starts outside scenario bounds");
    }
  }
};

inline void require_in_range(const Scenario& s, Timestamp t, const char* op) {
  if (t > s.end())
    throw RangeError(std::string(op) + ": t=" + std::to_string(t.micros()) + "us beyond scenario duration");
}

inline AgentState agent_state_at(const Scenario& s, const AgentState& agent, Timestamp t) {
  require_in_range(s, t, "agent_state_at");
  return propagate(agent, t.seconds());
}

inline Pose ego_pose_at(const Scenario& s, Timestamp t) {
  require_in_range(s, t, "ego_pose_at");
  return ego_pose_at(s.ego, t);
}

// Footprint of a global-frame agent re-expressed in an ego frame.
inline Footprint footprint_in_frame(const AgentState& a, const Pose& ego) {
  const Pose to_ego = invert(ego);
  const Point3 c = apply(to_ego, a.center);
  const Eigen::Vector3d heading = to_ego.rotation.rotate(Eigen::Vector3d(std::cos(a.yaw), std::sin(a.yaw), 0.0));
  return {c.x, c.y, std::atan2(heading.y(), heading.x()), a.dims.length, a.dims.width};
}

inline std::vector<Footprint> agent_footprints_at(const Scenario& s, Timestamp t) {
  const Pose ego = ego_pose_at(s, t);
  std::vector<Footprint> out;
  out.reserve(s.agents.size());
  for (const auto& a : s.agents) out.push_back(footprint_in_frame(agent_state_at(s, a, t), ego));
  return out;
}

/// Ground-truth vehicle occupancy in the ego frame at t.
inline BevGrid gt_bev_at(const Scenario& s, Timestamp t, const GridSpec& spec) {
  BevGrid grid(spec);
  for (const auto& fp : agent_footprints_at(s, t)) stamp_footprint(grid, fp);
  return grid;
}

/// Knobs for the seeded traffic generator.
struct ScenarioParams {
  std::uint64_t seed = 7;
  double duration_s = 20.0;
  int agent_count = 12;
  double bounds = 200.0;
  double ego_speed = 7.5;            // m/s along global +x
  double ego_weave_amplitude = 2.0;  // lateral sinusoid, meters
  double ego_weave_period_s = 10.0;
  double agent_speed_min = 0.0;
  double agent_speed_max = 15.0;
  double agent_yaw_rate_max = 0.0;  // |yaw_rate| drawn uniformly up to this
  double spread = 40.0;             // longitudinal half-spread around the ego at mid-scenario
  double waypoint_step_s = 0.1;
};

inline EgoTrajectory make_weaving_trajectory(const ScenarioParams& p) {
  const auto total = static_cast<std::int64_t>(std::llround(p.duration_s * 1e6));
  const auto step = static_cast<std::int64_t>(std::llround(p.waypoint_step_s * 1e6));
  if (step <= 0) throw ConfigError("waypoint step must be positive");
  const double omega = 2.0 * std::numbers::pi / p.ego_weave_period_s;
  std::vector<Waypoint> w;
  for (std::int64_t us = 0;; us += step) {
    const std::int64_t t = std::min(us, total);
    const double ts = static_cast<double>(t) * 1e-6;
    const double x = p.ego_speed * ts;
    const double y = p.ego_weave_amplitude * std::sin(omega * ts);
    const double dy = p.ego_weave_amplitude * omega * std::cos(omega * ts);
    const double yaw = (p.ego_speed == 0.0 && dy == 0.0) ? 0.0 : std::atan2(dy, p.ego_speed);
    w.push_back({Timestamp(t), Pose::planar(x, y, yaw)});
    if (t == total) break;
  }
  return EgoTrajectory(std::move(w));
}

/// Seeded traffic: agents on lanes parallel to the ego path heading +x,
/// placed so that they surround the ego around mid-scenario.
inline Scenario generate_scenario(const ScenarioParams& p) {
  if (p.agent_count < 0) throw ConfigError("agent count must be non-negative");
  if (!(p.duration_s > 0)) throw ConfigError("duration must be positive");
  if (!(p.agent_speed_min >= 0 && p.agent_speed_max >= p.agent_speed_min && p.agent_speed_max <= kMaxAgentSpeed))
    throw ConfigError("agent speed range invalid");

  Scenario s;
  s.seed = p.seed;
  s.duration = Duration(std::llround(p.duration_s * 1e6));
  s.bounds = p.bounds;
  s.ego = make_weaving_trajectory(p);

  static constexpr std::array<double, 6> kLanes{-10.5, -7.0, -3.5, 3.5, 7.0, 10.5};
  const double t_mid = p.duration_s / 2.0;
  const double ego_mid = p.ego_speed * t_mid;

  Rng rng(derive_seed(p.seed, {0x5CE7A210ULL}));
  struct Slot { double lane; double u; };
  std::vector<Slot> taken;
  for (int id = 0; id < p.agent_count; ++id) {
    AgentState a;
    a.id = id;
    a.dims = {rng.uniform(4.0, 5.0), rng.uniform(1.8, 2.1), rng.uniform(1.5, 1.8)};
    const double speed = rng.uniform(p.agent_speed_min, p.agent_speed_max);
    a.yaw_rate = p.agent_yaw_rate_max > 0 ? rng.uniform(-p.agent_yaw_rate_max, p.agent_yaw_rate_max) : 0.0;

    double lane = 0, u = 0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      lane = kLanes[rng.next_u64() % kLanes.size()];
      u = rng.uniform(-p.spread, p.spread);
      const bool clash = std::any_of(taken.begin(), taken.end(),
                                     [&](const Slot& o) { return o.lane == lane && std::abs(o.u - u) < 6.0; });
      if (!clash) break;
    }
    taken.push_back({lane, u});

    a.center = {ego_mid + u - speed * t_mid, lane, a.dims.height / 2.0};
    a.velocity = {speed, 0.0};
    s.agents.push_back(a);
  }
  s.validate();
  return s;
}

}  // namespace asyncbev
