#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "asyncbev/frames.hpp"
#include "asyncbev/random.hpp"

namespace asyncbev::testing {

// Hand-rolled generators for property tests. Each property seeds its own Rng
// so failures reproduce from the printed case index.

inline Rotation random_rotation(Rng& rng) {
  const Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  const double angle = rng.uniform(-std::numbers::pi, std::numbers::pi);
  return axis.norm() < 1e-9 ? Rotation::identity() : Rotation::about_axis(axis.normalized(), angle);
}

inline Point3 random_point(Rng& rng, double radius) {
  return {rng.uniform(-radius, radius), rng.uniform(-radius, radius), rng.uniform(-radius, radius)};
}

inline Pose random_pose(Rng& rng, double radius = 100.0) { return {random_rotation(rng), random_point(rng, radius)}; }

inline Pose random_planar_pose(Rng& rng, double radius = 100.0) {
  return Pose::planar(rng.uniform(-radius, radius), rng.uniform(-radius, radius),
                      rng.uniform(-std::numbers::pi, std::numbers::pi));
}

inline std::vector<Point3> random_points(Rng& rng, std::size_t n, double radius) {
  std::vector<Point3> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_point(rng, radius));
  return out;
}

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("asyncbev_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace asyncbev::testing
