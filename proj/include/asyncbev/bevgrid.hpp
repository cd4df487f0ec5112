#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "asyncbev/errors.hpp"
#include "asyncbev/frames.hpp"
#include "asyncbev/grid.hpp"
#include "asyncbev/random.hpp"
#include "asyncbev/sensors.hpp"
#include "asyncbev/worldsim.hpp"

namespace asyncbev {

/// Point counts per voxel. Points outside the x/y/z extent are dropped.
inline VoxelGrid rasterize_points(std::span<const Point3> points, const GridSpec& spec) {
  spec.validate();
  VoxelGrid v(spec);
  for (const auto& p : points) {
    const auto ix = detail::bin(p.x, -spec.half(), spec.cell_x(), spec.cells_x);
    const auto iy = detail::bin(p.y, -spec.half(), spec.cell_y(), spec.cells_y);
    const auto iz = detail::bin(p.z, spec.z_min, spec.cell_z(), spec.cells_z);
    if (ix && iy && iz) ++v.at(*ix, *iy, *iz);
  }
  return v;
}

inline VoxelGrid rasterize_points(std::span<const RadarPoint> points, const GridSpec& spec) {
  std::vector<Point3> pos;
  pos.reserve(points.size());
  for (const auto& p : points) pos.push_back(p.position);
  return rasterize_points(std::span<const Point3>(pos), spec);
}

inline VoxelGrid rasterize_points(std::span<const LidarPoint> points, const GridSpec& spec) {
  std::vector<Point3> pos;
  pos.reserve(points.size());
  for (const auto& p : points) pos.push_back(p.position);
  return rasterize_points(std::span<const Point3>(pos), spec);
}

// Sum over z.
inline BevGrid flatten(const VoxelGrid& v) {
  BevGrid b(v.spec);
  for (int ix = 0; ix < v.spec.cells_x; ++ix)
    for (int iy = 0; iy < v.spec.cells_y; ++iy) {
      std::uint32_t s = 0;
      for (int iz = 0; iz < v.spec.cells_z; ++iz) s += v.at(ix, iy, iz);
      b.at(ix, iy) = s;
    }
  return b;
}

/// Per-agent displacement (meters, along the ego->agent ray) drawn for the
/// pseudo camera at time t. Zero-mean normal with std sigma * range.
inline std::vector<double> camera_displacements(const Scenario& s, Timestamp t, double sigma_per_meter,
                                                std::uint64_t seed) {
  const auto fps = agent_footprints_at(s, t);
  std::vector<double> out;
  out.reserve(fps.size());
  for (std::size_t i = 0; i < fps.size(); ++i) {
    const double range = std::hypot(fps[i].cx, fps[i].cy);
    Rng rng(derive_seed(seed, {0xCA3E7AULL, static_cast<std::uint64_t>(t.micros()),
                               static_cast<std::uint64_t>(s.agents[i].id)}));
    out.push_back(sigma_per_meter > 0 ? rng.normal(0.0, sigma_per_meter * range) : 0.0);
  }
  return out;
}

/// Stand-in for a monocular camera branch: ground-truth footprints pushed
/// along their viewing ray by a range-proportional depth error.
inline BevGrid camera_pseudo_occupancy(const Scenario& s, Timestamp t, const GridSpec& spec,
                                       double sigma_per_meter, std::uint64_t seed) {
  spec.validate();
  auto fps = agent_footprints_at(s, t);
  const auto shift = camera_displacements(s, t, sigma_per_meter, seed);
  BevGrid grid(spec);
  for (std::size_t i = 0; i < fps.size(); ++i) {
    auto fp = fps[i];
    const double range = std::hypot(fp.cx, fp.cy);
    if (range > 0) {
      fp.cx += shift[i] * fp.cx / range;
      fp.cy += shift[i] * fp.cy / range;
    }
    stamp_footprint(grid, fp);
  }
  return grid;
}

// Binary dilation of the nonzero support by a disc (dx^2 + dy^2 <= r^2).
inline BevGrid dilate(const BevGrid& in, int radius) {
  if (radius < 0) throw ConfigError("dilation radius must be non-negative");
  BevGrid out(in.spec);
  std::vector<std::pair<int, int>> disc;
  for (int dx = -radius; dx <= radius; ++dx)
    for (int dy = -radius; dy <= radius; ++dy)
      if (dx * dx + dy * dy <= radius * radius) disc.emplace_back(dx, dy);
  for (int ix = 0; ix < in.spec.cells_x; ++ix)
    for (int iy = 0; iy < in.spec.cells_y; ++iy) {
      if (in.at(ix, iy) == 0) continue;
      for (auto [dx, dy] : disc)
        if (out.in_bounds(ix + dx, iy + dy)) out.at(ix + dx, iy + dy) = 1;
    }
  return out;
}

/// Fusion head: dilated point support united with the camera support.
inline BevGrid predict_segmentation(const BevGrid& point_bev, const BevGrid& camera_bev, int dilation_radius_cells) {
  require_same_spec(point_bev.spec, camera_bev.spec, "predict_segmentation");
  BevGrid out = dilate(point_bev, dilation_radius_cells);
  for (std::size_t i = 0; i < out.cells.size(); ++i)
    if (camera_bev.cells[i] != 0) out.cells[i] = 1;
  return out;
}

/// Binary PGM (P5), one pixel per cell, +x up and +y left. Values are
/// scaled so the grid maximum maps to 255.
inline void write_pgm(const BevGrid& g, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const auto max = g.cells.empty() ? 0u : *std::max_element(g.cells.begin(), g.cells.end());
  os << "P5\n" << g.spec.cells_y << ' ' << g.spec.cells_x << "\n255\n";
  for (int row = 0; row < g.spec.cells_x; ++row)
    for (int col = 0; col < g.spec.cells_y; ++col) {
      const auto v = g.at(g.spec.cells_x - 1 - row, g.spec.cells_y - 1 - col);
      const auto px = max == 0 ? 0u : static_cast<unsigned>((static_cast<std::uint64_t>(v) * 255) / max);
      os.put(static_cast<char>(px));
    }
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace asyncbev
