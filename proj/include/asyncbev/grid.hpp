#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "asyncbev/errors.hpp"

namespace asyncbev {

/// Geometry of the voxel / BEV raster, centered on the reference ego frame.
/// Cell (ix, iy) spans x in [-extent/2 + ix*cell_x, ...), likewise for y.
struct GridSpec {
  int cells_x = 200;
  int cells_y = 200;
  int cells_z = 8;
  double extent = 100.0;  // meters per side
  double z_min = -5.0;
  double z_max = 3.0;

  bool operator==(const GridSpec&) const = default;

  double cell_x() const { return extent / cells_x; }
  double cell_y() const { return extent / cells_y; }
  double cell_z() const { return (z_max - z_min) / cells_z; }
  double cell_area() const { return cell_x() * cell_y(); }
  double half() const { return extent / 2.0; }

  double center_x(int ix) const { return -half() + (ix + 0.5) * cell_x(); }
  double center_y(int iy) const { return -half() + (iy + 0.5) * cell_y(); }

  void validate() const {
    if (cells_x <= 0 || cells_y <= 0 || cells_z <= 0) throw ConfigError("grid cell counts must be positive");
    if (!(extent > 0.0) || !std::isfinite(extent)) throw ConfigError("grid extent must be positive");
    if (!(z_max > z_min)) throw ConfigError("grid z_max must exceed z_min");
  }
};

namespace detail {

// Floor binning of v over [lo, lo + n*step]; a value exactly on the upper
// edge belongs to the last cell. Returns nullopt outside the extent.
inline std::optional<int> bin(double v, double lo, double step, int n) {
  const double hi = lo + n * step;
  if (!(v >= lo) || !(v <= hi)) return std::nullopt;
  int i = static_cast<int>(std::floor((v - lo) / step));
  return std::clamp(i, 0, n - 1);
}

}  // namespace detail

/// Dense 200x200x8 (by default) count raster.
struct VoxelGrid {
  GridSpec spec;
  std::vector<std::uint32_t> counts;

  VoxelGrid() : VoxelGrid(GridSpec{}) {}
  explicit VoxelGrid(const GridSpec& s)
      : spec(s), counts(static_cast<std::size_t>(s.cells_x) * s.cells_y * s.cells_z, 0) {}

  std::size_t index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(ix) * spec.cells_y + iy) * spec.cells_z + iz;
  }
  std::uint32_t& at(int ix, int iy, int iz) { return counts[index(ix, iy, iz)]; }
  std::uint32_t at(int ix, int iy, int iz) const { return counts[index(ix, iy, iz)]; }

  std::uint64_t total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

  bool operator==(const VoxelGrid&) const = default;
};

/// Dense 2D raster. Holds either point counts (features) or {0,1} masks.
struct BevGrid {
  GridSpec spec;
  std::vector<std::uint32_t> cells;

  BevGrid() : BevGrid(GridSpec{}) {}
  explicit BevGrid(const GridSpec& s) : spec(s), cells(static_cast<std::size_t>(s.cells_x) * s.cells_y, 0) {}

  std::size_t index(int ix, int iy) const { return static_cast<std::size_t>(ix) * spec.cells_y + iy; }
  std::uint32_t& at(int ix, int iy) { return cells[index(ix, iy)]; }
  std::uint32_t at(int ix, int iy) const { return cells[index(ix, iy)]; }
  bool in_bounds(int ix, int iy) const { return ix >= 0 && iy >= 0 && ix < spec.cells_x && iy < spec.cells_y; }

  std::uint64_t total() const { return std::accumulate(cells.begin(), cells.end(), std::uint64_t{0}); }
  std::size_t occupied() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](auto v) { return v != 0; }));
  }
  bool is_binary() const {
    return std::all_of(cells.begin(), cells.end(), [](auto v) { return v <= 1; });
  }

  bool operator==(const BevGrid&) const = default;
};

/// Oriented rectangle in the xy plane of some frame.
struct Footprint {
  double cx = 0.0;
  double cy = 0.0;
  double yaw = 0.0;
  double length = 0.0;  // along heading
  double width = 0.0;

  bool contains(double x, double y) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = x - cx, dy = y - cy;
    const double along = dx * c + dy * s;
    const double across = -dx * s + dy * c;
    return std::abs(along) <= length / 2.0 && std::abs(across) <= width / 2.0;
  }
};

// Sets every cell whose center lies inside the footprint to 1.
inline void stamp_footprint(BevGrid& grid, const Footprint& fp) {
  const auto& s = grid.spec;
  const double r = 0.5 * std::hypot(fp.length, fp.width);
  const int ix0 = std::max(0, static_cast<int>(std::floor((fp.cx - r + s.half()) / s.cell_x())) - 1);
  const int ix1 = std::min(s.cells_x - 1, static_cast<int>(std::floor((fp.cx + r + s.half()) / s.cell_x())) + 1);
  const int iy0 = std::max(0, static_cast<int>(std::floor((fp.cy - r + s.half()) / s.cell_y())) - 1);
  const int iy1 = std::min(s.cells_y - 1, static_cast<int>(std::floor((fp.cy + r + s.half()) / s.cell_y())) + 1);
  for (int ix = ix0; ix <= ix1; ++ix)
    for (int iy = iy0; iy <= iy1; ++iy)
      if (fp.contains(s.center_x(ix), s.center_y(iy))) grid.at(ix, iy) = 1;
}

inline void require_same_spec(const GridSpec& a, const GridSpec& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": grid specs differ");
}

}  // namespace asyncbev
