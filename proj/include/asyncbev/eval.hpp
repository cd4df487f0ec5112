#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "asyncbev/bevgrid.hpp"
#include "asyncbev/errors.hpp"
#include "asyncbev/grid.hpp"
#include "asyncbev/ingest.hpp"
#include "asyncbev/syncbuild.hpp"
#include "asyncbev/worldsim.hpp"

namespace asyncbev {

/// |gt ∩ pred| / |gt ∪ pred| over binary cells; two empty grids score 1.
inline double iou(const BevGrid& pred, const BevGrid& gt) {
  require_same_spec(pred.spec, gt.spec, "iou");
  if (!pred.is_binary() || !gt.is_binary()) throw DomainError("iou: inputs must be binary grids");
  std::uint64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.cells.size(); ++i) {
    inter += pred.cells[i] & gt.cells[i];
    uni += pred.cells[i] | gt.cells[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct IoUReport {
  std::vector<double> per_frame;
  double mean = 0.0;
  std::size_t frame_count() const { return per_frame.size(); }
};

inline IoUReport make_report(std::vector<double> per_frame) {
  IoUReport r{std::move(per_frame), 0.0};
  if (!r.per_frame.empty())
    r.mean = std::accumulate(r.per_frame.begin(), r.per_frame.end(), 0.0) / static_cast<double>(r.per_frame.size());
  return r;
}

struct Ladders {
  std::vector<std::int64_t> radar{0, 70000, 140000, 220000, 290000, 360000, 570000};
  std::vector<std::int64_t> lidar{0, 50000, 150000, 200000, 300000, 350000, 550000};
};

struct SweepParams {
  GridSpec grid;
  int dilation_radius = 3;
  double camera_sigma_per_m = 0.07;
  std::optional<std::uint64_t> seed;  // camera noise seed; defaults to the scenario seed
  unsigned jobs = 1;
};

struct SweepRow {
  Modality modality = Modality::Radar;
  std::int64_t target_latency_us = 0;
  double achieved_latency_us = 0.0;  // mean over frames
  bool compensate = false;
  double mean_iou = 0.0;
  std::optional<double> degradation;  // sync mean - this mean, same modality and compensate flag
  std::optional<double> improvement;  // compensated - raw at the same rung (compensated rows only)
  std::size_t frames = 0;

  bool operator==(const SweepRow&) const = default;
};

struct SweepResult {
  std::vector<SweepRow> rows;

  const SweepRow* find(Modality m, std::int64_t target, bool compensate) const {
    for (const auto& r : rows)
      if (r.modality == m && r.target_latency_us == target && r.compensate == compensate) return &r;
    return nullptr;
  }
};

/// Ground truth and camera channel for one keyframe, shared by every rung.
struct FrameContext {
  BevGrid gt;
  BevGrid camera;
};

inline std::uint64_t camera_seed(const Recording& rec, const SweepParams& p) { return p.seed.value_or(rec.scenario.seed); }

inline std::map<std::size_t, FrameContext> frame_contexts(const Recording& rec, const SweepParams& p) {
  std::map<std::size_t, FrameContext> out;
  const auto keys = keyframe_triggers(rec);
  for (std::size_t k = 2; k < keys.size(); ++k) {
    const Timestamp t = keys[k]->timestamp;
    out.emplace(k, FrameContext{gt_bev_at(rec.scenario, t, p.grid),
                                camera_pseudo_occupancy(rec.scenario, t, p.grid, p.camera_sigma_per_m, camera_seed(rec, p))});
  }
  return out;
}

inline BevGrid point_bev(const VariantFrame& f, const GridSpec& spec) {
  return f.radar.empty() ? flatten(rasterize_points(std::span<const LidarPoint>(f.lidar), spec))
                         : flatten(rasterize_points(std::span<const RadarPoint>(f.radar), spec));
}

inline IoUReport evaluate_variant(const DatasetVariant& v, const std::map<std::size_t, FrameContext>& ctx,
                                  const SweepParams& p) {
  std::vector<double> scores;
  scores.reserve(v.frames.size());
  for (const auto& f : v.frames) {
    const auto& c = ctx.at(f.keyframe_index);
    scores.push_back(iou(predict_segmentation(point_bev(f, p.grid), c.camera, p.dilation_radius), c.gt));
  }
  return make_report(std::move(scores));
}

// Camera channel alone against ground truth, over the evaluated keyframes.
inline IoUReport camera_only_iou(const std::map<std::size_t, FrameContext>& ctx) {
  std::vector<double> scores;
  for (const auto& [k, c] : ctx) scores.push_back(iou(c.camera, c.gt));
  return make_report(std::move(scores));
}

namespace detail {

inline void check_ladder(const std::vector<std::int64_t>& ladder, const char* name) {
  if (ladder.empty()) return;
  if (!std::is_sorted(ladder.begin(), ladder.end()) ||
      std::adjacent_find(ladder.begin(), ladder.end()) != ladder.end())
    throw ConfigError(std::string(name) + " ladder must be strictly increasing");
  if (ladder.front() != 0) throw ConfigError(std::string(name) + " ladder must start at 0 (the synchronous rung)");
}

template <typename F>
void parallel_for(std::size_t n, unsigned jobs, F&& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

inline bool row_order(const SweepRow& a, const SweepRow& b) {
  if (a.modality != b.modality) return static_cast<int>(a.modality) < static_cast<int>(b.modality);
  if (a.target_latency_us != b.target_latency_us) return a.target_latency_us < b.target_latency_us;
  return a.compensate < b.compensate;
}

/// Every (modality, latency) rung, radar both with and without velocity
/// compensation, scored against the same ground truth and camera channel.
inline SweepResult run_sweep(const Recording& rec, const Ladders& ladders, const SweepParams& p) {
  p.grid.validate();
  if (p.dilation_radius < 0) throw ConfigError("dilation radius must be non-negative");
  detail::check_ladder(ladders.radar, "radar");
  detail::check_ladder(ladders.lidar, "lidar");

  std::vector<LatencyConfig> rungs;
  for (auto t : ladders.radar) {
    rungs.push_back({Modality::Radar, t, false});
    rungs.push_back({Modality::Radar, t, true});
  }
  for (auto t : ladders.lidar) rungs.push_back({Modality::Lidar, t, false});

  const auto ctx = frame_contexts(rec, p);
  SweepResult result;
  result.rows.resize(rungs.size());
  detail::parallel_for(rungs.size(), p.jobs, [&](std::size_t i) {
    const auto& cfg = rungs[i];
    try {
      const auto variant = build_variant(rec, cfg);
      const auto report = evaluate_variant(variant, ctx, p);
      double lat = 0;
      for (const auto& f : variant.frames) lat += static_cast<double>(f.achieved_latency.count());
      if (!variant.frames.empty()) lat /= static_cast<double>(variant.frames.size());
      result.rows[i] = {cfg.modality, cfg.target_latency_us, lat, cfg.compensate, report.mean, {}, {}, report.frame_count()};
    } catch (const std::exception& e) {
      throw std::runtime_error("rung " + std::string(modality_name(cfg.modality)) + " " +
                               std::to_string(cfg.target_latency_us) + "us" + (cfg.compensate ? " compensated" : "") +
                               ": " + e.what());
    }
  });

  for (auto& row : result.rows) {
    if (const auto* sync = result.find(row.modality, 0, row.compensate)) row.degradation = sync->mean_iou - row.mean_iou;
    if (row.compensate)
      if (const auto* raw = result.find(row.modality, row.target_latency_us, false))
        row.improvement = row.mean_iou - raw->mean_iou;
  }
  std::stable_sort(result.rows.begin(), result.rows.end(), row_order);
  return result;
}

inline SweepResult run_sweep(const CaptureLog& log, const Ladders& ladders, const SweepParams& p) {
  return run_sweep(to_recording(log), ladders, p);
}

// ---------------------------------------------------------------------------
// Report

inline constexpr const char* kReportHeader =
    "modality,target_latency_us,achieved_latency_us,compensate,mean_iou,degradation,improvement";

inline std::string format_report(const SweepResult& result) {
  auto rows = result.rows;
  std::stable_sort(rows.begin(), rows.end(), row_order);
  std::string out = std::string(kReportHeader) + "\n";
  char buf[64];
  auto fixed = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out += std::string(modality_name(r.modality)) + "," + std::to_string(r.target_latency_us) + "," +
           fixed(r.achieved_latency_us) + "," + (r.compensate ? "1" : "0") + "," + fixed(r.mean_iou) + "," +
           (r.degradation ? fixed(*r.degradation) : "") + "," + (r.improvement ? fixed(*r.improvement) : "") + "\n";
  }
  return out;
}

inline void emit_report(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << format_report(result);
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

/// Inverse of format_report. frames is not part of the CSV and stays 0.
inline SweepResult parse_report(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != kReportHeader) throw std::runtime_error("report: bad header");
  SweepResult out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 7) throw std::runtime_error("report line " + std::to_string(lineno) + ": expected 7 fields");
    try {
      SweepRow r;
      r.modality = parse_modality(f[0]);
      r.target_latency_us = std::stoll(f[1]);
      r.achieved_latency_us = std::stod(f[2]);
      r.compensate = f[3] == "1";
      r.mean_iou = std::stod(f[4]);
      if (!f[5].empty()) r.degradation = std::stod(f[5]);
      if (!f[6].empty()) r.improvement = std::stod(f[6]);
      out.rows.push_back(r);
    } catch (const std::exception& e) {
      throw std::runtime_error("report line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

struct Rgb {
  std::uint8_t r, g, b;
};

struct BevPalette {
  Rgb background{24, 24, 24};
  Rgb gt_only{0, 140, 255};
  Rgb pred_only{255, 64, 64};
  Rgb overlap{64, 220, 64};
  Rgb outline{255, 210, 0};
};

/// Overlay of prediction and ground truth as a binary PPM (P6). Image rows
/// run from +x (top) to -x, columns from +y (left) to -y; each cell is a
/// scale x scale block. Agent box outlines are drawn on top.
inline std::vector<std::uint8_t> render_bev_bytes(const BevGrid& pred, const BevGrid& gt,
                                                  std::span<const Footprint> agents, int scale = 1,
                                                  const BevPalette& pal = {}) {
  require_same_spec(pred.spec, gt.spec, "render_bev");
  if (scale < 1) throw ConfigError("render scale must be at least 1");
  const auto& s = gt.spec;
  std::vector<Rgb> cell_color(static_cast<std::size_t>(s.cells_x) * s.cells_y, pal.background);
  for (int ix = 0; ix < s.cells_x; ++ix)
    for (int iy = 0; iy < s.cells_y; ++iy) {
      const bool p = pred.at(ix, iy) != 0, g = gt.at(ix, iy) != 0;
      auto& c = cell_color[gt.index(ix, iy)];
      if (p && g) c = pal.overlap;
      else if (g) c = pal.gt_only;
      else if (p) c = pal.pred_only;
    }
  for (const auto& fp : agents) {
    const double c = std::cos(fp.yaw), sn = std::sin(fp.yaw);
    const double hl = fp.length / 2, hw = fp.width / 2;
    const double corners[4][2] = {{-hl, -hw}, {hl, -hw}, {hl, hw}, {-hl, hw}};
    const double step = std::min(s.cell_x(), s.cell_y()) / 4.0;
    for (int e = 0; e < 4; ++e) {
      const auto& a = corners[e];
      const auto& b = corners[(e + 1) % 4];
      const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
      const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
      for (int i = 0; i <= n; ++i) {
        const double u = a[0] + (b[0] - a[0]) * i / n, v = a[1] + (b[1] - a[1]) * i / n;
        const double x = fp.cx + c * u - sn * v, y = fp.cy + sn * u + c * v;
        const auto ix = detail::bin(x, -s.half(), s.cell_x(), s.cells_x);
        const auto iy = detail::bin(y, -s.half(), s.cell_y(), s.cells_y);
        if (ix && iy) cell_color[gt.index(*ix, *iy)] = pal.outline;
      }
    }
  }

  const int width = s.cells_y * scale, height = s.cells_x * scale;
  const std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(width) * height * 3);
  for (int row = 0; row < height; ++row)
    for (int col = 0; col < width; ++col) {
      const Rgb& c = cell_color[gt.index(s.cells_x - 1 - row / scale, s.cells_y - 1 - col / scale)];
      out.push_back(c.r);
      out.push_back(c.g);
      out.push_back(c.b);
    }
  return out;
}

inline void render_bev(const BevGrid& pred, const BevGrid& gt, std::span<const Footprint> agents,
                       const std::filesystem::path& path, int scale = 1) {
  const auto bytes = render_bev_bytes(pred, gt, agents, scale);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace asyncbev
