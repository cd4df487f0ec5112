// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Exit status is 0 only when all criteria pass.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asyncbev/eval.hpp"
#include "asyncbev/ingest.hpp"
#include "asyncbev/syncbuild.hpp"
#include "../support.hpp"

using namespace asyncbev;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kGeometryTol = 1e-9;       // meters
constexpr double kCompensationTol = 1e-9;   // meters
constexpr double kZeroLatencyTol = 0.01;    // IoU
constexpr double kMonotoneJitter = 0.002;   // IoU
constexpr double kRecoveryRatio = 3.0;      // gap(360 ms) / gap(70 ms)
constexpr double kStaticTol = 1e-12;        // IoU
constexpr double kEgoOnlyTol = 0.002;       // IoU
constexpr int kGeometryCases = 10000;
constexpr int kRasterTrials = 100;
constexpr int kRasterPoints = 500;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Recording recording(const ScenarioParams& p, const SensorConfig& cfg = {}) {
  const Scenario s = generate_scenario(p);
  return {s, cfg, record_scenario(s, cfg, p.seed)};
}

const SweepResult& default_sweep() {
  static const SweepResult r = run_sweep(recording(ScenarioParams{}), Ladders{}, SweepParams{});
  return r;
}

std::vector<const SweepRow*> rows_of(const SweepResult& r, Modality m, bool compensate) {
  std::vector<const SweepRow*> out;
  for (const auto& row : r.rows)
    if (row.modality == m && row.compensate == compensate) out.push_back(&row);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// 1
Outcome geometry() {
  Rng rng(101);
  double worst_round = 0, worst_chain = 0;
  for (int i = 0; i < kGeometryCases; ++i) {
    const Pose a = testing::random_pose(rng), b = testing::random_pose(rng), c = testing::random_pose(rng);
    const Point3 p = testing::random_point(rng, 100.0);
    const Point3 there = apply(relative_pose(a, b), p);
    worst_round = std::max(worst_round, distance(apply(relative_pose(b, a), there), p));
    const Point3 direct = apply(relative_pose(a, c), p);
    const Point3 hops = apply(relative_pose(b, c), there);
    worst_chain = std::max(worst_chain, distance(direct, hops));
  }
  return {worst_round <= kGeometryTol && worst_chain <= kGeometryTol,
          "max round-trip error " + fmt("%.3g", worst_round) + " m, max chain error " + fmt("%.3g", worst_chain) +
              " m over " + std::to_string(kGeometryCases) + " cases (tol 1e-9 m)"};
}

// 2
Outcome compensation_exactness() {
  // Range covers the whole world so no agent enters or leaves between sweeps.
  SensorConfig cfg = SensorConfig{}.noiseless();
  cfg.max_range = 1000.0;
  const Recording rec = recording(ScenarioParams{}, cfg);
  double worst = 0;
  std::size_t points = 0;
  for (const std::int64_t target : Ladders{}.radar) {
    const auto v = build_variant(rec, {Modality::Radar, target, true});
    for (const auto& f : v.frames) {
      const auto fresh = capture_radar(rec.scenario, f.t_cam, rec.sensors, rec.scenario.seed);
      if (fresh.radar_points.size() != f.radar.size())
        return {false, "keyframe " + std::to_string(f.keyframe_index) + ": point sets differ in size"};
      for (std::size_t i = 0; i < f.radar.size(); ++i)
        worst = std::max(worst, distance(f.radar[i].position, fresh.radar_points[i].position));
      points += f.radar.size();
    }
  }
  return {worst <= kCompensationTol && points > 0,
          "max error " + fmt("%.3g", worst) + " m over " + std::to_string(points) + " points (tol 1e-9 m)"};
}

// 3
Outcome zero_latency() {
  const auto* row = default_sweep().find(Modality::Radar, 0, true);
  const double gap = *row->improvement;
  return {std::abs(gap) <= kZeroLatencyTol, "compensated - raw at 0 ms = " + fmt("%+.5f", gap) + " (tol 0.01)"};
}

// 4
Outcome monotone_degradation() {
  std::string detail;
  bool ok = true;
  for (const Modality m : {Modality::Radar, Modality::Lidar}) {
    const auto rows = rows_of(default_sweep(), m, false);
    double worst_rise = -1;
    for (std::size_t i = 1; i < rows.size(); ++i) worst_rise = std::max(worst_rise, rows[i]->mean_iou - rows[i - 1]->mean_iou);
    ok = ok && worst_rise <= kMonotoneJitter;
    detail += std::string(modality_name(m)) + " " + fmt("%.4f", rows.front()->mean_iou) + " -> " +
              fmt("%.4f", rows.back()->mean_iou) + " (largest rise " + fmt("%+.5f", worst_rise) + "); ";
  }
  return {ok, detail + "jitter tol 0.002"};
}

// 5
Outcome compensation_recovery() {
  const auto comp = rows_of(default_sweep(), Modality::Radar, true);
  bool ok = true;
  std::string imps;
  for (std::size_t i = 0; i < comp.size(); ++i) {
    const double imp = *comp[i]->improvement;
    imps += fmt("%+.4f", imp) + (i + 1 < comp.size() ? " " : "");
    if (comp[i]->target_latency_us >= 70000 && imp < 0) ok = false;
    if (i > 0 && imp < *comp[i - 1]->improvement) ok = false;
  }
  const double g70 = *default_sweep().find(Modality::Radar, 70000, true)->improvement;
  const double g360 = *default_sweep().find(Modality::Radar, 360000, true)->improvement;
  const bool ratio_ok = g70 > 0 ? g360 >= kRecoveryRatio * g70 : g360 > 0;
  return {ok && ratio_ok, "improvements [" + imps + "]; gap(360)/gap(70) = " + fmt("%.2f", g70 > 0 ? g360 / g70 : 0) +
                              " (need >= 3)"};
}

// 6
Outcome crossover() {
  const auto radar = rows_of(default_sweep(), Modality::Radar, true).back();
  const auto lidar = rows_of(default_sweep(), Modality::Lidar, false).back();
  return {radar->mean_iou > lidar->mean_iou,
          "compensated radar @" + std::to_string(radar->target_latency_us / 1000) + " ms " + fmt("%.4f", radar->mean_iou) +
              " vs raw LiDAR @" + std::to_string(lidar->target_latency_us / 1000) + " ms " + fmt("%.4f", lidar->mean_iou)};
}

// 7
Outcome static_world() {
  ScenarioParams p;
  p.ego_speed = 0;
  p.ego_weave_amplitude = 0;
  p.agent_speed_min = 0;
  p.agent_speed_max = 0;
  const auto r = run_sweep(recording(p, SensorConfig{}.noiseless()), Ladders{}, SweepParams{});
  double spread = 0;
  for (const auto& row : r.rows)
    spread = std::max(spread, std::abs(row.mean_iou - r.find(row.modality, 0, false)->mean_iou));
  return {spread <= kStaticTol && r.rows.size() == 21,
          "max |IoU - IoU_sync| within a modality = " + fmt("%.3g", spread) + " over " + std::to_string(r.rows.size()) +
              " rows (tol 1e-12)"};
}

// 8
Outcome ego_only() {
  ScenarioParams p;
  p.agent_speed_min = 0;
  p.agent_speed_max = 0;
  const auto r = run_sweep(recording(p), Ladders{}, SweepParams{});
  double worst = 0;
  for (const auto& row : r.rows)
    if (!row.compensate) worst = std::max(worst, std::abs(*row.degradation));
  return {worst <= kEgoOnlyTol, "max |raw - sync| = " + fmt("%.5f", worst) + " (tol 0.002)"};
}

// 9
Outcome raster_and_iou() {
  GridSpec s;
  s.cells_x = s.cells_y = 16;
  s.cells_z = 2;
  s.extent = 16;
  s.z_min = -1;
  s.z_max = 1;
  Rng rng(909);
  std::size_t mismatches = 0;
  for (int t = 0; t < kRasterTrials; ++t) {
    std::vector<Point3> pts;
    for (int i = 0; i < kRasterPoints; ++i) pts.push_back({rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(-1.2, 1.2)});
    const VoxelGrid v = rasterize_points(std::span<const Point3>(pts), s);
    for (int ix = 0; ix < 16; ++ix)
      for (int iy = 0; iy < 16; ++iy)
        for (int iz = 0; iz < 2; ++iz) {
          const double x0 = -8 + ix, y0 = -8 + iy, z0 = -1 + iz;
          std::uint32_t n = 0;
          for (const auto& p : pts) {
            const bool inx = p.x >= x0 && (p.x < x0 + 1 || (ix == 15 && p.x <= 8));
            const bool iny = p.y >= y0 && (p.y < y0 + 1 || (iy == 15 && p.y <= 8));
            const bool inz = p.z >= z0 && (p.z < z0 + 1 || (iz == 1 && p.z <= 1));
            n += inx && iny && inz;
          }
          mismatches += v.at(ix, iy, iz) != n;
        }
  }
  BevGrid gt{s}, disjoint{s}, half{s};
  for (int ix = 0; ix < 4; ++ix)
    for (int iy = 0; iy < 4; ++iy) gt.at(ix, iy) = 1;
  disjoint.at(15, 15) = 1;
  for (int ix = 0; ix < 2; ++ix)
    for (int iy = 0; iy < 4; ++iy) half.at(ix, iy) = 1;
  const double a = iou(gt, gt), b = iou(disjoint, gt), c = iou(half, gt);
  return {mismatches == 0 && a == 1.0 && b == 0.0 && c == 0.5,
          std::to_string(mismatches) + " voxel mismatches over " + std::to_string(kRasterTrials) + " trials; IoU triplet " +
              fmt("%.17g", a) + " / " + fmt("%.17g", b) + " / " + fmt("%.17g", c)};
}

// 10
std::optional<LogError> read_error(const fs::path& dir) {
  try {
    read_log(dir);
  } catch (const LogError& e) {
    return e;
  }
  return std::nullopt;
}

json load_json(const fs::path& p) {
  std::ifstream is(p);
  return json::parse(is);
}

void save_json(const fs::path& p, const json& j) { std::ofstream(p, std::ios::trunc) << j.dump(1); }

Outcome ingest() {
  ScenarioParams p;
  p.duration_s = 4;
  const Scenario s = generate_scenario(p);
  const SensorConfig cfg;
  const auto records = record_scenario(s, cfg, p.seed);
  const fs::path base = testing::scratch_dir("acceptance_ingest");
  const CaptureLog written = write_log(records, s, cfg, base / "clean");
  const CaptureLog loaded = read_log(base / "clean");
  save_log(loaded, base / "rewritten");
  bool bytes_equal = loaded == written;
  for (const auto& e : fs::recursive_directory_iterator(base / "clean"))
    if (e.is_regular_file())
      bytes_equal = bytes_equal && slurp(e.path()) == slurp(base / "rewritten" / fs::relative(e.path(), base / "clean"));

  const json sd = load_json(base / "clean" / "sample_data.json");
  auto first_row = [&](const char* sensor) {
    for (std::size_t i = 0; i < sd.size(); ++i)
      if (sd[i]["sensor"] == sensor && sd[i]["num_points"].get<int>() > 0) return i;
    throw std::runtime_error(std::string("no ") + sensor + " row");
  };

  struct Case {
    const char* name;
    LogErrorKind kind;
    std::string needle;
    std::function<void(const fs::path&)> corrupt;
  };
  const std::size_t radar = first_row("RADAR"), lidar = first_row("LIDAR");
  const std::vector<Case> cases = {
      {"missing table", LogErrorKind::Schema, "'ego_pose'", [](const fs::path& d) { fs::remove(d / "ego_pose.json"); }},
      {"dangling token", LogErrorKind::Referential, "ep_nowhere",
       [&](const fs::path& d) {
         json j = sd;
         j[radar]["ego_pose_token"] = "ep_nowhere";
         save_json(d / "sample_data.json", j);
       }},
      {"truncated blob", LogErrorKind::Blob, "got",
       [&](const fs::path& d) {
         const fs::path blob = d / sd[radar]["filename"].get<std::string>();
         fs::resize_file(blob, fs::file_size(blob) - 1);
       }},
      {"out-of-order timestamps", LogErrorKind::Ordering, "RADAR",
       [&](const fs::path& d) {
         json j = sd;
         std::vector<std::size_t> rows;
         for (std::size_t i = 0; i < j.size(); ++i)
           if (j[i]["sensor"] == "RADAR") rows.push_back(i);
         std::swap(j[rows[4]], j[rows[5]]);
         save_json(d / "sample_data.json", j);
       }},
      {"malformed JSON", LogErrorKind::Parse, "sample.json at byte",
       [](const fs::path& d) { std::ofstream(d / "sample.json", std::ios::trunc) << "[{\"token\": \"s_0000\",,}]"; }},
      {"wrong blob stride", LogErrorKind::Blob, "12-byte stride",
       [&](const fs::path& d) {
         const auto n = sd[lidar]["num_points"].get<std::size_t>();
         const auto bytes = encode_radar(std::vector<RadarPoint>(n));
         std::ofstream(d / sd[lidar]["filename"].get<std::string>(), std::ios::binary | std::ios::trunc)
             .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
       }},
  };
  std::string detail = bytes_equal ? "round trip byte-identical" : "round trip DIFFERS";
  bool ok = bytes_equal;
  for (const auto& c : cases) {
    const fs::path dir = base / "corrupt";
    fs::remove_all(dir);
    fs::copy(base / "clean", dir, fs::copy_options::recursive);
    c.corrupt(dir);
    const auto e = read_error(dir);
    const bool hit = e && e->kind() == c.kind && std::string(e->what()).find(c.needle) != std::string::npos;
    ok = ok && hit;
    detail += std::string("; ") + c.name + ": " + (e ? std::string(log_error_label(e->kind())) : "no error") +
              (hit ? "" : " (unexpected)");
  }
  return {ok, detail};
}

// 11
Outcome determinism() {
  const std::string bin = ASYNCBEV_CLI_PATH;
  const fs::path base = testing::scratch_dir("acceptance_determinism");
  auto run = [&](const fs::path& dir, const std::string& jobs) {
    const std::string log = (dir / "log").string();
    const std::string q = "'";
    const std::vector<std::string> cmds = {
        bin + " simulate --seed 7 --out " + q + log + q,
        bin + " sweep --log " + q + log + q + " --out " + q + (dir / "report.csv").string() + q + " --jobs " + jobs,
        bin + " build --log " + q + log + q + " --modality RADAR --latency 360 --compensate --out " + q +
            (dir / "variant").string() + q,
        bin + " render --variant " + q + (dir / "variant").string() + q + " --keyframe 20 --out " + q +
            (dir / "render").string() + q,
    };
    for (const auto& c : cmds)
      if (std::system((c + " >/dev/null 2>&1").c_str()) != 0) throw std::runtime_error("command failed: " + c);
  };
  run(base / "a", "1");
  run(base / "b", "4");
  std::vector<std::string> differing;
  std::size_t bytes = 0;
  for (const char* f : {"report.csv", "render/raw.ppm", "render/compensated.ppm", "render/gt.ppm"}) {
    const std::string x = slurp(base / "a" / f), y = slurp(base / "b" / f);
    if (x.empty() || x != y) differing.push_back(f);
    bytes += x.size();
  }
  std::string detail = std::to_string(bytes) + " bytes compared across 4 files";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"geometry round trip and chain", geometry},
      {"compensation exactness", compensation_exactness},
      {"zero-latency near no-op", zero_latency},
      {"monotone degradation", monotone_degradation},
      {"compensation recovery", compensation_recovery},
      {"crossover at max latency", crossover},
      {"static-world invariance", static_world},
      {"ego-only motion", ego_only},
      {"rasterization oracle and IoU triplet", raster_and_iou},
      {"ingest round trip and corruptions", ingest},
      {"CLI determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
