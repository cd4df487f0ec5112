#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asyncbev/bevgrid.hpp"
#include "asyncbev/errors.hpp"
#include "asyncbev/eval.hpp"
#include "asyncbev/ingest.hpp"
#include "asyncbev/run_config.hpp"
#include "asyncbev/sensors.hpp"
#include "asyncbev/syncbuild.hpp"
#include "asyncbev/worldsim.hpp"

namespace asyncbev {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Sources of run settings, lowest precedence first: defaults, config file,
/// ASYNCBEV_JOBS (jobs only), --set assignments, dedicated flags.
struct ConfigSources {
  std::optional<std::filesystem::path> config_file;
  const char* jobs_env = nullptr;
  std::vector<std::string> assignments;  // --set key=value, in order
  std::vector<std::string> flag_assignments;
};

inline RunConfig resolve_run_config(const ConfigSources& src) {
  RunConfig c;
  if (src.config_file) apply_config_file(c, *src.config_file);
  apply_jobs_env(c, src.jobs_env);
  for (const auto& a : src.assignments) apply_assignment(c, a);
  for (const auto& a : src.flag_assignments) apply_assignment(c, a);
  c.validate();
  return c;
}

namespace detail {

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "key=value config file (see configs/example.conf)")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "override a config key, e.g. --set dilation_radius=2 (repeatable)");
  }
};

// Registers "--<flag>" and forwards a supplied value to config key `key`.
struct FlagForward {
  std::string key;
  std::string value;
  CLI::Option* opt = nullptr;
};

inline std::int64_t latency_ms_to_us(double ms) {
  if (!std::isfinite(ms) || ms < 0) throw ConfigError("latency must be a non-negative number of milliseconds");
  return std::llround(ms * 1000.0);
}

inline const VariantFrame* find_frame(const DatasetVariant& v, std::size_t keyframe) {
  for (const auto& f : v.frames)
    if (f.keyframe_index == keyframe) return &f;
  return nullptr;
}

}  // namespace detail

/// Command-line entry point. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const char* jobs_env) {
  namespace fs = std::filesystem;
  CLI::App app{"asyncbev: asynchronous camera/radar/LiDAR BEV fusion benchmark"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "expanded help for every subcommand");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a scenario and write its capture log");
  detail::CommonOptions sim_common;
  sim_common.attach(sim);
  std::vector<detail::FlagForward> sim_flags = {
      {"seed", {}, nullptr}, {"duration_s", {}, nullptr}, {"agents", {}, nullptr}, {"bounds_m", {}, nullptr}};
  sim_flags[0].opt = sim->add_option("--seed", sim_flags[0].value, "scenario and sensor seed");
  sim_flags[1].opt = sim->add_option("--duration", sim_flags[1].value, "scenario length in seconds");
  sim_flags[2].opt = sim->add_option("--agents", sim_flags[2].value, "number of agents");
  sim_flags[3].opt = sim->add_option("--bounds", sim_flags[3].value, "world extent in meters");
  std::string sim_out;
  sim->add_option("--out", sim_out, "output log directory")->required();

  // build
  auto* build = app.add_subcommand("build", "build one dataset variant from a capture log");
  detail::CommonOptions build_common;
  build_common.attach(build);
  std::string build_log, build_out, build_modality;
  double build_latency_ms = 0;
  bool build_compensate = false;
  build->add_option("--log", build_log, "source capture log directory")->required();
  build->add_option("--modality", build_modality, "RADAR or LIDAR")->required();
  build->add_option("--latency", build_latency_ms, "target latency in milliseconds")->required();
  build->add_flag("--compensate", build_compensate, "apply radar velocity compensation");
  build->add_option("--out", build_out, "output variant directory")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "evaluate every latency rung and write report.csv");
  detail::CommonOptions sweep_common;
  sweep_common.attach(sweep);
  std::string sweep_log, sweep_out;
  std::optional<unsigned> sweep_jobs;
  sweep->add_option("--log", sweep_log, "capture log directory")->required();
  sweep->add_option("--out", sweep_out, "report CSV path")->required();
  sweep->add_option("--jobs", sweep_jobs, "worker threads (default: ASYNCBEV_JOBS, else 1)")
      ->check(CLI::PositiveNumber);

  // render
  auto* render = app.add_subcommand("render", "write raw / compensated / ground-truth PPMs for one keyframe");
  detail::CommonOptions render_common;
  render_common.attach(render);
  std::string render_variant, render_out;
  std::size_t render_keyframe = 0;
  int render_scale = 2;
  render->add_option("--variant", render_variant, "variant directory written by build")->required();
  render->add_option("--keyframe", render_keyframe, "source keyframe index (see variant.json)")->required();
  render->add_option("--out", render_out, "output directory")->required();
  render->add_option("--scale", render_scale, "pixels per grid cell")->check(CLI::Range(1, 16));

  // validate
  auto* validate = app.add_subcommand("validate", "check a capture log and list every violation");
  std::string validate_log_dir;
  validate->add_option("--log", validate_log_dir, "capture log directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto sources = [&](const detail::CommonOptions& common) {
    ConfigSources s;
    if (!common.config.empty()) s.config_file = common.config;
    s.jobs_env = jobs_env;
    s.assignments = common.sets;
    return s;
  };

  try {
    if (*sim) {
      auto src = sources(sim_common);
      for (const auto& f : sim_flags)
        if (f.opt->count() > 0) src.flag_assignments.push_back(f.key + "=" + f.value);
      const RunConfig cfg = resolve_run_config(src);
      const Scenario scenario = generate_scenario(cfg.scenario);
      scenario.validate(cfg.sensors.keyframe_period());
      const auto records = record_scenario(scenario, cfg.sensors, cfg.scenario.seed);
      const auto log = write_log(records, scenario, cfg.sensors, sim_out);
      out << "wrote " << log.sample_data.size() << " captures (" << log.samples.size() << " keyframes, "
          << scenario.agents.size() << " agents) to " << sim_out << "\n";
      return kExitOk;
    }

    if (*build) {
      resolve_run_config(sources(build_common));  // validates overrides even though build uses none
      LatencyConfig lc{parse_modality(build_modality), detail::latency_ms_to_us(build_latency_ms), build_compensate};
      lc.validate();
      const Recording rec = read_recording(build_log);
      const DatasetVariant v = build_variant(rec, lc);
      for (const auto& w : v.warnings) err << "warning: " << w << "\n";
      write_variant(v, rec, build_out, fs::weakly_canonical(fs::absolute(build_log)).string());
      out << "wrote " << v.frames.size() << " of " << v.source_keyframes - 2 << " keyframes to " << build_out << "\n";
      return kExitOk;
    }

    if (*sweep) {
      auto src = sources(sweep_common);
      if (sweep_jobs) src.flag_assignments.push_back("jobs=" + std::to_string(*sweep_jobs));
      const RunConfig cfg = resolve_run_config(src);
      const Recording rec = read_recording(sweep_log);
      const SweepResult result = run_sweep(rec, cfg.ladders, cfg.sweep);
      emit_report(result, sweep_out);
      const double cam = camera_only_iou(frame_contexts(rec, cfg.sweep)).mean;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", cam);
      out << "wrote " << result.rows.size() << " rows to " << sweep_out << " (camera-only mean IoU " << buf << ")\n";
      return kExitOk;
    }

    if (*render) {
      const RunConfig cfg = resolve_run_config(sources(render_common));
      const VariantManifest manifest = read_variant_manifest(render_variant);
      const Recording rec = read_recording(manifest.source_log);
      LatencyConfig raw_cfg = manifest.config;
      raw_cfg.compensate = false;
      LatencyConfig comp_cfg = raw_cfg;
      comp_cfg.compensate = raw_cfg.modality == Modality::Radar;
      const auto raw = build_variant(rec, raw_cfg);
      const auto comp = build_variant(rec, comp_cfg);
      const auto* fr = detail::find_frame(raw, render_keyframe);
      const auto* fc = detail::find_frame(comp, render_keyframe);
      if (fr == nullptr || fc == nullptr)
        throw ConfigError("keyframe " + std::to_string(render_keyframe) + " is not part of this variant");

      const GridSpec& grid = cfg.sweep.grid;
      const BevGrid gt = gt_bev_at(rec.scenario, fr->t_cam, grid);
      const BevGrid cam = camera_pseudo_occupancy(rec.scenario, fr->t_cam, grid, cfg.sweep.camera_sigma_per_m,
                                                  camera_seed(rec, cfg.sweep));
      const auto agents = agent_footprints_at(rec.scenario, fr->t_cam);
      const int r = cfg.sweep.dilation_radius;
      std::error_code ec;
      fs::create_directories(render_out, ec);
      if (ec) throw std::runtime_error("cannot create '" + render_out + "': " + ec.message());
      const fs::path dir(render_out);
      render_bev(predict_segmentation(point_bev(*fr, grid), cam, r), gt, agents, dir / "raw.ppm", render_scale);
      render_bev(predict_segmentation(point_bev(*fc, grid), cam, r), gt, agents, dir / "compensated.ppm", render_scale);
      render_bev(BevGrid(grid), gt, agents, dir / "gt.ppm", render_scale);
      char buf[96];
      std::snprintf(buf, sizeof buf, "IoU raw %.4f, compensated %.4f",
                    iou(predict_segmentation(point_bev(*fr, grid), cam, r), gt),
                    iou(predict_segmentation(point_bev(*fc, grid), cam, r), gt));
      out << "keyframe " << render_keyframe << " (" << fr->achieved_latency.count() << "us stale): " << buf
          << "; wrote raw.ppm, compensated.ppm, gt.ppm to " << render_out << "\n";
      return kExitOk;
    }

    if (*validate) {
      CaptureLog log;
      try {
        log = load_log(validate_log_dir);
      } catch (const LogError& e) {
        err << e.what() << "\n";
        return kExitFailure;
      }
      const auto violations = validate_log(log);
      for (const auto& v : violations) err << v.message << "\n";
      if (!violations.empty()) {
        err << violations.size() << " violation" << (violations.size() == 1 ? "" : "s") << "\n";
        return kExitFailure;
      }
      out << "ok: " << log.samples.size() << " keyframes, " << log.sample_data.size() << " captures\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return run_cli(argc, argv, out, err, std::getenv("ASYNCBEV_JOBS"));
}

}  // namespace asyncbev
