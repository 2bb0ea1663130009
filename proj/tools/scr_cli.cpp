// scr: simulate -> map -> localize -> eval.
//
// Exit codes: 0 ok, 2 bad config or arguments, 3 data error, 4 relocalization
// failure rate above [localize] max_failure_rate, 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "scr/config.hpp"
#include "scr/error.hpp"
#include "scr/io.hpp"
#include "scr/metrics.hpp"
#include "scr/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kBadConfig = 2;
constexpr int kDataError = 3;
constexpr int kTooManyFailures = 4;

scr::AppConfig config_or_default(const std::string& path) {
  return path.empty() ? scr::parse_config("") : scr::load_config(path);
}

int cmd_simulate(const std::string& config, const std::string& out) {
  const scr::AppConfig cfg = scr::load_config(config);
  const scr::SimulatedDataset data = scr::simulate(cfg.sim);
  scr::write_dataset(data, cfg, out);
  std::printf("wrote %zu mapping and %zu query frames to %s\n", data.mapping.size(), data.query.size(), out.c_str());
  return 0;
}

int cmd_map(const std::string& frames_dir, const std::string& config, const std::string& out) {
  const scr::AppConfig cfg = scr::load_config(config);
  const auto frames = scr::read_frame_dir(frames_dir);
  const scr::MappingResult result = scr::run_mapping(frames, cfg);
  scr::save_head(out, result.train.head);
  std::size_t keyframes = 0;
  for (const auto& f : result.buffer.frames) keyframes += f.is_keyframe;
  std::printf("frames %zu keyframes %zu records %zu steps %zu final_loss %s\n", frames.size(), keyframes,
              result.buffer.records.size(), result.train.losses.size(),
              scr::format_sig6(result.train.losses.back()).c_str());
  return 0;
}

int cmd_localize(const std::string& map, const std::string& frames_dir, const std::string& mode_name,
                 const std::string& out, const std::string& config, bool timing) {
  const scr::AppConfig cfg = config_or_default(config);
  const scr::RelocMode mode = scr::mode_from_string(mode_name);
  const scr::SceneHead head = scr::load_head(map);
  const auto frames = scr::read_frame_dir(frames_dir);
  if (frames.front().feature_dim() != 0 && frames.front().feature_dim() != head.feature_dim()) {
    throw scr::Error(scr::ErrorCode::DimensionMismatch, "frame features do not match the map's feature_dim");
  }
  const auto rows = scr::run_localization(frames, head, mode, cfg, timing);
  scr::write_trajectory(out, rows);
  const double rate = scr::failure_rate(rows);
  std::printf("localized %zu frames (%s), failure rate %s\n", rows.size(), scr::to_string(mode),
              scr::format_sig6(rate).c_str());
  if (rate > cfg.max_failure_rate) {
    std::fprintf(stderr, "failure rate %s above bound %s\n", scr::format_sig6(rate).c_str(),
                 scr::format_sig6(cfg.max_failure_rate).c_str());
    return kTooManyFailures;
  }
  return 0;
}

int cmd_eval(const std::string& traj, const std::string& gt, const std::string& thresholds, const std::string& out) {
  const auto thresh = scr::parse_thresholds(thresholds);
  const auto report = scr::evaluate(scr::read_trajectory(traj), scr::read_poses(gt), thresh);
  const std::string text = scr::format_report(report);
  scr::write_text(out, text);
  std::fputs(text.substr(0, text.find("\n\n") + 1).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-coordinate relocalization: simulate, map, localize, eval"};
  app.require_subcommand(1);

  std::string config, out, frames, map, mode, traj, gt, thresholds = "0.01,1;0.1,10";
  bool no_timing = false;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim->add_option("--config", config, "Config file")->required();
  sim->add_option("--out", out, "Output directory")->required();

  auto* mp = app.add_subcommand("map", "Train a scene head from posed feature frames");
  mp->add_option("--frames", frames, "Directory of .scrf frames")->required();
  mp->add_option("--config", config, "Config file")->required();
  mp->add_option("--out", out, "Map file to write")->required();

  auto* loc = app.add_subcommand("localize", "Relocalize query frames against a map");
  loc->add_option("--map", map, "Map file")->required();
  loc->add_option("--frames", frames, "Directory of .scrf frames")->required();
  loc->add_option("--mode", mode, "single or sequence")->required()->check(CLI::IsMember({"single", "sequence"}));
  loc->add_option("--out", out, "Trajectory CSV to write")->required();
  loc->add_option("--config", config, "Config file (defaults if omitted)");
  loc->add_flag("--no-timing", no_timing, "Write 0 for per-frame wall time (byte-stable output)");

  auto* ev = app.add_subcommand("eval", "Score a trajectory against ground truth");
  ev->add_option("--traj", traj, "Trajectory CSV")->required();
  ev->add_option("--gt", gt, "Ground-truth pose file")->required();
  ev->add_option("--thresholds", thresholds, "meters,degrees pairs separated by ';'");
  ev->add_option("--out", out, "Report CSV to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kBadConfig;
  }

  try {
    if (*sim) return cmd_simulate(config, out);
    if (*mp) return cmd_map(frames, config, out);
    if (*loc) return cmd_localize(map, frames, mode, out, config, !no_timing);
    if (*ev) return cmd_eval(traj, gt, thresholds, out);
  } catch (const scr::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == scr::ErrorCode::BadConfig ? kBadConfig : kDataError;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
