#include "scr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "scr/error.hpp"

namespace scr {

namespace fs = std::filesystem;

namespace {

std::string frame_file(std::uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%08llu.scrf", static_cast<unsigned long long>(id));
  return buf;
}

}  // namespace

SimulatedDataset simulate(const SimConfig& cfg) {
  SimulatedDataset d;
  d.scene = generate_scene(cfg);
  d.mapping_poses = generate_trajectory(cfg);
  d.query_poses = generate_test_trajectory(cfg);
  for (std::size_t i = 0; i < d.mapping_poses.size(); ++i) {
    d.mapping.push_back(synthesize_frame(d.scene, d.mapping_poses[i], cfg, i));
  }
  const std::uint64_t base = d.mapping_poses.size();
  for (std::size_t i = 0; i < d.query_poses.size(); ++i) {
    d.query.push_back(synthesize_frame(d.scene, d.query_poses[i], cfg, base + i));
  }
  return d;
}

void write_dataset(const SimulatedDataset& data, const AppConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir / "mapping");
  fs::create_directories(dir / "query");
  std::string ids = "# frame_id landmark ids of its patches, in patch order (evaluation only)\n";
  auto dump_ids = [&](const SyntheticFrame& f) {
    ids += std::to_string(f.obs.frame_id);
    for (std::size_t id : f.landmark_ids) ids += " " + std::to_string(id);
    ids += "\n";
  };
  for (const SyntheticFrame& f : data.mapping) {
    write_frame(dir / "mapping" / frame_file(f.obs.frame_id), f.obs);
    dump_ids(f);
  }
  for (const SyntheticFrame& f : data.query) {
    FrameObservation hidden = f.obs;
    hidden.t_wc = RigidTransform::identity();
    write_frame(dir / "query" / frame_file(f.obs.frame_id), hidden);
    dump_ids(f);
  }
  write_poses(dir / "mapping_poses.txt", data.mapping_poses);
  write_poses(dir / "query_poses.txt", data.query_poses);
  write_text(dir / "landmark_ids.txt", ids);

  std::string pts = "# landmark id, x y z (evaluation only)\n";
  for (std::size_t i = 0; i < data.scene.landmarks.size(); ++i) {
    const auto& p = data.scene.landmarks[i];
    pts += std::to_string(i) + " " + format_double(p.x()) + " " + format_double(p.y()) + " " + format_double(p.z()) + "\n";
  }
  write_text(dir / "landmarks.txt", pts);

  std::string manifest = "# synthetic scene manifest\n";
  manifest += "seed = " + std::to_string(cfg.sim.seed) + "\n";
  manifest += "landmarks = " + std::to_string(data.scene.landmarks.size()) + "\n";
  manifest += "mapping_frames = " + std::to_string(data.mapping.size()) + "\n";
  manifest += "query_frames = " + std::to_string(data.query.size()) + "\n\n";
  manifest += format_config(cfg);
  write_text(dir / "scene.manifest", manifest);
}

MappingResult run_mapping(const std::vector<FrameObservation>& frames, const AppConfig& cfg) {
  if (frames.empty()) throw Error(ErrorCode::EmptySequence, "no frames to map");
  DescriptorMatcher matcher(cfg.matcher.ratio, cfg.matcher.max_distance);
  MappingResult out;
  out.buffer = build_training_buffer(frames, matcher, cfg.mapping);
  if (out.buffer.records.empty()) throw Error(ErrorCode::EmptyBuffer, "frames contain no patches");
  SceneHead head = initial_head(out.buffer.records, cfg.mapping, cfg.loss);
  out.train = train_head(out.buffer.records, std::move(head), cfg.mapping, cfg.loss);
  return out;
}

std::unique_ptr<Tracker> make_tracker(const TrackerConfig& cfg) {
  if (cfg.kind == "none") return std::make_unique<NullTracker>();
  return std::make_unique<DescriptorTracker>(cfg.search_radius, cfg.max_distance, cfg.ratio);
}

std::vector<TrajectoryRow> run_localization(const std::vector<FrameObservation>& frames, const SceneHead& head,
                                            RelocMode mode, const AppConfig& cfg, Tracker& tracker, bool timing) {
  std::vector<const FrameObservation*> ordered;
  for (const auto& f : frames) ordered.push_back(&f);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const FrameObservation* a, const FrameObservation* b) { return a->frame_id < b->frame_id; });

  std::vector<TrajectoryRow> rows;
  SequenceState state;
  for (const FrameObservation* f : ordered) {
    const auto start = std::chrono::steady_clock::now();
    const RelocResult r =
        mode == RelocMode::Single ? localize_single(*f, head, cfg.reloc) : step_sequence(state, *f, head, tracker, cfg.reloc);
    const auto stop = std::chrono::steady_clock::now();
    TrajectoryRow row;
    row.frame_id = f->frame_id;
    row.pose = r.pose;
    row.status = r.status;
    row.inliers_pred = r.inliers_pred;
    row.inliers_new = r.inliers_new;
    row.micros = timing ? std::chrono::duration_cast<std::chrono::microseconds>(stop - start).count() : 0;
    rows.push_back(row);
  }
  return rows;
}

std::vector<TrajectoryRow> run_localization(const std::vector<FrameObservation>& frames, const SceneHead& head,
                                            RelocMode mode, const AppConfig& cfg, bool timing) {
  auto tracker = make_tracker(cfg.tracker);
  return run_localization(frames, head, mode, cfg, *tracker, timing);
}

double failure_rate(const std::vector<TrajectoryRow>& rows) {
  if (rows.empty()) return 0.0;
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.status == RelocStatus::Failed;
  return double(failed) / double(rows.size());
}

RelocMode mode_from_string(const std::string& s) {
  if (s == "single") return RelocMode::Single;
  if (s == "sequence") return RelocMode::Sequence;
  throw Error(ErrorCode::BadConfig, "mode must be 'single' or 'sequence'");
}

}  // namespace scr
