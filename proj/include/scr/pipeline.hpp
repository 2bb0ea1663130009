#pragma once

// The operations behind the CLI commands, usable in-process.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "scr/config.hpp"
#include "scr/io.hpp"
#include "scr/mapping.hpp"
#include "scr/metrics.hpp"
#include "scr/simulator.hpp"

namespace scr {

struct SimulatedDataset {
  SyntheticScene scene;
  std::vector<SyntheticFrame> mapping;  // frame ids 0..n_frames-1, posed
  std::vector<SyntheticFrame> query;    // frame ids n_frames.., pose hidden on disk
  std::vector<RigidTransform> mapping_poses;
  std::vector<RigidTransform> query_poses;
};

SimulatedDataset simulate(const SimConfig& cfg);

/// Writes mapping/*.scrf, mapping_poses.txt, query/*.scrf, query_poses.txt,
/// scene.manifest and the eval-only sidecars landmark_ids.txt and landmarks.txt.
void write_dataset(const SimulatedDataset& data, const AppConfig& cfg, const std::filesystem::path& dir);

/// Buffer construction with descriptor matching, then training.
struct MappingResult {
  TrainingBuffer buffer;
  TrainResult train;
};
MappingResult run_mapping(const std::vector<FrameObservation>& frames, const AppConfig& cfg);

std::unique_ptr<Tracker> make_tracker(const TrackerConfig& cfg);

/// Localizes frames in frame_id order. Per-frame wall time is recorded only when
/// `timing` is set (otherwise 0, for byte-stable output).
std::vector<TrajectoryRow> run_localization(const std::vector<FrameObservation>& frames, const SceneHead& head,
                                            RelocMode mode, const AppConfig& cfg, Tracker& tracker, bool timing);
std::vector<TrajectoryRow> run_localization(const std::vector<FrameObservation>& frames, const SceneHead& head,
                                            RelocMode mode, const AppConfig& cfg, bool timing);

/// Fraction of rows with status failed.
double failure_rate(const std::vector<TrajectoryRow>& rows);

RelocMode mode_from_string(const std::string& s);

}  // namespace scr
