#pragma once

// Single-frame and sequence relocalization against a trained scene head.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "scr/frame.hpp"
#include "scr/robust_pnp.hpp"
#include "scr/scene_head.hpp"

namespace scr {

struct RelocConfig {
  RansacConfig ransac;
  std::size_t patches_per_frame = 1000;
  std::size_t max_tracked = 2000;
  std::size_t min_tracks = 4;

  void validate() const;
};

enum class RelocMode { Single, Sequence };
enum class RelocStatus { Ok, FallbackSingle, Failed };

const char* to_string(RelocMode mode);
const char* to_string(RelocStatus status);

struct RelocResult {
  RigidTransform pose;
  RelocMode mode = RelocMode::Single;
  std::size_t inliers_pred = 0;  // from tracked points
  std::size_t inliers_new = 0;   // from this frame's predictions
  RelocStatus status = RelocStatus::Failed;
};

/// Correspondences produced from one frame's head predictions.
struct FramePrediction {
  std::vector<Correspondence> corrs;
  std::vector<FeatureVector> features;
  std::optional<PoseEstimate> estimate;  // empty when PnP failed
};

struct TrackedPoint {
  Pixel pixel;          // location in the most recent frame
  ScenePoint point;     // maintained world point
  int obs_count = 1;    // N_P; the update step uses 1 / N_P
  bool last_inlier = true;
  FeatureVector feature;
  std::uint64_t birth = 0;  // insertion order, for eviction
};

struct SequenceState {
  std::vector<TrackedPoint> tracked;
  std::optional<RigidTransform> last_pose;
  std::optional<std::uint64_t> last_frame_id;
  std::size_t frame_index = 0;
  std::uint64_t next_birth = 0;
};

struct TrackUpdate {
  std::vector<Pixel> pixels;   // one per query track
  std::vector<bool> alive;     // survival mask
  std::vector<FeatureVector> features;  // optional refreshed descriptors
};

/// Follows tracked pixels from the previous frame into the current one.
class Tracker {
 public:
  virtual ~Tracker() = default;
  virtual TrackUpdate track(std::uint64_t previous_frame_id, std::span<const TrackedPoint> tracks,
                            const FrameObservation& current) = 0;
};

/// Loses every track; sequence mode then reduces to single mode.
class NullTracker final : public Tracker {
 public:
  TrackUpdate track(std::uint64_t, std::span<const TrackedPoint> tracks, const FrameObservation&) override {
    return {std::vector<Pixel>(tracks.size()), std::vector<bool>(tracks.size(), false), {}};
  }
};

/// Re-finds each track among the current frame's patches by nearest feature
/// inside a pixel search window.
class DescriptorTracker final : public Tracker {
 public:
  explicit DescriptorTracker(double search_radius = 40.0, double max_distance = 0.5, double ratio = 0.8)
      : radius_(search_radius), max_distance_(max_distance), ratio_(ratio) {}
  TrackUpdate track(std::uint64_t previous_frame_id, std::span<const TrackedPoint> tracks,
                    const FrameObservation& current) override;

 private:
  double radius_;
  double max_distance_;
  double ratio_;
};

/// Head predictions for the frame's most salient patches followed by RANSAC PnP.
FramePrediction predict_frame(const FrameObservation& frame, const SceneHead& head, const RelocConfig& cfg);

RelocResult localize_single(const FrameObservation& frame, const SceneHead& head, const RelocConfig& cfg);

/// RANSAC PnP over (tracked pixel, maintained point) pairs. Throws TooFewTracks
/// below cfg.min_tracks; NoConsensus propagates.
PoseEstimate predict_pose(const SequenceState& state, const PinholeCamera& cam, const RelocConfig& cfg);

/// Inlier-count weights (w_pred, w_new); they sum to exactly 1.
std::pair<double, double> fusion_weights(std::size_t n_pred, std::size_t n_new);

/// Weighted tangent-space average of two pose estimates, anchored at T_pred:
/// T_pred * exp(w_new * log(T_pred^-1 * T_new)). A zero count returns the other
/// pose unchanged; both zero throws BothEstimatesFailed.
RigidTransform fuse_poses(const RigidTransform& t_pred, std::size_t n_pred, const RigidTransform& t_new,
                          std::size_t n_new);

struct Detection {
  Pixel pixel;
  ScenePoint point;
  FeatureVector feature;
};

/// Drops tracks flagged outlier, pulls inliers 1/N_P of the way onto their
/// current viewing ray, appends detections with N_P = 1, then evicts lowest N_P
/// and oldest entries beyond cfg.max_tracked.
void update_scene_points(SequenceState& state, const RigidTransform& t_wn, const std::vector<bool>& inlier,
                         std::span<const Detection> detections, const PinholeCamera& cam, const RelocConfig& cfg);

/// One frame of sequence relocalization.
RelocResult step_sequence(SequenceState& state, const FrameObservation& frame, const SceneHead& head,
                          Tracker& tracker, const RelocConfig& cfg);

}  // namespace scr
