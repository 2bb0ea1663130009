#pragma once

// Training-buffer construction from posed frames and scene-head training.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "scr/frame.hpp"
#include "scr/training.hpp"

namespace scr {

struct MappingConfig {
  std::size_t patches_per_frame = 1000;
  double keyframe_match_ratio = 0.5;
  int epochs = 16;
  std::size_t batch_size = 5120;
  double match_inlier_threshold = 4.0;  // px
  std::uint64_t seed = 0;
  HeadShape head;
  AdamWConfig optimizer;

  void validate() const;
};

struct FeatureMatch {
  std::size_t frame_index;     // into the frame's patches
  std::size_t keyframe_index;  // into the keyframe's patches
};

/// Pairs patches of a frame with patches of its keyframe.
class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual std::vector<FeatureMatch> match(const FrameObservation& frame, const FrameObservation& keyframe) = 0;
};

/// Mutual nearest neighbours in feature space with a ratio test.
class DescriptorMatcher final : public Matcher {
 public:
  explicit DescriptorMatcher(double ratio = 0.8, double max_distance = 0.5)
      : ratio_(ratio), max_distance_(max_distance) {}
  std::vector<FeatureMatch> match(const FrameObservation& frame, const FrameObservation& keyframe) override;

 private:
  double ratio_;
  double max_distance_;
};

/// The k most salient patches, descending saliency, ties by ascending (v, u).
std::vector<PatchSample> select_salient_patches(std::span<const PatchSample> candidates, std::size_t k);

/// True iff matched < ratio * detected. Throws InvalidArgument if detected == 0.
bool is_new_keyframe(std::size_t matched_count, std::size_t detected_count, double ratio = 0.5);

/// Two-view ray consistency under known poses: the triangulated point on each
/// ray must reproject onto the other observation within threshold.
bool is_consistent_match(const Pixel& p_frame, const RigidTransform& t_wc, const PinholeCamera& cam_frame,
                         const Pixel& p_key, const RigidTransform& t_wk, const PinholeCamera& cam_key,
                         double threshold, double fallback_depth = 10.0);

/// Per-patch keyframe association with the geometric inlier flag.
std::vector<std::optional<KeyframeMatch>> associate_to_keyframe(const FrameObservation& frame,
                                                                const FrameObservation& keyframe,
                                                                std::span<const FeatureMatch> matches,
                                                                const MappingConfig& cfg);
std::vector<std::optional<KeyframeMatch>> associate_to_keyframe(const FrameObservation& frame,
                                                                const FrameObservation& keyframe, Matcher& matcher,
                                                                const MappingConfig& cfg);

struct FrameBufferInfo {
  std::uint64_t frame_id = 0;
  bool is_keyframe = false;
  std::optional<std::uint64_t> keyframe_id;  // keyframe this frame was matched against
  std::size_t detected = 0;
  std::size_t matched = 0;
  std::size_t inlier_matches = 0;
};

struct TrainingBuffer {
  std::vector<TrainingRecord> records;
  std::vector<FrameBufferInfo> frames;
};

/// Keyframe selection, association against the most recent keyframe, one record
/// per selected patch, then a seeded shuffle. Throws EmptySequence.
TrainingBuffer build_training_buffer(std::span<const FrameObservation> frames, Matcher& matcher,
                                     const MappingConfig& cfg);

/// Random head whose output bias is the mean pseudo-depth target of the buffer.
SceneHead initial_head(std::span<const TrainingRecord> buffer, const MappingConfig& cfg, const LossConfig& loss_cfg);

struct TrainResult {
  SceneHead head;
  std::vector<double> losses;  // one per optimizer step
};

/// Epochs of AdamW over the buffer consumed cyclically in batches, one-cycle
/// learning rate across all steps. Throws EmptyBuffer.
TrainResult train_head(std::span<const TrainingRecord> buffer, SceneHead head, const MappingConfig& cfg,
                       const LossConfig& loss_cfg);

}  // namespace scr
