#pragma once

#include <cstdint>
#include <vector>

#include "scr/geometry.hpp"
#include "scr/scene_head.hpp"

namespace scr {

/// One salient image patch as produced by the feature backbone.
struct PatchSample {
  Pixel pixel;
  FeatureVector feature;
  double saliency = 0.0;  // [0, 1]
};

/// A frame's backbone output. t_wc is the ground-truth pose during mapping and
/// is ignored by relocalization.
struct FrameObservation {
  std::uint64_t frame_id = 0;
  RigidTransform t_wc;
  PinholeCamera cam;
  std::vector<PatchSample> patches;

  int feature_dim() const { return patches.empty() ? 0 : int(patches.front().feature.size()); }
};

}  // namespace scr
