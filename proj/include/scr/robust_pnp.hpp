#pragma once

// Perspective-n-point with RANSAC over 2D-3D correspondences.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "scr/geometry.hpp"
#include "scr/seed.hpp"

namespace scr {

struct Correspondence {
  Pixel pixel;
  ScenePoint point;
};

struct PoseEstimate {
  RigidTransform pose;
  std::size_t inlier_count = 0;
  std::vector<bool> inlier_mask;
  double mean_inlier_error = 0.0;  // pixels
};

struct RansacConfig {
  double inlier_threshold = 10.0;  // pixels
  int max_iterations = 256;
  int min_inliers = 6;
  int refine_iterations = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct InlierSet {
  std::vector<bool> mask;
  std::size_t count = 0;
  double mean_error = 0.0;  // over inliers; 0 when there are none
};

/// Normalized DLT on six or more correspondences; returns T_wc.
/// Fewer than 4 correspondences is a precondition violation (InvalidArgument);
/// 4 or 5, collinear or coplanar point sets are DegenerateConfiguration.
RigidTransform pnp_minimal(std::span<const Correspondence> corrs, const PinholeCamera& cam);

/// Strict `error < threshold`; points behind the camera are outliers.
InlierSet classify_inliers(std::span<const Correspondence> corrs, const RigidTransform& pose,
                           const PinholeCamera& cam, double threshold);

/// Damped Gauss-Newton on the squared reprojection error of the masked
/// correspondences. Never returns a pose with a higher cost than `initial`.
RigidTransform refine_pose(std::span<const Correspondence> corrs, const std::vector<bool>& mask,
                           const RigidTransform& initial, const PinholeCamera& cam, int iterations = 10);

/// Seeded RANSAC over 6-point DLT hypotheses followed by inlier re-solves.
/// Throws TooFewCorrespondences (< 4) or NoConsensus (< min_inliers).
PoseEstimate ransac_pnp(std::span<const Correspondence> corrs, const PinholeCamera& cam, const RansacConfig& cfg);

}  // namespace scr
