#pragma once

// Synthetic scenes standing in for a feature backbone: landmarks with
// position-derived features, camera trajectories, per-frame observations,
// cross-frame matches and tracks. Everything is a pure function of the seed.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "scr/frame.hpp"
#include "scr/mapping.hpp"
#include "scr/relocalizer.hpp"

namespace scr {

enum class TrajectoryKind { Orbit, Lawnmower };

const char* to_string(TrajectoryKind kind);
TrajectoryKind trajectory_from_string(const std::string& s);

struct SimConfig {
  std::size_t n_landmarks = 5000;
  std::size_t n_frames = 200;
  std::size_t n_test_frames = 50;
  double pixel_noise_sigma = 0.5;     // px
  double feature_noise_sigma = 0.01;
  double match_outlier_rate = 0.1;
  double track_dropout_rate = 0.05;
  TrajectoryKind trajectory = TrajectoryKind::Orbit;
  PinholeCamera camera{520.0, 520.0, 320.0, 240.0, 640.0, 480.0};
  int feature_dim = 32;
  std::uint64_t seed = 7;

  // Scene box and feature embedding.
  Eigen::Vector3d bounds_min{-2.5, -2.5, -2.5};
  Eigen::Vector3d bounds_max{2.5, 2.5, 2.5};
  double embedding_frequency = 0.6;  // rad per meter of the sinusoidal basis
  double identity_sigma = 0.002;     // per-landmark feature offset
  std::vector<std::vector<std::size_t>> aliasing_groups;
  double min_visible_depth = 0.1;

  // Orbit: circle of `orbit_radius` around the box center at `orbit_height`
  // above it, looking at the center. Held-out frames use the offsets.
  double orbit_radius = 6.0;
  double orbit_height = 1.0;
  double orbit_arc = 2.0 * M_PI;  // swept by the mapping frames
  double test_radius_offset = -0.4;
  double test_height_offset = 0.5;
  double test_phase = 0.37;       // radians
  double test_arc = 1.3;          // swept by the held-out frames

  // Lawnmower: rows across a rectangle `standoff` meters in front of the box,
  // viewing direction +y.
  double sweep_width = 1.0;
  double sweep_height = 0.4;
  std::size_t sweep_rows = 5;
  double standoff = 10.0;

  void validate() const;
};

struct SyntheticScene {
  std::vector<ScenePoint> landmarks;
  std::vector<std::size_t> embedding_source;  // landmark whose embedding is used (aliasing)
  std::vector<double> saliency;
  // f_k(x) = sin(basis_k . (x - center) + phase_k) + identity_k(landmark)
  Eigen::MatrixXd basis;       // C_f x 3
  Eigen::VectorXd phase;       // C_f
  Eigen::MatrixXd identity;    // C_f x n_landmarks
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d bounds_min, bounds_max;
  std::uint64_t seed = 0;

  /// Noise-free feature of a landmark.
  FeatureVector feature(std::size_t landmark) const;
};

/// Frame observation plus the evaluation-only landmark ids of its patches.
struct SyntheticFrame {
  FrameObservation obs;
  std::vector<std::size_t> landmark_ids;
};

SyntheticScene generate_scene(const SimConfig& cfg);

/// Mapping trajectory; consecutive poses differ by < 0.2 m and < 5 deg for the defaults.
std::vector<RigidTransform> generate_trajectory(const SimConfig& cfg);
/// Held-out query trajectory disjoint from the mapping one.
std::vector<RigidTransform> generate_test_trajectory(const SimConfig& cfg);

/// Camera-to-world pose at `position` looking at `target` with world +z up.
RigidTransform look_at(const Eigen::Vector3d& position, const Eigen::Vector3d& target);

SyntheticFrame synthesize_frame(const SyntheticScene& scene, const RigidTransform& t_wc, const SimConfig& cfg,
                                std::uint64_t frame_id);

/// Index pairs (a, b) of co-visible landmarks; a match_outlier_rate fraction is
/// re-paired to a wrong patch of b.
std::vector<std::pair<std::size_t, std::size_t>> synthesize_matches(const SyntheticFrame& a, const SyntheticFrame& b,
                                                                    const SimConfig& cfg);

/// Ground-truth flow of `landmarks` into the camera at cur_pose; tracks leaving
/// the image always die, others die with track_dropout_rate.
TrackUpdate synthesize_tracks(std::span<const std::size_t> landmarks, const RigidTransform& cur_pose,
                              std::uint64_t cur_frame_id, const SyntheticScene& scene, const SimConfig& cfg);

/// Matcher backed by simulator ground truth. Frames must be registered first;
/// patches are identified by (frame_id, pixel).
class SimulatorMatcher final : public Matcher {
 public:
  explicit SimulatorMatcher(SimConfig cfg) : cfg_(std::move(cfg)) {}
  void register_frame(const SyntheticFrame& frame);
  std::vector<FeatureMatch> match(const FrameObservation& frame, const FrameObservation& keyframe) override;

 private:
  std::size_t landmark_of(std::uint64_t frame_id, const Pixel& p) const;
  SimConfig cfg_;
  std::map<std::tuple<std::uint64_t, double, double>, std::size_t> ids_;
};

/// Tracker backed by simulator ground truth.
class SimulatorTracker final : public Tracker {
 public:
  SimulatorTracker(const SyntheticScene& scene, SimConfig cfg) : scene_(scene), cfg_(std::move(cfg)) {}
  /// Registers the frame's patches and its ground-truth pose.
  void register_frame(const SyntheticFrame& frame);
  TrackUpdate track(std::uint64_t previous_frame_id, std::span<const TrackedPoint> tracks,
                    const FrameObservation& current) override;

 private:
  const SyntheticScene& scene_;
  SimConfig cfg_;
  std::map<std::tuple<std::uint64_t, double, double>, std::size_t> ids_;
  std::unordered_map<std::uint64_t, RigidTransform> poses_;
};

}  // namespace scr
