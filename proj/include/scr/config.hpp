#pragma once

// INI-style run configuration shared by every CLI command.
//
//   seed = 7                ; optional, seeds every section below
//   [simulator]  n_landmarks, n_frames, n_test_frames, pixel_noise_sigma, ...
//   [camera]     fx, fy, cx, cy, width, height
//   [mapping]    patches_per_frame, epochs, batch_size, hidden_dim, ...
//   [loss]       tau_min, tau_max, lambda_cross, ...
//   [matcher]    ratio, max_distance
//   [ransac]     inlier_threshold, max_iterations, min_inliers, ...
//   [localize]   patches_per_frame, max_tracked, tracker, max_failure_rate, ...
//
// Unknown sections or keys are rejected.

#include <filesystem>
#include <string>

#include "scr/mapping.hpp"
#include "scr/relocalizer.hpp"
#include "scr/simulator.hpp"

namespace scr {

struct MatcherConfig {
  double ratio = 0.8;
  double max_distance = 0.5;
};

struct TrackerConfig {
  std::string kind = "descriptor";  // descriptor | none
  double search_radius = 40.0;      // px
  double max_distance = 0.5;
  double ratio = 0.8;
};

struct AppConfig {
  SimConfig sim;
  MappingConfig mapping;
  LossConfig loss;
  MatcherConfig matcher;
  RelocConfig reloc;
  TrackerConfig tracker;
  double max_failure_rate = 1.0;  // localize exits 4 above this fraction

  void validate() const;
};

/// Throws BadConfig on syntax errors, unknown keys, bad values.
AppConfig parse_config(const std::string& text);
AppConfig load_config(const std::filesystem::path& path);
/// Every key with its effective value, in parse_config syntax.
std::string format_config(const AppConfig& cfg);

}  // namespace scr
