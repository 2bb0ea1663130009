#pragma once

// Pose-error metrics and the evaluation report.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scr/geometry.hpp"
#include "scr/io.hpp"

namespace scr {

struct PoseError {
  double translation = 0.0;  // m
  double rotation = 0.0;     // deg
};

struct Threshold {
  double meters = 0.0;
  double degrees = 0.0;
};

/// ||t_est - t_gt|| and the angle of R_gt^T R_est in degrees.
PoseError pose_error(const RigidTransform& estimate, const RigidTransform& truth);

/// Percentage of errors strictly below both components. Throws EmptyInput.
double compute_recall(std::span<const PoseError> errors, Threshold thresh);

/// Componentwise lower median (order statistic ceil(N/2)). Throws EmptyInput.
PoseError compute_medians(std::span<const PoseError> errors);

/// Parses "m,deg;m,deg;...". Throws BadConfig.
std::vector<Threshold> parse_thresholds(const std::string& s);

struct EvalReport {
  std::vector<std::uint64_t> frame_ids;
  std::vector<PoseError> errors;  // failed frames carry infinite errors
  std::vector<RelocStatus> statuses;
  std::vector<Threshold> thresholds;
  std::vector<double> recalls;  // percent, one per threshold
  PoseError median;
  double mean_latency_us = 0.0;
  std::size_t failed = 0;
};

/// Pairs trajectory rows, ordered by frame_id, with ground-truth poses in file
/// order. Throws BadFormat on a count mismatch.
EvalReport evaluate(const std::vector<TrajectoryRow>& rows, const std::vector<RigidTransform>& truth,
                    const std::vector<Threshold>& thresholds);

/// CSV: summary key,value lines, a blank line, then one row per frame. Numbers
/// use six significant digits.
std::string format_report(const EvalReport& report);

}  // namespace scr
