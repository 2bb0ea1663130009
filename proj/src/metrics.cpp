#include "scr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "scr/error.hpp"

namespace scr {

PoseError pose_error(const RigidTransform& estimate, const RigidTransform& truth) {
  PoseError e;
  e.translation = (estimate.translation() - truth.translation()).norm();
  e.rotation = rotation_angle(truth.rotation().transpose() * estimate.rotation()) * 180.0 / M_PI;
  return e;
}

double compute_recall(std::span<const PoseError> errors, Threshold thresh) {
  if (errors.empty()) throw Error(ErrorCode::EmptyInput, "recall of an empty error list");
  std::size_t hits = 0;
  for (const PoseError& e : errors) {
    if (e.translation < thresh.meters && e.rotation < thresh.degrees) ++hits;
  }
  return 100.0 * double(hits) / double(errors.size());
}

PoseError compute_medians(std::span<const PoseError> errors) {
  if (errors.empty()) throw Error(ErrorCode::EmptyInput, "median of an empty error list");
  std::vector<double> t, r;
  for (const PoseError& e : errors) {
    t.push_back(e.translation);
    r.push_back(e.rotation);
  }
  const std::size_t k = (errors.size() + 1) / 2 - 1;  // ceil(N/2)-th order statistic, 0-based
  std::nth_element(t.begin(), t.begin() + std::ptrdiff_t(k), t.end());
  std::nth_element(r.begin(), r.begin() + std::ptrdiff_t(k), r.end());
  return {t[k], r[k]};
}

std::vector<Threshold> parse_thresholds(const std::string& s) {
  std::vector<Threshold> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    const auto comma = item.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::BadConfig, "threshold '" + item + "' needs meters,degrees");
    Threshold t;
    try {
      t.meters = parse_double(item.substr(0, comma));
      t.degrees = parse_double(item.substr(comma + 1));
    } catch (const Error& e) {
      throw Error(ErrorCode::BadConfig, std::string("threshold: ") + e.what());
    }
    if (!(t.meters > 0.0) || !(t.degrees > 0.0)) throw Error(ErrorCode::BadConfig, "thresholds must be positive");
    out.push_back(t);
  }
  if (out.empty()) throw Error(ErrorCode::BadConfig, "no thresholds given");
  return out;
}

EvalReport evaluate(const std::vector<TrajectoryRow>& rows, const std::vector<RigidTransform>& truth,
                    const std::vector<Threshold>& thresholds) {
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "trajectory has no rows");
  if (rows.size() != truth.size()) {
    throw Error(ErrorCode::BadFormat, "trajectory has " + std::to_string(rows.size()) + " rows but ground truth has " +
                                          std::to_string(truth.size()) + " poses");
  }
  std::vector<const TrajectoryRow*> sorted;
  for (const TrajectoryRow& r : rows) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const TrajectoryRow* a, const TrajectoryRow* b) { return a->frame_id < b->frame_id; });

  EvalReport report;
  report.thresholds = thresholds;
  double latency = 0.0;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const TrajectoryRow& row = *sorted[i];
    report.frame_ids.push_back(row.frame_id);
    report.statuses.push_back(row.status);
    if (row.status == RelocStatus::Failed) {
      report.errors.push_back({kInf, kInf});
      ++report.failed;
    } else {
      report.errors.push_back(pose_error(row.pose, truth[i]));
    }
    latency += double(row.micros);
  }
  for (const Threshold& t : thresholds) report.recalls.push_back(compute_recall(report.errors, t));
  report.median = compute_medians(report.errors);
  report.mean_latency_us = latency / double(rows.size());
  return report;
}

std::string format_report(const EvalReport& report) {
  std::string out = "metric,value\n";
  out += "frames," + std::to_string(report.errors.size()) + "\n";
  out += "failed," + std::to_string(report.failed) + "\n";
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    out += "recall_pct@" + format_sig6(report.thresholds[i].meters) + "m_" + format_sig6(report.thresholds[i].degrees) +
           "deg," + format_sig6(report.recalls[i]) + "\n";
  }
  out += "median_translation_m," + format_sig6(report.median.translation) + "\n";
  out += "median_rotation_deg," + format_sig6(report.median.rotation) + "\n";
  out += "mean_latency_us," + format_sig6(report.mean_latency_us) + "\n";
  out += "\nframe_id,translation_m,rotation_deg,status\n";
  for (std::size_t i = 0; i < report.errors.size(); ++i) {
    out += std::to_string(report.frame_ids[i]) + "," + format_sig6(report.errors[i].translation) + "," +
           format_sig6(report.errors[i].rotation) + "," + to_string(report.statuses[i]) + "\n";
  }
  return out;
}

}  // namespace scr
