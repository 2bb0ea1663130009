#include "scr/relocalizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "scr/error.hpp"
#include "scr/mapping.hpp"

namespace scr {

namespace {

std::vector<Detection> inlier_detections(const FramePrediction& fresh) {
  std::vector<Detection> out;
  if (!fresh.estimate) return out;
  for (std::size_t i = 0; i < fresh.corrs.size(); ++i) {
    if (fresh.estimate->inlier_mask[i]) out.push_back({fresh.corrs[i].pixel, fresh.corrs[i].point, fresh.features[i]});
  }
  return out;
}

RelocResult single_result(const FramePrediction& fresh) {
  RelocResult r;
  r.mode = RelocMode::Single;
  if (fresh.estimate) {
    r.pose = fresh.estimate->pose;
    r.inliers_new = fresh.estimate->inlier_count;
    r.status = RelocStatus::Ok;
  }
  return r;
}

std::vector<Correspondence> track_correspondences(const SequenceState& state) {
  std::vector<Correspondence> corrs;
  corrs.reserve(state.tracked.size());
  for (const TrackedPoint& t : state.tracked) corrs.push_back({t.pixel, t.point});
  return corrs;
}

}  // namespace

void RelocConfig::validate() const {
  ransac.validate();
  if (patches_per_frame == 0 || max_tracked == 0) throw Error(ErrorCode::InvalidArgument, "reloc counts must be positive");
  if (min_tracks < 4) throw Error(ErrorCode::InvalidArgument, "min_tracks must be >= 4");
}

const char* to_string(RelocMode mode) { return mode == RelocMode::Single ? "single" : "sequence"; }

const char* to_string(RelocStatus status) {
  switch (status) {
    case RelocStatus::Ok: return "ok";
    case RelocStatus::FallbackSingle: return "fallback_single";
    case RelocStatus::Failed: return "failed";
  }
  return "failed";
}

TrackUpdate DescriptorTracker::track(std::uint64_t, std::span<const TrackedPoint> tracks,
                                     const FrameObservation& current) {
  TrackUpdate out;
  out.pixels.resize(tracks.size());
  out.alive.assign(tracks.size(), false);
  out.features.resize(tracks.size());
  if (current.patches.empty()) return out;

  // Uniform grid over the image with cell size = search radius.
  const double cell = std::max(radius_, 1.0);
  const int gw = int(std::ceil(current.cam.width / cell)) + 1;
  auto key = [&](int gx, int gy) { return gy * gw + gx; };
  std::unordered_map<int, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i < current.patches.size(); ++i) {
    const Pixel& p = current.patches[i].pixel;
    grid[key(int(p.u / cell), int(p.v / cell))].push_back(i);
  }

  const double r2 = radius_ * radius_;
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    const TrackedPoint& tr = tracks[t];
    if (tr.feature.size() != current.feature_dim()) continue;
    const int gx = int(tr.pixel.u / cell);
    const int gy = int(tr.pixel.v / cell);
    double best = std::numeric_limits<double>::infinity();
    double second = best;
    std::size_t best_i = 0;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        auto it = grid.find(key(gx + dx, gy + dy));
        if (gx + dx < 0 || gy + dy < 0 || it == grid.end()) continue;
        for (std::size_t i : it->second) {
          const Pixel& p = current.patches[i].pixel;
          const double du = p.u - tr.pixel.u, dv = p.v - tr.pixel.v;
          if (du * du + dv * dv > r2) continue;
          const double d = (current.patches[i].feature - tr.feature).norm();
          if (d < best || (d == best && i < best_i)) {
            second = best;
            best = d;
            best_i = i;
          } else if (d < second) {
            second = d;
          }
        }
      }
    }
    if (!(best <= max_distance_) || !(best < ratio_ * second)) continue;
    out.alive[t] = true;
    out.pixels[t] = current.patches[best_i].pixel;
    out.features[t] = current.patches[best_i].feature;
  }
  return out;
}

FramePrediction predict_frame(const FrameObservation& frame, const SceneHead& head, const RelocConfig& cfg) {
  FramePrediction out;
  const auto patches = select_salient_patches(frame.patches, cfg.patches_per_frame);
  if (patches.empty()) return out;
  SceneHead::Matrix features(head.feature_dim(), Eigen::Index(patches.size()));
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].feature.size() != head.feature_dim()) {
      throw Error(ErrorCode::DimensionMismatch, "frame feature dimension does not match the map");
    }
    features.col(Eigen::Index(i)) = patches[i].feature;
  }
  const SceneHead::Matrix pred = head.forward(features);
  out.corrs.reserve(patches.size());
  out.features.reserve(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    out.corrs.push_back({patches[i].pixel, pred.col(Eigen::Index(i)).cast<double>()});
    out.features.push_back(patches[i].feature);
  }
  try {
    out.estimate = ransac_pnp(out.corrs, frame.cam, cfg.ransac);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoConsensus && e.code() != ErrorCode::TooFewCorrespondences) throw;
  }
  return out;
}

RelocResult localize_single(const FrameObservation& frame, const SceneHead& head, const RelocConfig& cfg) {
  return single_result(predict_frame(frame, head, cfg));
}

PoseEstimate predict_pose(const SequenceState& state, const PinholeCamera& cam, const RelocConfig& cfg) {
  if (state.tracked.size() < std::max<std::size_t>(cfg.min_tracks, 4)) {
    throw Error(ErrorCode::TooFewTracks, std::to_string(state.tracked.size()) + " tracks survive");
  }
  const auto corrs = track_correspondences(state);
  return ransac_pnp(corrs, cam, cfg.ransac);
}

std::pair<double, double> fusion_weights(std::size_t n_pred, std::size_t n_new) {
  const std::size_t total = n_pred + n_new;
  if (total == 0) throw Error(ErrorCode::BothEstimatesFailed, "both inlier counts are zero");
  // The larger weight lies in [0.5, 1], so 1 - larger is exact and the pair sums to 1.
  if (n_pred >= n_new) {
    const double w = double(n_pred) / double(total);
    return {w, 1.0 - w};
  }
  const double w = double(n_new) / double(total);
  return {1.0 - w, w};
}

RigidTransform fuse_poses(const RigidTransform& t_pred, std::size_t n_pred, const RigidTransform& t_new,
                          std::size_t n_new) {
  const auto [w_pred, w_new] = fusion_weights(n_pred, n_new);
  if (n_new == 0) return t_pred;
  if (n_pred == 0) return t_new;
  const Twist delta = se3_log(t_pred.inverse() * t_new);
  return t_pred * se3_exp(Twist{w_new * delta.rho, w_new * delta.phi});
}

void update_scene_points(SequenceState& state, const RigidTransform& t_wn, const std::vector<bool>& inlier,
                         std::span<const Detection> detections, const PinholeCamera& cam, const RelocConfig& cfg) {
  if (inlier.size() != state.tracked.size()) throw Error(ErrorCode::DimensionMismatch, "inlier flags per track");
  std::vector<TrackedPoint> kept;
  kept.reserve(state.tracked.size() + detections.size());
  for (std::size_t i = 0; i < state.tracked.size(); ++i) {
    if (!inlier[i]) continue;
    TrackedPoint tp = std::move(state.tracked[i]);
    tp.obs_count += 1;
    const ScenePoint foot = perpendicular_foot(tp.point, tp.pixel, t_wn, cam);
    tp.point += (foot - tp.point) / double(tp.obs_count);
    tp.last_inlier = true;
    kept.push_back(std::move(tp));
  }
  for (const Detection& d : detections) {
    TrackedPoint tp;
    tp.pixel = d.pixel;
    tp.point = d.point;
    tp.obs_count = 1;
    tp.feature = d.feature;
    tp.birth = state.next_birth++;
    kept.push_back(std::move(tp));
  }
  if (kept.size() > cfg.max_tracked) {
    std::stable_sort(kept.begin(), kept.end(), [](const TrackedPoint& a, const TrackedPoint& b) {
      if (a.obs_count != b.obs_count) return a.obs_count > b.obs_count;
      return a.birth > b.birth;
    });
    kept.resize(cfg.max_tracked);
    std::stable_sort(kept.begin(), kept.end(),
                     [](const TrackedPoint& a, const TrackedPoint& b) { return a.birth < b.birth; });
  }
  state.tracked = std::move(kept);
}

RelocResult step_sequence(SequenceState& state, const FrameObservation& frame, const SceneHead& head,
                          Tracker& tracker, const RelocConfig& cfg) {
  const FramePrediction fresh = predict_frame(frame, head, cfg);
  const auto detections = inlier_detections(fresh);

  auto finish = [&](const RelocResult& r) {
    state.last_pose = r.status == RelocStatus::Failed ? std::nullopt : std::optional<RigidTransform>(r.pose);
    state.last_frame_id = frame.frame_id;
    ++state.frame_index;
    return r;
  };
  auto bootstrap = [&]() {
    state.tracked.clear();
    RelocResult r = single_result(fresh);
    if (r.status == RelocStatus::Ok) {
      r.status = RelocStatus::FallbackSingle;
      update_scene_points(state, r.pose, {}, detections, frame.cam, cfg);
    }
    return finish(r);
  };

  if (state.tracked.empty() || !state.last_frame_id) return bootstrap();

  const TrackUpdate update = tracker.track(*state.last_frame_id, state.tracked, frame);
  if (update.alive.size() != state.tracked.size() || update.pixels.size() != state.tracked.size()) {
    throw Error(ErrorCode::DimensionMismatch, "tracker returned a different number of tracks");
  }
  std::vector<TrackedPoint> surviving;
  for (std::size_t i = 0; i < state.tracked.size(); ++i) {
    if (!update.alive[i]) continue;
    TrackedPoint tp = std::move(state.tracked[i]);
    tp.pixel = update.pixels[i];
    if (i < update.features.size() && update.features[i].size() > 0) tp.feature = update.features[i];
    surviving.push_back(std::move(tp));
  }
  state.tracked = std::move(surviving);
  if (state.tracked.size() < cfg.min_tracks) return bootstrap();

  PoseEstimate predicted;
  try {
    predicted = predict_pose(state, frame.cam, cfg);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoConsensus && e.code() != ErrorCode::TooFewCorrespondences &&
        e.code() != ErrorCode::TooFewTracks) {
      throw;
    }
    return bootstrap();
  }

  RelocResult r;
  r.mode = RelocMode::Sequence;
  r.status = RelocStatus::Ok;
  r.inliers_pred = predicted.inlier_count;
  r.pose = predicted.pose;
  if (fresh.estimate) {
    r.inliers_new = fresh.estimate->inlier_count;
    const RigidTransform fused =
        fuse_poses(predicted.pose, predicted.inlier_count, fresh.estimate->pose, fresh.estimate->inlier_count);
    // Guard against averaging two estimates that disagree.
    std::vector<Correspondence> all = track_correspondences(state);
    all.insert(all.end(), fresh.corrs.begin(), fresh.corrs.end());
    const double thr = cfg.ransac.inlier_threshold;
    const std::size_t n_fused = classify_inliers(all, fused, frame.cam, thr).count;
    const std::size_t n_pred = classify_inliers(all, predicted.pose, frame.cam, thr).count;
    const std::size_t n_new = classify_inliers(all, fresh.estimate->pose, frame.cam, thr).count;
    if (n_fused < n_pred && n_fused < n_new) {
      r.pose = n_pred >= n_new ? predicted.pose : fresh.estimate->pose;
    } else {
      r.pose = fused;
    }
  }
  for (std::size_t i = 0; i < state.tracked.size(); ++i) state.tracked[i].last_inlier = predicted.inlier_mask[i];
  update_scene_points(state, r.pose, predicted.inlier_mask, detections, frame.cam, cfg);
  return finish(r);
}

}  // namespace scr
