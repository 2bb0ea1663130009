#include "scr/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "scr/error.hpp"
#include "scr/seed.hpp"

namespace scr {

void MappingConfig::validate() const {
  if (patches_per_frame == 0 || batch_size == 0 || epochs < 1) {
    throw Error(ErrorCode::InvalidArgument, "mapping counts must be positive");
  }
  if (!(keyframe_match_ratio > 0.0 && keyframe_match_ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "keyframe_match_ratio must lie in (0, 1]");
  }
  if (!(match_inlier_threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "match_inlier_threshold must be > 0");
  const AdamWConfig& o = optimizer;
  if (!(o.lr_min >= 0.0 && o.lr_min <= o.lr_max) || !(o.weight_decay >= 0.0) || !(o.beta1 >= 0.0 && o.beta1 < 1.0) ||
      !(o.beta2 >= 0.0 && o.beta2 < 1.0) || !(o.eps > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "invalid optimizer settings");
  }
}

std::vector<FeatureMatch> DescriptorMatcher::match(const FrameObservation& frame, const FrameObservation& keyframe) {
  const std::size_t n = frame.patches.size();
  const std::size_t m = keyframe.patches.size();
  if (n == 0 || m < 2) return {};
  const int dim = frame.feature_dim();
  if (keyframe.feature_dim() != dim) throw Error(ErrorCode::DimensionMismatch, "matcher feature dimensions differ");

  Eigen::MatrixXf a(dim, n), b(dim, m);
  for (std::size_t i = 0; i < n; ++i) a.col(Eigen::Index(i)) = frame.patches[i].feature;
  for (std::size_t j = 0; j < m; ++j) b.col(Eigen::Index(j)) = keyframe.patches[j].feature;
  Eigen::MatrixXf d2 = -2.0f * (a.transpose() * b);
  d2.colwise() += a.colwise().squaredNorm().transpose();
  d2.rowwise() += b.colwise().squaredNorm();

  std::vector<Eigen::Index> best_for_key(m);
  for (std::size_t j = 0; j < m; ++j) d2.col(Eigen::Index(j)).minCoeff(&best_for_key[j]);

  std::vector<FeatureMatch> out;
  const float ratio2 = float(ratio_ * ratio_);
  const float max2 = float(max_distance_ * max_distance_);
  for (std::size_t i = 0; i < n; ++i) {
    float best = std::numeric_limits<float>::infinity();
    float second = best;
    Eigen::Index best_j = -1;
    for (Eigen::Index j = 0; j < Eigen::Index(m); ++j) {
      const float d = d2(Eigen::Index(i), j);
      if (d < best) {
        second = best;
        best = d;
        best_j = j;
      } else if (d < second) {
        second = d;
      }
    }
    if (best_j < 0 || best > max2 || best >= ratio2 * second) continue;
    if (best_for_key[std::size_t(best_j)] != Eigen::Index(i)) continue;
    out.push_back({i, std::size_t(best_j)});
  }
  return out;
}

std::vector<PatchSample> select_salient_patches(std::span<const PatchSample> candidates, std::size_t k) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t keep = std::min(k, candidates.size());
  auto before = [&](std::size_t a, std::size_t b) {
    const PatchSample& pa = candidates[a];
    const PatchSample& pb = candidates[b];
    if (pa.saliency != pb.saliency) return pa.saliency > pb.saliency;
    if (pa.pixel.v != pb.pixel.v) return pa.pixel.v < pb.pixel.v;
    if (pa.pixel.u != pb.pixel.u) return pa.pixel.u < pb.pixel.u;
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(keep), order.end(), before);
  std::vector<PatchSample> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(candidates[order[i]]);
  return out;
}

bool is_new_keyframe(std::size_t matched_count, std::size_t detected_count, double ratio) {
  if (detected_count == 0) throw Error(ErrorCode::InvalidArgument, "keyframe test needs detected features");
  if (ratio == 0.5) return 2 * matched_count < detected_count;
  return double(matched_count) < ratio * double(detected_count);
}

bool is_consistent_match(const Pixel& p_frame, const RigidTransform& t_wc, const PinholeCamera& cam_frame,
                         const Pixel& p_key, const RigidTransform& t_wk, const PinholeCamera& cam_key,
                         double threshold, double fallback_depth) {
  const Eigen::Vector3d c1 = t_wc.translation();
  const Eigen::Vector3d c2 = t_wk.translation();
  const Eigen::Vector3d d1 = ray_direction(p_frame, t_wc, cam_frame);
  const Eigen::Vector3d d2 = ray_direction(p_key, t_wk, cam_key);

  Eigen::Vector3d x1, x2;
  const double b = d1.dot(d2);
  const double denom = 1.0 - b * b;
  if (denom < 1e-12) {
    x1 = backproject_at_depth(p_frame, fallback_depth, t_wc, cam_frame);
    x2 = backproject_at_depth(p_key, fallback_depth, t_wk, cam_key);
  } else {
    const Eigen::Vector3d w0 = c1 - c2;
    const double d = d1.dot(w0);
    const double e = d2.dot(w0);
    const double s = (b * e - d) / denom;
    const double r = (e - b * d) / denom;
    if (!(s > 0.0) || !(r > 0.0)) return false;
    x1 = c1 + s * d1;
    x2 = c2 + r * d2;
  }
  return reprojection_error(p_key, x1, t_wk, cam_key) < threshold &&
         reprojection_error(p_frame, x2, t_wc, cam_frame) < threshold;
}

std::vector<std::optional<KeyframeMatch>> associate_to_keyframe(const FrameObservation& frame,
                                                                const FrameObservation& keyframe,
                                                                std::span<const FeatureMatch> matches,
                                                                const MappingConfig& cfg) {
  std::vector<std::optional<KeyframeMatch>> out(frame.patches.size());
  for (const FeatureMatch& m : matches) {
    if (m.frame_index >= frame.patches.size() || m.keyframe_index >= keyframe.patches.size()) {
      throw Error(ErrorCode::OutOfRange, "match index outside patch list");
    }
    const Pixel& pf = frame.patches[m.frame_index].pixel;
    const Pixel& pk = keyframe.patches[m.keyframe_index].pixel;
    KeyframeMatch km;
    km.pixel = pk;
    km.t_wk = keyframe.t_wc;
    km.cam = keyframe.cam;
    km.is_inlier =
        is_consistent_match(pf, frame.t_wc, frame.cam, pk, keyframe.t_wc, keyframe.cam, cfg.match_inlier_threshold);
    out[m.frame_index] = km;
  }
  return out;
}

std::vector<std::optional<KeyframeMatch>> associate_to_keyframe(const FrameObservation& frame,
                                                                const FrameObservation& keyframe, Matcher& matcher,
                                                                const MappingConfig& cfg) {
  const auto matches = matcher.match(frame, keyframe);
  return associate_to_keyframe(frame, keyframe, matches, cfg);
}

TrainingBuffer build_training_buffer(std::span<const FrameObservation> frames, Matcher& matcher,
                                     const MappingConfig& cfg) {
  cfg.validate();
  if (frames.empty()) throw Error(ErrorCode::EmptySequence, "no frames to map");

  TrainingBuffer buffer;
  std::optional<FrameObservation> keyframe;
  for (const FrameObservation& raw : frames) {
    FrameObservation frame;
    frame.frame_id = raw.frame_id;
    frame.t_wc = raw.t_wc;
    frame.cam = raw.cam;
    frame.patches = select_salient_patches(raw.patches, cfg.patches_per_frame);

    FrameBufferInfo info;
    info.frame_id = frame.frame_id;
    info.detected = frame.patches.size();
    std::vector<std::optional<KeyframeMatch>> assoc(frame.patches.size());
    if (!keyframe) {
      info.is_keyframe = true;
    } else {
      const auto matches = matcher.match(frame, *keyframe);
      info.keyframe_id = keyframe->frame_id;
      info.matched = matches.size();
      assoc = associate_to_keyframe(frame, *keyframe, matches, cfg);
      info.is_keyframe =
          frame.patches.empty() || is_new_keyframe(info.matched, info.detected, cfg.keyframe_match_ratio);
    }

    for (std::size_t i = 0; i < frame.patches.size(); ++i) {
      TrainingRecord r;
      r.feature = frame.patches[i].feature;
      r.pixel = frame.patches[i].pixel;
      r.cam = frame.cam;
      r.t_wc = frame.t_wc;
      r.match = assoc[i];
      if (r.match && r.match->is_inlier) ++info.inlier_matches;
      buffer.records.push_back(std::move(r));
    }
    buffer.frames.push_back(info);
    if (info.is_keyframe) keyframe = std::move(frame);
  }

  std::mt19937_64 rng(cfg.seed);
  std::shuffle(buffer.records.begin(), buffer.records.end(), rng);
  return buffer;
}

SceneHead initial_head(std::span<const TrainingRecord> buffer, const MappingConfig& cfg, const LossConfig& loss_cfg) {
  if (buffer.empty()) throw Error(ErrorCode::EmptyBuffer, "cannot initialize a head from an empty buffer");
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  for (const TrainingRecord& r : buffer) center += backproject_at_depth(r.pixel, loss_cfg.pseudo_depth, r.t_wc, r.cam);
  center /= double(buffer.size());
  HeadShape shape = cfg.head;
  shape.feature_dim = int(buffer.front().feature.size());
  return SceneHead::random(shape, mix_seed(cfg.seed, 0x4EAD), center);
}

TrainResult train_head(std::span<const TrainingRecord> buffer, SceneHead head, const MappingConfig& cfg,
                       const LossConfig& loss_cfg) {
  cfg.validate();
  loss_cfg.validate();
  if (buffer.empty()) throw Error(ErrorCode::EmptyBuffer, "training buffer is empty");

  const std::size_t n = buffer.size();
  const std::size_t batch = std::min(cfg.batch_size, n);
  const long steps_per_epoch = long((n + batch - 1) / batch);
  const long total = steps_per_epoch * cfg.epochs;

  auto state = OptimizerState<float>::zeros_like(head, cfg.optimizer);
  TrainResult out;
  out.losses.reserve(std::size_t(total));
  std::vector<const TrainingRecord*> views(batch);
  std::size_t cursor = 0;
  for (long step = 0; step < total; ++step) {
    for (std::size_t i = 0; i < batch; ++i) views[i] = &buffer[(cursor + i) % n];
    cursor = (cursor + batch) % n;
    const double t = (double(step) + 0.5) / double(total);
    const double lr = one_cycle_lr(step, total, cfg.optimizer.lr_min, cfg.optimizer.lr_max);
    auto loss = batch_loss<float>(std::span<const TrainingRecord* const>(views), head, t, loss_cfg);
    out.losses.push_back(loss.loss);
    adamw_step(head, state, loss.gradient, lr);
    if (!head.all_finite()) throw Error(ErrorCode::OutOfRange, "non-finite head weights after optimizer step");
  }
  out.head = std::move(head);
  return out;
}

}  // namespace scr
