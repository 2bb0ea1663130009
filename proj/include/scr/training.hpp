#pragma once

// Reprojection objectives, optimizer and learning-rate schedule for the scene head.

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "scr/error.hpp"
#include "scr/geometry.hpp"
#include "scr/scene_head.hpp"

namespace scr {

struct LossConfig {
  double tau_min = 1.0;         // px
  double tau_max = 50.0;        // px
  double depth_min = 0.1;       // m
  double depth_max = 1000.0;    // m
  double reproj_max = 1000.0;   // px
  double pseudo_depth = 10.0;   // m
  double lambda_cross = 0.5;

  void validate() const;
};

/// Keyframe observation associated with a buffer patch.
struct KeyframeMatch {
  Pixel pixel;
  RigidTransform t_wk;
  PinholeCamera cam;
  bool is_inlier = false;
};

struct TrainingRecord {
  FeatureVector feature;
  Pixel pixel;
  PinholeCamera cam;
  RigidTransform t_wc;
  std::optional<KeyframeMatch> match;
};

struct LossTerm {
  double loss = 0.0;
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();  // d loss / d prediction
  bool valid = false;                                   // which branch was taken
};

/// tau(t) = tau_max * sqrt(1 - t^2) + tau_min for t in (0, 1); OutOfRange otherwise.
double tau_schedule(double t, const LossConfig& cfg);

/// Robust reprojection loss of a predicted point against one posed observation.
/// Valid set (closed): depth in [depth_min, depth_max] and error <= reproj_max.
/// Outside it, the Euclidean distance to the pixel's ray point at pseudo_depth.
LossTerm self_loss(const Eigen::Vector3d& pred, const Pixel& p, const RigidTransform& t_wc,
                   const PinholeCamera& cam, double t, const LossConfig& cfg);

/// Same functional form against the matched keyframe pixel and keyframe pose.
inline LossTerm cross_loss(const Eigen::Vector3d& pred, const Pixel& p_kj, const RigidTransform& t_wk,
                           const PinholeCamera& cam, double t, const LossConfig& cfg) {
  return self_loss(pred, p_kj, t_wk, cam, t, cfg);
}

/// Weight applied to the cross term of a record.
inline double cross_weight(const TrainingRecord& r, const LossConfig& cfg) {
  return r.match && r.match->is_inlier ? cfg.lambda_cross : 0.0;
}

template <typename Scalar>
struct BatchLoss {
  double loss = 0.0;
  std::vector<typename BasicSceneHead<Scalar>::Layer> gradient;
};

/// Mean over the batch of self + lambda * cross, with the full weight gradient.
template <typename Scalar>
BatchLoss<Scalar> batch_loss(std::span<const TrainingRecord* const> records, const BasicSceneHead<Scalar>& head,
                             double t, const LossConfig& cfg) {
  using Matrix = typename BasicSceneHead<Scalar>::Matrix;
  if (records.empty()) throw Error(ErrorCode::EmptyBatch, "batch_loss on an empty batch");
  const Eigen::Index n = Eigen::Index(records.size());
  Matrix features(head.feature_dim(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const FeatureVector& f = records[i]->feature;
    if (f.size() != head.feature_dim()) throw Error(ErrorCode::DimensionMismatch, "record feature dimension");
    features.col(i) = f.cast<Scalar>();
  }
  typename BasicSceneHead<Scalar>::Cache cache;
  const Matrix pred = head.forward_cached(features, cache);

  Matrix grad_out(3, n);
  double total = 0.0;
  const double inv_n = 1.0 / double(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TrainingRecord& r = *records[i];
    const Eigen::Vector3d p = pred.col(i).template cast<double>();
    LossTerm s = self_loss(p, r.pixel, r.t_wc, r.cam, t, cfg);
    double loss = s.loss;
    Eigen::Vector3d g = s.gradient;
    const double lambda = cross_weight(r, cfg);
    if (lambda != 0.0) {
      LossTerm c = cross_loss(p, r.match->pixel, r.match->t_wk, r.match->cam, t, cfg);
      loss += lambda * c.loss;
      g += lambda * c.gradient;
    }
    total += loss;
    grad_out.col(i) = (g * inv_n).cast<Scalar>();
  }
  BatchLoss<Scalar> out;
  out.loss = total * inv_n;
  out.gradient = head.backward(cache, grad_out);
  return out;
}

template <typename Scalar>
BatchLoss<Scalar> batch_loss(std::span<const TrainingRecord> records, const BasicSceneHead<Scalar>& head, double t,
                             const LossConfig& cfg) {
  std::vector<const TrainingRecord*> ptrs;
  ptrs.reserve(records.size());
  for (const auto& r : records) ptrs.push_back(&r);
  return batch_loss<Scalar>(std::span<const TrainingRecord* const>(ptrs), head, t, cfg);
}

struct AdamWConfig {
  double lr_min = 5e-4;
  double lr_max = 5e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct OptimizerState {
  using Layer = typename BasicSceneHead<Scalar>::Layer;
  std::vector<Layer> first_moment;
  std::vector<Layer> second_moment;
  long step_count = 0;
  AdamWConfig config;

  static OptimizerState zeros_like(const BasicSceneHead<Scalar>& head, const AdamWConfig& cfg = {}) {
    OptimizerState s;
    s.config = cfg;
    for (const auto& layer : head.layers()) {
      Layer z{BasicSceneHead<Scalar>::Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
              BasicSceneHead<Scalar>::Vector::Zero(layer.bias.size())};
      s.first_moment.push_back(z);
      s.second_moment.push_back(z);
    }
    return s;
  }
};

/// Decoupled weight decay w <- w (1 - lr wd), then the bias-corrected Adam update.
template <typename Scalar>
void adamw_step(BasicSceneHead<Scalar>& head, OptimizerState<Scalar>& state,
                const std::vector<typename BasicSceneHead<Scalar>::Layer>& gradient, double lr) {
  auto& layers = head.layers();
  if (gradient.size() != layers.size() || state.first_moment.size() != layers.size()) {
    throw Error(ErrorCode::DimensionMismatch, "gradient does not match head layout");
  }
  const AdamWConfig& c = state.config;
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(c.beta1, double(state.step_count));
  const double bc2 = 1.0 - std::pow(c.beta2, double(state.step_count));
  const Scalar decay = Scalar(1.0 - lr * c.weight_decay);
  const Scalar b1 = Scalar(c.beta1), b2 = Scalar(c.beta2);
  const Scalar step = Scalar(lr / bc1);
  const Scalar inv_sqrt_bc2 = Scalar(1.0 / std::sqrt(bc2));
  const Scalar eps = Scalar(c.eps);

  auto update = [&](auto& w, const auto& g, auto& m, auto& v) {
    if (w.rows() != g.rows() || w.cols() != g.cols()) throw Error(ErrorCode::DimensionMismatch, "gradient shape");
    w.array() *= decay;
    m.array() = b1 * m.array() + (Scalar(1) - b1) * g.array();
    v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    w.array() -= step * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, gradient[i].weight, state.first_moment[i].weight, state.second_moment[i].weight);
    update(layers[i].bias, gradient[i].bias, state.first_moment[i].bias, state.second_moment[i].bias);
  }
}

/// Linear warmup over the first `warmup_fraction` of steps, cosine decay after.
double one_cycle_lr(long step, long total_steps, double lr_min, double lr_max, double warmup_fraction = 0.25);

}  // namespace scr
