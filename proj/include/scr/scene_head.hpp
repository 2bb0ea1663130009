#pragma once

// Scene-specific regression head: a residual MLP mapping a patch feature
// vector to a world-frame 3D point.
//
// Layout for num_layers = L:
//   L == 1 : out = W0 f + b0
//   L >= 2 : h = relu(W0 f + b0); hidden layers 1..L-2 are consumed in pairs as
//            residual blocks h += relu(W_{i+1} relu(W_i h + b_i) + b_{i+1}),
//            a trailing unpaired hidden layer is h = relu(W_i h + b_i);
//            out = W_{L-1} h + b_{L-1}.

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <vector>

#include "scr/error.hpp"

namespace scr {

using FeatureVector = Eigen::VectorXf;

struct HeadShape {
  int feature_dim = 32;
  int hidden_dim = 128;
  int num_layers = 6;

  bool operator==(const HeadShape&) const = default;
};

template <typename Scalar>
class BasicSceneHead {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix weight;
    Vector bias;
  };

  /// Intermediate values of a batched forward pass, kept for backward().
  struct Cache {
    std::vector<Matrix> inputs;       // input of layer i
    std::vector<Matrix> preactivations;  // W_i x + b_i for hidden layers
  };

  BasicSceneHead() : BasicSceneHead(HeadShape{}) {}

  /// All-zero weights.
  explicit BasicSceneHead(const HeadShape& shape) : shape_(shape) {
    if (shape.feature_dim < 1 || shape.num_layers < 1 || (shape.num_layers > 1 && shape.hidden_dim < 1)) {
      throw Error(ErrorCode::InvalidArgument, "invalid head shape");
    }
    const int l = shape.num_layers;
    layers_.resize(l);
    for (int i = 0; i < l; ++i) {
      const int in = i == 0 ? shape.feature_dim : shape.hidden_dim;
      const int out = i == l - 1 ? 3 : shape.hidden_dim;
      layers_[i].weight = Matrix::Zero(out, in);
      layers_[i].bias = Vector::Zero(out);
    }
  }

  /// He-normal hidden layers, small output layer, output bias set to `center`.
  static BasicSceneHead random(const HeadShape& shape, std::uint64_t seed,
                               const Eigen::Vector3d& center = Eigen::Vector3d::Zero()) {
    BasicSceneHead head(shape);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int l = shape.num_layers;
    for (int i = 0; i < l; ++i) {
      Layer& layer = head.layers_[i];
      const bool last = i == l - 1;
      const double stddev = (last ? 0.1 : std::sqrt(2.0)) / std::sqrt(double(layer.weight.cols()));
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
          layer.weight(r, c) = Scalar(stddev * normal(rng));
        }
      }
      // Second layer of a residual block starts near zero so blocks begin as identity.
      if (!last && i > 0 && head.is_block_second(i)) layer.weight *= Scalar(0.1);
    }
    head.layers_.back().bias = center.cast<Scalar>();
    return head;
  }

  const HeadShape& shape() const { return shape_; }
  int feature_dim() const { return shape_.feature_dim; }
  int num_layers() const { return shape_.num_layers; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += std::size_t(layer.weight.size() + layer.bias.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& layer : layers_) {
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    }
    return true;
  }

  /// Features are columns: C_f x N in, 3 x N out.
  Matrix forward(const Matrix& features) const {
    return run(features, nullptr);
  }

  Eigen::Vector3d forward_one(const FeatureVector& f) const {
    if (f.size() != shape_.feature_dim) throw Error(ErrorCode::DimensionMismatch, "feature dimension mismatch");
    Matrix x = f.cast<Scalar>();
    return forward(x).col(0).template cast<double>();
  }

  Matrix forward_cached(const Matrix& features, Cache& cache) const { return run(features, &cache); }

  /// Gradient of sum(grad_out .* out) with respect to every parameter.
  std::vector<Layer> backward(const Cache& cache, const Matrix& grad_out) const {
    const int l = shape_.num_layers;
    std::vector<Layer> grads(l);
    auto accumulate = [&](int i, const Matrix& delta) {
      grads[i].weight.noalias() = delta * cache.inputs[i].transpose();
      grads[i].bias = delta.rowwise().sum();
    };
    accumulate(l - 1, grad_out);
    if (l == 1) return grads;

    Matrix g = layers_[l - 1].weight.transpose() * grad_out;
    const auto segments = hidden_segments();
    for (auto it = segments.rbegin(); it != segments.rend(); ++it) {
      const int i = it->first;
      if (it->second) {
        Matrix d2 = g.cwiseProduct(relu_mask(cache.preactivations[i + 1]));
        accumulate(i + 1, d2);
        Matrix d1 = (layers_[i + 1].weight.transpose() * d2).cwiseProduct(relu_mask(cache.preactivations[i]));
        accumulate(i, d1);
        g.noalias() += layers_[i].weight.transpose() * d1;
      } else {
        Matrix d = g.cwiseProduct(relu_mask(cache.preactivations[i]));
        accumulate(i, d);
        g = layers_[i].weight.transpose() * d;
      }
    }
    Matrix d0 = g.cwiseProduct(relu_mask(cache.preactivations[0]));
    accumulate(0, d0);
    return grads;
  }

  template <typename Other>
  BasicSceneHead<Other> cast() const {
    BasicSceneHead<Other> out(shape_);
    for (int i = 0; i < shape_.num_layers; ++i) {
      out.layers()[i].weight = layers_[i].weight.template cast<Other>();
      out.layers()[i].bias = layers_[i].bias.template cast<Other>();
    }
    return out;
  }

 private:
  // (first layer index, is residual block) for hidden layers 1..L-2.
  std::vector<std::pair<int, bool>> hidden_segments() const {
    std::vector<std::pair<int, bool>> out;
    const int last_hidden = shape_.num_layers - 2;
    int i = 1;
    while (i <= last_hidden) {
      if (i + 1 <= last_hidden) {
        out.emplace_back(i, true);
        i += 2;
      } else {
        out.emplace_back(i, false);
        i += 1;
      }
    }
    return out;
  }

  bool is_block_second(int layer) const {
    for (const auto& [first, residual] : hidden_segments()) {
      if (residual && layer == first + 1) return true;
    }
    return false;
  }

  static Matrix relu_mask(const Matrix& z) { return (z.array() > Scalar(0)).template cast<Scalar>(); }

  // Inference uses a coefficient-wise product so each output column is
  // bit-identical whatever the batch size; training keeps the blocked GEMM.
  Matrix affine(int i, const Matrix& x, bool training) const {
    Matrix z(layers_[i].weight.rows(), x.cols());
    if (training) {
      z.noalias() = layers_[i].weight * x;
    } else {
      z.noalias() = layers_[i].weight.lazyProduct(x);
    }
    z.colwise() += layers_[i].bias;
    return z;
  }

  Matrix run(const Matrix& x, Cache* cache) const {
    if (x.rows() != shape_.feature_dim) throw Error(ErrorCode::DimensionMismatch, "feature dimension mismatch");
    const int l = shape_.num_layers;
    if (cache) {
      cache->inputs.assign(l, Matrix());
      cache->preactivations.assign(l, Matrix());
      cache->inputs[0] = x;
    }
    if (l == 1) return affine(0, x, cache != nullptr);

    Matrix z0 = affine(0, x, cache != nullptr);
    Matrix h = z0.cwiseMax(Scalar(0));
    if (cache) cache->preactivations[0] = std::move(z0);
    for (const auto& [i, residual] : hidden_segments()) {
      if (residual) {
        Matrix z1 = affine(i, h, cache != nullptr);
        Matrix u = z1.cwiseMax(Scalar(0));
        Matrix z2 = affine(i + 1, u, cache != nullptr);
        Matrix next = h + z2.cwiseMax(Scalar(0));
        if (cache) {
          cache->inputs[i] = std::move(h);
          cache->preactivations[i] = std::move(z1);
          cache->inputs[i + 1] = std::move(u);
          cache->preactivations[i + 1] = std::move(z2);
        }
        h = std::move(next);
      } else {
        Matrix z = affine(i, h, cache != nullptr);
        Matrix next = z.cwiseMax(Scalar(0));
        if (cache) {
          cache->inputs[i] = std::move(h);
          cache->preactivations[i] = std::move(z);
        }
        h = std::move(next);
      }
    }
    Matrix out = affine(l - 1, h, cache != nullptr);
    if (cache) cache->inputs[l - 1] = std::move(h);
    return out;
  }

  HeadShape shape_;
  std::vector<Layer> layers_;
};

using SceneHead = BasicSceneHead<float>;

/// Single-feature convenience wrapper around SceneHead::forward_one.
inline Eigen::Vector3d head_forward(const SceneHead& head, const FeatureVector& f) { return head.forward_one(f); }

}  // namespace scr
