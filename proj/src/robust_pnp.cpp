#include "scr/robust_pnp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "scr/error.hpp"

namespace scr {

namespace {

constexpr std::size_t kSampleSize = 6;
constexpr double kNullspaceRatio = 1e-12;  // on eigenvalues of A^T A, i.e. squared singular values
constexpr double kPlanarityRatio = 1e-6;

using Matrix12d = Eigen::Matrix<double, 12, 12>;
using Vector12d = Eigen::Matrix<double, 12, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

template <typename Range>
RigidTransform solve_dlt(const Range& corrs, const PinholeCamera& cam) {
  const std::size_t n = corrs.size();
  if (n < 4) throw Error(ErrorCode::InvalidArgument, "PnP needs at least 4 correspondences");
  if (n < kSampleSize) {
    throw Error(ErrorCode::DegenerateConfiguration, "linear PnP is rank deficient below 6 correspondences");
  }

  // Hartley normalization of both point sets.
  Eigen::Vector3d centroid3 = Eigen::Vector3d::Zero();
  Eigen::Vector2d centroid2 = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> bearings(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Correspondence& c = corrs[i];
    bearings[i] = cam.unproject(c.pixel).head<2>();
    centroid3 += c.point;
    centroid2 += bearings[i];
  }
  centroid3 /= double(n);
  centroid2 /= double(n);

  double spread3 = 0.0;
  double spread2 = 0.0;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d d = corrs[i].point - centroid3;
    spread3 += d.norm();
    spread2 += (bearings[i] - centroid2).norm();
    cov += d * d.transpose();
  }
  spread3 /= double(n);
  spread2 /= double(n);
  if (!(spread3 > 0.0) || !(spread2 > 0.0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "coincident points");
  }
  const double s3 = std::sqrt(3.0) / spread3;
  const double s2 = std::sqrt(2.0) / spread2;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> cov_eig(cov * (s3 * s3));
  if (cov_eig.eigenvalues()(0) < kPlanarityRatio * cov_eig.eigenvalues()(2)) {
    throw Error(ErrorCode::DegenerateConfiguration, "scene points are coplanar or collinear");
  }

  Matrix12d ata = Matrix12d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Vector4d xh;
    xh << s3 * (corrs[i].point - centroid3), 1.0;
    const Eigen::Vector2d x = s2 * (bearings[i] - centroid2);
    Vector12d r1 = Vector12d::Zero();
    Vector12d r2 = Vector12d::Zero();
    r1.segment<4>(0) = xh;
    r1.segment<4>(8) = -x.x() * xh;
    r2.segment<4>(4) = xh;
    r2.segment<4>(8) = -x.y() * xh;
    ata.selfadjointView<Eigen::Lower>().rankUpdate(r1);
    ata.selfadjointView<Eigen::Lower>().rankUpdate(r2);
  }
  ata = ata.selfadjointView<Eigen::Lower>();

  Eigen::SelfAdjointEigenSolver<Matrix12d> eig(ata);
  const auto& ev = eig.eigenvalues();
  if (!(ev(1) > kNullspaceRatio * ev(11))) {
    throw Error(ErrorCode::DegenerateConfiguration, "DLT system has a multi-dimensional nullspace");
  }
  const Vector12d h = eig.eigenvectors().col(0);
  Matrix34d p_norm;
  p_norm.row(0) = h.segment<4>(0).transpose();
  p_norm.row(1) = h.segment<4>(4).transpose();
  p_norm.row(2) = h.segment<4>(8).transpose();

  Eigen::Matrix3d t2_inv = Eigen::Matrix3d::Identity();
  t2_inv(0, 0) = t2_inv(1, 1) = 1.0 / s2;
  t2_inv.block<2, 1>(0, 2) = centroid2;
  Eigen::Matrix4d t3 = Eigen::Matrix4d::Identity();
  t3.topLeftCorner<3, 3>() *= s3;
  t3.block<3, 1>(0, 3) = -s3 * centroid3;
  Matrix34d p = t2_inv * p_norm * t3;

  Eigen::Matrix3d m = p.leftCols<3>();
  if (m.determinant() < 0.0) {
    p = -p;
    m = -m;
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double scale = svd.singularValues().mean();
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::DegenerateConfiguration, "DLT produced a singular rotation block");
  }
  const Eigen::Matrix3d r_cw = nearest_rotation(m);
  const Eigen::Vector3d t_cw = p.col(3) / scale;
  return RigidTransform(r_cw, t_cw).inverse();
}

struct IndexedView {
  std::span<const Correspondence> all;
  const std::vector<std::size_t>* index;
  std::size_t size() const { return index->size(); }
  const Correspondence& operator[](std::size_t i) const { return all[(*index)[i]]; }
};

double squared_cost(std::span<const Correspondence> corrs, const std::vector<std::size_t>& idx,
                    const RigidTransform& t_cw, const PinholeCamera& cam) {
  double cost = 0.0;
  for (std::size_t i : idx) {
    const Eigen::Vector3d pc = t_cw * corrs[i].point;
    if (!(pc.z() > kMinDepth)) return std::numeric_limits<double>::infinity();
    const double du = cam.fx * pc.x() / pc.z() + cam.cx - corrs[i].pixel.u;
    const double dv = cam.fy * pc.y() / pc.z() + cam.cy - corrs[i].pixel.v;
    cost += du * du + dv * dv;
  }
  return cost;
}

// Total order on hypotheses: more inliers, then lower mean error.
bool better(const InlierSet& a, const InlierSet& b) {
  if (a.count != b.count) return a.count > b.count;
  return a.mean_error < b.mean_error;
}

}  // namespace

void RansacConfig::validate() const {
  if (!(inlier_threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "inlier_threshold must be > 0");
  if (max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "max_iterations must be >= 1");
  if (min_inliers < 0 || refine_iterations < 0) throw Error(ErrorCode::InvalidArgument, "negative RANSAC count");
}

RigidTransform pnp_minimal(std::span<const Correspondence> corrs, const PinholeCamera& cam) {
  return solve_dlt(corrs, cam);
}

InlierSet classify_inliers(std::span<const Correspondence> corrs, const RigidTransform& pose,
                           const PinholeCamera& cam, double threshold) {
  InlierSet out;
  out.mask.assign(corrs.size(), false);
  double sum = 0.0;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const double e = reprojection_error(corrs[i].pixel, corrs[i].point, pose, cam);
    if (e < threshold) {
      out.mask[i] = true;
      ++out.count;
      sum += e;
    }
  }
  out.mean_error = out.count > 0 ? sum / double(out.count) : 0.0;
  return out;
}

RigidTransform refine_pose(std::span<const Correspondence> corrs, const std::vector<bool>& mask,
                           const RigidTransform& initial, const PinholeCamera& cam, int iterations) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (mask[i]) idx.push_back(i);
  }
  if (idx.size() < 3) return initial;

  RigidTransform t_cw = initial.inverse();
  double cost = squared_cost(corrs, idx, t_cw, cam);
  if (!std::isfinite(cost)) return initial;
  double lambda = 1e-4;

  for (int it = 0; it < iterations; ++it) {
    Matrix6d h = Matrix6d::Zero();
    Vector6d g = Vector6d::Zero();
    for (std::size_t i : idx) {
      const Eigen::Vector3d pc = t_cw * corrs[i].point;
      const double iz = 1.0 / pc.z();
      const Eigen::Vector2d r(cam.fx * pc.x() * iz + cam.cx - corrs[i].pixel.u,
                              cam.fy * pc.y() * iz + cam.cy - corrs[i].pixel.v);
      Eigen::Matrix<double, 2, 3> jp;
      jp << cam.fx * iz, 0.0, -cam.fx * pc.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * pc.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> jx;
      jx << Eigen::Matrix3d::Identity(), -skew(pc);
      const Eigen::Matrix<double, 2, 6> j = jp * jx;
      h.noalias() += j.transpose() * j;
      g.noalias() += j.transpose() * r;
    }

    bool improved = false;
    for (int attempt = 0; attempt < 8 && !improved; ++attempt) {
      Matrix6d damped = h;
      damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
      const Vector6d delta = damped.ldlt().solve(-g);
      if (!delta.allFinite()) break;
      const RigidTransform candidate = se3_exp(Twist::from_vec(delta)) * t_cw;
      const double c = squared_cost(corrs, idx, candidate, cam);
      if (c < cost) {
        const double gain = cost - c;
        t_cw = candidate;
        cost = c;
        lambda = std::max(lambda * 0.3, 1e-9);
        improved = true;
        if (gain < 1e-12 * (1.0 + cost)) it = iterations;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return t_cw.inverse();
}

namespace {

// Mean reprojection error of `pose` over the masked correspondences (inf if any
// masked point is behind the camera).
double mean_error_on(std::span<const Correspondence> corrs, const std::vector<bool>& mask, const RigidTransform& pose,
                     const PinholeCamera& cam) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (!mask[i]) continue;
    sum += reprojection_error(corrs[i].pixel, corrs[i].point, pose, cam);
    ++count;
  }
  return count == 0 ? 0.0 : sum / double(count);
}

}  // namespace

PoseEstimate ransac_pnp(std::span<const Correspondence> corrs, const PinholeCamera& cam, const RansacConfig& cfg) {
  cfg.validate();
  const std::size_t n = corrs.size();
  if (n < 4) throw Error(ErrorCode::TooFewCorrespondences, "ransac_pnp needs at least 4 correspondences");
  if (n < kSampleSize) throw Error(ErrorCode::NoConsensus, "fewer correspondences than the minimal sample");

  std::optional<RigidTransform> best_pose;
  InlierSet best;
  std::array<Correspondence, kSampleSize> sample;
  std::array<std::size_t, kSampleSize> picked{};

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(iter)));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t k = 0; k < kSampleSize; ++k) {
      std::size_t candidate;
      do {
        candidate = pick(rng);
      } while (std::find(picked.begin(), picked.begin() + k, candidate) != picked.begin() + k);
      picked[k] = candidate;
      sample[k] = corrs[candidate];
    }

    RigidTransform hypothesis;
    try {
      hypothesis = solve_dlt(sample, cam);
    } catch (const Error&) {
      continue;
    }
    InlierSet scored = classify_inliers(corrs, hypothesis, cam, cfg.inlier_threshold);
    // Strict comparison keeps the earliest iteration on a full tie.
    if (!best_pose || better(scored, best)) {
      best_pose = hypothesis;
      best = std::move(scored);
    }
  }

  if (!best_pose || best.count < static_cast<std::size_t>(std::max(cfg.min_inliers, 1))) {
    throw Error(ErrorCode::NoConsensus, "best hypothesis has " + std::to_string(best.count) + " inliers");
  }

  // Re-solve on the current inliers, then re-classify. The refit never raises
  // the squared error on the set it was fitted to.
  const RigidTransform raw = *best_pose;
  RigidTransform pose = raw;
  for (int round = 0; round < cfg.refine_iterations; ++round) {
    std::vector<std::size_t> inliers;
    for (std::size_t i = 0; i < n; ++i) {
      if (best.mask[i]) inliers.push_back(i);
    }
    RigidTransform start = pose;
    if (round == 0 && inliers.size() >= kSampleSize) {
      try {
        const RigidTransform resolved = solve_dlt(IndexedView{corrs, &inliers}, cam);
        if (squared_cost(corrs, inliers, resolved.inverse(), cam) < squared_cost(corrs, inliers, pose.inverse(), cam)) {
          start = resolved;
        }
      } catch (const Error&) {
      }
    }
    const RigidTransform candidate = refine_pose(corrs, best.mask, start, cam);
    InlierSet scored = classify_inliers(corrs, candidate, cam, cfg.inlier_threshold);
    if (scored.count < static_cast<std::size_t>(std::max(cfg.min_inliers, 1))) break;
    const bool same_set = scored.mask == best.mask;
    pose = candidate;
    best = std::move(scored);
    if (same_set) break;
  }
  // Refinement must not be worse than the raw hypothesis on the final set.
  if (best.mean_error > mean_error_on(corrs, best.mask, raw, cam)) {
    pose = raw;
    best = classify_inliers(corrs, raw, cam, cfg.inlier_threshold);
  }

  PoseEstimate out;
  out.pose = pose;
  out.inlier_count = best.count;
  out.inlier_mask = std::move(best.mask);
  out.mean_inlier_error = best.mean_error;
  return out;
}

}  // namespace scr
