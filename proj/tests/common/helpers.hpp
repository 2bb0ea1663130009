#pragma once

// Shared fixtures for the unit tests.

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <vector>

#include "scr/geometry.hpp"
#include "scr/robust_pnp.hpp"

namespace scr::test {

inline Eigen::Vector3d uniform_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

/// Rotation vector with uniformly random axis and angle in [0, max_angle].
inline Eigen::Vector3d random_rotvec(std::mt19937_64& rng, double max_angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  axis.normalize();
  return axis * std::uniform_real_distribution<double>(0.0, max_angle)(rng);
}

/// Rodrigues' formula written out directly.
inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  if (theta == 0.0) return Eigen::Matrix3d::Identity();
  const Eigen::Vector3d k = phi / theta;
  Eigen::Matrix3d kx;
  kx << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return Eigen::Matrix3d::Identity() + std::sin(theta) * kx + (1.0 - std::cos(theta)) * kx * kx;
}

inline RigidTransform random_pose(std::mt19937_64& rng, double max_angle = 3.0, double max_t = 2.0) {
  return {rodrigues(random_rotvec(rng, max_angle)), uniform_vec(rng, -max_t, max_t)};
}

/// Camera looking at the origin from a random direction at the given distance.
inline RigidTransform pose_facing_origin(std::mt19937_64& rng, double distance) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d c(n(rng), n(rng), n(rng));
  c = c.normalized() * distance;
  const Eigen::Vector3d z = -c.normalized();
  Eigen::Vector3d x = z.unitOrthogonal();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r << x, y, z;
  return {r, c};
}

/// Exact correspondences of points in a 2 m cube around the origin seen from `pose`.
inline std::vector<Correspondence> exact_correspondences(std::mt19937_64& rng, const RigidTransform& pose,
                                                         const PinholeCamera& cam, std::size_t n) {
  std::vector<Correspondence> out;
  while (out.size() < n) {
    const Eigen::Vector3d p = uniform_vec(rng, -1.0, 1.0);
    const auto px = try_project(p, pose, cam);
    if (px && cam.contains(*px)) out.push_back({*px, p});
  }
  return out;
}

/// Exact correspondences filling the view: uniform pixels, uniform depths.
inline std::vector<Correspondence> frustum_correspondences(std::mt19937_64& rng, const RigidTransform& pose,
                                                           const PinholeCamera& cam, std::size_t n,
                                                           double depth_min = 2.0, double depth_max = 8.0) {
  std::uniform_real_distribution<double> u(0.0, cam.width), v(0.0, cam.height), d(depth_min, depth_max);
  std::vector<Correspondence> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Pixel p{u(rng), v(rng)};
    out.push_back({p, backproject_at_depth(p, d(rng), pose, cam)});
  }
  return out;
}

inline double rotation_error_deg(const RigidTransform& a, const RigidTransform& b) {
  return rotation_angle(a.rotation().transpose() * b.rotation()) * 180.0 / M_PI;
}

inline double translation_error(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation() - b.translation()).norm();
}

}  // namespace scr::test
