#include "scr/geometry.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>

#include "scr/error.hpp"

namespace scr {

namespace {

// Below this angle the coefficients use their Taylor series.
constexpr double kSeriesAngle = 1e-2;
constexpr double kDriftTolerance = 1e-7;

// sin(t) / t
double sinc(double t) {
  const double t2 = t * t;
  return t < kSeriesAngle ? 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0) : std::sin(t) / t;
}

// (1 - cos t) / t^2, via the half angle to avoid cancellation.
double cos_coeff(double t) {
  const double t2 = t * t;
  if (t < kSeriesAngle) return 0.5 - t2 / 24.0 * (1.0 - t2 / 30.0);
  const double s = std::sin(0.5 * t);
  return 2.0 * s * s / t2;
}

// (t - sin t) / t^3
double sin_coeff(double t) {
  const double t2 = t * t;
  return t < kSeriesAngle ? 1.0 / 6.0 - t2 / 120.0 * (1.0 - t2 / 42.0) : (t - std::sin(t)) / (t2 * t);
}

// (1 - (t / 2) cot(t / 2)) / t^2, the quadratic coefficient of the inverse left Jacobian.
double log_coeff(double t) {
  const double t2 = t * t;
  if (t < kSeriesAngle) return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  const double h = 0.5 * t;
  return (1.0 - h * std::cos(h) / std::sin(h)) / t2;
}

}  // namespace

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
  const double drift = (out.rotation_.transpose() * out.rotation_ - Eigen::Matrix3d::Identity()).norm();
  if (drift > kDriftTolerance) out.rotation_ = nearest_rotation(out.rotation_);
  return out;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) return false;
  const double ortho = (rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity()).norm();
  return ortho <= tol && std::abs(rotation_.determinant() - 1.0) <= tol;
}

RigidTransform RigidTransform::orthonormalized() const { return {nearest_rotation(rotation_), translation_}; }

void PinholeCamera::validate() const {
  const bool ok = std::isfinite(fx) && std::isfinite(fy) && fx > 0.0 && fy > 0.0 && width > 0.0 &&
                  height > 0.0 && cx >= 0.0 && cx < width && cy >= 0.0 && cy < height;
  if (!ok) throw Error(ErrorCode::InvalidArgument, "invalid pinhole intrinsics");
}

Eigen::Matrix3d PinholeCamera::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

double rotation_angle(const Eigen::Matrix3d& r) {
  // atan2 keeps precision at both ends of [0, pi], unlike acos of the trace.
  const Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * w.norm(), 0.5 * (r.trace() - 1.0));
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d k = skew(phi);
  return Eigen::Matrix3d::Identity() + sinc(theta) * k + cos_coeff(theta) * k * k;
}

RigidTransform se3_exp(const Twist& xi) {
  const double theta = xi.phi.norm();
  const Eigen::Matrix3d k = skew(xi.phi);
  const Eigen::Matrix3d v = Eigen::Matrix3d::Identity() + cos_coeff(theta) * k + sin_coeff(theta) * k * k;
  return {so3_exp(xi.phi), v * xi.rho};
}

Twist se3_log(const RigidTransform& t) {
  const Eigen::Matrix3d& r = t.rotation();
  const Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double theta = rotation_angle(r);
  if (theta > M_PI - 1e-6) throw Error(ErrorCode::AngleNearPi, "rotation angle too close to pi for log");

  Eigen::Vector3d phi;
  if (theta < M_PI / 2) {
    phi = 0.5 / sinc(theta) * w;
  } else {
    // Near pi the antisymmetric part vanishes; take the axis from the
    // symmetric part R + R^T - (tr R - 1) I = 2 (1 - cos theta) a a^T.
    const Eigen::Matrix3d s = r + r.transpose() - (r.trace() - 1.0) * Eigen::Matrix3d::Identity();
    Eigen::Index col = 0;
    s.diagonal().maxCoeff(&col);
    Eigen::Vector3d axis = s.col(col).normalized();
    if (axis.dot(w) < 0.0) axis = -axis;
    phi = theta * axis;
  }
  const Eigen::Matrix3d k = skew(phi);
  const Eigen::Matrix3d v_inv = Eigen::Matrix3d::Identity() - 0.5 * k + log_coeff(theta) * k * k;
  return {v_inv * t.translation(), phi};
}

std::optional<Pixel> try_project(const ScenePoint& p, const RigidTransform& t_wc, const PinholeCamera& cam) {
  const Eigen::Vector3d pc = t_wc.inverse_apply(p);
  if (!(pc.z() > kMinDepth)) return std::nullopt;
  return Pixel{cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy};
}

Pixel project(const ScenePoint& p, const RigidTransform& t_wc, const PinholeCamera& cam) {
  auto px = try_project(p, t_wc, cam);
  if (!px) throw Error(ErrorCode::BehindCamera, "point depth <= 1e-9 in camera frame");
  return *px;
}

ScenePoint backproject_at_depth(const Pixel& p, double depth, const RigidTransform& t_wc, const PinholeCamera& cam) {
  return t_wc * (cam.unproject(p) * depth);
}

double reprojection_error(const Pixel& p, const ScenePoint& point, const RigidTransform& t_wc,
                          const PinholeCamera& cam) {
  auto px = try_project(point, t_wc, cam);
  if (!px) return std::numeric_limits<double>::infinity();
  return std::hypot(px->u - p.u, px->v - p.v);
}

Eigen::Vector3d ray_direction(const Pixel& p, const RigidTransform& t_wc, const PinholeCamera& cam) {
  return t_wc.rotation() * cam.unproject(p).normalized();
}

ScenePoint perpendicular_foot(const ScenePoint& point, const Pixel& p, const RigidTransform& t_wn,
                              const PinholeCamera& cam) {
  const Eigen::Vector3d dir = ray_direction(p, t_wn, cam);
  const Eigen::Vector3d& center = t_wn.translation();
  return center + (point - center).dot(dir) * dir;
}

}  // namespace scr
