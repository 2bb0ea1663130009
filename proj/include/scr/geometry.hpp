#pragma once

// SE(3) pose algebra, pinhole projection and ray geometry.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>

namespace scr {

using ScenePoint = Eigen::Vector3d;
using Matrix34d = Eigen::Matrix<double, 3, 4>;

struct Pixel {
  double u = 0.0;
  double v = 0.0;

  Eigen::Vector2d vec() const { return {u, v}; }
  bool operator==(const Pixel&) const = default;
};

/// Tangent coordinates of SE(3), ordered (rho, phi).
struct Twist {
  Eigen::Vector3d rho = Eigen::Vector3d::Zero();  // translational part, meters
  Eigen::Vector3d phi = Eigen::Vector3d::Zero();  // rotation vector, radians

  Eigen::Matrix<double, 6, 1> vec() const {
    Eigen::Matrix<double, 6, 1> out;
    out << rho, phi;
    return out;
  }
  static Twist from_vec(const Eigen::Matrix<double, 6, 1>& v) { return {v.head<3>(), v.tail<3>()}; }
};

/// Camera-to-world rigid transform T_wc: x_w = R * x_c + t.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform identity() { return {}; }
  /// Row-major [R | t].
  static RigidTransform from_matrix(const Matrix34d& m) { return {m.leftCols<3>(), m.col(3)}; }

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  Matrix34d matrix() const {
    Matrix34d m;
    m << rotation_, translation_;
    return m;
  }

  RigidTransform inverse() const {
    Eigen::Matrix3d rt = rotation_.transpose();
    return {rt, -rt * translation_};
  }

  /// Composition this * other. The rotation is re-projected onto SO(3) when the
  /// product has drifted by more than 1e-7 from orthonormality.
  RigidTransform operator*(const RigidTransform& other) const;

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }

  /// Applies the inverse transform (world to camera for T_wc).
  Eigen::Vector3d inverse_apply(const Eigen::Vector3d& p) const {
    return rotation_.transpose() * (p - translation_);
  }

  /// Orthonormality and determinant check at the given tolerance.
  bool is_valid(double tol = 1e-9) const;

  /// Nearest-rotation projection of the rotation block.
  RigidTransform orthonormalized() const;

 private:
  Eigen::Matrix3d rotation_ = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

struct PinholeCamera {
  double fx = 520.0;
  double fy = 520.0;
  double cx = 320.0;
  double cy = 240.0;
  double width = 640.0;
  double height = 480.0;

  /// Throws InvalidArgument when the intrinsics are unusable.
  void validate() const;
  bool contains(const Pixel& p) const { return p.u >= 0.0 && p.u < width && p.v >= 0.0 && p.v < height; }
  Eigen::Matrix3d matrix() const;
  /// K^-1 * (u, v, 1).
  Eigen::Vector3d unproject(const Pixel& p) const {
    return {(p.u - cx) / fx, (p.v - cy) / fy, 1.0};
  }
};

inline constexpr double kMinDepth = 1e-9;

Eigen::Matrix3d skew(const Eigen::Vector3d& v);
/// Rotation angle in [0, pi].
double rotation_angle(const Eigen::Matrix3d& r);
Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m);

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& phi);
RigidTransform se3_exp(const Twist& xi);
/// Throws AngleNearPi when the rotation angle is within 1e-6 of pi.
Twist se3_log(const RigidTransform& t);

/// Throws BehindCamera when the camera-frame depth is <= 1e-9.
Pixel project(const ScenePoint& p, const RigidTransform& t_wc, const PinholeCamera& cam);
std::optional<Pixel> try_project(const ScenePoint& p, const RigidTransform& t_wc, const PinholeCamera& cam);

ScenePoint backproject_at_depth(const Pixel& p, double depth, const RigidTransform& t_wc, const PinholeCamera& cam);

/// Pixel distance, or +infinity if the point is not in front of the camera.
double reprojection_error(const Pixel& p, const ScenePoint& point, const RigidTransform& t_wc,
                          const PinholeCamera& cam);

/// Unit world-frame direction of the viewing ray through p.
Eigen::Vector3d ray_direction(const Pixel& p, const RigidTransform& t_wc, const PinholeCamera& cam);

/// Orthogonal projection of `point` onto the viewing ray of `p` from camera T_wn,
/// in world coordinates: D = t + ((P - t).v) v.
ScenePoint perpendicular_foot(const ScenePoint& point, const Pixel& p, const RigidTransform& t_wn,
                              const PinholeCamera& cam);

}  // namespace scr
