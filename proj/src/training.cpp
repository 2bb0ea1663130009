#include "scr/training.hpp"

#include <algorithm>
#include <cmath>

namespace scr {

void LossConfig::validate() const {
  if (!(tau_min < tau_max)) throw Error(ErrorCode::InvalidArgument, "tau_min must be < tau_max");
  if (!(depth_min < depth_max)) throw Error(ErrorCode::InvalidArgument, "depth_min must be < depth_max");
  if (!(pseudo_depth > 0.0) || !(reproj_max > 0.0)) throw Error(ErrorCode::InvalidArgument, "bad loss limits");
}

double tau_schedule(double t, const LossConfig& cfg) {
  if (!(t > 0.0 && t < 1.0)) throw Error(ErrorCode::OutOfRange, "training progress must lie in (0, 1)");
  return cfg.tau_max * std::sqrt(1.0 - t * t) + cfg.tau_min;
}

LossTerm self_loss(const Eigen::Vector3d& pred, const Pixel& p, const RigidTransform& t_wc,
                   const PinholeCamera& cam, double t, const LossConfig& cfg) {
  LossTerm out;
  const Eigen::Vector3d pc = t_wc.inverse_apply(pred);
  const double z = pc.z();
  if (z >= cfg.depth_min && z <= cfg.depth_max) {
    const double iz = 1.0 / z;
    const Eigen::Vector2d r(cam.fx * pc.x() * iz + cam.cx - p.u, cam.fy * pc.y() * iz + cam.cy - p.v);
    const double e = r.norm();
    if (e <= cfg.reproj_max) {
      const double tau = tau_schedule(t, cfg);
      const double th = std::tanh(e / tau);
      out.valid = true;
      out.loss = tau * th;
      if (e > 0.0) {
        Eigen::Matrix<double, 2, 3> jp;
        jp << cam.fx * iz, 0.0, -cam.fx * pc.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * pc.y() * iz * iz;
        const Eigen::Vector3d de_dpc = jp.transpose() * (r / e);
        out.gradient = (1.0 - th * th) * (t_wc.rotation() * de_dpc);
      }
      return out;
    }
  }
  const Eigen::Vector3d target = backproject_at_depth(p, cfg.pseudo_depth, t_wc, cam);
  const Eigen::Vector3d d = pred - target;
  out.loss = d.norm();
  if (out.loss > 0.0) out.gradient = d / out.loss;
  return out;
}

double one_cycle_lr(long step, long total_steps, double lr_min, double lr_max, double warmup_fraction) {
  if (total_steps < 1 || step < 0 || step >= total_steps) {
    throw Error(ErrorCode::OutOfRange, "step outside [0, total_steps)");
  }
  const double warmup = warmup_fraction * double(total_steps);
  const double s = double(step);
  double lr;
  if (s < warmup) {
    lr = lr_min + (lr_max - lr_min) * s / warmup;
  } else {
    const double span = double(total_steps) - warmup;
    const double progress = span > 0.0 ? (s - warmup) / span : 0.0;
    lr = lr_min + (lr_max - lr_min) * 0.5 * (1.0 + std::cos(M_PI * progress));
  }
  // Rounding may overshoot either end by an ulp.
  return std::clamp(lr, lr_min, lr_max);
}

}  // namespace scr
