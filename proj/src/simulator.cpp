#include "scr/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "scr/error.hpp"
#include "scr/seed.hpp"

namespace scr {

namespace {

constexpr std::size_t kNoLandmark = static_cast<std::size_t>(-1);

// Stream tags so that independent quantities never share an RNG stream.
constexpr std::uint64_t kSceneStream = 0x5CE7E;
constexpr std::uint64_t kLandmarkStream = 0x1A7D;
constexpr std::uint64_t kFrameStream = 0xF4A3E;
constexpr std::uint64_t kMatchStream = 0x3A7C4;
constexpr std::uint64_t kTrackStream = 0x74AC4;

// Observations are rounded to float so that frames survive the f32 file format
// bit-exactly; the clamp keeps the rounded pixel inside the image.
Pixel clamp_to_image(Pixel p, const PinholeCamera& cam) {
  const float max_u = std::nextafter(float(cam.width), 0.0f);
  const float max_v = std::nextafter(float(cam.height), 0.0f);
  p.u = double(std::clamp(float(p.u), 0.0f, max_u));
  p.v = double(std::clamp(float(p.v), 0.0f, max_v));
  return p;
}

std::optional<Pixel> visible_projection(const ScenePoint& x, const RigidTransform& t_wc, const SimConfig& cfg) {
  const Eigen::Vector3d pc = t_wc.inverse_apply(x);
  if (!(pc.z() >= cfg.min_visible_depth)) return std::nullopt;
  const Pixel p{cfg.camera.fx * pc.x() / pc.z() + cfg.camera.cx, cfg.camera.fy * pc.y() / pc.z() + cfg.camera.cy};
  if (!cfg.camera.contains(p)) return std::nullopt;
  return p;
}

std::vector<std::pair<std::size_t, std::size_t>> match_by_ids(std::span<const std::size_t> ids_a,
                                                             std::span<const std::size_t> ids_b,
                                                             std::uint64_t frame_a, std::uint64_t frame_b,
                                                             const SimConfig& cfg) {
  std::unordered_map<std::size_t, std::size_t> index_b;
  for (std::size_t j = 0; j < ids_b.size(); ++j) {
    if (ids_b[j] != kNoLandmark) index_b.emplace(ids_b[j], j);
  }
  std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed ^ kMatchStream, frame_a), frame_b));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < ids_a.size(); ++i) {
    if (ids_a[i] == kNoLandmark) continue;
    auto it = index_b.find(ids_a[i]);
    if (it == index_b.end()) continue;
    std::size_t j = it->second;
    if (unit(rng) < cfg.match_outlier_rate && ids_b.size() > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, ids_b.size() - 2);
      const std::size_t k = pick(rng);
      j = k >= j ? k + 1 : k;
    }
    out.emplace_back(i, j);
  }
  return out;
}

std::vector<RigidTransform> orbit(const SimConfig& cfg, std::size_t n, double radius, double height, double phase,
                                  double arc) {
  const Eigen::Vector3d center = 0.5 * (cfg.bounds_min + cfg.bounds_max);
  std::vector<RigidTransform> poses;
  poses.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = phase + arc * double(i) / double(n);
    const Eigen::Vector3d pos = center + Eigen::Vector3d(radius * std::cos(a), radius * std::sin(a), height);
    poses.push_back(look_at(pos, center));
  }
  return poses;
}

std::vector<RigidTransform> lawnmower(const SimConfig& cfg, std::size_t n, const Eigen::Vector3d& offset) {
  const Eigen::Vector3d center = 0.5 * (cfg.bounds_min + cfg.bounds_max);
  const std::size_t rows = std::max<std::size_t>(cfg.sweep_rows, 1);
  const double gap = rows > 1 ? cfg.sweep_height / double(rows - 1) : 0.0;
  const double length = double(rows) * cfg.sweep_width + double(rows - 1) * gap;
  const double segment = cfg.sweep_width + gap;
  std::vector<RigidTransform> poses;
  poses.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = n > 1 ? length * double(i) / double(n - 1) : 0.0;
    std::size_t row = std::min<std::size_t>(std::size_t(s / segment), rows - 1);
    const double along = s - double(row) * segment;
    double x, z;
    const double z0 = -0.5 * cfg.sweep_height + double(row) * gap;
    if (along <= cfg.sweep_width || row == rows - 1) {
      const double a = std::min(along, cfg.sweep_width);
      x = row % 2 == 0 ? -0.5 * cfg.sweep_width + a : 0.5 * cfg.sweep_width - a;
      z = z0;
    } else {
      x = row % 2 == 0 ? 0.5 * cfg.sweep_width : -0.5 * cfg.sweep_width;
      z = z0 + (along - cfg.sweep_width);
    }
    const Eigen::Vector3d pos = center + offset + Eigen::Vector3d(x, -cfg.standoff, z);
    poses.push_back(look_at(pos, pos + Eigen::Vector3d::UnitY()));
  }
  return poses;
}

}  // namespace

const char* to_string(TrajectoryKind kind) { return kind == TrajectoryKind::Orbit ? "orbit" : "lawnmower"; }

TrajectoryKind trajectory_from_string(const std::string& s) {
  if (s == "orbit") return TrajectoryKind::Orbit;
  if (s == "lawnmower") return TrajectoryKind::Lawnmower;
  throw Error(ErrorCode::BadConfig, "unknown trajectory '" + s + "'");
}

void SimConfig::validate() const {
  camera.validate();
  if (!(pixel_noise_sigma >= 0.0) || !(feature_noise_sigma >= 0.0) || !(identity_sigma >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "noise sigmas must be >= 0");
  }
  if (!(match_outlier_rate >= 0.0 && match_outlier_rate < 1.0) ||
      !(track_dropout_rate >= 0.0 && track_dropout_rate < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "rates must lie in [0, 1)");
  }
  if (feature_dim < 1) throw Error(ErrorCode::InvalidArgument, "feature_dim must be positive");
  if (!(bounds_min.array() < bounds_max.array()).all()) throw Error(ErrorCode::InvalidArgument, "empty scene bounds");
  for (const auto& group : aliasing_groups) {
    for (std::size_t id : group) {
      if (id >= n_landmarks) throw Error(ErrorCode::InvalidArgument, "aliasing group references unknown landmark");
    }
  }
}

FeatureVector SyntheticScene::feature(std::size_t landmark) const {
  const std::size_t src = embedding_source.at(landmark);
  const Eigen::VectorXd arg = basis * (landmarks[src] - center) + phase;
  return (arg.array().sin().matrix() + identity.col(Eigen::Index(src))).cast<float>();
}

SyntheticScene generate_scene(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.n_landmarks == 0) throw Error(ErrorCode::InvalidArgument, "n_landmarks must be > 0");
  SyntheticScene scene;
  scene.seed = cfg.seed;
  scene.bounds_min = cfg.bounds_min;
  scene.bounds_max = cfg.bounds_max;
  scene.center = 0.5 * (cfg.bounds_min + cfg.bounds_max);

  std::mt19937_64 rng(mix_seed(cfg.seed, kSceneStream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int dim = cfg.feature_dim;
  scene.basis.resize(dim, 3);
  scene.phase.resize(dim);
  for (int k = 0; k < dim; ++k) {
    Eigen::Vector3d g(normal(rng), normal(rng), normal(rng));
    const double scale = cfg.embedding_frequency * (0.5 + unit(rng));
    scene.basis.row(k) = scale * g.normalized().transpose();
    scene.phase(k) = 2.0 * M_PI * unit(rng);
  }

  const std::size_t n = cfg.n_landmarks;
  scene.landmarks.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      scene.landmarks[i](a) = cfg.bounds_min(a) + (cfg.bounds_max(a) - cfg.bounds_min(a)) * unit(rng);
    }
  }

  scene.identity.resize(dim, Eigen::Index(n));
  scene.saliency.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 lm_rng(mix_seed(cfg.seed ^ kLandmarkStream, i));
    std::normal_distribution<double> id_noise(0.0, 1.0);
    for (int k = 0; k < dim; ++k) scene.identity(k, Eigen::Index(i)) = cfg.identity_sigma * id_noise(lm_rng);
    scene.saliency[i] = std::uniform_real_distribution<double>(0.0, 1.0)(lm_rng);
  }

  scene.embedding_source.resize(n);
  for (std::size_t i = 0; i < n; ++i) scene.embedding_source[i] = i;
  for (const auto& group : cfg.aliasing_groups) {
    if (group.empty()) continue;
    for (std::size_t id : group) scene.embedding_source[id] = group.front();
  }
  return scene;
}

RigidTransform look_at(const Eigen::Vector3d& position, const Eigen::Vector3d& target) {
  const Eigen::Vector3d z = (target - position).normalized();
  Eigen::Vector3d down(0.0, 0.0, -1.0);
  Eigen::Vector3d x = down.cross(z);
  if (x.norm() < 1e-9) x = Eigen::Vector3d::UnitX();  // looking straight up or down
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r << x, y, z;
  return {r, position};
}

std::vector<RigidTransform> generate_trajectory(const SimConfig& cfg) {
  if (cfg.n_frames == 0) throw Error(ErrorCode::InvalidArgument, "n_frames must be >= 1");
  if (cfg.trajectory == TrajectoryKind::Orbit) {
    return orbit(cfg, cfg.n_frames, cfg.orbit_radius, cfg.orbit_height, 0.0, cfg.orbit_arc);
  }
  return lawnmower(cfg, cfg.n_frames, Eigen::Vector3d::Zero());
}

std::vector<RigidTransform> generate_test_trajectory(const SimConfig& cfg) {
  if (cfg.trajectory == TrajectoryKind::Orbit) {
    return orbit(cfg, cfg.n_test_frames, cfg.orbit_radius + cfg.test_radius_offset,
                 cfg.orbit_height + cfg.test_height_offset, cfg.test_phase, cfg.test_arc);
  }
  const std::size_t rows = std::max<std::size_t>(cfg.sweep_rows, 2);
  const Eigen::Vector3d offset(0.13 * cfg.sweep_width, 0.0, 0.5 * cfg.sweep_height / double(rows - 1));
  return lawnmower(cfg, cfg.n_test_frames, offset);
}

SyntheticFrame synthesize_frame(const SyntheticScene& scene, const RigidTransform& t_wc, const SimConfig& cfg,
                                std::uint64_t frame_id) {
  if (!t_wc.is_valid(1e-6)) throw Error(ErrorCode::InvalidArgument, "invalid camera pose");
  SyntheticFrame out;
  out.obs.frame_id = frame_id;
  out.obs.t_wc = t_wc;
  out.obs.cam = cfg.camera;

  std::mt19937_64 rng(mix_seed(cfg.seed ^ kFrameStream, frame_id));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < scene.landmarks.size(); ++l) {
    const auto exact = visible_projection(scene.landmarks[l], t_wc, cfg);
    if (!exact) continue;
    PatchSample patch;
    const double nu = normal(rng), nv = normal(rng);
    patch.pixel = clamp_to_image({exact->u + cfg.pixel_noise_sigma * nu, exact->v + cfg.pixel_noise_sigma * nv},
                                 cfg.camera);
    patch.feature = scene.feature(l);
    for (Eigen::Index k = 0; k < patch.feature.size(); ++k) {
      patch.feature(k) += float(cfg.feature_noise_sigma * normal(rng));
    }
    patch.saliency = double(float(scene.saliency[l]));
    out.obs.patches.push_back(std::move(patch));
    out.landmark_ids.push_back(l);
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> synthesize_matches(const SyntheticFrame& a, const SyntheticFrame& b,
                                                                    const SimConfig& cfg) {
  return match_by_ids(a.landmark_ids, b.landmark_ids, a.obs.frame_id, b.obs.frame_id, cfg);
}

TrackUpdate synthesize_tracks(std::span<const std::size_t> landmarks, const RigidTransform& cur_pose,
                              std::uint64_t cur_frame_id, const SyntheticScene& scene, const SimConfig& cfg) {
  TrackUpdate out;
  out.pixels.resize(landmarks.size());
  out.alive.assign(landmarks.size(), false);
  std::mt19937_64 rng(mix_seed(cfg.seed ^ kTrackStream, cur_frame_id));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    const double drop = unit(rng);
    const double nu = normal(rng), nv = normal(rng);
    if (landmarks[i] >= scene.landmarks.size()) continue;
    const auto exact = visible_projection(scene.landmarks[landmarks[i]], cur_pose, cfg);
    if (!exact || drop < cfg.track_dropout_rate) continue;
    out.alive[i] = true;
    out.pixels[i] =
        clamp_to_image({exact->u + cfg.pixel_noise_sigma * nu, exact->v + cfg.pixel_noise_sigma * nv}, cfg.camera);
  }
  return out;
}

void SimulatorMatcher::register_frame(const SyntheticFrame& frame) {
  for (std::size_t i = 0; i < frame.obs.patches.size(); ++i) {
    const Pixel& p = frame.obs.patches[i].pixel;
    ids_[{frame.obs.frame_id, p.u, p.v}] = frame.landmark_ids[i];
  }
}

std::size_t SimulatorMatcher::landmark_of(std::uint64_t frame_id, const Pixel& p) const {
  auto it = ids_.find({frame_id, p.u, p.v});
  return it == ids_.end() ? kNoLandmark : it->second;
}

std::vector<FeatureMatch> SimulatorMatcher::match(const FrameObservation& frame, const FrameObservation& keyframe) {
  std::vector<std::size_t> ids_a, ids_b;
  for (const auto& p : frame.patches) ids_a.push_back(landmark_of(frame.frame_id, p.pixel));
  for (const auto& p : keyframe.patches) ids_b.push_back(landmark_of(keyframe.frame_id, p.pixel));
  std::vector<FeatureMatch> out;
  for (const auto& [i, j] : match_by_ids(ids_a, ids_b, frame.frame_id, keyframe.frame_id, cfg_)) {
    out.push_back({i, j});
  }
  return out;
}

void SimulatorTracker::register_frame(const SyntheticFrame& frame) {
  poses_[frame.obs.frame_id] = frame.obs.t_wc;
  for (std::size_t i = 0; i < frame.obs.patches.size(); ++i) {
    const Pixel& p = frame.obs.patches[i].pixel;
    ids_[{frame.obs.frame_id, p.u, p.v}] = frame.landmark_ids[i];
  }
}

TrackUpdate SimulatorTracker::track(std::uint64_t previous_frame_id, std::span<const TrackedPoint> tracks,
                                    const FrameObservation& current) {
  auto pose = poses_.find(current.frame_id);
  if (pose == poses_.end()) throw Error(ErrorCode::InvalidArgument, "tracker has no pose for the current frame");
  std::vector<std::size_t> ids;
  ids.reserve(tracks.size());
  for (const TrackedPoint& t : tracks) {
    auto it = ids_.find({previous_frame_id, t.pixel.u, t.pixel.v});
    ids.push_back(it == ids_.end() ? kNoLandmark : it->second);
  }
  TrackUpdate out = synthesize_tracks(ids, pose->second, current.frame_id, scene_, cfg_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (out.alive[i]) ids_[{current.frame_id, out.pixels[i].u, out.pixels[i].v}] = ids[i];
  }
  return out;
}

}  // namespace scr
