#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "scr/error.hpp"
#include "scr/simulator.hpp"

using namespace scr;

namespace {

SimConfig small_config(std::size_t n_landmarks = 2000) {
  SimConfig cfg;
  cfg.n_landmarks = n_landmarks;
  cfg.n_frames = 20;
  cfg.seed = 11;
  return cfg;
}

/// |observed - expected| <= 4 standard deviations of a binomial count.
bool within_binomial(std::size_t hits, std::size_t trials, double p) {
  const double mean = p * double(trials);
  const double sd = std::sqrt(double(trials) * p * (1.0 - p));
  return std::abs(double(hits) - mean) <= 4.0 * sd + 1.0;
}

}  // namespace

TEST_CASE("scene and frame generation are deterministic") {
  const SimConfig cfg = small_config();
  const SyntheticScene a = generate_scene(cfg), b = generate_scene(cfg);
  CHECK(a.landmarks == b.landmarks);
  CHECK(a.identity == b.identity);
  const RigidTransform pose = generate_trajectory(cfg)[3];
  const SyntheticFrame fa = synthesize_frame(a, pose, cfg, 3), fb = synthesize_frame(b, pose, cfg, 3);
  REQUIRE(fa.obs.patches.size() == fb.obs.patches.size());
  bool same = fa.landmark_ids == fb.landmark_ids;
  for (std::size_t i = 0; i < fa.obs.patches.size(); ++i) {
    same &= fa.obs.patches[i].pixel == fb.obs.patches[i].pixel;
    same &= fa.obs.patches[i].feature == fb.obs.patches[i].feature;
    same &= fa.obs.patches[i].saliency == fb.obs.patches[i].saliency;
  }
  CHECK(same);

  SimConfig other = cfg;
  other.seed = 12;
  CHECK(generate_scene(other).landmarks != a.landmarks);
}

TEST_CASE("scene generation edge cases") {
  SimConfig cfg = small_config(1);
  const SyntheticScene one = generate_scene(cfg);
  REQUIRE(one.landmarks.size() == 1);
  CHECK((one.landmarks[0].array() >= cfg.bounds_min.array()).all());
  CHECK((one.landmarks[0].array() <= cfg.bounds_max.array()).all());
  CHECK(one.feature(0).size() == cfg.feature_dim);

  cfg.n_landmarks = 0;
  CHECK_THROWS_AS(generate_scene(cfg), Error);
  cfg = small_config();
  cfg.match_outlier_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.aliasing_groups = {{1, 5000}};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.n_frames = 0;
  CHECK_THROWS_AS(generate_trajectory(cfg), Error);
  CHECK(trajectory_from_string("lawnmower") == TrajectoryKind::Lawnmower);
  CHECK_THROWS_AS(trajectory_from_string("spiral"), Error);
}

TEST_CASE("aliased landmarks share their embedding") {
  SimConfig cfg = small_config(100);
  cfg.aliasing_groups = {{4, 17, 60}};
  const SyntheticScene scene = generate_scene(cfg);
  CHECK(scene.feature(4) == scene.feature(17));
  CHECK(scene.feature(4) == scene.feature(60));
  CHECK(scene.feature(4) != scene.feature(5));
  CHECK(scene.landmarks[4] != scene.landmarks[17]);
}

TEST_CASE("trajectories") {
  SUBCASE("four orbit frames are a quarter turn apart") {
    SimConfig cfg = small_config();
    cfg.n_frames = 4;
    const auto poses = generate_trajectory(cfg);
    REQUIRE(poses.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      const Eigen::Vector3d a = poses[i].translation(), b = poses[(i + 1) % 4].translation();
      CHECK(a.z() == doctest::Approx(cfg.orbit_height));
      CHECK(a.head<2>().norm() == doctest::Approx(cfg.orbit_radius));
      CHECK(a.head<2>().dot(b.head<2>()) == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
      // The optical axis points at the scene center.
      const Eigen::Vector3d axis = poses[i].rotation().col(2);
      CHECK((axis + a.normalized()).norm() < 1e-12);
      CHECK(poses[i].is_valid(1e-12));
    }
  }
  SUBCASE("consecutive frames move smoothly") {
    for (TrajectoryKind kind : {TrajectoryKind::Orbit, TrajectoryKind::Lawnmower}) {
      SimConfig cfg;
      cfg.trajectory = kind;
      for (const auto& poses : {generate_trajectory(cfg), generate_test_trajectory(cfg)}) {
        for (std::size_t i = 1; i < poses.size(); ++i) {
          CHECK(test::translation_error(poses[i], poses[i - 1]) < 0.2);
          CHECK(test::rotation_error_deg(poses[i], poses[i - 1]) < 5.0);
        }
      }
    }
  }
}

TEST_CASE("frame synthesis") {
  SimConfig cfg = small_config();
  const SyntheticScene scene = generate_scene(cfg);
  const RigidTransform pose = generate_trajectory(cfg)[5];

  SUBCASE("only visible landmarks, each at most once") {
    const SyntheticFrame f = synthesize_frame(scene, pose, cfg, 5);
    REQUIRE(f.obs.patches.size() > 100);
    CHECK(std::set<std::size_t>(f.landmark_ids.begin(), f.landmark_ids.end()).size() == f.landmark_ids.size());
    std::set<std::size_t> seen(f.landmark_ids.begin(), f.landmark_ids.end());
    for (std::size_t l = 0; l < scene.landmarks.size(); ++l) {
      const Eigen::Vector3d pc = pose.inverse_apply(scene.landmarks[l]);
      const bool visible = pc.z() >= cfg.min_visible_depth && cfg.camera.contains(project(scene.landmarks[l], pose, cfg.camera));
      CHECK(seen.count(l) == std::size_t(visible));
    }
    for (const auto& p : f.obs.patches) {
      CHECK(cfg.camera.contains(p.pixel));
      CHECK(p.feature.size() == cfg.feature_dim);
    }
  }
  SUBCASE("landmarks behind the camera never appear") {
    const RigidTransform away = look_at(pose.translation(), 2.0 * pose.translation());
    CHECK(synthesize_frame(scene, away, cfg, 9).obs.patches.empty());
  }
  SUBCASE("noise-free pixels are float-rounded projections") {
    cfg.pixel_noise_sigma = 0.0;
    cfg.feature_noise_sigma = 0.0;
    const SyntheticFrame f = synthesize_frame(scene, pose, cfg, 5);
    for (std::size_t i = 0; i < f.obs.patches.size(); ++i) {
      const Pixel exact = project(scene.landmarks[f.landmark_ids[i]], pose, cfg.camera);
      CHECK(f.obs.patches[i].pixel.u == double(float(exact.u)));
      CHECK(f.obs.patches[i].pixel.v == double(float(exact.v)));
      CHECK(f.obs.patches[i].feature == scene.feature(f.landmark_ids[i]));
    }
  }
  SUBCASE("pixel noise has the configured scale") {
    SimConfig big = small_config(20000);
    big.pixel_noise_sigma = 0.5;
    const SyntheticScene s = generate_scene(big);
    const SyntheticFrame f = synthesize_frame(s, pose, big, 5);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < f.obs.patches.size(); ++i) {
      const Pixel exact = project(s.landmarks[f.landmark_ids[i]], pose, big.camera);
      if (exact.u < 5 || exact.v < 5 || exact.u > 635 || exact.v > 475) continue;
      sum += std::abs(f.obs.patches[i].pixel.u - exact.u) + std::abs(f.obs.patches[i].pixel.v - exact.v);
      n += 2;
    }
    REQUIRE(n > 5000);
    // Mean of a half-normal: sigma * sqrt(2 / pi).
    CHECK(sum / double(n) == doctest::Approx(0.5 * std::sqrt(2.0 / M_PI)).epsilon(0.05));
  }
  SUBCASE("invalid pose") {
    Eigen::Matrix3d r = pose.rotation();
    r(0, 0) += 0.1;
    CHECK_THROWS_AS(synthesize_frame(scene, RigidTransform(r, pose.translation()), cfg, 0), Error);
  }
}

TEST_CASE("synthetic matches") {
  SimConfig cfg = small_config(4000);
  const SyntheticScene scene = generate_scene(cfg);
  const auto poses = generate_trajectory(cfg);
  const SyntheticFrame a = synthesize_frame(scene, poses[0], cfg, 0);
  const SyntheticFrame b = synthesize_frame(scene, poses[1], cfg, 1);
  std::set<std::size_t> in_b(b.landmark_ids.begin(), b.landmark_ids.end());
  std::size_t covisible = 0;
  for (std::size_t id : a.landmark_ids) covisible += in_b.count(id);
  REQUIRE(covisible > 500);

  SUBCASE("outlier-free matches link the same landmark") {
    cfg.match_outlier_rate = 0.0;
    const auto m = synthesize_matches(a, b, cfg);
    CHECK(m.size() == covisible);
    for (const auto& [i, j] : m) CHECK(a.landmark_ids[i] == b.landmark_ids[j]);
  }
  SUBCASE("the wrong-match fraction follows the configured rate") {
    cfg.match_outlier_rate = 0.3;
    const auto m = synthesize_matches(a, b, cfg);
    CHECK(m.size() == covisible);
    std::size_t wrong = 0;
    for (const auto& [i, j] : m) wrong += a.landmark_ids[i] != b.landmark_ids[j];
    CHECK(within_binomial(wrong, m.size(), 0.3));
  }
  SUBCASE("frames without shared landmarks have no matches") {
    const RigidTransform away = look_at(poses[0].translation(), 2.0 * poses[0].translation());
    const SyntheticFrame c = synthesize_frame(scene, away, cfg, 2);
    CHECK(synthesize_matches(a, c, cfg).empty());
  }
  SUBCASE("the matcher reproduces the frame-level matches") {
    SimulatorMatcher matcher(cfg);
    matcher.register_frame(a);
    matcher.register_frame(b);
    const auto m = matcher.match(a.obs, b.obs);
    const auto truth = synthesize_matches(a, b, cfg);
    REQUIRE(m.size() == truth.size());
    for (std::size_t k = 0; k < m.size(); ++k) {
      CHECK(m[k].frame_index == truth[k].first);
      CHECK(m[k].keyframe_index == truth[k].second);
    }
  }
}

TEST_CASE("synthetic tracks") {
  SimConfig cfg = small_config(4000);
  cfg.track_dropout_rate = 0.2;
  const SyntheticScene scene = generate_scene(cfg);
  const auto poses = generate_trajectory(cfg);
  const SyntheticFrame a = synthesize_frame(scene, poses[0], cfg, 0);

  // Every landmark: visible ones survive at 1 - rate, exits always die.
  std::vector<std::size_t> all(scene.landmarks.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const TrackUpdate up = synthesize_tracks(all, poses[1], 1, scene, cfg);
  std::size_t visible = 0, alive = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const Eigen::Vector3d pc = poses[1].inverse_apply(scene.landmarks[i]);
    const bool vis = pc.z() >= cfg.min_visible_depth && cfg.camera.contains(project(scene.landmarks[i], poses[1], cfg.camera));
    if (!vis) {
      CHECK_FALSE(up.alive[i]);
      continue;
    }
    ++visible;
    alive += up.alive[i];
    if (up.alive[i]) CHECK(cfg.camera.contains(up.pixels[i]));
  }
  REQUIRE(visible > 500);
  CHECK(within_binomial(visible - alive, visible, 0.2));

  SUBCASE("the tracker follows registered frames") {
    SimulatorTracker tracker(scene, cfg);
    tracker.register_frame(a);
    std::vector<TrackedPoint> tracks;
    for (const auto& p : a.obs.patches) {
      TrackedPoint t;
      t.pixel = p.pixel;
      tracks.push_back(t);
    }
    FrameObservation next;
    next.frame_id = 1;
    CHECK_THROWS_AS(tracker.track(0, tracks, next), Error);
    tracker.register_frame(synthesize_frame(scene, poses[1], cfg, 1));
    const TrackUpdate tu = tracker.track(0, tracks, next);
    const TrackUpdate expect = synthesize_tracks(a.landmark_ids, poses[1], 1, scene, cfg);
    CHECK(tu.alive == expect.alive);
    CHECK(tu.pixels == expect.pixels);
  }
}
