#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "scr/error.hpp"
#include "scr/robust_pnp.hpp"

using namespace scr;

namespace {

const PinholeCamera kCam{520, 520, 320, 240, 640, 480};

template <typename F>
ErrorCode code_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

/// Correspondences with the first `outlier_rate` fraction replaced by uniform
/// random pixels and Gaussian noise on the rest.
std::vector<Correspondence> noisy_fixture(std::mt19937_64& rng, const RigidTransform& truth, double outlier_rate,
                                          double sigma, std::size_t n = 100) {
  auto corrs = test::frustum_correspondences(rng, truth, kCam, n);
  std::normal_distribution<double> noise(0.0, sigma);
  std::uniform_real_distribution<double> u(0, kCam.width), v(0, kCam.height);
  const auto n_out = std::size_t(outlier_rate * double(n) + 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_out) {
      corrs[i].pixel = {u(rng), v(rng)};
    } else {
      corrs[i].pixel.u += noise(rng);
      corrs[i].pixel.v += noise(rng);
    }
  }
  return corrs;
}

const RigidTransform kBack{Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, -4)};

}  // namespace

TEST_CASE("pnp_minimal recovers an exact six-point pose") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const RigidTransform truth = test::pose_facing_origin(rng, 4.0);
    const auto corrs = test::exact_correspondences(rng, truth, kCam, 6);
    const RigidTransform est = pnp_minimal(corrs, kCam);
    CHECK(test::translation_error(est, truth) < 1e-6);
    CHECK(test::rotation_error_deg(est, truth) * M_PI / 180.0 < 1e-6);
    CHECK(est.is_valid(1e-9));
  }
}

TEST_CASE("pnp_minimal rejects degenerate input") {
  std::vector<Correspondence> line;
  for (int i = 0; i < 8; ++i) {
    const ScenePoint p(0.1 * i, 0.05 * i, 0.02 * i);
    line.push_back({project(p, kBack, kCam), p});
  }
  CHECK(code_of([&] { pnp_minimal(line, kCam); }) == ErrorCode::DegenerateConfiguration);

  std::vector<Correspondence> plane;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    const ScenePoint p(std::uniform_real_distribution<double>(-1, 1)(rng),
                       std::uniform_real_distribution<double>(-1, 1)(rng), 0.0);
    plane.push_back({project(p, kBack, kCam), p});
  }
  CHECK(code_of([&] { pnp_minimal(plane, kCam); }) == ErrorCode::DegenerateConfiguration);

  const std::vector<Correspondence> three(line.begin(), line.begin() + 3);
  CHECK(code_of([&] { pnp_minimal(three, kCam); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("classify_inliers uses a strict threshold") {
  const RigidTransform id;
  const std::vector<Correspondence> corrs = {
      {{320, 240}, {0, 0, 1}},   // on its ray
      {{330, 240}, {0, 0, 1}},   // exactly 10 px away
      {{329, 240}, {0, 0, 1}},   // 9 px away
      {{320, 240}, {0, 0, -1}},  // behind the camera
  };
  const InlierSet s = classify_inliers(corrs, id, kCam, 10.0);
  CHECK(s.mask == std::vector<bool>{true, false, true, false});
  CHECK(s.count == 2);
  CHECK(s.mean_error == doctest::Approx(4.5));
}

TEST_CASE("ransac_pnp on clean data keeps everything") {
  std::mt19937_64 rng(3);
  const RigidTransform truth = test::pose_facing_origin(rng, 4.0);
  const auto corrs = test::exact_correspondences(rng, truth, kCam, 100);
  const PoseEstimate est = ransac_pnp(corrs, kCam, RansacConfig{});
  CHECK(est.inlier_count == corrs.size());
  CHECK(test::translation_error(est.pose, truth) < 1e-6);
  CHECK(test::rotation_error_deg(est.pose, truth) < 1e-6);
}

TEST_CASE("ransac_pnp recovers the pose at 30% outliers") {
  int good = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const RigidTransform truth = test::pose_facing_origin(rng, 4.0);
    const auto corrs = noisy_fixture(rng, truth, 0.3, 0.5);
    RansacConfig cfg;
    cfg.seed = seed;
    const PoseEstimate est = ransac_pnp(corrs, kCam, cfg);
    if (test::translation_error(est.pose, truth) < 0.01 && test::rotation_error_deg(est.pose, truth) < 0.1) ++good;

    // Consensus validity and mask bookkeeping.
    std::size_t count = 0;
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      if (!est.inlier_mask[i]) continue;
      ++count;
      CHECK(reprojection_error(corrs[i].pixel, corrs[i].point, est.pose, kCam) < cfg.inlier_threshold);
    }
    CHECK(count == est.inlier_count);
  }
  CHECK(good >= 29);
}

TEST_CASE("ransac_pnp refinement never loses to the raw hypothesis") {
  // The refined mean inlier error is compared with the best raw DLT pose on
  // the same final mask: with refine_iterations = 0 the raw hypothesis is kept.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(200 + seed);
    const RigidTransform truth = test::pose_facing_origin(rng, 4.0);
    const auto corrs = noisy_fixture(rng, truth, 0.2, 1.0);
    RansacConfig raw_cfg;
    raw_cfg.seed = seed;
    raw_cfg.refine_iterations = 0;
    RansacConfig cfg = raw_cfg;
    cfg.refine_iterations = 8;
    const PoseEstimate raw = ransac_pnp(corrs, kCam, raw_cfg);
    const PoseEstimate refined = ransac_pnp(corrs, kCam, cfg);
    double raw_on_final = 0.0;
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      if (refined.inlier_mask[i]) raw_on_final += reprojection_error(corrs[i].pixel, corrs[i].point, raw.pose, kCam);
    }
    raw_on_final /= double(refined.inlier_count);
    CHECK(refined.mean_inlier_error <= raw_on_final + 1e-12);
  }
}

TEST_CASE("ransac_pnp finds no consensus among random pixels") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(300 + seed);
    const RigidTransform truth = test::pose_facing_origin(rng, 4.0);
    const auto corrs = noisy_fixture(rng, truth, 1.0, 0.0);
    RansacConfig cfg;
    cfg.seed = seed;
    CHECK(code_of([&] { ransac_pnp(corrs, kCam, cfg); }) == ErrorCode::NoConsensus);
  }
}

TEST_CASE("ransac_pnp input checks") {
  std::mt19937_64 rng(4);
  const auto corrs = test::exact_correspondences(rng, kBack, kCam, 3);
  CHECK(code_of([&] { ransac_pnp(corrs, kCam, RansacConfig{}); }) == ErrorCode::TooFewCorrespondences);
  RansacConfig bad;
  bad.inlier_threshold = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = RansacConfig{};
  bad.max_iterations = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("ransac_pnp is deterministic for a seed") {
  std::mt19937_64 rng(5);
  const RigidTransform truth = test::pose_facing_origin(rng, 4.0);
  const auto corrs = noisy_fixture(rng, truth, 0.4, 0.5);
  RansacConfig cfg;
  cfg.seed = 42;
  const PoseEstimate a = ransac_pnp(corrs, kCam, cfg);
  const PoseEstimate b = ransac_pnp(corrs, kCam, cfg);
  CHECK(a.pose.matrix() == b.pose.matrix());
  CHECK(a.inlier_mask == b.inlier_mask);
  CHECK(a.mean_inlier_error == b.mean_inlier_error);
}

TEST_CASE("refine_pose does not increase the cost") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const RigidTransform truth = test::pose_facing_origin(rng, 4.0);
    const auto corrs = noisy_fixture(rng, truth, 0.0, 1.0);
    const std::vector<bool> mask(corrs.size(), true);
    const RigidTransform start = truth * se3_exp(Twist{test::uniform_vec(rng, -0.05, 0.05),
                                                       test::uniform_vec(rng, -0.02, 0.02)});
    auto cost = [&](const RigidTransform& t) {
      double c = 0.0;
      for (const auto& k : corrs) c += std::pow(reprojection_error(k.pixel, k.point, t, kCam), 2);
      return c;
    };
    const RigidTransform refined = refine_pose(corrs, mask, start, kCam, 10);
    CHECK(cost(refined) <= cost(start));
    CHECK(cost(refined) <= cost(truth) * 1.000001);
  }
}
