#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "helpers.hpp"
#include "scr/config.hpp"
#include "scr/error.hpp"
#include "scr/io.hpp"
#include "scr/metrics.hpp"

using namespace scr;
namespace fs = std::filesystem;

namespace {

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

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("scr_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t reference_crc32(const std::uint8_t* data, std::size_t n) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    crc ^= data[i];
    for (int b = 0; b < 8; ++b) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
         std::uint32_t(b[at + 3]) << 24;
}

bool same_head(const SceneHead& a, const SceneHead& b) {
  if (!(a.shape() == b.shape())) return false;
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    if (a.layers()[i].weight != b.layers()[i].weight || a.layers()[i].bias != b.layers()[i].bias) return false;
  }
  return true;
}

FrameObservation random_frame(std::mt19937_64& rng, int dim, std::size_t n) {
  FrameObservation f;
  f.frame_id = 123456789012345ull;
  f.t_wc = test::random_pose(rng);
  f.cam = PinholeCamera{525.5, 524.25, 319.5, 239.5, 640, 480};
  std::uniform_real_distribution<float> u(0, 640), v(0, 480), s(0, 1), x(-1, 1);
  for (std::size_t i = 0; i < n; ++i) {
    PatchSample p;
    p.pixel = {u(rng), v(rng)};
    p.saliency = s(rng);
    p.feature.resize(dim);
    for (int k = 0; k < dim; ++k) p.feature(k) = x(rng);
    f.patches.push_back(p);
  }
  return f;
}

}  // namespace

TEST_CASE("pose error") {
  const RigidTransform truth;
  const RigidTransform moved(Eigen::Matrix3d::Identity(), Eigen::Vector3d(3, 4, 0));
  CHECK(pose_error(moved, truth).translation == doctest::Approx(5.0));
  CHECK(pose_error(moved, truth).rotation == 0.0);
  const RigidTransform turned(test::rodrigues(Eigen::Vector3d(0, 0, M_PI / 2)), Eigen::Vector3d::Zero());
  CHECK(pose_error(turned, truth).rotation == doctest::Approx(90.0));
  CHECK(pose_error(truth, turned).rotation == doctest::Approx(90.0));
}

TEST_CASE("recall and medians") {
  const std::vector<PoseError> e = {{0.01, 0.1}, {0.04, 1.0}, {0.06, 0.5}, {0.02, 2.5}};
  CHECK(compute_recall(e, {0.05, 2.0}) == doctest::Approx(50.0));
  CHECK(compute_recall(e, {0.05, 5.0}) == doctest::Approx(75.0));
  CHECK(compute_recall(e, {0.04, 1.0}) == doctest::Approx(25.0));  // strict on both components
  CHECK(compute_recall(e, {1.0, 10.0}) == doctest::Approx(100.0));

  const PoseError even = compute_medians(e);
  CHECK(even.translation == 0.02);
  CHECK(even.rotation == 0.5);
  const std::vector<PoseError> odd = {{3, 30}, {1, 10}, {2, 20}};
  CHECK(compute_medians(odd).translation == 2.0);
  CHECK(compute_medians(odd).rotation == 20.0);

  const std::vector<PoseError> none;
  CHECK(code_of([&] { compute_recall(none, {1, 1}); }) == ErrorCode::EmptyInput);
  CHECK(code_of([&] { compute_medians(none); }) == ErrorCode::EmptyInput);

  // Recall never decreases as thresholds loosen.
  std::mt19937_64 rng(1);
  std::vector<PoseError> r;
  for (int i = 0; i < 500; ++i) r.push_back({std::uniform_real_distribution<double>(0, 0.2)(rng),
                                             std::uniform_real_distribution<double>(0, 5)(rng)});
  double last = -1.0;
  for (double m = 0.0; m <= 0.25; m += 0.01) {
    const double now = compute_recall(r, {m, 6.0 * m / 0.25});
    CHECK(now >= last);
    last = now;
  }
}

TEST_CASE("threshold parsing") {
  const auto t = parse_thresholds("0.05,2; 0.1,5");
  REQUIRE(t.size() == 2);
  CHECK(t[1].meters == 0.1);
  CHECK(t[1].degrees == 5.0);
  CHECK(code_of([] { parse_thresholds("0.05"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { parse_thresholds("-1,2"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { parse_thresholds(""); }) == ErrorCode::BadConfig);
}

TEST_CASE("evaluation report") {
  std::vector<RigidTransform> truth;
  std::vector<TrajectoryRow> rows;
  for (std::uint64_t i = 0; i < 4; ++i) {
    truth.emplace_back(Eigen::Matrix3d::Identity(), Eigen::Vector3d(double(i), 0, 0));
    TrajectoryRow r;
    r.frame_id = 10 + i;
    r.pose = RigidTransform(Eigen::Matrix3d::Identity(), Eigen::Vector3d(double(i) + 0.01 * double(i), 0, 0));
    r.status = i == 3 ? RelocStatus::Failed : RelocStatus::Ok;
    r.micros = 100;
    rows.push_back(r);
  }
  // Rows arrive out of order; pairing follows frame_id.
  std::swap(rows[0], rows[2]);
  const EvalReport rep = evaluate(rows, truth, {{0.015, 1.0}, {1.0, 1.0}});
  CHECK(rep.frame_ids == std::vector<std::uint64_t>{10, 11, 12, 13});
  CHECK(rep.failed == 1);
  CHECK(std::isinf(rep.errors[3].translation));
  CHECK(rep.recalls[0] == doctest::Approx(50.0));
  CHECK(rep.recalls[1] == doctest::Approx(75.0));
  CHECK(rep.median.translation == doctest::Approx(0.01));
  CHECK(rep.mean_latency_us == 100.0);

  const std::string text = format_report(rep);
  CHECK(text == format_report(evaluate(rows, truth, {{0.015, 1.0}, {1.0, 1.0}})));
  CHECK(text.find("failed,1\n") != std::string::npos);
  CHECK(text.find("recall_pct@0.015m_1deg,50\n") != std::string::npos);
  CHECK(text.find("13,inf,inf,failed\n") != std::string::npos);

  truth.pop_back();
  CHECK(code_of([&] { evaluate(rows, truth, {{1, 1}}); }) == ErrorCode::BadFormat);
}

TEST_CASE("number formatting") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(std::uniform_real_distribution<double>(-1, 1)(rng), int(rng() % 80) - 40);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_sig6(0.0123456789) == "0.0123457");
  CHECK(format_sig6(50.0) == "50");
  CHECK_THROWS_AS(parse_double("1.5x"), Error);
}

TEST_CASE("map files") {
  const SceneHead head = SceneHead::random(HeadShape{16, 8, 4}, 3, Eigen::Vector3d(1, 2, 3));
  const std::vector<std::uint8_t> bytes = encode_head(head);

  SUBCASE("layout") {
    CHECK(std::memcmp(bytes.data(), "SCRH", 4) == 0);
    CHECK((bytes[4] | bytes[5] << 8) == kMapVersion);
    CHECK(read_u32(bytes, 6) == 16);
    CHECK(read_u32(bytes, 10) == 8);
    CHECK(read_u32(bytes, 14) == 4);
    CHECK(bytes.size() == 18 + 4 * head.parameter_count() + 4);
    CHECK(read_u32(bytes, bytes.size() - 4) == reference_crc32(bytes.data(), bytes.size() - 4));
    // First weight, row-major, little-endian.
    float w;
    std::memcpy(&w, bytes.data() + 18, 4);
    CHECK(w == head.layers()[0].weight(0, 0));
    std::memcpy(&w, bytes.data() + 22, 4);
    CHECK(w == head.layers()[0].weight(0, 1));
  }
  SUBCASE("roundtrip is bit-exact") {
    CHECK(same_head(decode_head(bytes), head));
    const fs::path dir = scratch_dir("map");
    CHECK(same_head(map_roundtrip(head, dir / "m.scrh"), head));
    CHECK(read_bytes(dir / "m.scrh") == bytes);
    fs::remove_all(dir);
  }
  SUBCASE("corruption is detected") {
    for (std::size_t at : {std::size_t(20), bytes.size() / 2, bytes.size() - 5}) {
      std::vector<std::uint8_t> bad = bytes;
      bad[at] ^= 0x01;
      CHECK(code_of([&] { decode_head(bad); }) == ErrorCode::ChecksumMismatch);
    }
    std::vector<std::uint8_t> newer = bytes;
    newer[4] = std::uint8_t(kMapVersion + 1);
    CHECK(code_of([&] { decode_head(newer); }) == ErrorCode::VersionUnsupported);
    std::vector<std::uint8_t> magic = bytes;
    magic[0] = 'X';
    CHECK(code_of([&] { decode_head(magic); }) == ErrorCode::BadFormat);
    const std::vector<std::uint8_t> shorter(bytes.begin(), bytes.begin() + 10);
    CHECK(code_of([&] { decode_head(shorter); }) == ErrorCode::BadFormat);
    CHECK(code_of([] { load_head("/nonexistent/dir/map.scrh"); }) == ErrorCode::Io);
  }
}

TEST_CASE("feature frames") {
  std::mt19937_64 rng(4);
  const FrameObservation f = random_frame(rng, 12, 50);
  const FrameObservation g = decode_frame(encode_frame(f));
  CHECK(g.frame_id == f.frame_id);
  CHECK(g.t_wc.matrix() == f.t_wc.matrix());
  CHECK(g.cam.fx == f.cam.fx);
  CHECK(g.cam.height == f.cam.height);
  REQUIRE(g.patches.size() == f.patches.size());
  bool same = true;
  for (std::size_t i = 0; i < f.patches.size(); ++i) {
    same &= g.patches[i].pixel == f.patches[i].pixel;
    same &= g.patches[i].saliency == f.patches[i].saliency;
    same &= g.patches[i].feature == f.patches[i].feature;
  }
  CHECK(same);
  CHECK(encode_frame(g) == encode_frame(f));

  auto bytes = encode_frame(f);
  bytes.pop_back();
  CHECK(code_of([&] { decode_frame(bytes); }) == ErrorCode::BadFormat);

  const fs::path dir = scratch_dir("frames");
  for (std::uint64_t id : {5u, 1u, 3u}) {
    FrameObservation h = f;
    h.frame_id = id;
    write_frame(dir / ("z" + std::to_string(10 - id) + ".scrf"), h);
  }
  const auto all = read_frame_dir(dir);
  REQUIRE(all.size() == 3);
  CHECK(all[0].frame_id == 1);
  CHECK(all[2].frame_id == 5);
  fs::remove_all(dir);
  fs::create_directories(dir);
  CHECK(code_of([&] { read_frame_dir(dir); }) == ErrorCode::EmptyInput);
  fs::remove_all(dir);
}

TEST_CASE("pose and trajectory text") {
  std::mt19937_64 rng(5);
  std::vector<RigidTransform> poses;
  for (int i = 0; i < 20; ++i) poses.push_back(test::random_pose(rng));
  const auto back = parse_poses("# comment\n\n" + format_poses(poses));
  REQUIRE(back.size() == poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) CHECK((back[i].matrix() - poses[i].matrix()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(code_of([] { parse_poses("1 0 0 0 0 1 0 0 0 0 1\n"); }) == ErrorCode::BadFormat);

  std::vector<TrajectoryRow> rows;
  for (std::uint64_t i = 0; i < 5; ++i) {
    TrajectoryRow r;
    r.frame_id = 200 + i;
    r.pose = poses[i];
    r.status = i == 2 ? RelocStatus::Failed : (i == 0 ? RelocStatus::FallbackSingle : RelocStatus::Ok);
    r.inliers_pred = 10 * i;
    r.inliers_new = 7 * i;
    r.micros = std::int64_t(1000 + i);
    rows.push_back(r);
  }
  const std::string csv = format_trajectory(rows);
  CHECK(csv.rfind("frame_id,r00,r01,r02,t0,r10,r11,r12,t1,r20,r21,r22,t2,status,inliers_pred,inliers_new,time_us\n", 0) == 0);
  const auto parsed = parse_trajectory(csv);
  REQUIRE(parsed.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(parsed[i].frame_id == rows[i].frame_id);
    CHECK(parsed[i].pose.matrix() == rows[i].pose.matrix());
    CHECK(parsed[i].status == rows[i].status);
    CHECK(parsed[i].inliers_pred == rows[i].inliers_pred);
    CHECK(parsed[i].micros == rows[i].micros);
  }
  CHECK(format_trajectory(parsed) == csv);
  CHECK(code_of([] { parse_trajectory("frame,pose\n"); }) == ErrorCode::BadFormat);
  CHECK(code_of([] { status_from_string("maybe"); }) == ErrorCode::BadFormat);
}

TEST_CASE("configuration") {
  SUBCASE("defaults and overrides") {
    const AppConfig cfg = parse_config(
        "seed = 9\n"
        "[simulator]\nn_landmarks = 1234\ntrajectory = lawnmower\nfeature_dim = 16\n"
        "[mapping]\nepochs = 3\n"
        "[localize]\ntracker = none\n");
    CHECK(cfg.sim.n_landmarks == 1234);
    CHECK(cfg.sim.trajectory == TrajectoryKind::Lawnmower);
    CHECK(cfg.mapping.epochs == 3);
    CHECK(cfg.mapping.head.feature_dim == 16);
    CHECK(cfg.sim.seed == 9);
    CHECK(cfg.mapping.seed == 9);
    CHECK(cfg.reloc.ransac.seed == 9);
    CHECK(cfg.tracker.kind == "none");
    CHECK(cfg.sim.n_frames == SimConfig{}.n_frames);

    // A section-level seed overrides the shared one.
    CHECK(parse_config("seed = 9\n[ransac]\nseed = 4\n").reloc.ransac.seed == 4);
  }
  SUBCASE("the effective configuration reparses to itself") {
    const AppConfig cfg = parse_config("[simulator]\nn_frames = 17\n[loss]\ntau_max = 40\n");
    const std::string text = format_config(cfg);
    CHECK(format_config(parse_config(text)) == text);
    CHECK(parse_config(text).sim.n_frames == 17);
  }
  SUBCASE("rejections") {
    CHECK(code_of([] { parse_config("[simulator]\nn_landmark = 5\n"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { parse_config("[simulation]\nn_landmarks = 5\n"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { parse_config("speed = 5\n"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { parse_config("[simulator]\nn_landmarks = many\n"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { parse_config("[simulator]\nmatch_outlier_rate = 1.5\n"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { parse_config("[localize]\ntracker = optical\n"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { parse_config("[mapping\nepochs = 3\n"); }) == ErrorCode::BadConfig);
    CHECK(code_of([] { load_config("/nonexistent/run.ini"); }) == ErrorCode::BadConfig);
  }
}
