#pragma once

// File formats: pose text, SCRF feature frames, SCRH map files and the
// trajectory CSV written by `localize`. All numeric text is locale-independent.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scr/frame.hpp"
#include "scr/relocalizer.hpp"
#include "scr/scene_head.hpp"

namespace scr {

inline constexpr std::uint16_t kMapVersion = 1;

// Pose text: one pose per line, 12 decimals of the row-major 3x4 [R | t];
// blank lines and lines starting with '#' are skipped.
std::string format_poses(const std::vector<RigidTransform>& poses);
std::vector<RigidTransform> parse_poses(const std::string& text);
void write_poses(const std::filesystem::path& path, const std::vector<RigidTransform>& poses);
std::vector<RigidTransform> read_poses(const std::filesystem::path& path);

// SCRF: "SCRF", frame_id u64, camera fx fy cx cy width height f64, pose 12 f64,
// patch count u32, then per patch u v saliency f32 and C_f f32 features. C_f is
// recovered from the record size.
std::vector<std::uint8_t> encode_frame(const FrameObservation& frame);
FrameObservation decode_frame(const std::vector<std::uint8_t>& bytes);
void write_frame(const std::filesystem::path& path, const FrameObservation& frame);
FrameObservation read_frame(const std::filesystem::path& path);
/// Every *.scrf file in `dir`, ordered by frame_id. Throws EmptyInput if none.
std::vector<FrameObservation> read_frame_dir(const std::filesystem::path& dir);

// SCRH: "SCRH", version u16, C_f u32, H u32, L u32, then for each layer its
// weight matrix row-major followed by its bias, little-endian f32, then a CRC32
// of every preceding byte.
std::vector<std::uint8_t> encode_head(const SceneHead& head);
SceneHead decode_head(const std::vector<std::uint8_t>& bytes);
void save_head(const std::filesystem::path& path, const SceneHead& head);
SceneHead load_head(const std::filesystem::path& path);
/// Save then load.
SceneHead map_roundtrip(const SceneHead& head, const std::filesystem::path& path);

struct TrajectoryRow {
  std::uint64_t frame_id = 0;
  RigidTransform pose;
  RelocStatus status = RelocStatus::Failed;
  std::size_t inliers_pred = 0;
  std::size_t inliers_new = 0;
  std::int64_t micros = 0;
};

// CSV with header
// frame_id,r00,r01,r02,t0,r10,r11,r12,t1,r20,r21,r22,t2,status,inliers_pred,inliers_new,time_us
std::string format_trajectory(const std::vector<TrajectoryRow>& rows);
std::vector<TrajectoryRow> parse_trajectory(const std::string& text);
void write_trajectory(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows);
std::vector<TrajectoryRow> read_trajectory(const std::filesystem::path& path);

RelocStatus status_from_string(const std::string& s);

/// Shortest round-trip decimal ("%.17g"-exact, locale-free); "inf"/"nan" for non-finite.
std::string format_double(double v);
/// Fixed six significant digits, locale-free.
std::string format_sig6(double v);
double parse_double(const std::string& s);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace scr
