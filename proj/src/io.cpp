#include "scr/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "scr/error.hpp"

namespace scr {

namespace fs = std::filesystem;

namespace {

class ByteWriter {
 public:
  void bytes(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }
  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    const U u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(std::uint8_t(u >> (8 * i)));
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& in, std::size_t end) : in_(in), end_(end) {}
  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    need(sizeof(T));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= U(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return std::bit_cast<T>(u);
  }
  bool magic(const char* m) {
    need(4);
    const bool ok = std::memcmp(in_.data() + pos_, m, 4) == 0;
    pos_ += 4;
    return ok;
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw Error(ErrorCode::BadFormat, "truncated record");
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const uInt chunk = uInt(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return std::uint32_t(crc);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw Error(ErrorCode::BadFormat, "not an integer: '" + s + "'");
  return v;
}

RigidTransform pose_from_values(const double* v) {
  Matrix34d m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = v[4 * r + c];
  }
  if (!m.allFinite()) throw Error(ErrorCode::BadFormat, "non-finite pose value");
  const RigidTransform pose = RigidTransform::from_matrix(m);
  if (!pose.is_valid(1e-6)) throw Error(ErrorCode::BadFormat, "pose rotation is not orthonormal");
  return pose;
}

void append_pose(std::string& out, const RigidTransform& pose, char sep) {
  const Matrix34d m = pose.matrix();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (r + c > 0) out.push_back(sep);
      out += format_double(m(r, c));
    }
  }
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string format_sig6(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 6);
  return std::string(buf, p);
}

double parse_double(const std::string& raw) {
  std::string s = raw;
  s.erase(0, s.find_first_not_of(" \t"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = s.data() + (s.starts_with('+') ? 1 : 0);
  auto [p, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw Error(ErrorCode::BadFormat, "not a number: '" + raw + "'");
  }
  return v;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  const std::string s = read_text(path);
  return {s.begin(), s.end()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  write_text(path, std::string(bytes.begin(), bytes.end()));
}

// ---- pose text ----

std::string format_poses(const std::vector<RigidTransform>& poses) {
  std::string out;
  for (const RigidTransform& p : poses) {
    append_pose(out, p, ' ');
    out.push_back('\n');
  }
  return out;
}

std::vector<RigidTransform> parse_poses(const std::string& text) {
  std::vector<RigidTransform> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::vector<double> v;
    std::string tok;
    while (fields >> tok) v.push_back(parse_double(tok));
    if (v.size() != 12) {
      throw Error(ErrorCode::BadFormat, "pose line " + std::to_string(lineno) + " has " + std::to_string(v.size()) +
                                            " values, expected 12");
    }
    out.push_back(pose_from_values(v.data()));
  }
  return out;
}

void write_poses(const fs::path& path, const std::vector<RigidTransform>& poses) {
  write_text(path, format_poses(poses));
}

std::vector<RigidTransform> read_poses(const fs::path& path) { return parse_poses(read_text(path)); }

// ---- SCRF ----

std::vector<std::uint8_t> encode_frame(const FrameObservation& frame) {
  const int dim = frame.feature_dim();
  ByteWriter w;
  w.bytes("SCRF", 4);
  w.put<std::uint64_t>(frame.frame_id);
  for (double v : {frame.cam.fx, frame.cam.fy, frame.cam.cx, frame.cam.cy, frame.cam.width, frame.cam.height}) {
    w.put<double>(v);
  }
  const Matrix34d m = frame.t_wc.matrix();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) w.put<double>(m(r, c));
  }
  w.put<std::uint32_t>(std::uint32_t(frame.patches.size()));
  for (const PatchSample& p : frame.patches) {
    if (p.feature.size() != dim) throw Error(ErrorCode::DimensionMismatch, "patches with differing feature sizes");
    w.put<float>(float(p.pixel.u));
    w.put<float>(float(p.pixel.v));
    w.put<float>(float(p.saliency));
    for (Eigen::Index k = 0; k < dim; ++k) w.put<float>(p.feature(k));
  }
  return std::move(w.data());
}

FrameObservation decode_frame(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, bytes.size());
  if (!r.magic("SCRF")) throw Error(ErrorCode::BadFormat, "missing SCRF magic");
  FrameObservation f;
  f.frame_id = r.get<std::uint64_t>();
  f.cam.fx = r.get<double>();
  f.cam.fy = r.get<double>();
  f.cam.cx = r.get<double>();
  f.cam.cy = r.get<double>();
  f.cam.width = r.get<double>();
  f.cam.height = r.get<double>();
  double pose[12];
  for (double& v : pose) v = r.get<double>();
  try {
    f.t_wc = pose_from_values(pose);
  } catch (const Error& e) {
    throw Error(ErrorCode::BadFormat, std::string("frame pose: ") + e.what());
  }
  const std::uint32_t count = r.get<std::uint32_t>();
  int dim = 0;
  if (count > 0) {
    const std::size_t per_patch = r.remaining() / count;
    if (per_patch * count != r.remaining() || per_patch % 4 != 0 || per_patch < 16) {
      throw Error(ErrorCode::BadFormat, "patch payload size does not divide into records");
    }
    dim = int(per_patch / 4 - 3);
  } else if (r.remaining() != 0) {
    throw Error(ErrorCode::BadFormat, "trailing bytes after empty frame");
  }
  f.patches.resize(count);
  for (PatchSample& p : f.patches) {
    p.pixel.u = r.get<float>();
    p.pixel.v = r.get<float>();
    p.saliency = r.get<float>();
    p.feature.resize(dim);
    for (int k = 0; k < dim; ++k) p.feature(k) = r.get<float>();
  }
  return f;
}

void write_frame(const fs::path& path, const FrameObservation& frame) { write_bytes(path, encode_frame(frame)); }

FrameObservation read_frame(const fs::path& path) {
  try {
    return decode_frame(read_bytes(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BadFormat) throw Error(ErrorCode::BadFormat, path.string() + ": " + e.what());
    throw;
  }
}

std::vector<FrameObservation> read_frame_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".scrf") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<FrameObservation> frames;
  for (const auto& f : files) frames.push_back(read_frame(f));
  if (frames.empty()) throw Error(ErrorCode::EmptyInput, "no .scrf files in " + dir.string());
  std::stable_sort(frames.begin(), frames.end(),
                   [](const FrameObservation& a, const FrameObservation& b) { return a.frame_id < b.frame_id; });
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].frame_id == frames[i - 1].frame_id) {
      throw Error(ErrorCode::BadFormat, "duplicate frame_id " + std::to_string(frames[i].frame_id));
    }
  }
  return frames;
}

// ---- SCRH ----

std::vector<std::uint8_t> encode_head(const SceneHead& head) {
  ByteWriter w;
  w.bytes("SCRH", 4);
  w.put<std::uint16_t>(kMapVersion);
  w.put<std::uint32_t>(std::uint32_t(head.shape().feature_dim));
  w.put<std::uint32_t>(std::uint32_t(head.shape().hidden_dim));
  w.put<std::uint32_t>(std::uint32_t(head.shape().num_layers));
  for (const auto& layer : head.layers()) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.put<float>(layer.weight(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) w.put<float>(layer.bias(r));
  }
  const std::uint32_t crc = crc32_of(w.data().data(), w.data().size());
  w.put<std::uint32_t>(crc);
  return std::move(w.data());
}

SceneHead decode_head(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kHeader = 4 + 2 + 3 * 4;
  if (bytes.size() < kHeader + 4) throw Error(ErrorCode::BadFormat, "map file too short");
  ByteReader r(bytes, bytes.size() - 4);
  if (!r.magic("SCRH")) throw Error(ErrorCode::BadFormat, "missing SCRH magic");
  const std::uint16_t version = r.get<std::uint16_t>();
  if (version != kMapVersion) {
    throw Error(ErrorCode::VersionUnsupported, "map version " + std::to_string(version) + " (supported: " +
                                                   std::to_string(kMapVersion) + ")");
  }
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= std::uint32_t(bytes[bytes.size() - 4 + i]) << (8 * i);
  if (crc32_of(bytes.data(), bytes.size() - 4) != stored) throw Error(ErrorCode::ChecksumMismatch, "map CRC32 mismatch");

  HeadShape shape;
  shape.feature_dim = int(r.get<std::uint32_t>());
  shape.hidden_dim = int(r.get<std::uint32_t>());
  shape.num_layers = int(r.get<std::uint32_t>());
  if (shape.feature_dim < 1 || shape.num_layers < 1 || shape.feature_dim > (1 << 20) || shape.hidden_dim > (1 << 20) ||
      shape.num_layers > 1024) {
    throw Error(ErrorCode::BadFormat, "implausible head shape");
  }
  SceneHead head(shape);
  std::size_t expected = 0;
  for (const auto& layer : head.layers()) expected += std::size_t(layer.weight.size() + layer.bias.size()) * 4;
  if (r.remaining() != expected) throw Error(ErrorCode::BadFormat, "map payload size does not match its shape");
  for (auto& layer : head.layers()) {
    for (Eigen::Index row = 0; row < layer.weight.rows(); ++row) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(row, c) = r.get<float>();
    }
    for (Eigen::Index row = 0; row < layer.bias.size(); ++row) layer.bias(row) = r.get<float>();
  }
  return head;
}

void save_head(const fs::path& path, const SceneHead& head) { write_bytes(path, encode_head(head)); }

SceneHead load_head(const fs::path& path) { return decode_head(read_bytes(path)); }

SceneHead map_roundtrip(const SceneHead& head, const fs::path& path) {
  save_head(path, head);
  return load_head(path);
}

// ---- trajectory CSV ----

namespace {
constexpr const char* kTrajectoryHeader =
    "frame_id,r00,r01,r02,t0,r10,r11,r12,t1,r20,r21,r22,t2,status,inliers_pred,inliers_new,time_us";
}

RelocStatus status_from_string(const std::string& s) {
  if (s == "ok") return RelocStatus::Ok;
  if (s == "fallback_single") return RelocStatus::FallbackSingle;
  if (s == "failed") return RelocStatus::Failed;
  throw Error(ErrorCode::BadFormat, "unknown status '" + s + "'");
}

std::string format_trajectory(const std::vector<TrajectoryRow>& rows) {
  std::string out = kTrajectoryHeader;
  out.push_back('\n');
  for (const TrajectoryRow& row : rows) {
    out += std::to_string(row.frame_id);
    out.push_back(',');
    append_pose(out, row.pose, ',');
    out += ',';
    out += to_string(row.status);
    out += ',' + std::to_string(row.inliers_pred) + ',' + std::to_string(row.inliers_new) + ',' +
           std::to_string(row.micros) + '\n';
  }
  return out;
}

std::vector<TrajectoryRow> parse_trajectory(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<TrajectoryRow> rows;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line != kTrajectoryHeader) throw Error(ErrorCode::BadFormat, "unexpected trajectory header");
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 17) throw Error(ErrorCode::BadFormat, "trajectory row needs 17 fields: " + line);
    TrajectoryRow row;
    row.frame_id = parse_u64(f[0]);
    double v[12];
    for (int i = 0; i < 12; ++i) v[i] = parse_double(f[std::size_t(i) + 1]);
    row.pose = pose_from_values(v);
    row.status = status_from_string(f[13]);
    row.inliers_pred = parse_u64(f[14]);
    row.inliers_new = parse_u64(f[15]);
    row.micros = std::int64_t(parse_u64(f[16]));
    rows.push_back(row);
  }
  if (header) throw Error(ErrorCode::BadFormat, "empty trajectory file");
  return rows;
}

void write_trajectory(const fs::path& path, const std::vector<TrajectoryRow>& rows) {
  write_text(path, format_trajectory(rows));
}

std::vector<TrajectoryRow> read_trajectory(const fs::path& path) { return parse_trajectory(read_text(path)); }

}  // namespace scr
