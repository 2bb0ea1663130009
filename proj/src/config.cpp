#include "scr/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "scr/error.hpp"
#include "scr/io.hpp"

namespace scr {

namespace {

struct Binding {
  std::string section;  // empty for the root
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
T parse_value(const std::string& s) {
  if constexpr (std::is_same_v<T, double>) {
    return parse_double(s);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return s;
  } else if constexpr (std::is_same_v<T, TrajectoryKind>) {
    return trajectory_from_string(s);
  } else {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw Error(ErrorCode::BadConfig, "not an integer: '" + s + "'");
    return v;
  }
}

template <typename T>
std::string show_value(const T& v) {
  if constexpr (std::is_same_v<T, double>) {
    return format_double(v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, TrajectoryKind>) {
    return to_string(v);
  } else {
    return std::to_string(v);
  }
}

class Table {
 public:
  template <typename T>
  void bind(const std::string& section, const std::string& key, T& ref) {
    bindings_.push_back({section, key, [&ref](const std::string& s) { ref = parse_value<T>(s); },
                         [&ref]() { return show_value(ref); }});
  }
  std::vector<Binding>& bindings() { return bindings_; }

 private:
  std::vector<Binding> bindings_;
};

// The global seed lives outside AppConfig; it fans out into the per-section seeds.
Table make_table(AppConfig& c) {
  Table t;
  SimConfig& s = c.sim;
  t.bind("simulator", "n_landmarks", s.n_landmarks);
  t.bind("simulator", "n_frames", s.n_frames);
  t.bind("simulator", "n_test_frames", s.n_test_frames);
  t.bind("simulator", "pixel_noise_sigma", s.pixel_noise_sigma);
  t.bind("simulator", "feature_noise_sigma", s.feature_noise_sigma);
  t.bind("simulator", "match_outlier_rate", s.match_outlier_rate);
  t.bind("simulator", "track_dropout_rate", s.track_dropout_rate);
  t.bind("simulator", "trajectory", s.trajectory);
  t.bind("simulator", "feature_dim", s.feature_dim);
  t.bind("simulator", "seed", s.seed);
  for (int a = 0; a < 3; ++a) {
    const std::string axis(1, "xyz"[a]);
    t.bind("simulator", "bounds_min_" + axis, s.bounds_min(a));
    t.bind("simulator", "bounds_max_" + axis, s.bounds_max(a));
  }
  t.bind("simulator", "embedding_frequency", s.embedding_frequency);
  t.bind("simulator", "identity_sigma", s.identity_sigma);
  t.bind("simulator", "min_visible_depth", s.min_visible_depth);
  t.bind("simulator", "orbit_radius", s.orbit_radius);
  t.bind("simulator", "orbit_height", s.orbit_height);
  t.bind("simulator", "orbit_arc", s.orbit_arc);
  t.bind("simulator", "test_radius_offset", s.test_radius_offset);
  t.bind("simulator", "test_height_offset", s.test_height_offset);
  t.bind("simulator", "test_phase", s.test_phase);
  t.bind("simulator", "test_arc", s.test_arc);
  t.bind("simulator", "sweep_width", s.sweep_width);
  t.bind("simulator", "sweep_height", s.sweep_height);
  t.bind("simulator", "sweep_rows", s.sweep_rows);
  t.bind("simulator", "standoff", s.standoff);

  t.bind("camera", "fx", s.camera.fx);
  t.bind("camera", "fy", s.camera.fy);
  t.bind("camera", "cx", s.camera.cx);
  t.bind("camera", "cy", s.camera.cy);
  t.bind("camera", "width", s.camera.width);
  t.bind("camera", "height", s.camera.height);

  MappingConfig& m = c.mapping;
  t.bind("mapping", "patches_per_frame", m.patches_per_frame);
  t.bind("mapping", "keyframe_match_ratio", m.keyframe_match_ratio);
  t.bind("mapping", "epochs", m.epochs);
  t.bind("mapping", "batch_size", m.batch_size);
  t.bind("mapping", "match_inlier_threshold", m.match_inlier_threshold);
  t.bind("mapping", "seed", m.seed);
  t.bind("mapping", "hidden_dim", m.head.hidden_dim);
  t.bind("mapping", "num_layers", m.head.num_layers);
  t.bind("mapping", "lr_min", m.optimizer.lr_min);
  t.bind("mapping", "lr_max", m.optimizer.lr_max);
  t.bind("mapping", "weight_decay", m.optimizer.weight_decay);
  t.bind("mapping", "beta1", m.optimizer.beta1);
  t.bind("mapping", "beta2", m.optimizer.beta2);
  t.bind("mapping", "eps", m.optimizer.eps);

  LossConfig& l = c.loss;
  t.bind("loss", "tau_min", l.tau_min);
  t.bind("loss", "tau_max", l.tau_max);
  t.bind("loss", "depth_min", l.depth_min);
  t.bind("loss", "depth_max", l.depth_max);
  t.bind("loss", "reproj_max", l.reproj_max);
  t.bind("loss", "pseudo_depth", l.pseudo_depth);
  t.bind("loss", "lambda_cross", l.lambda_cross);

  t.bind("matcher", "ratio", c.matcher.ratio);
  t.bind("matcher", "max_distance", c.matcher.max_distance);

  RansacConfig& r = c.reloc.ransac;
  t.bind("ransac", "inlier_threshold", r.inlier_threshold);
  t.bind("ransac", "max_iterations", r.max_iterations);
  t.bind("ransac", "min_inliers", r.min_inliers);
  t.bind("ransac", "refine_iterations", r.refine_iterations);
  t.bind("ransac", "seed", r.seed);

  t.bind("localize", "patches_per_frame", c.reloc.patches_per_frame);
  t.bind("localize", "max_tracked", c.reloc.max_tracked);
  t.bind("localize", "min_tracks", c.reloc.min_tracks);
  t.bind("localize", "max_failure_rate", c.max_failure_rate);
  t.bind("localize", "tracker", c.tracker.kind);
  t.bind("localize", "track_search_radius", c.tracker.search_radius);
  t.bind("localize", "track_max_distance", c.tracker.max_distance);
  t.bind("localize", "track_ratio", c.tracker.ratio);
  return t;
}

}  // namespace

void AppConfig::validate() const {
  try {
    sim.validate();
    mapping.validate();
    loss.validate();
    reloc.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::BadConfig, e.what());
  }
  if (!(matcher.ratio > 0.0 && matcher.ratio <= 1.0) || !(matcher.max_distance > 0.0)) {
    throw Error(ErrorCode::BadConfig, "matcher ratio must lie in (0, 1] and max_distance be > 0");
  }
  if (tracker.kind != "descriptor" && tracker.kind != "none") {
    throw Error(ErrorCode::BadConfig, "tracker must be 'descriptor' or 'none'");
  }
  if (!(tracker.search_radius > 0.0) || !(tracker.max_distance > 0.0) ||
      !(tracker.ratio > 0.0 && tracker.ratio <= 1.0)) {
    throw Error(ErrorCode::BadConfig, "invalid tracker parameters");
  }
  if (!(max_failure_rate >= 0.0 && max_failure_rate <= 1.0)) {
    throw Error(ErrorCode::BadConfig, "max_failure_rate must lie in [0, 1]");
  }
}

AppConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::BadConfig, e.what());
  }

  AppConfig cfg;
  if (auto seed = tree.get_optional<std::string>("seed"); seed && tree.get_child("seed").empty()) {
    const auto v = parse_value<std::uint64_t>(*seed);
    cfg.sim.seed = cfg.mapping.seed = cfg.reloc.ransac.seed = v;
  }

  Table table = make_table(cfg);
  std::set<std::pair<std::string, std::string>> known;
  std::set<std::string> sections;
  for (const Binding& b : table.bindings()) {
    known.emplace(b.section, b.key);
    sections.insert(b.section);
  }

  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      if (sections.count(name)) continue;  // empty section
      if (name != "seed") throw Error(ErrorCode::BadConfig, "unknown top-level key '" + name + "'");
      continue;
    }
    for (const auto& [key, leaf] : node) {
      if (!sections.count(name)) throw Error(ErrorCode::BadConfig, "unknown section [" + name + "]");
      if (!leaf.empty() || !known.count({name, key})) {
        throw Error(ErrorCode::BadConfig, "unknown key '" + key + "' in [" + name + "]");
      }
    }
  }
  for (Binding& b : table.bindings()) {
    const auto value = tree.get_optional<std::string>(pt::ptree::path_type(b.section + "/" + b.key, '/'));
    if (!value) continue;
    try {
      b.set(*value);
    } catch (const Error& e) {
      throw Error(ErrorCode::BadConfig, "[" + b.section + "] " + b.key + ": " + e.what());
    }
  }
  cfg.mapping.head.feature_dim = cfg.sim.feature_dim;
  cfg.validate();
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::BadConfig, e.what());
  }
  return parse_config(text);
}

std::string format_config(const AppConfig& cfg) {
  AppConfig copy = cfg;
  Table table = make_table(copy);
  std::string out;
  std::string section;
  for (const Binding& b : table.bindings()) {
    if (b.section != section) {
      section = b.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += b.key + " = " + b.get() + "\n";
  }
  return out;
}

}  // namespace scr
