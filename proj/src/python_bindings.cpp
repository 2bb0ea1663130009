// Python bindings. Poses cross the boundary as 3x4 [R | t] arrays.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "scr/config.hpp"
#include "scr/error.hpp"
#include "scr/io.hpp"
#include "scr/metrics.hpp"
#include "scr/pipeline.hpp"
#include "scr/relocalizer.hpp"
#include "scr/robust_pnp.hpp"

namespace py = pybind11;
using namespace scr;

namespace {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RigidTransform to_pose(const Matrix34d& m) { return RigidTransform::from_matrix(m); }

std::vector<Correspondence> to_correspondences(const RowMatrixXd& pixels, const RowMatrixXd& points) {
  if (pixels.cols() != 2 || points.cols() != 3 || pixels.rows() != points.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "expected N x 2 pixels and N x 3 points");
  }
  std::vector<Correspondence> out(std::size_t(pixels.rows()));
  for (Eigen::Index i = 0; i < pixels.rows(); ++i) {
    out[std::size_t(i)] = {{pixels(i, 0), pixels(i, 1)}, points.row(i).transpose()};
  }
  return out;
}

py::dict row_dict(const TrajectoryRow& r) {
  py::dict d;
  d["frame_id"] = r.frame_id;
  d["pose"] = r.pose.matrix();
  d["status"] = std::string(to_string(r.status));
  d["inliers_pred"] = r.inliers_pred;
  d["inliers_new"] = r.inliers_new;
  d["time_us"] = r.micros;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Scene-coordinate regression relocalization";

  static py::exception<Error> error(m, "ScrError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error;
      py::object inst = exc(e.what());
      inst.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error.ptr(), inst.ptr());
    }
  });

  py::class_<PinholeCamera>(m, "Camera")
      .def(py::init([](double fx, double fy, double cx, double cy, double width, double height) {
             PinholeCamera c{fx, fy, cx, cy, width, height};
             c.validate();
             return c;
           }),
           py::arg("fx") = 520.0, py::arg("fy") = 520.0, py::arg("cx") = 320.0, py::arg("cy") = 240.0,
           py::arg("width") = 640.0, py::arg("height") = 480.0)
      .def_readonly("fx", &PinholeCamera::fx)
      .def_readonly("fy", &PinholeCamera::fy)
      .def_readonly("cx", &PinholeCamera::cx)
      .def_readonly("cy", &PinholeCamera::cy)
      .def_readonly("width", &PinholeCamera::width)
      .def_readonly("height", &PinholeCamera::height)
      .def("matrix", &PinholeCamera::matrix);

  m.def(
      "se3_exp",
      [](const Eigen::Vector3d& rho, const Eigen::Vector3d& phi) { return se3_exp(Twist{rho, phi}).matrix(); },
      py::arg("rho"), py::arg("phi"), "Pose [R | t] of the twist (rho, phi).");
  m.def(
      "se3_log",
      [](const Matrix34d& t) {
        const Twist xi = se3_log(to_pose(t));
        return py::make_tuple(xi.rho, xi.phi);
      },
      py::arg("pose"), "Twist (rho, phi) of a pose.");
  m.def(
      "project",
      [](const Eigen::Vector3d& p, const Matrix34d& t_wc, const PinholeCamera& cam) {
        const Pixel px = project(p, to_pose(t_wc), cam);
        return Eigen::Vector2d(px.u, px.v);
      },
      py::arg("point"), py::arg("t_wc"), py::arg("camera"));
  m.def(
      "backproject_at_depth",
      [](const Eigen::Vector2d& px, double depth, const Matrix34d& t_wc, const PinholeCamera& cam) {
        return backproject_at_depth({px(0), px(1)}, depth, to_pose(t_wc), cam);
      },
      py::arg("pixel"), py::arg("depth"), py::arg("t_wc"), py::arg("camera"));

  m.def(
      "ransac_pnp",
      [](const RowMatrixXd& pixels, const RowMatrixXd& points, const PinholeCamera& cam, double threshold,
         int max_iterations, std::uint64_t seed) {
        RansacConfig cfg;
        cfg.inlier_threshold = threshold;
        cfg.max_iterations = max_iterations;
        cfg.seed = seed;
        const PoseEstimate est = ransac_pnp(to_correspondences(pixels, points), cam, cfg);
        return py::make_tuple(est.pose.matrix(), est.inlier_mask);
      },
      py::arg("pixels"), py::arg("points"), py::arg("camera"), py::arg("threshold") = 10.0,
      py::arg("max_iterations") = 256, py::arg("seed") = 0, "Returns (pose, inlier mask).");

  m.def(
      "fuse_poses",
      [](const Matrix34d& t_pred, std::size_t n_pred, const Matrix34d& t_new, std::size_t n_new) {
        return fuse_poses(to_pose(t_pred), n_pred, to_pose(t_new), n_new).matrix();
      },
      py::arg("t_pred"), py::arg("n_pred"), py::arg("t_new"), py::arg("n_new"));

  py::class_<SceneHead>(m, "SceneHead")
      .def_static(
          "random",
          [](int feature_dim, int hidden_dim, int num_layers, std::uint64_t seed) {
            return SceneHead::random(HeadShape{feature_dim, hidden_dim, num_layers}, seed);
          },
          py::arg("feature_dim"), py::arg("hidden_dim") = 128, py::arg("num_layers") = 6, py::arg("seed") = 0)
      .def_static("load", &load_head, py::arg("path"))
      .def("save", [](const SceneHead& h, const std::filesystem::path& p) { save_head(p, h); }, py::arg("path"))
      .def_property_readonly("feature_dim", &SceneHead::feature_dim)
      .def_property_readonly("num_layers", &SceneHead::num_layers)
      .def_property_readonly("parameter_count", &SceneHead::parameter_count)
      .def(
          "predict",
          [](const SceneHead& h, const RowMatrixXf& features) {
            const SceneHead::Matrix out = h.forward(features.transpose());
            return RowMatrixXf(out.transpose());
          },
          py::arg("features"), "N x C_f features to N x 3 scene coordinates.");

  m.def(
      "pose_error",
      [](const Matrix34d& est, const Matrix34d& truth) {
        const PoseError e = pose_error(to_pose(est), to_pose(truth));
        return py::make_tuple(e.translation, e.rotation);
      },
      py::arg("estimate"), py::arg("truth"), "(meters, degrees)");
  m.def(
      "compute_recall",
      [](const std::vector<std::pair<double, double>>& errors, double meters, double degrees) {
        std::vector<PoseError> e;
        for (const auto& [t, r] : errors) e.push_back({t, r});
        return compute_recall(e, {meters, degrees});
      },
      py::arg("errors"), py::arg("meters"), py::arg("degrees"));

  m.def(
      "read_trajectory",
      [](const std::filesystem::path& p) {
        py::list rows;
        for (const auto& r : read_trajectory(p)) rows.append(row_dict(r));
        return rows;
      },
      py::arg("path"));
  m.def(
      "read_poses",
      [](const std::filesystem::path& p) {
        std::vector<Matrix34d> out;
        for (const auto& t : read_poses(p)) out.push_back(t.matrix());
        return out;
      },
      py::arg("path"));

  m.def(
      "run_pipeline",
      [](const std::string& config_text, const std::filesystem::path& out_dir, const std::string& mode) {
        const AppConfig cfg = parse_config(config_text);
        const SimulatedDataset data = simulate(cfg.sim);
        write_dataset(data, cfg, out_dir);
        std::vector<FrameObservation> mapping, query;
        for (const auto& f : data.mapping) mapping.push_back(f.obs);
        for (const auto& f : data.query) query.push_back(f.obs);
        const MappingResult mapped = run_mapping(mapping, cfg);
        save_head(out_dir / "map.scrh", mapped.train.head);
        const auto rows = run_localization(query, mapped.train.head, mode_from_string(mode), cfg, false);
        write_trajectory(out_dir / "trajectory.csv", rows);
        const EvalReport rep = evaluate(rows, data.query_poses, {{0.01, 1.0}, {0.1, 10.0}});
        write_text(out_dir / "report.csv", format_report(rep));
        py::dict d;
        d["recall"] = rep.recalls;
        d["median_translation"] = rep.median.translation;
        d["median_rotation"] = rep.median.rotation;
        d["failed"] = rep.failed;
        d["losses"] = mapped.train.losses;
        return d;
      },
      py::arg("config_text"), py::arg("out_dir"), py::arg("mode") = "single",
      "simulate, map, localize and evaluate in one call; files land in out_dir.");
}
