#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cvloc/cvls.hpp"
#include "cvloc/errors.hpp"
#include "cvloc/harness.hpp"
#include "cvloc/losses.hpp"

namespace py = pybind11;
using namespace cvloc;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cross-view 3-DoF pose refinement";

  py::register_exception<FormatError>(m, "FormatError");
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<GenerationError>(m, "GenerationError");
  py::register_exception<DegenerateProblem>(m, "DegenerateProblem");

  m.def("meters_per_pixel", &meters_per_pixel, py::arg("latitude_deg"), py::arg("zoom"), py::arg("scale"));

  py::class_<Pose3>(m, "Pose3")
      .def(py::init([](double lat, double lon, double yaw) { return Pose3{lat, lon, yaw}; }), py::arg("lateral") = 0.0,
           py::arg("longitudinal") = 0.0, py::arg("yaw") = 0.0)
      .def_readwrite("lateral", &Pose3::lateral)
      .def_readwrite("longitudinal", &Pose3::longitudinal)
      .def_readwrite("yaw", &Pose3::yaw)
      .def_property_readonly("yaw_deg", &Pose3::yaw_deg)
      .def_static("from_degrees", &Pose3::from_degrees, py::arg("lateral_m"), py::arg("longitudinal_m"),
                  py::arg("yaw_deg"))
      .def("retract", &Pose3::retract, py::arg("delta"))
      .def("__repr__", [](const Pose3& p) {
        return "Pose3(lateral=" + std::to_string(p.lateral) + ", longitudinal=" + std::to_string(p.longitudinal) +
               ", yaw_deg=" + std::to_string(p.yaw_deg()) + ")";
      });

  py::class_<PoseError>(m, "PoseError")
      .def_readonly("lateral", &PoseError::lateral)
      .def_readonly("longitudinal", &PoseError::longitudinal)
      .def_readonly("yaw", &PoseError::yaw)
      .def("__repr__", [](const PoseError& e) {
        return "PoseError(lateral=" + std::to_string(e.lateral) + " m, longitudinal=" +
               std::to_string(e.longitudinal) + " m, yaw=" + std::to_string(e.yaw) + " deg)";
      });
  m.def("pose_error", &pose_error, py::arg("est"), py::arg("gt"));

  py::enum_<AttentionMode>(m, "AttentionMode")
      .value("UNIFORM", AttentionMode::kUniform)
      .value("RANDOM_SMOOTH", AttentionMode::kRandomSmooth);

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("seed", &SynthConfig::seed)
      .def_readwrite("sat_size", &SynthConfig::sat_size)
      .def_readwrite("gamma", &SynthConfig::gamma)
      .def_readwrite("levels", &SynthConfig::levels)
      .def_readwrite("channels", &SynthConfig::channels)
      .def_readwrite("point_count", &SynthConfig::point_count)
      .def_readwrite("depth_min", &SynthConfig::depth_min)
      .def_readwrite("depth_max", &SynthConfig::depth_max)
      .def_readwrite("feature_smoothness", &SynthConfig::feature_smoothness)
      .def_readwrite("attention_mode", &SynthConfig::attention_mode)
      .def_readwrite("gt_pose", &SynthConfig::gt_pose)
      .def_readwrite("ground_width", &SynthConfig::ground_width)
      .def_readwrite("ground_height", &SynthConfig::ground_height)
      .def_readwrite("focal_px", &SynthConfig::focal_px)
      .def_readwrite("camera_height", &SynthConfig::camera_height);

  py::class_<AlignmentProblem>(m, "AlignmentProblem")
      .def_readonly("gt_pose", &AlignmentProblem::gt_pose)
      .def_property_readonly("level_count", &AlignmentProblem::level_count)
      .def_property_readonly("point_count", [](const AlignmentProblem& p) { return p.points.size(); })
      .def_property_readonly("gamma", [](const AlignmentProblem& p) { return p.georef.gamma; });

  m.def("generate_scene", &generate_scene, py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def("save_scene", &save_scene, py::arg("path"), py::arg("problem"));
  m.def("load_scene", &load_scene, py::arg("path"));
  m.def("load_problem", &load_problem, py::arg("path"));

  py::class_<LMConfig>(m, "LMConfig")
      .def(py::init<>())
      .def_readwrite("max_iters_per_level", &LMConfig::max_iters_per_level)
      .def_readwrite("stop_tol_m", &LMConfig::stop_tol_m)
      .def_readwrite("stop_tol_deg", &LMConfig::stop_tol_deg)
      .def_readwrite("lambda_init", &LMConfig::lambda_init)
      .def_readwrite("lambda_up", &LMConfig::lambda_up)
      .def_readwrite("lambda_down", &LMConfig::lambda_down);

  py::class_<RobustCost>(m, "RobustCost")
      .def(py::init<>())
      .def_static("squared", &RobustCost::squared)
      .def_static("huber", &RobustCost::huber, py::arg("delta"))
      .def_static("geman_mcclure", &RobustCost::geman_mcclure, py::arg("sigma"))
      .def_property_readonly("name", &RobustCost::name)
      .def_readonly("param", &RobustCost::param);

  py::class_<OptimReport>(m, "OptimReport")
      .def_readonly("initial_pose", &OptimReport::initial_pose)
      .def_readonly("final_pose", &OptimReport::final_pose)
      .def_readonly("converged", &OptimReport::converged)
      .def_readonly("iterations_total", &OptimReport::iterations_total)
      .def("to_json", [](const OptimReport& r) { return report_to_json(r).dump(); });

  m.def("refine_pose", &refine_pose, py::arg("problem"), py::arg("init"), py::arg("config") = LMConfig{},
        py::arg("cost") = RobustCost{}, py::call_guard<py::gil_scoped_release>());
  m.def("build_jacobian", &build_jacobian, py::arg("problem"), py::arg("pose"), py::arg("level") = 0);
  m.def(
      "lm_step",
      [](const Eigen::MatrixXd& J, const Eigen::VectorXd& W, const Eigen::VectorXd& r, double lambda) {
        return lm_step(J, W, r, lambda);
      },
      py::arg("J"), py::arg("W_diag"), py::arg("residuals"), py::arg("lambda_"));

  py::class_<LossConfig>(m, "LossConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &LossConfig::alpha)
      .def_readwrite("beta_lo", &LossConfig::beta_lo)
      .def_readwrite("beta_hi", &LossConfig::beta_hi)
      .def_readwrite("dis_level", &LossConfig::dis_level);
  m.def("triplet_loss", &triplet_loss, py::arg("dis_init"), py::arg("dis_gt"), py::arg("alpha"));
  m.def("pab_weight", &pab_weight, py::arg("l_init"), py::arg("config") = LossConfig{});

  py::class_<PerturbBounds>(m, "PerturbBounds")
      .def(py::init([](double s, double y) { return PerturbBounds{s, y}; }), py::arg("max_shift") = 10.0,
           py::arg("max_yaw") = 30.0)
      .def_readwrite("max_shift", &PerturbBounds::max_shift)
      .def_readwrite("max_yaw", &PerturbBounds::max_yaw);
  m.def("sample_initial_pose", &sample_initial_pose, py::arg("gt"), py::arg("bounds"), py::arg("seed"));

  // Harness entry points return JSON text; the package wrapper decodes it.
  m.def(
      "_run_eval",
      [](const AlignmentProblem& p, int trials, const PerturbBounds& b, std::uint64_t seed, int workers) {
        EvalResult r;
        {
          py::gil_scoped_release release;
          r = run_eval(p, trials, b, seed, AppConfig{}, workers);
        }
        return summary_to_json(r.summary).dump();
      },
      py::arg("problem"), py::arg("trials"), py::arg("bounds"), py::arg("seed") = 0, py::arg("workers") = 1);
  m.def(
      "_check_numerics",
      [](std::uint64_t seed) {
        NumericsOptions opt;
        opt.seed = seed;
        return check_numerics(opt).to_json().dump();
      },
      py::arg("seed") = 0);
}
