#pragma once

// Experiment runner behind the command line tool: single localizations,
// seeded batch evaluations, perturbation sweeps and numerical self-checks.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvloc/config.hpp"
#include "cvloc/metrics.hpp"
#include "cvloc/problem.hpp"
#include "cvloc/synth.hpp"

namespace cvloc {

/// Loads a CVLS scene, or generates one when `path` holds a JSON config
/// (its synth section is used). The file type is decided by the magic bytes.
AlignmentProblem load_problem(const std::filesystem::path& path);

/// CVL_WORKERS, when set, wins over `requested`. Throws ConfigError on a
/// malformed value.
int resolve_workers(int requested);

nlohmann::json pose_to_json(const Pose3& pose);
nlohmann::json error_to_json(const PoseError& error);
nlohmann::json report_to_json(const OptimReport& report);
nlohmann::json summary_to_json(const MetricsSummary& summary);

struct LocalizeResult {
  nlohmann::json record;
  bool degenerate = false;
};

/// Refines `init` and builds the run record. A degenerate problem still
/// yields a record (status "degenerate") with the partial trace.
LocalizeResult run_localize(const AlignmentProblem& problem, const Pose3& init, const AppConfig& cfg);

struct EvalResult {
  std::vector<TrialResult> trials;
  MetricsSummary summary;
};

/// Trial t starts from sample_initial_pose(gt, bounds, trial_seed(seed, t)).
EvalResult run_eval(const AlignmentProblem& problem, int trials, const PerturbBounds& bounds, std::uint64_t seed,
                    const AppConfig& cfg, int workers);

/// Columns: trial, init_lateral_m, init_longitudinal_m, init_yaw_deg,
/// final_lateral_m, final_longitudinal_m, final_yaw_deg, err_lateral_m,
/// err_longitudinal_m, err_yaw_deg, converged, iterations, status, failure.
void write_trials_csv(std::ostream& out, const std::vector<TrialResult>& trials);

/// Columns: max_shift_m, max_yaw_deg, trials, failures, median_lateral_m,
/// median_longitudinal_m, median_yaw_deg, recall_lat_{0.25,0.5,1,2}m,
/// recall_lon_{0.25,0.5,1,2}m, recall_yaw_{1,2,4}deg.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

/// "5:30,10:30" -> {5 m, 30 deg}, {10 m, 30 deg}. Throws ConfigError.
std::vector<PerturbBounds> parse_bounds(const std::string& text);

// Numerical self-checks -----------------------------------------------------

using SatprojJacobianFn =
    std::function<Mat23(const Vec3& point_cam, const Pose3& pose, const PoseContext& ctx, const SatelliteGeoref& georef)>;
using ResidualJacobianFn = std::function<Eigen::MatrixXd(const AlignmentProblem& problem, const Pose3& pose, int level)>;

struct NumericsOptions {
  std::uint64_t seed = 0;
  int projection_draws = 100;
  int bilinear_draws = 1000;
  int jacobian_scenes = 5;
  int lm_problems = 200;
  // Implementations under test; the defaults are the library's own.
  SatprojJacobianFn satproj_jacobian = d_satproj_d_pose;
  ResidualJacobianFn residual_jacobian = [](const AlignmentProblem& p, const Pose3& pose, int level) {
    return build_jacobian(p, pose, level);
  };
};

struct NumericCheck {
  std::string name;
  double max_error = 0;
  double tolerance = 0;
  int samples = 0;
  bool passed = true;
  std::string detail;  // names the offending pose column on failure
};

struct NumericsReport {
  std::vector<NumericCheck> checks;

  bool passed() const;
  nlohmann::json to_json() const;
};

NumericsReport check_numerics(const NumericsOptions& options = {});

}  // namespace cvloc
