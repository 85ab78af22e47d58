#pragma once

// Damped, weighted Gauss-Newton (Levenberg-Marquardt) refinement of a 3-DoF
// pose against a satellite feature pyramid, run coarse to fine.

#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "cvloc/features.hpp"
#include "cvloc/problem.hpp"
#include "cvloc/robust_cost.hpp"

namespace cvloc {

struct LMConfig {
  int max_iters_per_level = 20;
  double stop_tol_m = 0.01;
  double stop_tol_deg = 0.01;
  double lambda_init = 0.1;
  double lambda_up = 10.0;
  double lambda_down = 0.1;

  void validate() const;
};

struct IterationRecord {
  int level = 0;
  int iteration = 0;
  Pose3 pose;        // pose after the accept/reject decision
  double cost = 0;   // weighted cost at `pose`
  double candidate_cost = 0;
  double lambda = 0;  // damping used for this step
  bool accepted = false;
  Eigen::Vector3d delta = Eigen::Vector3d::Zero();  // lateral m, longitudinal m, yaw rad
  int valid_points = 0;
};

struct LevelSummary {
  int level = 0;
  int iterations = 0;
  bool converged = false;
  double final_cost = 0;
};

struct OptimReport {
  std::vector<IterationRecord> trace;
  std::vector<LevelSummary> levels;  // in the order they were solved
  Pose3 initial_pose;
  Pose3 final_pose;
  bool converged = false;
  int iterations_total = 0;
};

/// All points masked at some iterate. Carries the report up to that point.
class DegenerateProblem : public std::runtime_error {
 public:
  DegenerateProblem(const std::string& what, OptimReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const OptimReport& report() const { return report_; }

 private:
  OptimReport report_;
};

/// Damped normal matrix could not be factorized.
class SingularSystem : public std::runtime_error {
 public:
  SingularSystem(const std::string& what, const Eigen::Matrix3d& hessian)
      : std::runtime_error(what), hessian_(hessian) {}
  const Eigen::Matrix3d& hessian() const { return hessian_; }

 private:
  Eigen::Matrix3d hessian_;
};

/// Per-level view of a problem: caches ground-side lookups, evaluates
/// residuals, weights and Jacobians for a pose.
class LevelAlignment {
 public:
  LevelAlignment(const AlignmentProblem& problem, int level);

  int level() const { return level_; }
  int channels() const { return channels_; }
  std::size_t point_count() const { return points_.size(); }
  const SatelliteGeoref& georef() const { return georef_; }

  /// Satellite pixel coordinates of every point at this level.
  std::vector<Vec2> satellite_uv(const Pose3& pose) const;
  /// Residuals, weights and validity for `pose`.
  SparseAlignment align(const Pose3& pose) const;
  /// (N c) x 3 Jacobian of the stacked residual; masked points give zero rows.
  Eigen::MatrixXd jacobian(const Pose3& pose) const;

 private:
  const AlignmentProblem* problem_;
  int level_;
  int channels_;
  SatelliteGeoref georef_;
  std::span<const Vec3> points_;
  const FeatureMap* sat_features_;
  const AttentionMap* sat_attention_;
  // Ground side does not depend on the pose.
  std::vector<std::uint8_t> ground_valid_;
  std::vector<Vec2> ground_uv_;
  Residuals ground_features_;
  std::vector<double> ground_attention_;
};

/// Sum of w_i rho(|r_i|^2) over valid points.
double weighted_cost(const SparseAlignment& alignment, const RobustCost& cost);

/// Jacobian of the stacked residual at `level` (default finest).
Eigen::MatrixXd build_jacobian(const AlignmentProblem& problem, const Pose3& pose, int level = 0);

/// Diagonal of W: w_i rho'(|r_i|^2) repeated over the c rows of point i.
Eigen::VectorXd build_weight_matrix(std::span<const double> weights, const Residuals& residuals,
                                    const RobustCost& cost);

/// Row-major flattening of an N x c residual matrix.
Eigen::VectorXd stack_residuals(const Residuals& residuals);

inline constexpr double kHessianDiagFloor = 1e-12;

/// delta = -(H + lambda diag(H))^-1 J^T W r with H = J^T W J, diag(H)
/// floored at kHessianDiagFloor before damping.
Eigen::Vector3d lm_step(const Eigen::MatrixXd& J, const Eigen::VectorXd& W_diag, const Eigen::VectorXd& residuals,
                        double lambda);

OptimReport refine_pose(const AlignmentProblem& problem, const Pose3& init, const LMConfig& cfg = {},
                        const RobustCost& cost = {});

}  // namespace cvloc
