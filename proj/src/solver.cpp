#include "cvloc/solver.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>

#include "cvloc/errors.hpp"

namespace cvloc {

void LMConfig::validate() const {
  if (max_iters_per_level < 1) throw ContractError("LMConfig: max_iters_per_level must be >= 1");
  if (!(stop_tol_m > 0.0) || !(stop_tol_deg > 0.0)) throw ContractError("LMConfig: stop tolerances must be > 0");
  if (!(lambda_init > 0.0)) throw ContractError("LMConfig: lambda_init must be > 0");
  if (!(lambda_up > 1.0)) throw ContractError("LMConfig: lambda_up must be > 1");
  if (!(lambda_down > 0.0 && lambda_down < 1.0)) throw ContractError("LMConfig: lambda_down must be in (0, 1)");
}

LevelAlignment::LevelAlignment(const AlignmentProblem& problem, int level)
    : problem_(&problem), level_(level), points_(problem.points.points) {
  if (level < 0 || level >= problem.level_count() || level >= problem.ground.level_count()) {
    throw ContractError("LevelAlignment: level " + std::to_string(level) + " out of range");
  }
  const auto& sat = problem.satellite.levels[level];
  const auto& grd = problem.ground.levels[level];
  if (sat.features.channels != grd.features.channels) {
    throw ContractError("LevelAlignment: channel mismatch at level " + std::to_string(level));
  }
  channels_ = sat.features.channels;
  georef_ = problem.georef.at_level(level);
  sat_features_ = &sat.features;
  sat_attention_ = &sat.attention;

  const GroundProjection proj = project_ground(points_, problem.intrinsics);
  const double s = std::ldexp(1.0, -level);
  const std::size_t n = points_.size();
  ground_uv_.resize(n);
  ground_valid_.assign(n, 0);
  ground_features_ = Residuals::Zero(static_cast<Eigen::Index>(n), channels_);
  ground_attention_.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ground_uv_[i] = proj.uv[i] * s;
    if (!proj.visible[i]) continue;
    if (!bilinear_sample(grd.features, ground_uv_[i].x(), ground_uv_[i].y(),
                         ground_features_.row(static_cast<Eigen::Index>(i)).data())) {
      continue;
    }
    const auto a = bilinear_sample(grd.attention, ground_uv_[i].x(), ground_uv_[i].y());
    ground_attention_[i] = a.value_or(0.0);
    ground_valid_[i] = 1;
  }
}

std::vector<Vec2> LevelAlignment::satellite_uv(const Pose3& pose) const {
  return project_satellite(transform_points(points_, pose_to_transform(pose, problem_->context)), georef_);
}

SparseAlignment LevelAlignment::align(const Pose3& pose) const {
  const std::size_t n = points_.size();
  const std::vector<Vec2> uv = satellite_uv(pose);
  SparseAlignment out;
  out.residuals = Residuals::Zero(static_cast<Eigen::Index>(n), channels_);
  out.weights.assign(n, 0.0);
  out.valid.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!ground_valid_[i]) continue;
    const auto row = static_cast<Eigen::Index>(i);
    if (!bilinear_sample(*sat_features_, uv[i].x(), uv[i].y(), out.residuals.row(row).data())) continue;
    out.residuals.row(row) -= ground_features_.row(row);
    const auto a = bilinear_sample(*sat_attention_, uv[i].x(), uv[i].y());
    out.weights[i] = a.value_or(0.0) * ground_attention_[i];
    out.valid[i] = 1;
  }
  return out;
}

Eigen::MatrixXd LevelAlignment::jacobian(const Pose3& pose) const {
  const std::size_t n = points_.size();
  const int c = channels_;
  const RigidTransform T = pose_to_transform(pose, problem_->context);
  const double inv_gamma = 1.0 / georef_.gamma;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * c, 3);
  std::vector<double> value(c);
  Eigen::Matrix<double, Eigen::Dynamic, 2> grad(c, 2);
  Eigen::VectorXd gu(c), gv(c);
  for (std::size_t i = 0; i < n; ++i) {
    if (!ground_valid_[i]) continue;
    const Vec3 xs = T.apply(points_[i]);
    const double u = xs.x() * inv_gamma + georef_.center_px;
    const double v = xs.y() * inv_gamma + georef_.center_px;
    if (!bilinear_sample(*sat_features_, u, v, value.data(), gu.data(), gv.data())) continue;
    grad.col(0) = gu;
    grad.col(1) = gv;
    J.block(static_cast<Eigen::Index>(i) * c, 0, c, 3) = grad * d_satproj_d_pose_sat(xs, pose, georef_);
  }
  return J;
}

double weighted_cost(const SparseAlignment& alignment, const RobustCost& cost) {
  double total = 0.0;
  for (std::size_t i = 0; i < alignment.valid.size(); ++i) {
    if (!alignment.valid[i] || alignment.weights[i] == 0.0) continue;
    const double s = alignment.residuals.row(static_cast<Eigen::Index>(i)).squaredNorm();
    total += alignment.weights[i] * robust_eval(cost, s).rho;
  }
  return total;
}

Eigen::MatrixXd build_jacobian(const AlignmentProblem& problem, const Pose3& pose, int level) {
  return LevelAlignment(problem, level).jacobian(pose);
}

Eigen::VectorXd build_weight_matrix(std::span<const double> weights, const Residuals& residuals,
                                    const RobustCost& cost) {
  const auto n = residuals.rows();
  const auto c = residuals.cols();
  if (static_cast<Eigen::Index>(weights.size()) != n) throw ContractError("build_weight_matrix: length mismatch");
  Eigen::VectorXd W = Eigen::VectorXd::Zero(n * c);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    W.segment(i * c, c).setConstant(weights[i] * robust_eval(cost, residuals.row(i).squaredNorm()).drho);
  }
  return W;
}

Eigen::VectorXd stack_residuals(const Residuals& residuals) {
  return Eigen::Map<const Eigen::VectorXd>(residuals.data(), residuals.size());
}

Eigen::Vector3d lm_step(const Eigen::MatrixXd& J, const Eigen::VectorXd& W_diag, const Eigen::VectorXd& residuals,
                        double lambda) {
  if (J.cols() != 3 || J.rows() != W_diag.size() || J.rows() != residuals.size()) {
    throw ContractError("lm_step: shape mismatch");
  }
  if (!(lambda >= 0.0)) throw ContractError("lm_step: lambda must be >= 0");
  const Eigen::MatrixXd WJ = W_diag.asDiagonal() * J;
  const Eigen::Matrix3d H = J.transpose() * WJ;
  const Eigen::Vector3d g = WJ.transpose() * residuals;
  Eigen::Matrix3d damped = H;
  for (int k = 0; k < 3; ++k) damped(k, k) += lambda * std::max(H(k, k), kHessianDiagFloor);
  const Eigen::LLT<Eigen::Matrix3d> llt(damped);
  if (llt.info() != Eigen::Success) throw SingularSystem("lm_step: Cholesky factorization failed", H);
  const Eigen::Vector3d delta = -llt.solve(g);
  if (!delta.allFinite()) throw SingularSystem("lm_step: non-finite step", H);
  return delta;
}

namespace {

int count_valid(const SparseAlignment& a) {
  int n = 0;
  for (auto v : a.valid) n += v;
  return n;
}

}  // namespace

OptimReport refine_pose(const AlignmentProblem& problem, const Pose3& init, const LMConfig& cfg,
                        const RobustCost& cost) {
  cfg.validate();
  cost.validate();
  if (problem.satellite.level_count() != problem.ground.level_count()) {
    throw ContractError("refine_pose: satellite and ground pyramids have different level counts");
  }
  OptimReport report;
  report.initial_pose = init;
  Pose3 pose = init;
  pose.yaw = wrap_angle(pose.yaw);

  auto fail = [&](int level) {
    report.final_pose = pose;
    report.converged = false;
    throw DegenerateProblem("refine_pose: no valid points at level " + std::to_string(level), report);
  };

  for (int level = problem.level_count() - 1; level >= 0; --level) {
    const LevelAlignment view(problem, level);
    SparseAlignment current = view.align(pose);
    if (count_valid(current) == 0) fail(level);
    double current_cost = weighted_cost(current, cost);
    double lambda = cfg.lambda_init;
    LevelSummary summary;
    summary.level = level;

    for (int it = 0; it < cfg.max_iters_per_level; ++it) {
      const Eigen::MatrixXd J = view.jacobian(pose);
      const Eigen::VectorXd W = build_weight_matrix(current.weights, current.residuals, cost);
      const Eigen::VectorXd r = stack_residuals(current.residuals);
      const Eigen::Vector3d delta = lm_step(J, W, r, lambda);
      const Eigen::Vector3d hdiag = (J.transpose() * W.asDiagonal() * J).diagonal();
      const bool informative = (hdiag.array() > kHessianDiagFloor).all();
      const bool small = std::abs(delta.x()) < cfg.stop_tol_m && std::abs(delta.y()) < cfg.stop_tol_m &&
                         std::abs(rad2deg(delta.z())) < cfg.stop_tol_deg;

      IterationRecord rec;
      rec.level = level;
      rec.iteration = it;
      rec.lambda = lambda;
      rec.delta = delta;

      const Pose3 candidate = pose.retract(delta);
      SparseAlignment next = view.align(candidate);
      const int next_valid = count_valid(next);
      const double next_cost = next_valid > 0 ? weighted_cost(next, cost) : std::numeric_limits<double>::infinity();
      rec.candidate_cost = next_cost;
      if (next_cost < current_cost) {
        pose = candidate;
        current = std::move(next);
        current_cost = next_cost;
        lambda *= cfg.lambda_down;
        rec.accepted = true;
      } else {
        lambda *= cfg.lambda_up;
      }
      rec.pose = pose;
      rec.cost = current_cost;
      rec.valid_points = count_valid(current);
      report.trace.push_back(rec);
      ++summary.iterations;
      ++report.iterations_total;
      if (small) {
        summary.converged = informative;
        break;
      }
    }
    summary.final_cost = current_cost;
    report.levels.push_back(summary);
  }

  report.final_pose = pose;
  report.converged = !report.levels.empty() && report.levels.back().converged;
  return report;
}

}  // namespace cvloc
