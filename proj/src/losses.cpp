#include "cvloc/losses.hpp"

#include <cmath>

#include "cvloc/errors.hpp"
#include "cvloc/solver.hpp"

namespace cvloc {

void LossConfig::validate() const {
  if (!(alpha > 0.0)) throw ContractError("LossConfig: alpha must be > 0");
  if (!(beta_lo >= 0.0 && beta_lo < beta_hi)) throw ContractError("LossConfig: need 0 <= beta_lo < beta_hi");
  if (dis_level < 0) throw ContractError("LossConfig: dis_level must be >= 0");
}

double reprojection_error(const Pose3& a, const Pose3& b, const PointSet& points, const PoseContext& ctx,
                          const SatelliteGeoref& georef) {
  const auto ua = project_satellite(transform_points(points.points, pose_to_transform(a, ctx)), georef);
  const auto ub = project_satellite(transform_points(points.points, pose_to_transform(b, ctx)), georef);
  double sum = 0.0;
  for (std::size_t i = 0; i < ua.size(); ++i) sum += (ua[i] - ub[i]).squaredNorm();
  return sum;
}

double weighted_distance(const AlignmentProblem& problem, const Pose3& pose, const RobustCost& cost, int level) {
  const SparseAlignment a = LevelAlignment(problem, level).align(pose);
  bool any = false;
  for (auto v : a.valid) any = any || v;
  if (!any) throw DomainError("weighted_distance: no valid points");
  return weighted_cost(a, cost);
}

double triplet_loss(double dis_init, double dis_gt, double alpha) {
  if (!(dis_gt > 0.0)) throw DomainError("triplet_loss: Dis(P_gt) must be > 0");
  if (!(dis_init >= 0.0)) throw DomainError("triplet_loss: Dis(P_init) must be >= 0");
  const double x = alpha * (1.0 - dis_init / dis_gt);
  // softplus(x) = max(x, 0) + log1p(exp(-|x|))
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double pab_weight(double l_init, const LossConfig& cfg) {
  if (!(l_init >= 0.0)) throw ContractError("pab_weight: l_init must be >= 0");
  if (l_init < cfg.beta_lo) return 0.0;
  if (l_init > cfg.beta_hi) return cfg.beta_hi;
  return l_init;
}

LossBreakdown total_loss(const AlignmentProblem& problem, const Pose3& pose_pre, const Pose3& pose_init,
                         const Pose3& pose_gt, const RobustCost& cost, const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown out;
  out.rprb = reprojection_error(pose_pre, pose_gt, problem.points, problem.context, problem.georef);
  out.rprb_init = reprojection_error(pose_init, pose_gt, problem.points, problem.context, problem.georef);
  out.beta = pab_weight(out.rprb_init, cfg);
  if (out.beta > 0.0) {
    out.dis_init = weighted_distance(problem, pose_init, cost, cfg.dis_level);
    out.dis_gt = weighted_distance(problem, pose_gt, cost, cfg.dis_level);
    out.pab = triplet_loss(out.dis_init, out.dis_gt, cfg.alpha);
    out.pab_evaluated = true;
  }
  out.total = out.rprb + out.beta * out.pab;
  return out;
}

}  // namespace cvloc
