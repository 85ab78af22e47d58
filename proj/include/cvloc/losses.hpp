#pragma once

// Objective functions of the two branches, evaluated (never differentiated).

#include "cvloc/problem.hpp"
#include "cvloc/robust_cost.hpp"

namespace cvloc {

struct LossConfig {
  double alpha = 10.0;    // triplet sharpness
  double beta_lo = 10.0;  // gate: triplet term off below this re-projection error
  double beta_hi = 50.0;  // gate: upper bound of the triplet weight
  int dis_level = 0;      // pyramid level for the weighted feature distance

  void validate() const;
};

/// Sum over all points of the squared satellite-pixel displacement (finest
/// level) between two poses. No visibility mask.
double reprojection_error(const Pose3& a, const Pose3& b, const PointSet& points, const PoseContext& ctx,
                          const SatelliteGeoref& georef);

/// Dis(P) = sum_i w_i rho(|r_i|^2) over valid points at `level`.
/// Throws DomainError when no point is valid.
double weighted_distance(const AlignmentProblem& problem, const Pose3& pose, const RobustCost& cost, int level = 0);

/// log(1 + exp(alpha (1 - dis_init / dis_gt))), overflow safe.
double triplet_loss(double dis_init, double dis_gt, double alpha);

/// Clamp gate: 0 below beta_lo, identity on [beta_lo, beta_hi], beta_hi above.
double pab_weight(double l_init, const LossConfig& cfg = {});

struct LossBreakdown {
  double total = 0;
  double rprb = 0;      // re-projection error of the refined pose
  double rprb_init = 0; // re-projection error of the initial pose (gate input)
  double beta = 0;
  double pab = 0;       // triplet loss; 0 and not evaluated when beta == 0
  bool pab_evaluated = false;
  double dis_init = 0;
  double dis_gt = 0;
};

LossBreakdown total_loss(const AlignmentProblem& problem, const Pose3& pose_pre, const Pose3& pose_init,
                         const Pose3& pose_gt, const RobustCost& cost, const LossConfig& cfg = {});

}  // namespace cvloc
