#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cvloc/problem.hpp"
#include "cvloc/robust_cost.hpp"
#include "cvloc/solver.hpp"

namespace cvloc {

/// Absolute errors; translation expressed in the ground-truth vehicle frame.
struct PoseError {
  double lateral = 0;       // m
  double longitudinal = 0;  // m
  double yaw = 0;           // deg, in [0, 180]
};

PoseError pose_error(const Pose3& est, const Pose3& gt);

inline constexpr std::array<double, 4> kShiftThresholds = {0.25, 0.5, 1.0, 2.0};
inline constexpr std::array<double, 3> kYawThresholds = {1.0, 2.0, 4.0};

struct MetricsSummary {
  double median_lateral = 0;
  double median_longitudinal = 0;
  double median_yaw = 0;
  std::array<double, 4> recall_lateral{};       // percent, per kShiftThresholds
  std::array<double, 4> recall_longitudinal{};
  std::array<double, 3> recall_yaw{};           // percent, per kYawThresholds
  int trial_count = 0;                           // completed + failed
  int failure_count = 0;
};

/// Medians use the lower middle element for even counts. Recalls are over
/// errors.size() + failures trials; failed trials count as misses.
MetricsSummary summarize(std::span<const PoseError> errors, int failures = 0);

struct TrialResult {
  int index = 0;
  Pose3 init;
  Pose3 final_pose;
  PoseError error;
  bool ok = false;
  bool converged = false;
  int iterations = 0;
  std::string failure;
};

/// Refines every initial pose; results are ordered by index regardless of
/// the number of workers.
std::vector<TrialResult> run_trials(const AlignmentProblem& problem, std::span<const Pose3> inits,
                                    const LMConfig& lm, const RobustCost& cost, int workers);

MetricsSummary summarize(std::span<const TrialResult> trials);

}  // namespace cvloc
