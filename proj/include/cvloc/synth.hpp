#pragma once

// Synthetic alignment problems with a known optimum at the ground-truth pose.

#include <cstdint>
#include <string>
#include <vector>

#include "cvloc/metrics.hpp"
#include "cvloc/problem.hpp"
#include "cvloc/robust_cost.hpp"
#include "cvloc/solver.hpp"

namespace cvloc {

enum class AttentionMode { kUniform, kRandomSmooth };

AttentionMode parse_attention_mode(const std::string& name);
std::string to_string(AttentionMode mode);

struct SynthConfig {
  std::uint64_t seed = 0;
  int sat_size = 512;             // px, square
  double gamma = 0.2;             // m/px at level 0
  int levels = 3;
  int channels = 8;
  int point_count = 5000;
  double depth_min = 4.0;         // m
  double depth_max = 30.0;        // m
  double feature_smoothness = 8.0;  // Gaussian sigma, px of each level
  AttentionMode attention_mode = AttentionMode::kUniform;
  Pose3 gt_pose;
  // Ground camera.
  int ground_width = 1280;
  int ground_height = 512;
  double focal_px = 720.0;
  double camera_height = 1.65;    // m, fixed GPS height

  void validate() const;
};

AlignmentProblem generate_scene(const SynthConfig& cfg);

struct PerturbBounds {
  double max_shift = 10.0;  // m
  double max_yaw = 30.0;    // deg

  void validate() const;
};

/// gt retracted by independent uniform offsets on [-max_shift, max_shift]
/// (vehicle-frame lateral and longitudinal) and [-max_yaw, max_yaw] (yaw).
Pose3 sample_initial_pose(const Pose3& gt, const PerturbBounds& bounds, std::uint64_t seed);

/// Seed of the initial pose of trial `trial` for a run seeded with `seed`.
std::uint64_t trial_seed(std::uint64_t seed, int trial);

struct SweepRow {
  PerturbBounds bounds;
  MetricsSummary summary;
};

std::vector<SweepRow> perturbation_sweep(const AlignmentProblem& problem, const std::vector<PerturbBounds>& grid,
                                         int trials_per_bound, std::uint64_t seed, const LMConfig& lm = {},
                                         const RobustCost& cost = {}, int workers = 1);

}  // namespace cvloc
