#include "cvloc/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "cvloc/errors.hpp"

namespace cvloc {

PoseError pose_error(const Pose3& est, const Pose3& gt) {
  const Vec2 d = est.position() - gt.position();
  PoseError e;
  e.lateral = std::abs(d.dot(gt.lateral_axis()));
  e.longitudinal = std::abs(d.dot(gt.heading()));
  e.yaw = std::abs(rad2deg(wrap_angle(est.yaw - gt.yaw)));
  return e;
}

namespace {

double lower_median(std::vector<double> v) {
  const std::size_t k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

template <std::size_t K>
std::array<double, K> recalls(const std::vector<double>& v, const std::array<double, K>& thresholds, int total) {
  std::array<double, K> out{};
  for (std::size_t t = 0; t < K; ++t) {
    const auto hits = std::count_if(v.begin(), v.end(), [&](double e) { return e <= thresholds[t]; });
    out[t] = 100.0 * static_cast<double>(hits) / total;
  }
  return out;
}

}  // namespace

MetricsSummary summarize(std::span<const PoseError> errors, int failures) {
  if (failures < 0) throw ContractError("summarize: negative failure count");
  const int total = static_cast<int>(errors.size()) + failures;
  if (total == 0) throw ContractError("summarize: no trials");
  MetricsSummary s;
  s.trial_count = total;
  s.failure_count = failures;
  std::vector<double> lat, lon, yaw;
  for (const auto& e : errors) {
    lat.push_back(e.lateral);
    lon.push_back(e.longitudinal);
    yaw.push_back(e.yaw);
  }
  if (!errors.empty()) {
    s.median_lateral = lower_median(lat);
    s.median_longitudinal = lower_median(lon);
    s.median_yaw = lower_median(yaw);
  } else {
    s.median_lateral = s.median_longitudinal = s.median_yaw = std::nan("");
  }
  s.recall_lateral = recalls(lat, kShiftThresholds, total);
  s.recall_longitudinal = recalls(lon, kShiftThresholds, total);
  s.recall_yaw = recalls(yaw, kYawThresholds, total);
  return s;
}

MetricsSummary summarize(std::span<const TrialResult> trials) {
  std::vector<PoseError> errors;
  int failures = 0;
  for (const auto& t : trials) {
    if (t.ok) {
      errors.push_back(t.error);
    } else {
      ++failures;
    }
  }
  return summarize(errors, failures);
}

std::vector<TrialResult> run_trials(const AlignmentProblem& problem, std::span<const Pose3> inits,
                                    const LMConfig& lm, const RobustCost& cost, int workers) {
  std::vector<TrialResult> results(inits.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < inits.size(); i = next++) {
      TrialResult& r = results[i];
      r.index = static_cast<int>(i);
      r.init = inits[i];
      try {
        const OptimReport rep = refine_pose(problem, inits[i], lm, cost);
        r.final_pose = rep.final_pose;
        r.error = pose_error(rep.final_pose, problem.gt_pose);
        r.converged = rep.converged;
        r.iterations = rep.iterations_total;
        r.ok = true;
      } catch (const DegenerateProblem& e) {
        r.final_pose = e.report().final_pose;
        r.iterations = e.report().iterations_total;
        r.failure = e.what();
      } catch (const std::exception& e) {
        r.final_pose = inits[i];
        r.failure = e.what();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(inits.size())));
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(work);
  }
  return results;
}

}  // namespace cvloc
