#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "cvloc/errors.hpp"
#include "cvloc/metrics.hpp"
#include "cvloc/robust_cost.hpp"
#include "cvloc/solver.hpp"
#include "cvloc/synth.hpp"
#include "support.hpp"

using namespace cvloc;
using doctest::Approx;

namespace {

const AlignmentProblem& small_scene() {
  static const AlignmentProblem p = generate_scene(cvloc::testing::small_config(10));
  return p;
}

// Periodically shifts every satellite level by (k, m) level-0 pixels.
FeaturePyramid roll(const FeaturePyramid& pyr, int k, int m) {
  FeaturePyramid out = pyr;
  for (int l = 0; l < pyr.level_count(); ++l) {
    const auto& src = pyr.levels[l];
    auto& dst = out.levels[l];
    const int w = src.features.width, h = src.features.height, c = src.features.channels;
    const int kl = k >> l, ml = m >> l;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int sx = ((x - kl) % w + w) % w, sy = ((y - ml) % h + h) % h;
        std::copy_n(src.features.pixel(sx, sy), c, dst.features.pixel(x, y));
        dst.attention.data[std::size_t(y) * w + x] = src.attention.at(sx, sy);
      }
  }
  return out;
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("robust_eval examples") {
  const auto sq = robust_eval(RobustCost::squared(), 4.0);
  CHECK(sq.rho == 4.0);
  CHECK(sq.drho == 1.0);
  const auto hb = robust_eval(RobustCost::huber(1.0), 4.0);
  CHECK(hb.rho == Approx(3.0));
  CHECK(hb.drho == Approx(0.5));
  const auto gm = robust_eval(RobustCost::geman_mcclure(1.0), 1.0);
  CHECK(gm.rho == Approx(0.5));
  CHECK(gm.drho == Approx(0.25));
  for (const auto& c : {RobustCost::squared(), RobustCost::huber(0.5), RobustCost::geman_mcclure(2.0)}) {
    CHECK(robust_eval(c, 0.0).rho == 0.0);
    CHECK_THROWS_AS(robust_eval(c, -1e-3), ContractError);
  }
  // Default: rho' halves at |r| = 1.
  CHECK(robust_eval(RobustCost{}, 1.0).drho == Approx(0.5));
}

TEST_CASE("robust costs are non-decreasing with non-negative derivative") {
  for (const auto& c : {RobustCost::squared(), RobustCost::huber(0.5), RobustCost::huber(2.0),
                        RobustCost::geman_mcclure(0.3), RobustCost::geman_mcclure(3.0)}) {
    double prev = 0.0;
    for (double s = 0.0; s < 50.0; s += 0.01) {
      const auto v = robust_eval(c, s);
      CHECK(v.rho >= prev);
      CHECK(v.drho >= 0.0);
      // derivative agrees with the cost away from the Huber knee
      if (s > 0.02 && !(c.kind == RobustCost::Kind::kHuber && std::abs(s - c.param * c.param) < 0.02)) {
        const double fd = (robust_eval(c, s + 1e-6).rho - robust_eval(c, s - 1e-6).rho) / 2e-6;
        CHECK(std::abs(fd - v.drho) < 1e-6 * std::max(1.0, v.drho));
      }
      prev = v.rho;
    }
  }
}

TEST_CASE("robust cost parsing and validation") {
  CHECK(parse_robust_kind("huber") == RobustCost::Kind::kHuber);
  CHECK(parse_robust_kind("geman_mcclure") == RobustCost::Kind::kGemanMcClure);
  CHECK(parse_robust_kind("squared") == RobustCost::Kind::kSquared);
  CHECK_THROWS(parse_robust_kind("cauchy"));
  CHECK_THROWS_AS(RobustCost::huber(0.0).validate(), ContractError);
  CHECK_THROWS_AS(RobustCost::geman_mcclure(-1).validate(), ContractError);
}

TEST_CASE("LM config validation") {
  LMConfig c;
  CHECK_NOTHROW(c.validate());
  for (auto mutate : std::vector<void (*)(LMConfig&)>{
           [](LMConfig& x) { x.max_iters_per_level = 0; }, [](LMConfig& x) { x.stop_tol_m = 0; },
           [](LMConfig& x) { x.stop_tol_deg = -1; }, [](LMConfig& x) { x.lambda_init = 0; },
           [](LMConfig& x) { x.lambda_up = 1; }, [](LMConfig& x) { x.lambda_down = 1; },
           [](LMConfig& x) { x.lambda_down = 0; }}) {
    LMConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), ContractError);
  }
}

TEST_CASE("build_weight_matrix examples") {
  Residuals r(3, 2);
  r << 1, 1, 2, 0, 0, 0;
  const std::vector<double> ones = {1, 1, 1};
  CHECK(build_weight_matrix(ones, r, RobustCost::squared()).isApprox(Eigen::VectorXd::Ones(6)));
  const std::vector<double> w = {0.4, 1.0, 0.0};
  const Eigen::VectorXd sq = build_weight_matrix(w, r, RobustCost::squared());
  CHECK(sq(0) == Approx(0.4));
  CHECK(sq(1) == Approx(0.4));
  CHECK(sq(4) == 0.0);  // masked point
  const Eigen::VectorXd hb = build_weight_matrix(ones, r, RobustCost::huber(1.0));
  CHECK(hb(2) == Approx(0.5));  // |r|^2 = 4
  CHECK(hb(3) == Approx(0.5));
  CHECK((hb.array() >= 0).all());
}

TEST_CASE("lm_step basics") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> N;
  Eigen::MatrixXd J(30, 3);
  for (int i = 0; i < 30; ++i)
    for (int k = 0; k < 3; ++k) J(i, k) = N(rng);
  const Eigen::VectorXd W = Eigen::VectorXd::Constant(30, 0.7);
  CHECK(lm_step(J, W, Eigen::VectorXd::Zero(30), 0.1).isZero());
  Eigen::VectorXd r(30);
  for (int i = 0; i < 30; ++i) r(i) = N(rng);
  // Linear residuals r(d) = J d + r: the undamped step hits the minimizer.
  const Eigen::Vector3d d = lm_step(J, W, r, 0.0);
  const Eigen::Vector3d oracle = -J.colPivHouseholderQr().solve(r);
  CHECK((d - oracle).norm() < 1e-10);
  double prev = d.norm();
  for (double lambda = 1e-3; lambda < 1e6; lambda *= 10) {
    const double n = lm_step(J, W, r, lambda).norm();
    CHECK(n <= prev * (1 + 1e-12));  // isotropic W and J: diag(H) ~ const
    prev = n;
  }
  CHECK(prev < 1e-4 * d.norm());
  CHECK_THROWS_AS(lm_step(J, W, r, -1.0), ContractError);
  CHECK_THROWS_AS(lm_step(J.topRows(5), W, r, 0.1), ContractError);
}

TEST_CASE("lm_step reports a singular system") {
  const Eigen::MatrixXd J = Eigen::MatrixXd::Zero(6, 3);
  const Eigen::VectorXd W = Eigen::VectorXd::Ones(6), r = Eigen::VectorXd::Ones(6);
  CHECK_THROWS_AS(lm_step(J, W, r, 0.0), SingularSystem);
  // The diagonal floor keeps damped systems solvable.
  CHECK(lm_step(J, W, r, 0.1).isZero());
}

TEST_CASE("damped systems factorize on randomized scenes") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int s = 0; s < 4; ++s) {
    const AlignmentProblem p = generate_scene(cvloc::testing::small_config(100 + s));
    for (int q = 0; q < 5; ++q) {
      const Pose3 pose = p.gt_pose.retract({8 * U(rng), 8 * U(rng), deg2rad(25 * U(rng))});
      for (int level = 0; level < p.level_count(); ++level) {
        const LevelAlignment la(p, level);
        const SparseAlignment a = la.align(pose);
        const Eigen::VectorXd W = build_weight_matrix(a.weights, a.residuals, RobustCost{});
        const Eigen::MatrixXd J = la.jacobian(pose);
        for (double lambda : {1e-8, 1e-3, 0.1, 10.0, 1e4}) {
          CHECK_NOTHROW(lm_step(J, W, stack_residuals(a.residuals), lambda));
        }
      }
    }
  }
}

TEST_CASE("build_jacobian: constant satellite map gives zero") {
  AlignmentProblem p = small_scene();
  for (auto& lvl : p.satellite.levels) {
    for (int y = 0; y < lvl.features.height; ++y)
      for (int x = 0; x < lvl.features.width; ++x) {
        float* px = lvl.features.pixel(x, y);
        std::fill(px, px + lvl.features.channels, 0.0f);
        px[0] = 1.0f;
      }
  }
  CHECK(build_jacobian(p, p.gt_pose.retract({1, 1, 0.1})).isZero());
}

TEST_CASE("build_jacobian: scaling satellite features scales J") {
  AlignmentProblem p = small_scene();
  const Pose3 pose = p.gt_pose.retract({0.7, -0.3, 0.05});
  const Eigen::MatrixXd J = build_jacobian(p, pose);
  for (auto& lvl : p.satellite.levels) {
    for (float& v : lvl.features.data) v *= 2.0f;
    lvl.features.normalized = false;
  }
  CHECK((build_jacobian(p, pose) - 2.0 * J).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("build_jacobian matches central differences on cell interiors") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1, 1);
  const double h = 1e-6;
  for (int s = 0; s < 3; ++s) {
    auto cfg = cvloc::testing::small_config(200 + s);
    cfg.attention_mode = AttentionMode::kRandomSmooth;
    const AlignmentProblem p = generate_scene(cfg);
    for (int level = 0; level < p.level_count(); ++level) {
      const Pose3 pose = p.gt_pose.retract({3 * U(rng), 3 * U(rng), deg2rad(10 * U(rng))});
      const LevelAlignment la(p, level);
      const Eigen::MatrixXd J = build_jacobian(p, pose, level);
      CHECK(J.rows() == static_cast<Eigen::Index>(p.points.size()) * la.channels());
      const SparseAlignment a0 = la.align(pose);
      for (int k = 0; k < 3; ++k) {
        Vec3 d = Vec3::Zero();
        d[k] = h;
        const Pose3 pp = pose.retract(d), pm = pose.retract(-d);
        const SparseAlignment ap = la.align(pp), am = la.align(pm);
        const auto up = la.satellite_uv(pp), um = la.satellite_uv(pm);
        double num = 0, den = 0;
        for (std::size_t i = 0; i < p.points.size(); ++i) {
          if (!a0.valid[i]) {
            CHECK(J.middleRows(Eigen::Index(i) * la.channels(), la.channels()).isZero());
            continue;
          }
          if (!ap.valid[i] || !am.valid[i]) continue;
          if (std::floor(up[i].x()) != std::floor(um[i].x()) || std::floor(up[i].y()) != std::floor(um[i].y())) continue;
          for (int j = 0; j < la.channels(); ++j) {
            const double fd = (ap.residuals(i, j) - am.residuals(i, j)) / (2 * h);
            const double e = J(Eigen::Index(i) * la.channels() + j, k) - fd;
            num += e * e;
            den += fd * fd;
          }
        }
        REQUIRE(den > 0);
        CHECK(std::sqrt(num / den) < 1e-3);
      }
    }
  }
}

TEST_CASE("refine_pose from the ground truth") {
  const AlignmentProblem& p = small_scene();
  const OptimReport r = refine_pose(p, p.gt_pose);
  CHECK(r.converged);
  for (const auto& l : r.levels) CHECK(l.iterations <= 2);
  const PoseError e = pose_error(r.final_pose, p.gt_pose);
  CHECK(e.lateral < 0.01);
  CHECK(e.longitudinal < 0.01);
  CHECK(e.yaw < 0.01);
}

TEST_CASE("refine_pose: trace bookkeeping and accepted-step monotonicity") {
  const AlignmentProblem& p = small_scene();
  const OptimReport r = refine_pose(p, p.gt_pose.retract({4, -3, deg2rad(12)}));
  REQUIRE(!r.trace.empty());
  CHECK(r.levels.size() == 3);
  CHECK(r.levels.front().level == 2);  // coarse to fine
  CHECK(r.levels.back().level == 0);
  int total = 0;
  for (const auto& l : r.levels) {
    total += l.iterations;
    CHECK(l.iterations <= LMConfig{}.max_iters_per_level);
  }
  CHECK(total == r.iterations_total);
  CHECK(static_cast<int>(r.trace.size()) == total);
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    const auto& a = r.trace[i - 1];
    const auto& b = r.trace[i];
    if (a.level != b.level) continue;
    CHECK(b.cost <= a.cost);
    CHECK(b.lambda == Approx(a.lambda * (a.accepted ? 0.1 : 10.0)));
    if (b.accepted) {
      CHECK(b.candidate_cost < a.cost);
    } else {
      CHECK(b.pose.lateral == a.pose.lateral);
      CHECK(b.pose.yaw == a.pose.yaw);
    }
    CHECK(b.pose.yaw > -std::numbers::pi);
    CHECK(b.pose.yaw <= std::numbers::pi);
  }
  CHECK(r.final_pose.lateral == r.trace.back().pose.lateral);
}

TEST_CASE("refine_pose is deterministic") {
  const AlignmentProblem& p = small_scene();
  const Pose3 init = p.gt_pose.retract({-5, 2, deg2rad(-20)});
  const OptimReport a = refine_pose(p, init), b = refine_pose(p, init);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].cost == b.trace[i].cost);
    CHECK(a.trace[i].delta == b.trace[i].delta);
    CHECK(a.trace[i].pose.yaw == b.trace[i].pose.yaw);
  }
}

TEST_CASE("refine_pose: uninformative scene is reported as not converged") {
  AlignmentProblem p = small_scene();
  for (auto& lvl : p.satellite.levels) {
    for (int y = 0; y < lvl.features.height; ++y)
      for (int x = 0; x < lvl.features.width; ++x) {
        float* px = lvl.features.pixel(x, y);
        std::fill(px, px + lvl.features.channels, 0.0f);
        px[1] = 1.0f;
      }
  }
  const Pose3 init = p.gt_pose.retract({2, 2, 0.1});
  const OptimReport r = refine_pose(p, init);
  CHECK_FALSE(r.converged);
  for (const auto& it : r.trace) CHECK(it.delta.isZero());
  CHECK(r.final_pose.lateral == init.lateral);
}

TEST_CASE("refine_pose: no valid points is a degenerate problem") {
  const AlignmentProblem& p = small_scene();
  const Pose3 far = p.gt_pose.translated(5000, 0);
  try {
    refine_pose(p, far);
    FAIL("expected DegenerateProblem");
  } catch (const DegenerateProblem& e) {
    CHECK_FALSE(e.report().converged);
    CHECK(e.report().final_pose.lateral == far.lateral);
  }
}

TEST_CASE("refine_pose rejects mismatched pyramids") {
  AlignmentProblem p = small_scene();
  p.ground.levels.pop_back();
  CHECK_THROWS_AS(refine_pose(p, p.gt_pose), ContractError);
}

TEST_CASE("gauge consistency under a periodic shift of the satellite field") {
  auto cfg = cvloc::testing::small_config(12);
  cfg.sat_size = 512;
  const AlignmentProblem p = generate_scene(cfg);
  const int k = 16, m = -8;
  const double de = k * p.georef.gamma, ds = m * p.georef.gamma;
  AlignmentProblem q = p;
  q.satellite = roll(p.satellite, k, m);
  q.gt_pose = p.gt_pose.translated(de, ds);
  const Pose3 init = p.gt_pose.retract({4, -4, deg2rad(15)});
  const OptimReport a = refine_pose(p, init), b = refine_pose(q, init.translated(de, ds));
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].accepted == b.trace[i].accepted);
    CHECK(b.trace[i].cost == Approx(a.trace[i].cost).epsilon(1e-9));
    CHECK(std::abs(b.trace[i].pose.lateral - a.trace[i].pose.lateral - de) < 1e-8);
    CHECK(std::abs(b.trace[i].pose.longitudinal - a.trace[i].pose.longitudinal + ds) < 1e-8);
    CHECK(std::abs(b.trace[i].pose.yaw - a.trace[i].pose.yaw) < 1e-9);
  }
  CHECK(a.converged == b.converged);
}

TEST_CASE("offsets of (3 m, 3 m, 10 deg) recover within 0.25 m / 0.5 deg in >= 95 of 100 trials") {
  std::mt19937_64 rng(31);
  int good = 0;
  for (int s = 0; s < 10; ++s) {
    SynthConfig cfg;
    cfg.seed = 300 + s;
    const AlignmentProblem p = generate_scene(cfg);
    for (int t = 0; t < 10; ++t) {
      const double sl = (rng() & 1) ? 1 : -1, sn = (rng() & 1) ? 1 : -1, sy = (rng() & 1) ? 1 : -1;
      const OptimReport r = refine_pose(p, p.gt_pose.retract({3 * sl, 3 * sn, deg2rad(10 * sy)}));
      const PoseError e = pose_error(r.final_pose, p.gt_pose);
      good += (e.lateral < 0.25 && e.longitudinal < 0.25 && e.yaw < 0.5);
    }
  }
  CHECK(good >= 95);
}

}  // TEST_SUITE
