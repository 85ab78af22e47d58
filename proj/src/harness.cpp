#include "cvloc/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "cvloc/cvls.hpp"
#include "cvloc/errors.hpp"
#include "cvloc/losses.hpp"

namespace cvloc {

using json = nlohmann::json;

AlignmentProblem load_problem(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scene " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  in.close();
  if (std::string(magic, 4) == "CVLS") return load_scene(path);
  return generate_scene(load_config(path).synth);
}

int resolve_workers(int requested) {
  if (const char* env = std::getenv("CVL_WORKERS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 4096) throw ConfigError(std::string("CVL_WORKERS must be a positive integer, got '") + env + "'");
    return static_cast<int>(v);
  }
  if (requested < 1) throw ConfigError("--workers must be >= 1");
  return requested;
}

json pose_to_json(const Pose3& pose) {
  return {{"lateral_m", pose.lateral}, {"longitudinal_m", pose.longitudinal}, {"yaw_deg", pose.yaw_deg()}};
}

json error_to_json(const PoseError& e) {
  return {{"lateral_m", e.lateral}, {"longitudinal_m", e.longitudinal}, {"yaw_deg", e.yaw}};
}

json report_to_json(const OptimReport& report) {
  json trace = json::array();
  for (const auto& it : report.trace) {
    trace.push_back({{"level", it.level},
                     {"iteration", it.iteration},
                     {"pose", pose_to_json(it.pose)},
                     {"cost", it.cost},
                     {"candidate_cost", it.candidate_cost},
                     {"lambda", it.lambda},
                     {"accepted", it.accepted},
                     {"delta", {it.delta.x(), it.delta.y(), it.delta.z()}},
                     {"valid_points", it.valid_points}});
  }
  json levels = json::array();
  for (const auto& l : report.levels) {
    levels.push_back(
        {{"level", l.level}, {"iterations", l.iterations}, {"converged", l.converged}, {"final_cost", l.final_cost}});
  }
  return {{"initial_pose", pose_to_json(report.initial_pose)},
          {"final_pose", pose_to_json(report.final_pose)},
          {"converged", report.converged},
          {"iterations_total", report.iterations_total},
          {"levels", levels},
          {"trace", trace}};
}

namespace {

template <std::size_t K>
json recall_json(const std::array<double, K>& values, const std::array<double, K>& thresholds) {
  json out = json::object();
  for (std::size_t i = 0; i < K; ++i) {
    std::ostringstream key;
    key << thresholds[i];
    out[key.str()] = values[i];
  }
  return out;
}

// NaN is not representable in JSON.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json summary_to_json(const MetricsSummary& s) {
  return {{"trial_count", s.trial_count},
          {"failure_count", s.failure_count},
          {"median",
           {{"lateral_m", number_or_null(s.median_lateral)},
            {"longitudinal_m", number_or_null(s.median_longitudinal)},
            {"yaw_deg", number_or_null(s.median_yaw)}}},
          {"recall",
           {{"lateral_m", recall_json(s.recall_lateral, kShiftThresholds)},
            {"longitudinal_m", recall_json(s.recall_longitudinal, kShiftThresholds)},
            {"yaw_deg", recall_json(s.recall_yaw, kYawThresholds)}}}};
}

LocalizeResult run_localize(const AlignmentProblem& problem, const Pose3& init, const AppConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  LocalizeResult out;
  json& rec = out.record;
  rec["config"] = config_to_json(cfg);
  rec["init_pose"] = pose_to_json(init);
  rec["gt_pose"] = pose_to_json(problem.gt_pose);

  OptimReport report;
  try {
    report = refine_pose(problem, init, cfg.lm, cfg.cost);
    rec["status"] = "ok";
  } catch (const DegenerateProblem& e) {
    report = e.report();
    out.degenerate = true;
    rec["status"] = "degenerate";
    rec["message"] = e.what();
  }
  rec["final_pose"] = pose_to_json(report.final_pose);
  rec["error"] = error_to_json(pose_error(report.final_pose, problem.gt_pose));
  rec["converged"] = report.converged;
  rec["iterations"] = report.iterations_total;
  rec["report"] = report_to_json(report);

  if (!out.degenerate) {
    try {
      const LossBreakdown l = total_loss(problem, report.final_pose, init, problem.gt_pose, cfg.cost, cfg.loss);
      rec["loss"] = {{"total", l.total},
                     {"rprb", l.rprb},
                     {"rprb_init", l.rprb_init},
                     {"beta", l.beta},
                     {"pab", l.pab},
                     {"pab_evaluated", l.pab_evaluated},
                     {"dis_init", l.dis_init},
                     {"dis_gt", l.dis_gt}};
    } catch (const DomainError& e) {
      rec["loss"] = {{"error", e.what()}};
    }
  }
  rec["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

EvalResult run_eval(const AlignmentProblem& problem, int trials, const PerturbBounds& bounds, std::uint64_t seed,
                    const AppConfig& cfg, int workers) {
  if (trials < 1) throw ContractError("run_eval: trials must be >= 1");
  bounds.validate();
  std::vector<Pose3> inits;
  inits.reserve(trials);
  for (int t = 0; t < trials; ++t) inits.push_back(sample_initial_pose(problem.gt_pose, bounds, trial_seed(seed, t)));
  EvalResult r;
  r.trials = run_trials(problem, inits, cfg.lm, cfg.cost, workers);
  r.summary = summarize(std::span<const TrialResult>(r.trials));
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + '"';
}

}  // namespace

void write_trials_csv(std::ostream& out, const std::vector<TrialResult>& trials) {
  out << "trial,init_lateral_m,init_longitudinal_m,init_yaw_deg,final_lateral_m,final_longitudinal_m,final_yaw_deg,"
         "err_lateral_m,err_longitudinal_m,err_yaw_deg,converged,iterations,status,failure\n";
  for (const auto& t : trials) {
    out << t.index << ',' << fmt(t.init.lateral) << ',' << fmt(t.init.longitudinal) << ',' << fmt(t.init.yaw_deg())
        << ',' << fmt(t.final_pose.lateral) << ',' << fmt(t.final_pose.longitudinal) << ','
        << fmt(t.final_pose.yaw_deg()) << ',';
    if (t.ok) {
      out << fmt(t.error.lateral) << ',' << fmt(t.error.longitudinal) << ',' << fmt(t.error.yaw);
    } else {
      out << ",,";
    }
    out << ',' << (t.converged ? 1 : 0) << ',' << t.iterations << ',' << (t.ok ? "ok" : "failed") << ','
        << csv_quote(t.failure) << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "max_shift_m,max_yaw_deg,trials,failures,median_lateral_m,median_longitudinal_m,median_yaw_deg";
  for (double t : kShiftThresholds) out << ",recall_lat_" << t << 'm';
  for (double t : kShiftThresholds) out << ",recall_lon_" << t << 'm';
  for (double t : kYawThresholds) out << ",recall_yaw_" << t << "deg";
  out << '\n';
  for (const auto& r : rows) {
    const auto& s = r.summary;
    out << fmt(r.bounds.max_shift) << ',' << fmt(r.bounds.max_yaw) << ',' << s.trial_count << ',' << s.failure_count
        << ',' << fmt(s.median_lateral) << ',' << fmt(s.median_longitudinal) << ',' << fmt(s.median_yaw);
    for (double v : s.recall_lateral) out << ',' << fmt(v);
    for (double v : s.recall_longitudinal) out << ',' << fmt(v);
    for (double v : s.recall_yaw) out << ',' << fmt(v);
    out << '\n';
  }
}

std::vector<PerturbBounds> parse_bounds(const std::string& text) {
  std::vector<PerturbBounds> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("bounds: expected shift:yaw, got '" + item + "'");
    PerturbBounds b;
    try {
      std::size_t a = 0, c = 0;
      const std::string s1 = item.substr(0, colon), s2 = item.substr(colon + 1);
      b.max_shift = std::stod(s1, &a);
      b.max_yaw = std::stod(s2, &c);
      if (a != s1.size() || c != s2.size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ConfigError("bounds: cannot parse '" + item + "'");
    }
    try {
      b.validate();
    } catch (const ContractError& e) {
      throw ConfigError(std::string("bounds: ") + e.what());
    }
    out.push_back(b);
  }
  if (out.empty()) throw ConfigError("bounds: empty list");
  if (text.back() == ',') throw ConfigError("bounds: trailing comma");
  return out;
}

// Numerical self-checks -----------------------------------------------------

namespace {

constexpr std::array<const char*, 3> kColumns = {"lateral", "longitudinal", "yaw"};

NumericCheck make_check(const char* name, double tolerance, int samples) {
  NumericCheck c;
  c.name = name;
  c.tolerance = tolerance;
  c.samples = samples;
  return c;
}

// Folds per-column maxima into a check result.
void finish_columns(NumericCheck& c, const std::array<double, 3>& col_max) {
  c.max_error = *std::max_element(col_max.begin(), col_max.end());
  c.passed = std::isfinite(c.max_error) && c.max_error <= c.tolerance;
  std::ostringstream d;
  d << "per-column max:";
  for (int k = 0; k < 3; ++k) d << ' ' << kColumns[k] << '=' << col_max[k];
  if (!c.passed) {
    d << "; failing column(s):";
    for (int k = 0; k < 3; ++k) {
      if (!(col_max[k] <= c.tolerance)) d << ' ' << kColumns[k];
    }
  }
  c.detail = d.str();
}

RigidTransform random_rigid(std::mt19937_64& rng, double max_angle, double max_shift) {
  std::uniform_real_distribution<double> a(-max_angle, max_angle), t(-max_shift, max_shift);
  RigidTransform T;
  T.rotation = (Eigen::AngleAxisd(a(rng), Vec3::UnitZ()) * Eigen::AngleAxisd(a(rng), Vec3::UnitY()) *
                Eigen::AngleAxisd(a(rng), Vec3::UnitX()))
                   .toRotationMatrix();
  T.translation = {t(rng), t(rng), t(rng)};
  return T;
}

Vec2 satproj(const Vec3& p_cam, const Pose3& pose, const PoseContext& ctx, const SatelliteGeoref& georef) {
  const Vec3 p = pose_to_transform(pose, ctx).apply(p_cam);
  return project_satellite(std::span<const Vec3>(&p, 1), georef)[0];
}

NumericCheck check_projection(const NumericsOptions& opt) {
  NumericCheck c = make_check("projection_jacobian_fd", 1e-4, opt.projection_draws);
  std::mt19937_64 rng(opt.seed ^ 0x70726f6aULL);
  std::uniform_real_distribution<double> U(-1, 1);
  std::array<double, 3> col_max{};
  const double h = 1e-5;
  for (int i = 0; i < opt.projection_draws; ++i) {
    PoseContext ctx;
    ctx.roll = deg2rad(3 * U(rng));
    ctx.pitch = deg2rad(3 * U(rng));
    ctx.height = 1.5 + 0.5 * U(rng);
    ctx.cam_to_gps = random_rigid(rng, 0.05, 0.5);
    const SatelliteGeoref georef =
        SatelliteGeoref::from_tile(300 + 200 * U(rng), 35 + 35 * U(rng), 18 + static_cast<int>(rng() % 2), 2);
    const Pose3 pose{20 * U(rng), 20 * U(rng), std::numbers::pi * U(rng)};
    const Vec3 p{10 * U(rng), 2 * U(rng), 21 + 19 * U(rng)};
    const Mat23 J = opt.satproj_jacobian(p, pose, ctx, georef);
    for (int k = 0; k < 3; ++k) {
      Vec3 d = Vec3::Zero();
      d[k] = h;
      const Vec2 fd = (satproj(p, pose.retract(d), ctx, georef) - satproj(p, pose.retract(-d), ctx, georef)) / (2 * h);
      col_max[k] = std::max(col_max[k], (J.col(k) - fd).norm() / std::max(fd.norm(), 1e-12));
    }
  }
  finish_columns(c, col_max);
  return c;
}

NumericCheck check_bilinear(const NumericsOptions& opt) {
  NumericCheck c = make_check("bilinear_gradient_fd", 1e-5, opt.bilinear_draws);
  std::mt19937_64 rng(opt.seed ^ 0x62696c69ULL);
  std::uniform_real_distribution<double> U(-1, 1);
  FeatureMap map(17, 23, 4);
  for (auto& x : map.data) x = static_cast<float>(U(rng));
  std::uniform_int_distribution<int> cx(0, map.width - 2), cy(0, map.height - 2);
  std::uniform_real_distribution<double> frac(0.01, 0.99);
  const double h = 1e-4;
  double worst = 0;
  std::vector<double> val(4), gu(4), gv(4), p(4), m(4);
  for (int i = 0; i < opt.bilinear_draws; ++i) {
    const double u = cx(rng) + frac(rng), v = cy(rng) + frac(rng);
    bilinear_sample(map, u, v, val.data(), gu.data(), gv.data());
    bilinear_sample(map, u + h, v, p.data());
    bilinear_sample(map, u - h, v, m.data());
    for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(gu[k] - (p[k] - m[k]) / (2 * h)));
    bilinear_sample(map, u, v + h, p.data());
    bilinear_sample(map, u, v - h, m.data());
    for (int k = 0; k < 4; ++k) worst = std::max(worst, std::abs(gv[k] - (p[k] - m[k]) / (2 * h)));
  }
  c.max_error = worst;
  c.passed = std::isfinite(worst) && worst <= c.tolerance;
  return c;
}

SynthConfig small_scene(std::uint64_t seed, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  SynthConfig s;
  s.seed = seed;
  s.sat_size = 128;
  s.ground_width = 640;
  s.ground_height = 256;
  s.focal_px = 360;
  s.point_count = 400;
  s.feature_smoothness = 4;
  s.attention_mode = (seed & 1) ? AttentionMode::kRandomSmooth : AttentionMode::kUniform;
  s.gt_pose = Pose3{2 * U(rng), 2 * U(rng), std::numbers::pi * U(rng)};
  return s;
}

NumericCheck check_residual_jacobian(const NumericsOptions& opt) {
  const int poses_per_scene = 4;
  NumericCheck c = make_check("residual_jacobian_fd", 1e-3, opt.jacobian_scenes * poses_per_scene);
  std::mt19937_64 rng(opt.seed ^ 0x7265736aULL);
  std::uniform_real_distribution<double> U(-1, 1);
  std::array<double, 3> col_max{};
  const double h = 1e-6;
  for (int s = 0; s < opt.jacobian_scenes; ++s) {
    const AlignmentProblem problem = generate_scene(small_scene(trial_seed(opt.seed, s), rng));
    for (int q = 0; q < poses_per_scene; ++q) {
      const int level = static_cast<int>(rng() % problem.level_count());
      const Pose3 pose = problem.gt_pose.retract({3 * U(rng), 3 * U(rng), deg2rad(10 * U(rng))});
      const LevelAlignment la(problem, level);
      const Eigen::MatrixXd J = opt.residual_jacobian(problem, pose, level);
      const SparseAlignment a0 = la.align(pose);
      const int ch = la.channels();
      for (int k = 0; k < 3; ++k) {
        Vec3 d = Vec3::Zero();
        d[k] = h;
        const Pose3 pp = pose.retract(d), pm = pose.retract(-d);
        const SparseAlignment ap = la.align(pp), am = la.align(pm);
        const auto uvp = la.satellite_uv(pp), uvm = la.satellite_uv(pm);
        double num = 0, den = 0;
        for (std::size_t i = 0; i < la.point_count(); ++i) {
          if (!a0.valid[i] || !ap.valid[i] || !am.valid[i]) continue;
          // Skip points whose stencil straddles a texel boundary.
          if (std::floor(uvp[i].x()) != std::floor(uvm[i].x()) || std::floor(uvp[i].y()) != std::floor(uvm[i].y()))
            continue;
          for (int j = 0; j < ch; ++j) {
            const double fd = (ap.residuals(i, j) - am.residuals(i, j)) / (2 * h);
            const double e = J(static_cast<Eigen::Index>(i) * ch + j, k) - fd;
            num += e * e;
            den += fd * fd;
          }
        }
        if (den > 0) col_max[k] = std::max(col_max[k], std::sqrt(num / den));
      }
    }
  }
  finish_columns(c, col_max);
  return c;
}

struct LinearProblem {
  Eigen::MatrixXd J;
  Eigen::VectorXd W, r;
};

LinearProblem random_linear_problem(std::mt19937_64& rng) {
  std::normal_distribution<double> N;
  std::uniform_real_distribution<double> U(0.1, 2.0), S(-2, 2);
  const int m = 6 + static_cast<int>(rng() % 60);
  LinearProblem p{Eigen::MatrixXd(m, 3), Eigen::VectorXd(m), Eigen::VectorXd(m)};
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < 3; ++k) p.J(i, k) = N(rng);
    p.W(i) = U(rng);
    p.r(i) = N(rng);
  }
  const Eigen::Vector3d scale(std::pow(10.0, S(rng)), std::pow(10.0, S(rng)), std::pow(10.0, S(rng)));
  p.J = p.J * scale.asDiagonal();
  return p;
}

NumericCheck check_lm_exact(const NumericsOptions& opt) {
  NumericCheck c = make_check("lm_step_least_squares", 1e-8, opt.lm_problems);
  std::mt19937_64 rng(opt.seed ^ 0x6c6d7374ULL);
  for (int t = 0; t < opt.lm_problems; ++t) {
    const LinearProblem p = random_linear_problem(rng);
    const Eigen::VectorXd sw = p.W.cwiseSqrt();
    // min |sqrt(W) (J d + r)| via Householder QR.
    const Eigen::Vector3d oracle = -(sw.asDiagonal() * p.J).householderQr().solve(sw.asDiagonal() * p.r);
    const Eigen::Vector3d d = lm_step(p.J, p.W, p.r, 0.0);
    c.max_error = std::max(c.max_error, (d - oracle).norm() / std::max(1.0, oracle.norm()));
  }
  c.passed = std::isfinite(c.max_error) && c.max_error <= c.tolerance;
  return c;
}

NumericCheck check_lm_ladder(const NumericsOptions& opt) {
  NumericCheck c = make_check("lm_step_damping_ladder", 0, opt.lm_problems);
  std::mt19937_64 rng(opt.seed ^ 0x6c616464ULL);
  int violations = 0;
  for (int t = 0; t < opt.lm_problems; ++t) {
    const LinearProblem p = random_linear_problem(rng);
    const Eigen::Vector3d dscale = (p.J.transpose() * p.W.asDiagonal() * p.J).diagonal().cwiseSqrt();
    double prev = std::numeric_limits<double>::infinity();
    for (int l = 0; l < 10; ++l) {
      const double lambda = std::pow(10.0, -4.0 + 8.0 * l / 9.0);
      const double n = dscale.cwiseProduct(lm_step(p.J, p.W, p.r, lambda)).norm();
      // Relative increase beyond round-off counts as a violation.
      const double rise = (n - prev) / prev;
      if (rise > 1e-12) ++violations;
      if (std::isfinite(rise)) c.max_error = std::max(c.max_error, rise);
      prev = n;
    }
  }
  c.tolerance = 1e-12;
  c.passed = violations == 0;
  c.detail = "max relative increase of |diag(H)^1/2 delta| along lambda = 1e-4..1e4; violations: " +
             std::to_string(violations);
  return c;
}

}  // namespace

bool NumericsReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const NumericCheck& c) { return c.passed; });
}

json NumericsReport::to_json() const {
  json arr = json::array();
  for (const auto& c : checks) {
    arr.push_back({{"name", c.name},
                   {"passed", c.passed},
                   {"max_error", c.max_error},
                   {"tolerance", c.tolerance},
                   {"samples", c.samples},
                   {"detail", c.detail}});
  }
  return {{"passed", passed()}, {"checks", arr}};
}

NumericsReport check_numerics(const NumericsOptions& options) {
  NumericsReport r;
  r.checks.push_back(check_projection(options));
  r.checks.push_back(check_bilinear(options));
  r.checks.push_back(check_residual_jacobian(options));
  r.checks.push_back(check_lm_exact(options));
  r.checks.push_back(check_lm_ladder(options));
  return r;
}

}  // namespace cvloc
