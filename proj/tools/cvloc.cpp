// cvloc: command line front end.
//
// Exit codes: 0 ok, 2 config/usage error, 3 I/O or format error,
// 4 degenerate problem, 5 numeric-check failure, 1 anything else.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cvloc/cvls.hpp"
#include "cvloc/errors.hpp"
#include "cvloc/harness.hpp"

namespace {

using namespace cvloc;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDegenerate = 4;
constexpr int kExitNumerics = 5;

AppConfig config_or_default(const std::string& path) { return path.empty() ? AppConfig{} : load_config(path); }

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

Pose3 parse_init(const std::string& text) {
  std::stringstream ss(text);
  double v[3];
  char sep = 0;
  if (!(ss >> v[0] >> sep) || sep != ',' || !(ss >> v[1] >> sep) || sep != ',' || !(ss >> v[2]) || !(ss >> std::ws).eof())
    throw ConfigError("--init expects \"lat_m,lon_m,yaw_deg\", got '" + text + "'");
  return Pose3::from_degrees(v[0], v[1], v[2]);
}

struct LocalizeArgs {
  std::string scene, init, config, out;
  std::optional<std::uint64_t> perturb_seed;
  double max_shift = 10, max_yaw = 30;
};

int cmd_localize(const LocalizeArgs& a) {
  const AppConfig cfg = config_or_default(a.config);
  const AlignmentProblem problem = load_problem(a.scene);
  Pose3 init = problem.gt_pose;
  if (!a.init.empty()) {
    init = parse_init(a.init);
  } else if (a.perturb_seed) {
    PerturbBounds b{a.max_shift, a.max_yaw};
    try {
      b.validate();
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
    init = sample_initial_pose(problem.gt_pose, b, *a.perturb_seed);
  }
  const LocalizeResult r = run_localize(problem, init, cfg);
  const std::string text = r.record.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(a.out, text);
    const auto& e = r.record["error"];
    std::printf("status=%s error lateral=%.4f m longitudinal=%.4f m yaw=%.4f deg iterations=%d\n",
                r.record["status"].get<std::string>().c_str(), e["lateral_m"].get<double>(),
                e["longitudinal_m"].get<double>(), e["yaw_deg"].get<double>(), r.record["iterations"].get<int>());
  }
  if (r.degenerate) {
    std::fprintf(stderr, "cvloc: %s\n", r.record["message"].get<std::string>().c_str());
    return kExitDegenerate;
  }
  return 0;
}

struct SynthArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a) {
  AppConfig cfg = config_or_default(a.config);
  if (a.seed) cfg.synth.seed = *a.seed;
  const AlignmentProblem problem = generate_scene(cfg.synth);
  save_scene(a.out, problem);
  std::printf("wrote %s: %d levels, %zu points, gamma %.6g m/px\n", a.out.c_str(), problem.level_count(),
              problem.points.size(), problem.georef.gamma);
  return 0;
}

struct EvalArgs {
  std::string scene, config, out_dir;
  int trials = 100;
  double max_shift = 10, max_yaw = 30;
  int workers = 1;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  const AppConfig cfg = config_or_default(a.config);
  const int workers = resolve_workers(a.workers);
  PerturbBounds b{a.max_shift, a.max_yaw};
  try {
    b.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  const AlignmentProblem problem = load_problem(a.scene);
  const EvalResult r = run_eval(problem, a.trials, b, a.seed, cfg, workers);
  const std::filesystem::path dir(a.out_dir);
  {
    auto out = open_out(dir / "trials.csv");
    write_trials_csv(out, r.trials);
  }
  nlohmann::json summary = summary_to_json(r.summary);
  summary["bounds"] = {{"max_shift_m", b.max_shift}, {"max_yaw_deg", b.max_yaw}};
  summary["seed"] = a.seed;
  const std::string text = summary.dump(2) + "\n";
  write_text(dir / "summary.json", text);
  std::cout << text;
  return 0;
}

struct SweepArgs {
  std::string scene, config, bounds = "5:15,10:30,15:45,20:60", out;
  int trials = 100;
  int workers = 1;
  std::uint64_t seed = 0;
};

int cmd_sweep(const SweepArgs& a) {
  const AppConfig cfg = config_or_default(a.config);
  const int workers = resolve_workers(a.workers);
  const auto grid = parse_bounds(a.bounds);
  if (a.trials < 1) throw ConfigError("--trials must be >= 1");
  const AlignmentProblem problem = load_problem(a.scene);
  const auto rows = perturbation_sweep(problem, grid, a.trials, a.seed, cfg.lm, cfg.cost, workers);
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.out, csv.str());
  }
  return 0;
}

struct NumericsArgs {
  std::uint64_t seed = 0;
  std::string json_out;
};

int cmd_check_numerics(const NumericsArgs& a) {
  NumericsOptions opt;
  opt.seed = a.seed;
  const NumericsReport rep = check_numerics(opt);
  for (const auto& c : rep.checks) {
    std::printf("%-4s %-26s max_error=%.3e tol=%.1e samples=%d%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                c.max_error, c.tolerance, c.samples, c.detail.empty() ? "" : "  ", c.detail.c_str());
  }
  if (!a.json_out.empty()) write_text(a.json_out, rep.to_json().dump(2) + "\n");
  return rep.passed() ? 0 : kExitNumerics;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-view vehicle localization toolkit"};
  app.require_subcommand(1);

  LocalizeArgs la;
  auto* loc = app.add_subcommand("localize", "Refine a pose for one scene and write a JSON run record");
  loc->add_option("--scene", la.scene, "CVLS scene or JSON synth config")->required();
  auto* init_opt = loc->add_option("--init", la.init, "Initial pose \"lat_m,lon_m,yaw_deg\" (default: ground truth)");
  loc->add_option("--perturb-seed", la.perturb_seed, "Draw the initial pose around the ground truth")
      ->excludes(init_opt);
  loc->add_option("--max-shift", la.max_shift, "Perturbation bound, m")->capture_default_str();
  loc->add_option("--max-yaw", la.max_yaw, "Perturbation bound, deg")->capture_default_str();
  loc->add_option("--config", la.config, "JSON config");
  loc->add_option("--out", la.out, "Output JSON (default: stdout)");

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic scene");
  syn->add_option("--config", sa.config, "JSON config");
  syn->add_option("--seed", sa.seed, "Overrides synth.seed");
  syn->add_option("--out", sa.out, "Output CVLS file")->required();

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Seeded batch evaluation");
  ev->add_option("--scene", ea.scene, "CVLS scene or JSON synth config")->required();
  ev->add_option("--trials", ea.trials)->capture_default_str()->check(CLI::PositiveNumber);
  ev->add_option("--max-shift", ea.max_shift, "m")->capture_default_str();
  ev->add_option("--max-yaw", ea.max_yaw, "deg")->capture_default_str();
  ev->add_option("--out-dir", ea.out_dir, "Receives trials.csv and summary.json")->required();
  ev->add_option("--workers", ea.workers, "Overridden by CVL_WORKERS")->capture_default_str();
  ev->add_option("--seed", ea.seed)->capture_default_str();
  ev->add_option("--config", ea.config, "JSON config");

  SweepArgs wa;
  auto* sw = app.add_subcommand("sweep", "Recall over a grid of perturbation bounds");
  sw->add_option("--scene", wa.scene, "CVLS scene or JSON synth config")->required();
  sw->add_option("--bounds", wa.bounds, "Comma separated shift_m:yaw_deg pairs")->capture_default_str();
  sw->add_option("--trials", wa.trials, "Trials per bound")->capture_default_str();
  sw->add_option("--out", wa.out, "Output CSV (default: stdout)");
  sw->add_option("--workers", wa.workers, "Overridden by CVL_WORKERS")->capture_default_str();
  sw->add_option("--seed", wa.seed)->capture_default_str();
  sw->add_option("--config", wa.config, "JSON config");

  NumericsArgs na;
  auto* cn = app.add_subcommand("check-numerics", "Finite-difference and closed-form self-checks");
  cn->add_option("--seed", na.seed)->capture_default_str();
  cn->add_option("--json", na.json_out, "Also write the report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*loc) return cmd_localize(la);
    if (*syn) return cmd_synth(sa);
    if (*ev) return cmd_eval(ea);
    if (*sw) return cmd_sweep(wa);
    if (*cn) return cmd_check_numerics(na);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "cvloc: config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "cvloc: invalid input: %s\n", e.what());
    return kExitConfig;
  } catch (const GenerationError& e) {
    std::fprintf(stderr, "cvloc: scene generation failed: %s\n", e.what());
    return kExitConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "cvloc: I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "cvloc: format error: %s\n", e.what());
    return kExitIo;
  } catch (const DegenerateProblem& e) {
    std::fprintf(stderr, "cvloc: degenerate problem: %s\n", e.what());
    return kExitDegenerate;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cvloc: error: %s\n", e.what());
    return 1;
  }
  return 1;
}
