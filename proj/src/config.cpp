#include "cvloc/config.hpp"

#include <fstream>
#include <set>
#include <string>

#include "cvloc/errors.hpp"

namespace cvloc {

namespace {

using json = nlohmann::json;

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("config: unknown key '" + section + "." + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, const std::string& section, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + section + "." + key + "' has the wrong type");
  }
}

template <class F>
void validated(const std::string& section, F&& f) {
  try {
    f();
  } catch (const ContractError& e) {
    throw ConfigError("config: invalid '" + section + "': " + e.what());
  }
}

}  // namespace

AppConfig config_from_json(const json& j) {
  AppConfig cfg;
  check_keys(j, "<root>", {"solver", "robust_cost", "loss", "synth"});

  if (j.contains("solver")) {
    const json& s = j["solver"];
    check_keys(s, "solver",
               {"max_iters_per_level", "stop_tol_m", "stop_tol_deg", "lambda_init", "lambda_up", "lambda_down"});
    read(s, "max_iters_per_level", "solver", cfg.lm.max_iters_per_level);
    read(s, "stop_tol_m", "solver", cfg.lm.stop_tol_m);
    read(s, "stop_tol_deg", "solver", cfg.lm.stop_tol_deg);
    read(s, "lambda_init", "solver", cfg.lm.lambda_init);
    read(s, "lambda_up", "solver", cfg.lm.lambda_up);
    read(s, "lambda_down", "solver", cfg.lm.lambda_down);
  }
  validated("solver", [&] { cfg.lm.validate(); });

  if (j.contains("robust_cost")) {
    const json& r = j["robust_cost"];
    check_keys(r, "robust_cost", {"kind", "param"});
    std::string kind = cfg.cost.name();
    read(r, "kind", "robust_cost", kind);
    cfg.cost.kind = parse_robust_kind(kind);
    read(r, "param", "robust_cost", cfg.cost.param);
  }
  validated("robust_cost", [&] { cfg.cost.validate(); });

  if (j.contains("loss")) {
    const json& l = j["loss"];
    check_keys(l, "loss", {"alpha", "beta_lo", "beta_hi", "dis_level"});
    read(l, "alpha", "loss", cfg.loss.alpha);
    read(l, "beta_lo", "loss", cfg.loss.beta_lo);
    read(l, "beta_hi", "loss", cfg.loss.beta_hi);
    read(l, "dis_level", "loss", cfg.loss.dis_level);
  }
  validated("loss", [&] { cfg.loss.validate(); });

  if (j.contains("synth")) {
    const json& s = j["synth"];
    check_keys(s, "synth",
               {"seed", "sat_size", "gamma", "levels", "channels", "point_count", "depth_min", "depth_max",
                "feature_smoothness", "attention_mode", "gt_pose", "ground_width", "ground_height", "focal_px",
                "camera_height"});
    auto& c = cfg.synth;
    read(s, "seed", "synth", c.seed);
    read(s, "sat_size", "synth", c.sat_size);
    read(s, "gamma", "synth", c.gamma);
    read(s, "levels", "synth", c.levels);
    read(s, "channels", "synth", c.channels);
    read(s, "point_count", "synth", c.point_count);
    read(s, "depth_min", "synth", c.depth_min);
    read(s, "depth_max", "synth", c.depth_max);
    read(s, "feature_smoothness", "synth", c.feature_smoothness);
    read(s, "ground_width", "synth", c.ground_width);
    read(s, "ground_height", "synth", c.ground_height);
    read(s, "focal_px", "synth", c.focal_px);
    read(s, "camera_height", "synth", c.camera_height);
    if (s.contains("attention_mode")) {
      std::string mode;
      read(s, "attention_mode", "synth", mode);
      c.attention_mode = parse_attention_mode(mode);
    }
    if (s.contains("gt_pose")) {
      const json& g = s["gt_pose"];
      check_keys(g, "synth.gt_pose", {"lateral_m", "longitudinal_m", "yaw_deg"});
      double lat = 0, lon = 0, yaw = 0;
      read(g, "lateral_m", "synth.gt_pose", lat);
      read(g, "longitudinal_m", "synth.gt_pose", lon);
      read(g, "yaw_deg", "synth.gt_pose", yaw);
      c.gt_pose = Pose3::from_degrees(lat, lon, yaw);
    }
  }
  validated("synth", [&] { cfg.synth.validate(); });
  return cfg;
}

json config_to_json(const AppConfig& cfg) {
  const auto& s = cfg.synth;
  return {
      {"solver",
       {{"max_iters_per_level", cfg.lm.max_iters_per_level},
        {"stop_tol_m", cfg.lm.stop_tol_m},
        {"stop_tol_deg", cfg.lm.stop_tol_deg},
        {"lambda_init", cfg.lm.lambda_init},
        {"lambda_up", cfg.lm.lambda_up},
        {"lambda_down", cfg.lm.lambda_down}}},
      {"robust_cost", {{"kind", cfg.cost.name()}, {"param", cfg.cost.param}}},
      {"loss",
       {{"alpha", cfg.loss.alpha},
        {"beta_lo", cfg.loss.beta_lo},
        {"beta_hi", cfg.loss.beta_hi},
        {"dis_level", cfg.loss.dis_level}}},
      {"synth",
       {{"seed", s.seed},
        {"sat_size", s.sat_size},
        {"gamma", s.gamma},
        {"levels", s.levels},
        {"channels", s.channels},
        {"point_count", s.point_count},
        {"depth_min", s.depth_min},
        {"depth_max", s.depth_max},
        {"feature_smoothness", s.feature_smoothness},
        {"attention_mode", to_string(s.attention_mode)},
        {"gt_pose", {{"lateral_m", s.gt_pose.lateral}, {"longitudinal_m", s.gt_pose.longitudinal},
                     {"yaw_deg", s.gt_pose.yaw_deg()}}},
        {"ground_width", s.ground_width},
        {"ground_height", s.ground_height},
        {"focal_px", s.focal_px},
        {"camera_height", s.camera_height}}},
  };
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace cvloc
