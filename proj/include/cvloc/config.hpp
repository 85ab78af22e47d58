#pragma once

#include <filesystem>

#include <json.hpp>

#include "cvloc/losses.hpp"
#include "cvloc/robust_cost.hpp"
#include "cvloc/solver.hpp"
#include "cvloc/synth.hpp"

namespace cvloc {

/// Everything a run can be configured with. Every section is optional in
/// the file; missing keys keep their defaults, unknown keys are rejected.
struct AppConfig {
  LMConfig lm;
  RobustCost cost;
  LossConfig loss;
  SynthConfig synth;
};

AppConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const AppConfig& cfg);

/// Throws IoError when the file cannot be read, ConfigError when it does not
/// follow the schema.
AppConfig load_config(const std::filesystem::path& path);

}  // namespace cvloc
