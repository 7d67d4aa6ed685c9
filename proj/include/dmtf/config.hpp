#pragma once

#include <filesystem>
#include <optional>

#include "dmtf/model.hpp"
#include "dmtf/ppo.hpp"
#include "json.hpp"

namespace dmtf::config {

// One JSON document drives a run: {"seed", "model": {...}, "ppo": {...},
// "data": {"templates", "train_suite", "val_heard", "val_unheard"?}}.
// Unknown keys are rejected everywhere; relative paths resolve against the
// config file's directory. The top-level seed is authoritative.
struct RunConfig {
  uint64_t seed = 1;
  net::ModelConfig model;
  ppo::PPOConfig ppo;
  std::filesystem::path templates;
  std::filesystem::path train_suite;
  std::filesystem::path val_heard;
  std::optional<std::filesystem::path> val_unheard;
};

RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace dmtf::config
