#include "dmtf/config.hpp"

#include <fstream>

#include "dmtf/errors.hpp"
#include "dmtf/json_util.hpp"

namespace dmtf::config {

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
  const std::string ctx = "config " + path.string();
  reject_unknown_keys<ConfigError>(j, {"seed", "model", "ppo", "data"}, ctx);

  RunConfig cfg;
  cfg.seed = get_req<ConfigError, uint64_t>(j, "seed", ctx);
  cfg.model = net::ModelConfig::from_json(j.value("model", nlohmann::json::object()));
  cfg.ppo = ppo::PPOConfig::from_json(j.value("ppo", nlohmann::json::object()));
  cfg.ppo.seed = cfg.seed;

  if (!j.contains("data")) throw ConfigError(ctx + ": missing required key 'data'");
  const nlohmann::json& d = j.at("data");
  reject_unknown_keys<ConfigError>(d, {"templates", "train_suite", "val_heard", "val_unheard"},
                                   ctx + " data");
  const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : ".";
  auto resolve = [&](const std::string& raw) {
    std::filesystem::path p(raw);
    return p.is_absolute() ? p : base / p;
  };
  cfg.templates = resolve(get_req<ConfigError, std::string>(d, "templates", ctx));
  cfg.train_suite = resolve(get_req<ConfigError, std::string>(d, "train_suite", ctx));
  cfg.val_heard = resolve(get_req<ConfigError, std::string>(d, "val_heard", ctx));
  if (d.contains("val_unheard")) {
    cfg.val_unheard = resolve(get_req<ConfigError, std::string>(d, "val_unheard", ctx));
  }
  return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json data{{"templates", cfg.templates.string()},
                      {"train_suite", cfg.train_suite.string()},
                      {"val_heard", cfg.val_heard.string()}};
  if (cfg.val_unheard) data["val_unheard"] = cfg.val_unheard->string();
  return nlohmann::json{{"seed", cfg.seed},
                        {"model", cfg.model.to_json()},
                        {"ppo", cfg.ppo.to_json()},
                        {"data", std::move(data)}};
}

}  // namespace dmtf::config
