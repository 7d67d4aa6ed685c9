#include "dmtf/suite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dmtf/errors.hpp"
#include "dmtf/json_util.hpp"
#include "dmtf/rng.hpp"

namespace dmtf::data {

namespace {

nlohmann::json env_to_json(const env::EnvParams& p) {
  return nlohmann::json{{"width", p.width},
                        {"height", p.height},
                        {"density", p.density},
                        {"image_h", p.image_h},
                        {"image_w", p.image_w},
                        {"image_c", p.image_c},
                        {"bands", p.bands},
                        {"frames", p.frames},
                        {"view_cells", p.view_cells},
                        {"max_steps", p.max_steps},
                        {"success_radius", p.success_radius},
                        {"pointgoal", p.pointgoal},
                        {"audio_noise", p.audio_noise}};
}

env::EnvParams env_from_json(const nlohmann::json& j, const std::string& ctx) {
  reject_unknown_keys<DataError>(
      j,
      {"width", "height", "density", "image_h", "image_w", "image_c", "bands", "frames",
       "view_cells", "max_steps", "success_radius", "pointgoal", "audio_noise"},
      ctx);
  env::EnvParams p;
  p.width = get_req<DataError, int>(j, "width", ctx);
  p.height = get_req<DataError, int>(j, "height", ctx);
  p.density = get_req<DataError, double>(j, "density", ctx);
  p.image_h = get_or<DataError, int>(j, "image_h", p.image_h, ctx);
  p.image_w = get_or<DataError, int>(j, "image_w", p.image_w, ctx);
  p.image_c = get_or<DataError, int>(j, "image_c", p.image_c, ctx);
  p.bands = get_or<DataError, int>(j, "bands", p.bands, ctx);
  p.frames = get_or<DataError, int>(j, "frames", p.frames, ctx);
  p.view_cells = get_or<DataError, int>(j, "view_cells", p.view_cells, ctx);
  p.max_steps = get_or<DataError, int>(j, "max_steps", p.max_steps, ctx);
  p.success_radius = get_or<DataError, int>(j, "success_radius", p.success_radius, ctx);
  p.pointgoal = get_or<DataError, bool>(j, "pointgoal", p.pointgoal, ctx);
  p.audio_noise = get_or<DataError, double>(j, "audio_noise", p.audio_noise, ctx);
  p.validate();
  return p;
}

void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed: " + path.string());
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

const env::SoundTemplate& TemplateBank::by_id(int id) const {
  for (const env::SoundTemplate& t : templates)
    if (t.id == id) return t;
  throw DataError("unknown sound template id " + std::to_string(id));
}

std::vector<env::SoundTemplate> TemplateBank::by_split(const std::string& split) const {
  std::vector<env::SoundTemplate> out;
  for (const env::SoundTemplate& t : templates)
    if (t.split == split) out.push_back(t);
  return out;
}

void TemplateBank::validate() const {
  if (bands <= 0) throw DataError("template bank: bands must be positive");
  std::vector<int> ids;
  for (const env::SoundTemplate& t : templates) {
    if (t.split != "heard" && t.split != "unheard") {
      throw DataError("template " + std::to_string(t.id) + ": bad split '" + t.split + "'");
    }
    if (static_cast<int>(t.profile.size()) != bands) {
      throw DataError("template " + std::to_string(t.id) + ": profile size mismatch");
    }
    double peak = 0.0;
    for (double v : t.profile) {
      if (v < 0.0 || v > 1.0) {
        throw DataError("template " + std::to_string(t.id) + ": profile value outside [0,1]");
      }
      peak = std::max(peak, v);
    }
    if (std::fabs(peak - 1.0) > 1e-12) {
      throw DataError("template " + std::to_string(t.id) + ": profile is not unit-max");
    }
    ids.push_back(t.id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw DataError("template bank: duplicate template id");
  }
}

TemplateBank generate_templates(uint64_t seed, int count, int bands, double unheard_fraction) {
  if (count <= 0) throw ConfigError("generate_templates: count must be positive");
  if (bands <= 0) throw ConfigError("generate_templates: bands must be positive");
  if (unheard_fraction < 0.0 || unheard_fraction >= 1.0) {
    throw ConfigError("generate_templates: unheard_fraction must be in [0, 1)");
  }
  const int unheard = static_cast<int>(std::lround(unheard_fraction * count));
  TemplateBank bank;
  bank.bands = bands;
  for (int id = 0; id < count; ++id) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(id), 0x7e3aULL));
    env::SoundTemplate t;
    t.id = id;
    t.split = id >= count - unheard ? "unheard" : "heard";
    t.profile.assign(bands, 0.0);
    for (int b = 0; b < bands; ++b) {
      if (rng.uniform01() < 0.4) t.profile[b] = rng.uniform(0.2, 1.0);
    }
    double peak = 0.0;
    for (double v : t.profile) peak = std::max(peak, v);
    if (peak == 0.0) {
      t.profile[rng.index(bands)] = 1.0;
      peak = 1.0;
    }
    for (double& v : t.profile) v /= peak;
    bank.templates.push_back(std::move(t));
  }
  bank.validate();
  return bank;
}

void save_templates(const TemplateBank& bank, const std::filesystem::path& path) {
  bank.validate();
  nlohmann::json j;
  j["schema"] = "dmtf.templates.v1";
  j["bands"] = bank.bands;
  nlohmann::json arr = nlohmann::json::array();
  for (const env::SoundTemplate& t : bank.templates) {
    arr.push_back({{"id", t.id}, {"split", t.split}, {"profile", t.profile}});
  }
  j["templates"] = std::move(arr);
  write_json_file(j, path);
}

TemplateBank load_templates(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  const std::string ctx = "templates " + path.string();
  reject_unknown_keys<DataError>(j, {"schema", "bands", "templates"}, ctx);
  if (get_req<DataError, std::string>(j, "schema", ctx) != "dmtf.templates.v1") {
    throw DataError(ctx + ": unexpected schema");
  }
  TemplateBank bank;
  bank.bands = get_req<DataError, int>(j, "bands", ctx);
  for (const auto& tj : j.at("templates")) {
    reject_unknown_keys<DataError>(tj, {"id", "split", "profile"}, ctx);
    env::SoundTemplate t;
    t.id = get_req<DataError, int>(tj, "id", ctx);
    t.split = get_req<DataError, std::string>(tj, "split", ctx);
    t.profile = get_req<DataError, std::vector<double>>(tj, "profile", ctx);
    bank.templates.push_back(std::move(t));
  }
  bank.validate();
  return bank;
}

void save_suite(const Suite& suite, const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema"] = "dmtf.suite.v1";
  j["id"] = suite.id;
  j["split"] = suite.split;
  j["env"] = env_to_json(suite.env);
  nlohmann::json eps = nlohmann::json::array();
  for (const env::EpisodeSpec& e : suite.episodes) {
    eps.push_back({{"id", e.id},
                   {"map_seed", e.map_seed},
                   {"start",
                    {{"x", e.start.cell.x},
                     {"y", e.start.cell.y},
                     {"heading", env::heading_name(e.start.heading)}}},
                   {"source", {{"x", e.source.x}, {"y", e.source.y}}},
                   {"template_id", e.template_id},
                   {"max_steps", e.max_steps}});
  }
  j["episodes"] = std::move(eps);
  write_json_file(j, path);
}

Suite load_suite(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  const std::string ctx = "suite " + path.string();
  reject_unknown_keys<DataError>(j, {"schema", "id", "split", "env", "episodes"}, ctx);
  if (get_req<DataError, std::string>(j, "schema", ctx) != "dmtf.suite.v1") {
    throw DataError(ctx + ": unexpected schema");
  }
  Suite s;
  s.id = get_req<DataError, std::string>(j, "id", ctx);
  s.split = get_req<DataError, std::string>(j, "split", ctx);
  if (s.split != "train" && s.split != "heard" && s.split != "unheard") {
    throw DataError(ctx + ": bad split '" + s.split + "'");
  }
  s.env = env_from_json(j.at("env"), ctx + " env");
  for (const auto& ej : j.at("episodes")) {
    reject_unknown_keys<DataError>(ej, {"id", "map_seed", "start", "source", "template_id", "max_steps"},
                                   ctx);
    env::EpisodeSpec e;
    e.id = get_req<DataError, int64_t>(ej, "id", ctx);
    e.map_seed = get_req<DataError, uint64_t>(ej, "map_seed", ctx);
    const auto& st = ej.at("start");
    reject_unknown_keys<DataError>(st, {"x", "y", "heading"}, ctx);
    e.start.cell.x = get_req<DataError, int>(st, "x", ctx);
    e.start.cell.y = get_req<DataError, int>(st, "y", ctx);
    e.start.heading = env::heading_from_name(get_req<DataError, std::string>(st, "heading", ctx));
    const auto& src = ej.at("source");
    reject_unknown_keys<DataError>(src, {"x", "y"}, ctx);
    e.source.x = get_req<DataError, int>(src, "x", ctx);
    e.source.y = get_req<DataError, int>(src, "y", ctx);
    e.template_id = get_req<DataError, int>(ej, "template_id", ctx);
    e.max_steps = get_req<DataError, int>(ej, "max_steps", ctx);
    s.episodes.push_back(e);
  }
  return s;
}

void validate_suite(const Suite& suite, const TemplateBank& bank) {
  suite.env.validate();
  if (suite.env.bands != bank.bands) {
    throw DataError("suite '" + suite.id + "': spectrogram bands do not match the template bank");
  }
  const std::string want_split = suite.split == "unheard" ? "unheard" : "heard";
  for (const env::EpisodeSpec& e : suite.episodes) {
    const std::string ep = "suite '" + suite.id + "' episode " + std::to_string(e.id);
    const env::SoundTemplate& t = bank.by_id(e.template_id);
    if (t.split != want_split) {
      throw ProtocolError(ep + ": template " + std::to_string(e.template_id) + " is '" + t.split +
                          "' but the suite split requires '" + want_split + "'");
    }
    if (e.max_steps <= 0) throw DataError(ep + ": max_steps must be positive");
    env::GridMap map = env::generate_map(e.map_seed, suite.env.width, suite.env.height,
                                         suite.env.density);
    if (!map.free_cell(e.start.cell)) throw DataError(ep + ": start cell occupied");
    if (!map.free_cell(e.source)) throw DataError(ep + ": source cell occupied");
    const auto d = env::geodesic_distance(map, e.start.cell, e.source);
    if (!d.has_value()) throw DataError(ep + ": source unreachable from start");
  }
}

namespace {

env::EpisodeSpec sample_episode(uint64_t seed, int64_t id, const env::EnvParams& params,
                                const std::vector<env::SoundTemplate>& pool, int min_geodesic,
                                int max_steps) {
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 256) throw DataError("suite generation: no valid episode found");
    Rng rng(mix_seed(seed, static_cast<uint64_t>(id), static_cast<uint64_t>(attempt)));
    env::EpisodeSpec e;
    e.id = id;
    e.map_seed = rng.next_u64();
    env::GridMap map = env::generate_map(e.map_seed, params.width, params.height, params.density);
    std::vector<env::Cell> frees;
    for (int y = 0; y < map.height; ++y)
      for (int x = 0; x < map.width; ++x)
        if (map.free_cell(x, y)) frees.push_back({x, y});
    if (frees.size() < 2) continue;
    e.start.cell = frees[rng.index(frees.size())];
    e.start.heading = static_cast<env::Heading>(rng.index(4));
    e.source = frees[rng.index(frees.size())];
    const auto d = env::geodesic_distance(map, e.start.cell, e.source);
    if (!d.has_value() || *d < min_geodesic) continue;
    e.template_id = pool[rng.index(pool.size())].id;
    e.max_steps = max_steps;
    return e;
  }
}

Suite make_suite(const std::string& id, const std::string& split, const env::EnvParams& params,
                 uint64_t seed, int episodes, const std::vector<env::SoundTemplate>& pool,
                 int min_geodesic, int max_steps) {
  if (pool.empty()) throw DataError("suite generation: empty template pool for " + id);
  Suite s;
  s.id = id;
  s.split = split;
  s.env = params;
  for (int64_t i = 0; i < episodes; ++i) {
    s.episodes.push_back(sample_episode(seed, i, params, pool, min_geodesic, max_steps));
  }
  return s;
}

}  // namespace

GeneratedSuites generate_suites(const SuiteGenConfig& cfg) {
  if (cfg.train_episodes <= 0 || cfg.eval_episodes <= 0) {
    throw ConfigError("generate_suites: episode counts must be positive");
  }
  if (cfg.min_geodesic < 1) throw ConfigError("generate_suites: min_geodesic must be >= 1");

  env::EnvParams params;
  params.width = cfg.width;
  params.height = cfg.height;
  params.density = cfg.density;
  params.image_h = cfg.image;
  params.image_w = cfg.image;
  params.image_c = 3;
  params.bands = cfg.bands;
  params.frames = cfg.frames;
  params.max_steps = cfg.max_steps;
  params.audio_noise = cfg.audio_noise;
  params.pointgoal = cfg.pointgoal;
  params.validate();

  GeneratedSuites out;
  out.bank = generate_templates(mix_seed(cfg.seed, 0x7e3aULL), cfg.template_count, cfg.bands,
                                cfg.unheard_fraction);
  const std::vector<env::SoundTemplate> heard = out.bank.by_split("heard");
  const std::vector<env::SoundTemplate> unheard = out.bank.by_split("unheard");
  if (heard.empty()) throw ConfigError("generate_suites: no heard templates left after the split");

  out.train = make_suite("train-" + std::to_string(cfg.seed), "train", params,
                         mix_seed(cfg.seed, 1), cfg.train_episodes, heard, cfg.min_geodesic,
                         cfg.max_steps);
  out.val_heard = make_suite("val-heard-" + std::to_string(cfg.seed), "heard", params,
                             mix_seed(cfg.seed, 2), cfg.eval_episodes, heard, cfg.min_geodesic,
                             cfg.max_steps);
  out.test_heard = make_suite("test-heard-" + std::to_string(cfg.seed), "heard", params,
                              mix_seed(cfg.seed, 3), cfg.eval_episodes, heard, cfg.min_geodesic,
                              cfg.max_steps);

  if (!unheard.empty()) {
    // geometry-matched: same episodes, templates remapped to the held-out split
    auto swap_templates = [&](const Suite& base, const std::string& id) {
      Suite s = base;
      s.id = id;
      s.split = "unheard";
      for (size_t i = 0; i < s.episodes.size(); ++i) {
        s.episodes[i].template_id = unheard[i % unheard.size()].id;
      }
      return s;
    };
    out.val_unheard = swap_templates(out.val_heard, "val-unheard-" + std::to_string(cfg.seed));
    out.test_unheard = swap_templates(out.test_heard, "test-unheard-" + std::to_string(cfg.seed));
  }
  return out;
}

}  // namespace dmtf::data
