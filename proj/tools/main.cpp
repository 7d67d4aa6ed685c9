// dmtf command-line tool: suite generation, training, evaluation, ablation
// sweeps and artifact validation.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dmtf/checkpoint.hpp"
#include "dmtf/config.hpp"
#include "dmtf/errors.hpp"
#include "dmtf/metrics.hpp"
#include "dmtf/model.hpp"
#include "dmtf/ppo.hpp"
#include "dmtf/suite.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace dmtf;

namespace {

int run_guarded(const std::function<void()>& fn) {
  try {
    fn();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

// ---- gen-suite ---------------------------------------------------------------

struct GenArgs {
  uint64_t seed = 1;
  int count = 8;
  int size = 16;
  double density = 0.2;
  double split_fraction = 0.25;
  std::string out;
  int episodes = 200;
  int eval_episodes = 60;
  int image = 64;
  int bands = 64;
  int frames = 64;
  int max_steps = 500;
  int min_geo = 2;
  double noise = 0.01;
  bool force = false;
};

void cmd_gen_suite(const GenArgs& args) {
  data::SuiteGenConfig cfg;
  cfg.seed = args.seed;
  cfg.template_count = args.count;
  cfg.unheard_fraction = args.split_fraction;
  cfg.train_episodes = args.episodes;
  cfg.eval_episodes = args.eval_episodes;
  cfg.width = args.size;
  cfg.height = args.size;
  cfg.density = args.density;
  cfg.image = args.image;
  cfg.bands = args.bands;
  cfg.frames = args.frames;
  cfg.max_steps = args.max_steps;
  cfg.min_geodesic = args.min_geo;
  cfg.audio_noise = args.noise;

  const fs::path out(args.out);
  fs::create_directories(out);
  const auto target = [&](const char* name) {
    const fs::path p = out / name;
    if (!args.force && fs::exists(p)) {
      throw DataError("refusing to overwrite " + p.string() + " (use --force)");
    }
    return p;
  };
  const fs::path templates_path = target("templates.json");
  const fs::path train_path = target("train.json");
  const fs::path val_heard_path = target("val_heard.json");
  const fs::path test_heard_path = target("test_heard.json");
  const fs::path val_unheard_path = target("val_unheard.json");
  const fs::path test_unheard_path = target("test_unheard.json");

  data::GeneratedSuites suites = data::generate_suites(cfg);
  // every generated episode must survive a full re-validation
  data::validate_suite(suites.train, suites.bank);
  data::validate_suite(suites.val_heard, suites.bank);
  data::validate_suite(suites.test_heard, suites.bank);

  data::save_templates(suites.bank, templates_path);
  data::save_suite(suites.train, train_path);
  data::save_suite(suites.val_heard, val_heard_path);
  data::save_suite(suites.test_heard, test_heard_path);
  if (suites.val_unheard) {
    data::validate_suite(*suites.val_unheard, suites.bank);
    data::validate_suite(*suites.test_unheard, suites.bank);
    data::save_suite(*suites.val_unheard, val_unheard_path);
    data::save_suite(*suites.test_unheard, test_unheard_path);
  }
  int heard = 0, unheard = 0;
  for (const env::SoundTemplate& t : suites.bank.templates) {
    (t.split == "heard" ? heard : unheard)++;
  }
  std::cerr << "wrote suites to " << out << " (" << heard << " heard / " << unheard
            << " unheard templates)\n";
}

// ---- train --------------------------------------------------------------------

ppo::TrainSetup make_setup(const config::RunConfig& cfg, const fs::path& out_dir) {
  ppo::TrainSetup setup;
  setup.model = cfg.model;
  setup.ppo = cfg.ppo;
  setup.bank = data::load_templates(cfg.templates);
  setup.train_suite = data::load_suite(cfg.train_suite);
  setup.val_heard = data::load_suite(cfg.val_heard);
  if (cfg.val_unheard) setup.val_unheard = data::load_suite(*cfg.val_unheard);
  setup.out_dir = out_dir;
  return setup;
}

void apply_ablation(net::ModelConfig& model, const std::string& name) {
  model.no_pe = false;
  model.no_mti = false;
  model.no_ensa = false;
  if (name == "none") return;
  if (name == "no-pe") {
    model.no_pe = true;
  } else if (name == "no-mti") {
    model.no_mti = true;
  } else if (name == "no-ensa") {
    model.no_ensa = true;
  } else {
    throw ConfigError("unknown ablation '" + name + "'");
  }
}

void cmd_train(const std::string& config_path, const std::string& out,
               const std::string& ablation, const std::string& resume) {
  config::RunConfig cfg = config::load_run_config(config_path);
  if (!ablation.empty()) apply_ablation(cfg.model, ablation);
  ppo::TrainSetup setup = make_setup(cfg, out);
  std::optional<fs::path> resume_stem;
  if (!resume.empty()) resume_stem = fs::path(resume);
  ppo::TrainResult result = ppo::train(setup, resume_stem);
  std::cerr << "finished after " << result.updates_run << " updates, " << result.env_steps
            << " env steps; final checkpoint " << result.manifest_path << "\n";
}

// ---- eval ---------------------------------------------------------------------

fs::path checkpoint_stem(std::string given) {
  const std::string manifest_suffix = ".manifest.json";
  if (given.size() > manifest_suffix.size() &&
      given.compare(given.size() - manifest_suffix.size(), manifest_suffix.size(),
                    manifest_suffix) == 0) {
    given.resize(given.size() - manifest_suffix.size());
  }
  return fs::path(given);
}

net::Model load_model(const fs::path& stem) {
  const fs::path manifest_path = stem.string() + ".manifest.json";
  const fs::path weights_path = stem.string() + ".bin";
  const nlohmann::json manifest = nd::read_manifest(manifest_path);
  if (!manifest.contains("config")) {
    throw DataError("checkpoint manifest lacks a model config: " + manifest_path.string());
  }
  net::ModelConfig model_cfg = net::ModelConfig::from_json(manifest.at("config"));
  net::Model model(model_cfg, 0);
  nd::load_checkpoint(manifest_path, weights_path, model.params());
  return model;
}

void check_eval_compat(const net::ModelConfig& m, const data::Suite& suite) {
  const env::EnvParams& e = suite.env;
  if (e.image_h != m.image_h || e.image_w != m.image_w || e.image_c != m.image_c ||
      e.bands != m.bands || e.frames != m.frames || e.pointgoal != m.pointgoal) {
    throw DataError("suite '" + suite.id + "' observations do not match the checkpoint model");
  }
}

void cmd_eval(const std::string& checkpoint, const std::string& suite_path,
              const std::string& templates_path, const std::string& split, const std::string& out,
              bool dump_attention, bool dump_trajectories, int workers) {
  const fs::path stem = checkpoint_stem(checkpoint);
  net::Model model = load_model(stem);
  data::TemplateBank bank = data::load_templates(templates_path);
  data::Suite suite = data::load_suite(suite_path);
  if (!split.empty() && split != suite.split) {
    throw ProtocolError("suite '" + suite.id + "' is split '" + suite.split + "', expected '" +
                        split + "'");
  }
  check_eval_compat(model.config(), suite);

  const fs::path out_dir(out);
  fs::create_directories(out_dir);
  metrics::EvalOptions opts;
  opts.workers = workers;
  opts.dump_attention = dump_attention;
  opts.dump_trajectories = dump_trajectories;
  opts.attention_path = out_dir / "attention.jsonl";
  opts.trajectory_path = out_dir / "trajectories.jsonl";
  metrics::MetricsReport report = metrics::evaluate_model(model, suite, bank, opts);
  metrics::write_report(report, out_dir / "report.csv", out_dir / "report.json");
  std::cerr << "suite " << report.suite_id << " (" << report.split << "): sr " << report.sr
            << " spl " << report.spl << " sna " << report.sna << "\n";
}

// ---- ablate -------------------------------------------------------------------

void cmd_ablate(const std::string& config_path, const std::string& out) {
  config::RunConfig cfg = config::load_run_config(config_path);
  if (!cfg.val_unheard.has_value()) {
    throw ConfigError("ablate needs data.val_unheard for the heard/unheard comparison");
  }
  const fs::path out_dir(out);
  fs::create_directories(out_dir);

  struct Variant {
    const char* flag;   // CLI ablation name
    const char* label;  // table row label
  };
  const Variant variants[] = {
      {"none", "dmtf"}, {"no-mti", "no_mti"}, {"no-pe", "no_pe"}, {"no-ensa", "no_ensa"}};

  nlohmann::json summary;
  summary["seed"] = cfg.seed;
  summary["suites"] = {{"val_heard", cfg.val_heard.string()},
                       {"val_unheard", cfg.val_unheard->string()}};
  std::ofstream table(out_dir / "ablation.csv", std::ios::trunc);
  table << "variant,sna_heard,sr_heard,spl_heard,sna_unheard,sr_unheard,spl_unheard\n";

  for (const Variant& variant : variants) {
    nlohmann::json entry;
    try {
      config::RunConfig run_cfg = cfg;  // shared seeds across variants
      apply_ablation(run_cfg.model, variant.flag);
      ppo::TrainSetup setup = make_setup(run_cfg, out_dir / variant.label);
      ppo::TrainResult result = ppo::train(setup);
      net::Model model = load_model(checkpoint_stem(result.manifest_path.string()));
      metrics::MetricsReport heard =
          metrics::evaluate_model(model, setup.val_heard, setup.bank);
      metrics::MetricsReport unheard =
          metrics::evaluate_model(model, *setup.val_unheard, setup.bank);
      table << variant.label << "," << heard.sna << "," << heard.sr << "," << heard.spl << ","
            << unheard.sna << "," << unheard.sr << "," << unheard.spl << "\n";
      entry["status"] = "ok";
      entry["heard"] = {{"sna", heard.sna}, {"sr", heard.sr}, {"spl", heard.spl}};
      entry["unheard"] = {{"sna", unheard.sna}, {"sr", unheard.sr}, {"spl", unheard.spl}};
    } catch (const std::exception& e) {
      // isolate per-run failures; the partial table still gets emitted
      std::cerr << "ablation variant " << variant.label << " failed: " << e.what() << "\n";
      table << variant.label << ",,,,,\n";
      entry["status"] = "failed";
      entry["error"] = e.what();
    }
    table.flush();
    summary["variants"][variant.label] = std::move(entry);
  }
  std::ofstream js(out_dir / "ablation.json", std::ios::trunc);
  js << summary.dump(2) << "\n";
}

// ---- validate -----------------------------------------------------------------

void validate_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  int64_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": bad JSONL row: " + e.what());
    }
    if (j.contains("weights")) {
      double sum = 0.0;
      for (double w : j.at("weights").get<std::vector<double>>()) sum += w;
      if (std::fabs(sum - 1.0) > 1e-6) {
        throw DataError(path.string() + ": attention row does not sum to 1");
      }
    }
    if (j.contains("w_vis")) {
      const double wv = j.at("w_vis").get<double>();
      const double wa = j.at("w_aud").get<double>();
      if (wv + wa != 1.0) throw DataError(path.string() + ": w_vis + w_aud != 1");
    }
    ++rows;
  }
  std::cerr << path.string() << ": " << rows << " rows ok\n";
}

void cmd_validate(const std::string& file, const std::string& templates_path) {
  const fs::path path(file);
  const std::string ext = path.extension().string();
  if (ext == ".jsonl") {
    validate_jsonl(path);
    return;
  }
  if (ext == ".csv") {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string header;
    std::getline(in, header);
    if (header != "episode_id,S,l,p,a,return" &&
        header.rfind("update,env_steps,", 0) != 0 && header.rfind("variant,", 0) != 0) {
      throw DataError(path.string() + ": unrecognized CSV header");
    }
    std::cerr << path.string() << ": header ok\n";
    return;
  }
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  const std::string schema = j.value("schema", "");
  if (schema == "dmtf.templates.v1") {
    data::load_templates(path);
    std::cerr << path.string() << ": templates ok\n";
  } else if (schema == "dmtf.suite.v1") {
    data::Suite suite = data::load_suite(path);
    if (templates_path.empty()) {
      throw ConfigError("suite validation needs --templates for the split check");
    }
    data::validate_suite(suite, data::load_templates(templates_path));
    std::cerr << path.string() << ": suite ok (" << suite.episodes.size() << " episodes)\n";
  } else if (j.value("format", "") == "dmtf.checkpoint.v1") {
    const nlohmann::json manifest = nd::read_manifest(path);
    if (manifest.contains("config") && manifest.at("config").contains("d_m")) {
      net::ModelConfig::from_json(manifest.at("config"));
    }
    std::cerr << path.string() << ": checkpoint manifest ok ("
              << manifest.at("tensors").size() << " tensors)\n";
  } else if (j.contains("sr")) {
    const double sr = j.at("sr").get<double>();
    if (j.at("spl").get<double>() > sr + 1e-12 || j.at("sna").get<double>() > sr + 1e-12) {
      throw DataError(path.string() + ": SPL/SNA exceed SR");
    }
    std::cerr << path.string() << ": report ok\n";
  } else {
    throw DataError(path.string() + ": unrecognized artifact");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dmtf: desk-scale audio-visual navigation lab"};
  app.require_subcommand(1);
  std::function<void()> selected;

  // gen-suite
  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-suite", "generate episode suites and templates");
  gen_cmd->add_option("--seed", gen.seed, "master seed")->required();
  gen_cmd->add_option("--count", gen.count, "number of sound templates");
  gen_cmd->add_option("--size", gen.size, "grid width and height");
  gen_cmd->add_option("--density", gen.density, "obstacle density in [0, 0.4]");
  gen_cmd->add_option("--split-fraction", gen.split_fraction, "fraction of unheard templates");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--episodes", gen.episodes, "training episodes");
  gen_cmd->add_option("--eval-episodes", gen.eval_episodes, "episodes per eval suite");
  gen_cmd->add_option("--image", gen.image, "visual observation size");
  gen_cmd->add_option("--bands", gen.bands, "spectrogram bands");
  gen_cmd->add_option("--frames", gen.frames, "spectrogram frames");
  gen_cmd->add_option("--max-steps", gen.max_steps, "episode step budget");
  gen_cmd->add_option("--min-geo", gen.min_geo, "minimum start-source geodesic");
  gen_cmd->add_option("--noise", gen.noise, "audio noise magnitude");
  gen_cmd->add_flag("--force", gen.force, "overwrite existing files");
  gen_cmd->callback([&] { selected = [&] { cmd_gen_suite(gen); }; });

  // train
  std::string train_config, train_out, train_ablation, train_resume;
  CLI::App* train_cmd = app.add_subcommand("train", "train a policy");
  train_cmd->add_option("--config", train_config, "run config JSON")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--ablation", train_ablation, "none|no-pe|no-mti|no-ensa");
  train_cmd->add_option("--resume", train_resume, "checkpoint stem to resume from");
  train_cmd->callback(
      [&] { selected = [&] { cmd_train(train_config, train_out, train_ablation, train_resume); }; });

  // eval
  std::string eval_ckpt, eval_suite, eval_templates, eval_split, eval_out;
  bool eval_dump_attn = false, eval_dump_traj = false;
  int eval_workers = 0;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a suite");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint stem or manifest path")->required();
  eval_cmd->add_option("--suite", eval_suite, "suite JSON")->required();
  eval_cmd->add_option("--templates", eval_templates, "template bank JSON")->required();
  eval_cmd->add_option("--split", eval_split, "expected split (heard|unheard)");
  eval_cmd->add_option("--out", eval_out, "output directory")->required();
  eval_cmd->add_flag("--dump-attention", eval_dump_attn, "write attention.jsonl");
  eval_cmd->add_flag("--dump-trajectories", eval_dump_traj, "write trajectories.jsonl");
  eval_cmd->add_option("--workers", eval_workers, "worker cap");
  eval_cmd->callback([&] {
    selected = [&] {
      cmd_eval(eval_ckpt, eval_suite, eval_templates, eval_split, eval_out, eval_dump_attn,
               eval_dump_traj, eval_workers);
    };
  });

  // ablate
  std::string ablate_config, ablate_out;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "train and compare ablation variants");
  ablate_cmd->add_option("--config", ablate_config, "run config JSON")->required();
  ablate_cmd->add_option("--out", ablate_out, "output directory")->required();
  ablate_cmd->callback([&] { selected = [&] { cmd_ablate(ablate_config, ablate_out); }; });

  // validate
  std::string validate_file, validate_templates;
  CLI::App* validate_cmd = app.add_subcommand("validate", "re-check any emitted artifact");
  validate_cmd->add_option("--file", validate_file, "artifact path")->required();
  validate_cmd->add_option("--templates", validate_templates, "template bank for suite checks");
  validate_cmd->callback(
      [&] { selected = [&] { cmd_validate(validate_file, validate_templates); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return run_guarded(selected);
}
