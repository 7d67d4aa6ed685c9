#include "dmtf/metrics.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "dmtf/errors.hpp"
#include "dmtf/rng.hpp"
#include "json.hpp"

namespace dmtf::metrics {

namespace {

// contributions summed in sorted order so reports are invariant under
// episode reordering
double sorted_mean(std::vector<double> contributions) {
  std::sort(contributions.begin(), contributions.end());
  double total = 0.0;
  for (double c : contributions) total += c;
  return total / static_cast<double>(contributions.size());
}

void check_nonempty(const std::vector<env::EpisodeRecord>& records, const char* op) {
  if (records.empty()) throw std::invalid_argument(std::string(op) + ": empty record set");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

double success_rate(const std::vector<env::EpisodeRecord>& records) {
  check_nonempty(records, "success_rate");
  int64_t hits = 0;
  for (const env::EpisodeRecord& r : records) hits += r.success ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double spl(const std::vector<env::EpisodeRecord>& records) {
  check_nonempty(records, "spl");
  std::vector<double> contributions;
  for (const env::EpisodeRecord& r : records) {
    if (!r.success) {
      contributions.push_back(0.0);
      continue;
    }
    if (r.shortest_path <= 0) throw DataError("spl: successful episode with non-positive l");
    contributions.push_back(static_cast<double>(r.shortest_path) /
                            static_cast<double>(std::max(r.path_cells, r.shortest_path)));
  }
  return sorted_mean(std::move(contributions));
}

double sna(const std::vector<env::EpisodeRecord>& records) {
  check_nonempty(records, "sna");
  std::vector<double> contributions;
  for (const env::EpisodeRecord& r : records) {
    if (!r.success) {
      contributions.push_back(0.0);
      continue;
    }
    if (r.actions < 1) throw DataError("sna: successful episode with zero actions");
    contributions.push_back(1.0 / static_cast<double>(r.actions));
  }
  return sorted_mean(std::move(contributions));
}

double sna_normalized(const std::vector<env::EpisodeRecord>& records) {
  check_nonempty(records, "sna_normalized");
  std::vector<double> contributions;
  for (const env::EpisodeRecord& r : records) {
    if (!r.success) {
      contributions.push_back(0.0);
      continue;
    }
    if (r.actions < 1 || r.oracle_actions < 1) {
      throw DataError("sna_normalized: successful episode with bad action counts");
    }
    contributions.push_back(static_cast<double>(r.oracle_actions) /
                            static_cast<double>(std::max(r.actions, r.oracle_actions)));
  }
  return sorted_mean(std::move(contributions));
}

int worker_count(int configured) {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap <= 0) cap = 1;
  cap = std::min(cap, 8);
  if (const char* env_cap = std::getenv("DMTF_THREADS")) {
    const int parsed = std::atoi(env_cap);
    if (parsed > 0) cap = std::min(cap, parsed);
  }
  if (configured > 0) cap = std::min(cap, configured);
  return std::max(1, cap);
}

namespace {

struct TrajectoryRow {
  int64_t episode;
  int t;
  env::Pose pose;
  env::Action action;
  double reward;
  int geodesic;
  double w_vis;
  double w_aud;
  bool done;
};

struct AttentionRow {
  int64_t episode;
  int t;
  int layer;
  int head;
  int slot;
  std::vector<double> weights;
  int boundary;
};

struct EpisodeOutput {
  env::EpisodeRecord record;
  std::vector<TrajectoryRow> trajectory;
  std::vector<AttentionRow> attention;
};

// policy: 0 greedy model, 1 random, 2 oracle
struct EvalTask {
  const net::Model* model = nullptr;
  int policy = 0;
  uint64_t seed = 0;
  bool capture = false;
};

EpisodeOutput run_episode(env::Environment& environment, const env::EpisodeSpec& spec,
                          const EvalTask& task) {
  EpisodeOutput out;
  env::Observation obs = environment.reset(spec);
  nd::Tensor h;
  if (task.policy == 0) h = task.model->initial_state();
  Rng rng(mix_seed(task.seed, static_cast<uint64_t>(spec.id), 0xe7a1ULL));
  int t = 0;
  while (!environment.done()) {
    env::Action action;
    double w_vis = 0.0, w_aud = 0.0;
    net::ForwardResult fwd;
    if (task.policy == 0) {
      fwd = task.model->forward(obs, h, task.capture);
      const auto& probs = fwd.probs.data();
      action = static_cast<env::Action>(
          std::max_element(probs.begin(), probs.end()) - probs.begin());
      h = fwd.state;
      w_vis = fwd.aux.w_visual;
      w_aud = fwd.aux.w_audio;
    } else if (task.policy == 1) {
      action = static_cast<env::Action>(rng.index(env::kNumActions));
    } else {
      const env::OracleResult oracle = environment.oracle();
      action = oracle.optimal_first.front();
    }
    const env::Pose pose_before = environment.pose();
    env::StepResult step = environment.step(action);
    if (task.capture && task.policy == 0) {
      for (const net::AttnRecord& rec : fwd.aux.attention) {
        if (rec.stage != net::AttnStage::DecoderCross) continue;
        for (int slot = 0; slot < rec.rows; ++slot) {
          AttentionRow row;
          row.episode = spec.id;
          row.t = t;
          row.layer = rec.layer;
          row.head = rec.head;
          row.slot = slot;
          row.boundary = fwd.aux.boundary;
          row.weights.assign(rec.weights.begin() + static_cast<size_t>(slot) * rec.cols,
                             rec.weights.begin() + static_cast<size_t>(slot + 1) * rec.cols);
          out.attention.push_back(std::move(row));
        }
      }
      out.trajectory.push_back({spec.id, t, pose_before, action, step.reward,
                                step.info.geodesic_distance, w_vis, w_aud, step.done});
    }
    obs = std::move(step.observation);
    ++t;
  }
  out.record = environment.record();
  return out;
}

MetricsReport evaluate_common(const data::Suite& suite, const data::TemplateBank& bank,
                              const EvalTask& task, const EvalOptions& opts) {
  if (suite.episodes.empty()) throw std::invalid_argument("evaluate: empty suite");
  // split contract: unheard suites may only reference unheard templates
  const std::string want = suite.split == "unheard" ? "unheard" : "heard";
  for (const env::EpisodeSpec& e : suite.episodes) {
    if (bank.by_id(e.template_id).split != want) {
      throw ProtocolError("evaluate: suite '" + suite.id + "' episode " + std::to_string(e.id) +
                          " violates the " + want + " split");
    }
  }

  const int workers = worker_count(opts.workers);
  std::vector<EpisodeOutput> outputs(suite.episodes.size());
  auto run_range = [&](int worker_id) {
    env::Environment environment(suite.env, bank.templates);
    for (size_t i = worker_id; i < suite.episodes.size(); i += workers) {
      outputs[i] = run_episode(environment, suite.episodes[i], task);
    }
  };
  if (workers == 1) {
    run_range(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run_range, w);
    for (std::thread& t : pool) t.join();
  }

  MetricsReport report;
  report.suite_id = suite.id;
  report.split = suite.split;
  if (task.policy == 0) report.ablation = task.model->config().ablation_name();
  for (size_t i = 0; i < outputs.size(); ++i) {
    report.episode_ids.push_back(suite.episodes[i].id);
    report.records.push_back(outputs[i].record);
  }
  report.sr = success_rate(report.records);
  report.spl = spl(report.records);
  report.sna = sna(report.records);
  report.sna_normalized = sna_normalized(report.records);

  if (opts.dump_trajectories) {
    std::ofstream out(opts.trajectory_path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + opts.trajectory_path.string());
    for (const EpisodeOutput& eo : outputs) {
      for (const TrajectoryRow& row : eo.trajectory) {
        nlohmann::json j{{"episode", row.episode},
                         {"t", row.t},
                         {"pose",
                          {{"x", row.pose.cell.x},
                           {"y", row.pose.cell.y},
                           {"heading", env::heading_name(row.pose.heading)}}},
                         {"action", env::action_name(row.action)},
                         {"reward", row.reward},
                         {"geodesic", row.geodesic},
                         {"w_vis", row.w_vis},
                         {"w_aud", row.w_aud},
                         {"done", row.done}};
        out << j.dump() << "\n";
      }
    }
  }
  if (opts.dump_attention) {
    std::ofstream out(opts.attention_path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + opts.attention_path.string());
    for (const EpisodeOutput& eo : outputs) {
      for (const AttentionRow& row : eo.attention) {
        nlohmann::json j{{"episode", row.episode}, {"t", row.t},           {"layer", row.layer},
                         {"head", row.head},       {"slot", row.slot},     {"weights", row.weights},
                         {"boundary", row.boundary}};
        out << j.dump() << "\n";
      }
    }
  }
  return report;
}

}  // namespace

MetricsReport evaluate_model(const net::Model& model, const data::Suite& suite,
                             const data::TemplateBank& bank, const EvalOptions& opts) {
  EvalTask task;
  task.model = &model;
  task.policy = 0;
  task.capture = opts.dump_attention || opts.dump_trajectories;
  return evaluate_common(suite, bank, task, opts);
}

MetricsReport evaluate_random(const data::Suite& suite, const data::TemplateBank& bank,
                              uint64_t seed) {
  EvalTask task;
  task.policy = 1;
  task.seed = seed;
  MetricsReport report = evaluate_common(suite, bank, task, {});
  report.ablation = "random";
  return report;
}

MetricsReport evaluate_oracle(const data::Suite& suite, const data::TemplateBank& bank) {
  EvalTask task;
  task.policy = 2;
  MetricsReport report = evaluate_common(suite, bank, task, {});
  report.ablation = "oracle";
  return report;
}

void write_report(const MetricsReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path) {
  {
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + csv_path.string());
    out << "episode_id,S,l,p,a,return\n";
    for (size_t i = 0; i < report.records.size(); ++i) {
      const env::EpisodeRecord& r = report.records[i];
      out << report.episode_ids[i] << "," << (r.success ? 1 : 0) << "," << r.shortest_path << ","
          << r.path_cells << "," << r.actions << "," << fmt_double(r.undiscounted_return) << "\n";
    }
  }
  {
    nlohmann::json j{{"sr", report.sr},
                     {"spl", report.spl},
                     {"sna", report.sna},
                     {"sna_normalized", report.sna_normalized},
                     {"split", report.split},
                     {"ablation", report.ablation},
                     {"suite", report.suite_id},
                     {"episodes", report.records.size()}};
    std::ofstream out(json_path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + json_path.string());
    out << j.dump(2) << "\n";
  }
}

}  // namespace dmtf::metrics
