#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dmtf/gridworld.hpp"
#include "dmtf/model.hpp"
#include "dmtf/suite.hpp"

namespace dmtf::metrics {

// SR = mean success; SPL = mean S * l / max(p, l); SNA = mean S * 1/a.
// sna_normalized additionally reports S * a* / max(a, a*) with a* the oracle
// action count, for comparability with path-normalized conventions.
double success_rate(const std::vector<env::EpisodeRecord>& records);
double spl(const std::vector<env::EpisodeRecord>& records);
double sna(const std::vector<env::EpisodeRecord>& records);
double sna_normalized(const std::vector<env::EpisodeRecord>& records);

struct MetricsReport {
  double sr = 0.0;
  double spl = 0.0;
  double sna = 0.0;
  double sna_normalized = 0.0;
  std::string suite_id;
  std::string split;
  std::string ablation = "none";
  std::vector<int64_t> episode_ids;
  std::vector<env::EpisodeRecord> records;
};

struct EvalOptions {
  bool dump_attention = false;
  bool dump_trajectories = false;
  std::filesystem::path attention_path;
  std::filesystem::path trajectory_path;
  int workers = 0;  // 0 = auto (capped by DMTF_THREADS)
};

// Greedy (argmax) evaluation of a trained policy over a suite. Episodes run
// in parallel across environment instances; records assemble in episode
// order, so reports are identical for any worker count.
MetricsReport evaluate_model(const net::Model& model, const data::Suite& suite,
                             const data::TemplateBank& bank, const EvalOptions& opts = {});

// Uniform-random action baseline.
MetricsReport evaluate_random(const data::Suite& suite, const data::TemplateBank& bank,
                              uint64_t seed);

// Scripted optimal agent driven by the first-action oracle.
MetricsReport evaluate_oracle(const data::Suite& suite, const data::TemplateBank& bank);

void write_report(const MetricsReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path);

// worker cap: configured value, hardware concurrency, and the DMTF_THREADS
// environment variable, whichever is smallest (at least 1)
int worker_count(int configured);

}  // namespace dmtf::metrics
