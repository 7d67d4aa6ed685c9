#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmtf/gridworld.hpp"

namespace dmtf::data {

struct TemplateBank {
  int bands = 64;
  std::vector<env::SoundTemplate> templates;

  const env::SoundTemplate& by_id(int id) const;
  std::vector<env::SoundTemplate> by_split(const std::string& split) const;
  void validate() const;
};

// Sparse random band profiles, unit-max normalized. The trailing
// round(count * unheard_fraction) ids form the held-out "unheard" split.
TemplateBank generate_templates(uint64_t seed, int count, int bands, double unheard_fraction);

struct Suite {
  std::string id;
  std::string split;  // "train" | "heard" | "unheard"
  env::EnvParams env;
  std::vector<env::EpisodeSpec> episodes;
};

void save_templates(const TemplateBank& bank, const std::filesystem::path& path);
TemplateBank load_templates(const std::filesystem::path& path);
void save_suite(const Suite& suite, const std::filesystem::path& path);
Suite load_suite(const std::filesystem::path& path);

// Re-checks every episode (free cells, reachability) and the split contract
// (train/heard suites reference only heard templates, unheard only unheard).
void validate_suite(const Suite& suite, const TemplateBank& bank);

struct SuiteGenConfig {
  uint64_t seed = 1;
  int template_count = 8;
  double unheard_fraction = 0.25;
  int train_episodes = 200;
  int eval_episodes = 60;
  int width = 16;
  int height = 16;
  double density = 0.2;
  int image = 64;  // square visual observations
  int bands = 64;
  int frames = 64;
  int max_steps = 500;
  int min_geodesic = 2;
  double audio_noise = 0.01;
  bool pointgoal = false;
};

struct GeneratedSuites {
  TemplateBank bank;
  Suite train;
  Suite val_heard;
  Suite test_heard;
  std::optional<Suite> val_unheard;  // absent when there are no unheard templates
  std::optional<Suite> test_unheard;
};

// Deterministic in the seed. The unheard eval suites reuse the heard eval
// episodes (same maps, starts, sources) with templates swapped to the
// held-out split, so heard/unheard comparisons are geometry-matched.
GeneratedSuites generate_suites(const SuiteGenConfig& cfg);

}  // namespace dmtf::data
