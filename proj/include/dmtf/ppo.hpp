#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmtf/matching.hpp"
#include "dmtf/metrics.hpp"
#include "dmtf/model.hpp"
#include "dmtf/optim.hpp"
#include "dmtf/suite.hpp"
#include "json.hpp"

namespace dmtf::ppo {

struct PPOConfig {
  int updates = 100;
  int episodes_per_update = 16;
  int horizon = 500;  // per-episode step cap during collection
  int epochs = 4;
  int minibatch_episodes = 4;
  double clip = 0.1;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double lr = 1e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double lambda_match = 0.1;
  int eval_every = 10;
  int checkpoint_every = 50;
  double early_stop_sr = -1.0;  // stop once validation SR reaches this; < 0 disables
  int64_t max_env_steps = 0;    // 0 = unlimited
  int workers = 0;              // 0 = auto
  uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static PPOConfig from_json(const nlohmann::json& j);
};

struct StepSample {
  env::Observation obs;
  int action = 0;
  double reward = 0.0;
  double value = 0.0;  // V(s_t) under the rollout snapshot
  double logp = 0.0;   // log pi_old(a_t | s_t)
  std::vector<match::GroundTruthItem> gt;
};

struct EpisodeTraj {
  env::EpisodeSpec spec;
  std::vector<StepSample> steps;
  bool terminal = false;         // ended by Stop; truncations bootstrap instead
  double bootstrap_value = 0.0;  // V(s_T) at truncation, 0 at termination
  double reward_sum = 0.0;
};

struct RolloutBuffer {
  std::vector<EpisodeTraj> episodes;

  int64_t total_steps() const;
  double total_reward() const;
  double mean_return() const;
};

// N episodes sampled from the train suite with derived per-episode seeds.
// Trajectories depend only on (seed, update_index, episode slot), never on
// the worker count; results assemble in slot order.
RolloutBuffer collect_rollouts(const net::Model& snapshot, const data::Suite& suite,
                               const data::TemplateBank& bank, const PPOConfig& cfg,
                               int update_index);

struct Advantages {
  std::vector<std::vector<double>> adv;  // [episode][step]
  std::vector<std::vector<double>> ret;  // return targets R_t = A_t + V_t
};

Advantages compute_gae(const RolloutBuffer& buffer, double gamma, double lambda);

// zero mean / unit variance across the whole update batch
void normalize_advantages(Advantages& adv);

struct UpdateReport {
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double matching_loss = 0.0;
  double match_mean_cost = 0.0;
  double match_empty_frac = 0.0;
  int minibatches = 0;
};

// Clipped-surrogate PPO epochs over episode minibatches. Recurrent states are
// recomputed by re-running the policy over each stored episode; one Adam step
// per minibatch. Throws NumericError on a non-finite loss.
UpdateReport ppo_update(net::Model& model, nd::Adam& optimizer, const RolloutBuffer& buffer,
                        const Advantages& advantages, const PPOConfig& cfg, int update_index);

struct TrainSetup {
  net::ModelConfig model;
  PPOConfig ppo;
  data::TemplateBank bank;
  data::Suite train_suite;
  data::Suite val_heard;
  std::optional<data::Suite> val_unheard;
  std::filesystem::path out_dir;
};

struct TrainResult {
  std::filesystem::path manifest_path;  // final checkpoint
  std::filesystem::path weights_path;
  int updates_run = 0;
  int64_t env_steps = 0;
  double last_sr_val = 0.0;
};

// Algorithm: for each update, collect -> advantage estimation -> clipped
// update; periodic checkpoints and validation metrics land in out_dir
// (metrics.csv, ckpt_NNNNNN.{manifest.json,bin} plus optimizer state).
// resume_stem re-loads ckpt_NNNNNN and continues seamlessly.
TrainResult train(const TrainSetup& setup,
                  const std::optional<std::filesystem::path>& resume_stem = std::nullopt);

}  // namespace dmtf::ppo
