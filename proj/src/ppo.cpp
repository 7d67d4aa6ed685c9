#include "dmtf/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include "dmtf/checkpoint.hpp"
#include "dmtf/errors.hpp"
#include "dmtf/json_util.hpp"
#include "dmtf/rng.hpp"

namespace dmtf::ppo {

using nd::Tensor;

void PPOConfig::validate() const {
  if (updates <= 0 || episodes_per_update <= 0 || minibatch_episodes <= 0 || epochs <= 0) {
    throw ConfigError("ppo: counts must be positive");
  }
  if (horizon <= 0 || horizon > 500) throw ConfigError("ppo: horizon must be in [1, 500]");
  if (!(clip > 0.0)) throw ConfigError("ppo: clip must be positive");
  if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("ppo: gamma must be in (0, 1]");
  if (gae_lambda < 0.0 || gae_lambda > 1.0) throw ConfigError("ppo: gae_lambda must be in [0, 1]");
  if (!(lr > 0.0)) throw ConfigError("ppo: lr must be positive");
  if (value_coef < 0.0 || entropy_coef < 0.0 || lambda_match < 0.0) {
    throw ConfigError("ppo: loss coefficients must be non-negative");
  }
  if (eval_every <= 0 || checkpoint_every <= 0) throw ConfigError("ppo: bad cadence values");
  if (max_env_steps < 0) throw ConfigError("ppo: max_env_steps must be >= 0");
  if (workers < 0) throw ConfigError("ppo: workers must be >= 0");
}

nlohmann::json PPOConfig::to_json() const {
  return nlohmann::json{{"updates", updates},
                        {"episodes_per_update", episodes_per_update},
                        {"horizon", horizon},
                        {"epochs", epochs},
                        {"minibatch_episodes", minibatch_episodes},
                        {"clip", clip},
                        {"gamma", gamma},
                        {"gae_lambda", gae_lambda},
                        {"lr", lr},
                        {"value_coef", value_coef},
                        {"entropy_coef", entropy_coef},
                        {"lambda_match", lambda_match},
                        {"eval_every", eval_every},
                        {"checkpoint_every", checkpoint_every},
                        {"early_stop_sr", early_stop_sr},
                        {"max_env_steps", max_env_steps},
                        {"workers", workers},
                        {"seed", seed}};
}

PPOConfig PPOConfig::from_json(const nlohmann::json& j) {
  const std::string ctx = "ppo config";
  reject_unknown_keys<ConfigError>(
      j, {"updates", "episodes_per_update", "horizon", "epochs", "minibatch_episodes", "clip",
          "gamma", "gae_lambda", "lr", "value_coef", "entropy_coef", "lambda_match", "eval_every",
          "checkpoint_every", "early_stop_sr", "max_env_steps", "workers", "seed"},
      ctx);
  PPOConfig c;
  c.updates = get_or<ConfigError, int>(j, "updates", c.updates, ctx);
  c.episodes_per_update = get_or<ConfigError, int>(j, "episodes_per_update", c.episodes_per_update, ctx);
  c.horizon = get_or<ConfigError, int>(j, "horizon", c.horizon, ctx);
  c.epochs = get_or<ConfigError, int>(j, "epochs", c.epochs, ctx);
  c.minibatch_episodes = get_or<ConfigError, int>(j, "minibatch_episodes", c.minibatch_episodes, ctx);
  c.clip = get_or<ConfigError, double>(j, "clip", c.clip, ctx);
  c.gamma = get_or<ConfigError, double>(j, "gamma", c.gamma, ctx);
  c.gae_lambda = get_or<ConfigError, double>(j, "gae_lambda", c.gae_lambda, ctx);
  c.lr = get_or<ConfigError, double>(j, "lr", c.lr, ctx);
  c.value_coef = get_or<ConfigError, double>(j, "value_coef", c.value_coef, ctx);
  c.entropy_coef = get_or<ConfigError, double>(j, "entropy_coef", c.entropy_coef, ctx);
  c.lambda_match = get_or<ConfigError, double>(j, "lambda_match", c.lambda_match, ctx);
  c.eval_every = get_or<ConfigError, int>(j, "eval_every", c.eval_every, ctx);
  c.checkpoint_every = get_or<ConfigError, int>(j, "checkpoint_every", c.checkpoint_every, ctx);
  c.early_stop_sr = get_or<ConfigError, double>(j, "early_stop_sr", c.early_stop_sr, ctx);
  c.max_env_steps = get_or<ConfigError, int64_t>(j, "max_env_steps", c.max_env_steps, ctx);
  c.workers = get_or<ConfigError, int>(j, "workers", c.workers, ctx);
  c.seed = get_or<ConfigError, uint64_t>(j, "seed", c.seed, ctx);
  c.validate();
  return c;
}

int64_t RolloutBuffer::total_steps() const {
  int64_t n = 0;
  for (const EpisodeTraj& e : episodes) n += static_cast<int64_t>(e.steps.size());
  return n;
}

double RolloutBuffer::total_reward() const {
  double r = 0.0;
  for (const EpisodeTraj& e : episodes) r += e.reward_sum;
  return r;
}

double RolloutBuffer::mean_return() const {
  if (episodes.empty()) return 0.0;
  return total_reward() / static_cast<double>(episodes.size());
}

namespace {

int sample_action(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform01();
  double cum = 0.0;
  for (size_t a = 0; a < probs.size(); ++a) {
    cum += probs[a];
    if (u < cum) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size()) - 1;
}

EpisodeTraj run_rollout_episode(env::Environment& environment, const net::Model& snapshot,
                                const env::EpisodeSpec& spec, const PPOConfig& cfg,
                                uint64_t action_seed) {
  EpisodeTraj traj;
  traj.spec = spec;
  Rng rng(action_seed);
  env::Observation obs = environment.reset(spec);
  Tensor h = snapshot.initial_state();
  const double d_max = environment.modality_dmax();
  const int slots = snapshot.config().effective_targets();
  int t = 0;
  while (!environment.done() && t < cfg.horizon) {
    net::ForwardResult fwd = snapshot.forward(obs, h);
    StepSample sample;
    sample.obs = std::move(obs);
    sample.action = sample_action(fwd.probs.data(), rng);
    sample.logp = fwd.logp.data()[sample.action];
    sample.value = fwd.value.value();
    const env::OracleResult oracle = environment.oracle();
    sample.gt = match::build_gt_set(oracle.optimal_first, oracle.geodesic, d_max, slots);
    env::StepResult result = environment.step(static_cast<env::Action>(sample.action));
    sample.reward = result.reward;
    traj.reward_sum += result.reward;
    obs = std::move(result.observation);
    h = fwd.state;
    traj.steps.push_back(std::move(sample));
    ++t;
  }
  traj.terminal = environment.done() && !environment.truncated();
  if (traj.terminal) {
    traj.bootstrap_value = 0.0;
  } else {
    // horizon or budget truncation: bootstrap with the value of the next state
    net::ForwardResult fwd = snapshot.forward(obs, h);
    traj.bootstrap_value = fwd.value.value();
  }
  return traj;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

RolloutBuffer collect_rollouts(const net::Model& snapshot, const data::Suite& suite,
                               const data::TemplateBank& bank, const PPOConfig& cfg,
                               int update_index) {
  if (suite.episodes.empty()) throw DataError("collect_rollouts: empty train suite");
  const int n = cfg.episodes_per_update;
  RolloutBuffer buffer;
  buffer.episodes.resize(n);

  // episode picks and action streams depend only on (seed, update, slot)
  std::vector<env::EpisodeSpec> specs(n);
  std::vector<uint64_t> action_seeds(n);
  for (int i = 0; i < n; ++i) {
    Rng pick(mix_seed(cfg.seed, 0x3919ULL, static_cast<uint64_t>(update_index),
                      static_cast<uint64_t>(i)));
    specs[i] = suite.episodes[pick.index(suite.episodes.size())];
    action_seeds[i] = mix_seed(cfg.seed, 0xac70ULL, static_cast<uint64_t>(update_index),
                               static_cast<uint64_t>(i));
  }

  const int workers = std::min(metrics::worker_count(cfg.workers), n);
  auto run_range = [&](int worker_id) {
    env::Environment environment(suite.env, bank.templates);
    for (int i = worker_id; i < n; i += workers) {
      buffer.episodes[i] = run_rollout_episode(environment, snapshot, specs[i], cfg,
                                               action_seeds[i]);
    }
  };
  if (workers == 1) {
    run_range(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run_range, w);
    for (std::thread& t : pool) t.join();
  }
  return buffer;
}

Advantages compute_gae(const RolloutBuffer& buffer, double gamma, double lambda) {
  Advantages out;
  for (const EpisodeTraj& episode : buffer.episodes) {
    const size_t len = episode.steps.size();
    std::vector<double> adv(len, 0.0), ret(len, 0.0);
    double running = 0.0;
    for (size_t i = len; i-- > 0;) {
      const double v_next = i + 1 < len ? episode.steps[i + 1].value : episode.bootstrap_value;
      const double delta = episode.steps[i].reward + gamma * v_next - episode.steps[i].value;
      running = delta + gamma * lambda * running;
      adv[i] = running;
      ret[i] = running + episode.steps[i].value;
    }
    out.adv.push_back(std::move(adv));
    out.ret.push_back(std::move(ret));
  }
  return out;
}

void normalize_advantages(Advantages& advantages) {
  double sum = 0.0;
  int64_t count = 0;
  for (const auto& ep : advantages.adv) {
    for (double a : ep) {
      sum += a;
      ++count;
    }
  }
  if (count == 0) return;
  const double mean = sum / static_cast<double>(count);
  double var = 0.0;
  for (const auto& ep : advantages.adv) {
    for (double a : ep) var += (a - mean) * (a - mean);
  }
  const double std_dev = std::sqrt(var / static_cast<double>(count));
  for (auto& ep : advantages.adv) {
    for (double& a : ep) a = (a - mean) / (std_dev + 1e-8);
  }
}

UpdateReport ppo_update(net::Model& model, nd::Adam& optimizer, const RolloutBuffer& buffer,
                        const Advantages& advantages, const PPOConfig& cfg, int update_index) {
  if (buffer.episodes.empty()) throw DataError("ppo_update: empty rollout buffer");
  const int n_episodes = static_cast<int>(buffer.episodes.size());
  UpdateReport report;
  double cost_sum = 0.0, empty_sum = 0.0;
  int64_t match_calls = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(n_episodes);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(mix_seed(cfg.seed, 0x5affULL, static_cast<uint64_t>(update_index),
                         static_cast<uint64_t>(epoch)));
    for (int i = n_episodes - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle.index(static_cast<uint64_t>(i) + 1)]);
    }

    for (int chunk = 0; chunk < n_episodes; chunk += cfg.minibatch_episodes) {
      const int chunk_end = std::min(chunk + cfg.minibatch_episodes, n_episodes);
      model.zero_grad();
      nd::GradTape tape;
      Tensor surr_sum = Tensor::scalar(0.0);
      Tensor value_sum = Tensor::scalar(0.0);
      Tensor entropy_sum = Tensor::scalar(0.0);
      Tensor match_sum = Tensor::scalar(0.0);
      int64_t steps_in_mb = 0;

      for (int oi = chunk; oi < chunk_end; ++oi) {
        const int ei = order[oi];
        const EpisodeTraj& episode = buffer.episodes[ei];
        Tensor h = model.initial_state();  // hidden states recomputed, not stored stale
        for (size_t t = 0; t < episode.steps.size(); ++t) {
          const StepSample& sample = episode.steps[t];
          net::ForwardResult fwd = model.forward(sample.obs, h);
          h = fwd.state;

          Tensor logp_a = nd::select_element(fwd.logp, 0, sample.action);
          Tensor ratio = nd::exp_t(nd::add_scalar(logp_a, -sample.logp));
          Tensor clipped = nd::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
          const double adv = advantages.adv[ei][t];
          surr_sum = nd::add(surr_sum, nd::min_t(nd::scale(ratio, adv), nd::scale(clipped, adv)));

          Tensor v_err = nd::add_scalar(nd::select_element(fwd.value, 0, 0),
                                        -advantages.ret[ei][t]);
          value_sum = nd::add(value_sum, nd::mul(v_err, v_err));

          entropy_sum = nd::add(entropy_sum, nd::neg(nd::sum_all(nd::mul(fwd.probs, fwd.logp))));

          if (cfg.lambda_match > 0.0) {
            match::MatchingLoss ml =
                match::matching_loss(sample.gt, fwd.aux.class_logits, fwd.aux.slot_attn);
            match_sum = nd::add(match_sum, ml.loss);
            cost_sum += ml.match.total_cost;
            empty_sum += ml.empty_fraction;
            ++match_calls;
          }
          ++steps_in_mb;
        }
      }
      if (steps_in_mb == 0) continue;
      const double inv_n = 1.0 / static_cast<double>(steps_in_mb);
      Tensor loss = nd::add(
          nd::add(nd::scale(surr_sum, -inv_n), nd::scale(value_sum, cfg.value_coef * inv_n)),
          nd::scale(entropy_sum, -cfg.entropy_coef * inv_n));
      if (cfg.lambda_match > 0.0) {
        loss = nd::add(loss, nd::scale(match_sum, cfg.lambda_match * inv_n));
      }
      if (!std::isfinite(loss.value())) {
        throw NumericError("ppo_update: non-finite loss at update " +
                           std::to_string(update_index) + " epoch " + std::to_string(epoch) +
                           " (surrogate " + std::to_string(-surr_sum.value() * inv_n) +
                           ", value " + std::to_string(value_sum.value() * inv_n) + ")");
      }
      tape.backward(loss);
      optimizer.step();

      report.surrogate += -surr_sum.value() * inv_n;
      report.value_loss += value_sum.value() * inv_n;
      report.entropy += entropy_sum.value() * inv_n;
      if (cfg.lambda_match > 0.0) report.matching_loss += match_sum.value() * inv_n;
      ++report.minibatches;
    }
  }
  if (report.minibatches > 0) {
    report.surrogate /= report.minibatches;
    report.value_loss /= report.minibatches;
    report.entropy /= report.minibatches;
    report.matching_loss /= report.minibatches;
  }
  if (match_calls > 0) {
    report.match_mean_cost = cost_sum / static_cast<double>(match_calls);
    report.match_empty_frac = empty_sum / static_cast<double>(match_calls);
  }
  return report;
}

namespace {

void check_compatibility(const TrainSetup& setup) {
  const env::EnvParams& e = setup.train_suite.env;
  const net::ModelConfig& m = setup.model;
  if (e.image_h != m.image_h || e.image_w != m.image_w || e.image_c != m.image_c) {
    throw ConfigError("train: model image dims do not match the suite environment");
  }
  if (e.bands != m.bands || e.frames != m.frames) {
    throw ConfigError("train: model spectrogram dims do not match the suite environment");
  }
  if (e.pointgoal != m.pointgoal) {
    throw ConfigError("train: pointgoal flag differs between model and environment");
  }
  if (setup.train_suite.split != "train") {
    throw ProtocolError("train: training requires a suite with split 'train'");
  }
  // the heard/unheard contract: training must never see a held-out template
  for (const env::EpisodeSpec& ep : setup.train_suite.episodes) {
    if (setup.bank.by_id(ep.template_id).split != "heard") {
      throw ProtocolError("train: unheard template " + std::to_string(ep.template_id) +
                          " appears in the training suite");
    }
  }
}

std::string ckpt_stem(int update) {
  std::ostringstream os;
  os << "ckpt_" << std::setw(6) << std::setfill('0') << update;
  return os.str();
}

struct TrainState {
  int update = 0;
  int64_t env_steps = 0;
};

void save_train_checkpoint(const std::filesystem::path& dir, int update, const net::Model& model,
                           const nd::Adam& optimizer, int64_t env_steps) {
  const std::string stem = ckpt_stem(update);
  nd::save_checkpoint(dir / (stem + ".manifest.json"), dir / (stem + ".bin"), model.params(),
                      model.config().to_json());
  const std::vector<nd::NamedParam> state = optimizer.state_tensors();
  nd::save_checkpoint(dir / (stem + ".state.manifest.json"), dir / (stem + ".state.bin"), state,
                      nlohmann::json{{"update", update},
                                     {"env_steps", env_steps},
                                     {"adam_step", optimizer.step_count()}});
}

TrainState load_train_checkpoint(const std::filesystem::path& stem_path, net::Model& model,
                                 nd::Adam& optimizer) {
  const std::string stem = stem_path.string();
  nd::load_checkpoint(stem + ".manifest.json", stem + ".bin", model.params());
  std::vector<nd::NamedParam> moments;
  for (const nd::NamedParam& p : model.params()) {
    moments.push_back({p.name + ".m", nd::Tensor::zeros(p.value.shape())});
    moments.push_back({p.name + ".v", nd::Tensor::zeros(p.value.shape())});
  }
  nd::load_checkpoint(stem + ".state.manifest.json", stem + ".state.bin", moments);
  const nlohmann::json manifest = nd::read_manifest(stem + ".state.manifest.json");
  const nlohmann::json& meta = manifest.at("config");
  TrainState st;
  st.update = meta.at("update").get<int>();
  st.env_steps = meta.at("env_steps").get<int64_t>();
  optimizer.load_state(meta.at("adam_step").get<int64_t>(), moments);
  return st;
}

}  // namespace

TrainResult train(const TrainSetup& setup, const std::optional<std::filesystem::path>& resume_stem) {
  setup.ppo.validate();
  setup.model.validate();
  check_compatibility(setup);
  namespace fs = std::filesystem;
  fs::create_directories(setup.out_dir);

  net::Model model(setup.model, setup.ppo.seed);
  nd::AdamConfig adam_cfg;
  adam_cfg.lr = setup.ppo.lr;
  nd::Adam optimizer(model.params(), adam_cfg);

  TrainState state;
  if (resume_stem.has_value()) {
    state = load_train_checkpoint(*resume_stem, model, optimizer);
  }

  const fs::path metrics_path = setup.out_dir / "metrics.csv";
  std::ofstream metrics_out;
  if (resume_stem.has_value() && fs::exists(metrics_path)) {
    metrics_out.open(metrics_path, std::ios::app);
  } else {
    metrics_out.open(metrics_path, std::ios::trunc);
    metrics_out << "update,env_steps,mean_return,surrogate,value_loss,entropy,matching_loss,"
                   "sr_val,spl_val,sna_val,match_mean_cost,match_empty_frac\n";
  }
  if (!metrics_out) throw DataError("cannot open " + metrics_path.string());

  {
    // run-level config echo for reproducibility
    std::ofstream cfg_out(setup.out_dir / "config.json", std::ios::trunc);
    cfg_out << nlohmann::json{{"model", setup.model.to_json()}, {"ppo", setup.ppo.to_json()}}
                   .dump(2)
            << "\n";
  }

  TrainResult result;
  double last_sr = -1.0;
  int last_saved = -1;
  for (int update = state.update + 1; update <= setup.ppo.updates; ++update) {
    RolloutBuffer buffer = collect_rollouts(model, setup.train_suite, setup.bank, setup.ppo,
                                            update);
    state.env_steps += buffer.total_steps();
    Advantages advantages = compute_gae(buffer, setup.ppo.gamma, setup.ppo.gae_lambda);
    normalize_advantages(advantages);
    UpdateReport report = ppo_update(model, optimizer, buffer, advantages, setup.ppo, update);

    std::string sr_s, spl_s, sna_s;
    const bool eval_now = update % setup.ppo.eval_every == 0 || update == setup.ppo.updates;
    if (eval_now) {
      metrics::MetricsReport val = metrics::evaluate_model(model, setup.val_heard, setup.bank);
      last_sr = val.sr;
      sr_s = fmt_double(val.sr);
      spl_s = fmt_double(val.spl);
      sna_s = fmt_double(val.sna);
      std::cerr << "[train] update " << update << " env_steps " << state.env_steps
                << " mean_return " << buffer.mean_return() << " sr_val " << val.sr << "\n";
    } else {
      std::cerr << "[train] update " << update << " env_steps " << state.env_steps
                << " mean_return " << buffer.mean_return() << "\n";
    }
    metrics_out << update << "," << state.env_steps << "," << fmt_double(buffer.mean_return())
                << "," << fmt_double(report.surrogate) << "," << fmt_double(report.value_loss)
                << "," << fmt_double(report.entropy) << "," << fmt_double(report.matching_loss)
                << "," << sr_s << "," << spl_s << "," << sna_s << ","
                << fmt_double(report.match_mean_cost) << ","
                << fmt_double(report.match_empty_frac) << "\n";
    metrics_out.flush();

    const bool stop_early =
        (setup.ppo.early_stop_sr >= 0.0 && eval_now && last_sr >= setup.ppo.early_stop_sr) ||
        (setup.ppo.max_env_steps > 0 && state.env_steps >= setup.ppo.max_env_steps);
    if (update % setup.ppo.checkpoint_every == 0 || update == setup.ppo.updates || stop_early) {
      save_train_checkpoint(setup.out_dir, update, model, optimizer, state.env_steps);
      last_saved = update;
    }
    result.updates_run = update;
    if (stop_early) break;
  }
  if (last_saved < 0) {
    save_train_checkpoint(setup.out_dir, result.updates_run, model, optimizer, state.env_steps);
    last_saved = result.updates_run;
  }
  result.manifest_path = setup.out_dir / (ckpt_stem(last_saved) + ".manifest.json");
  result.weights_path = setup.out_dir / (ckpt_stem(last_saved) + ".bin");
  result.env_steps = state.env_steps;
  result.last_sr_val = last_sr;
  return result;
}

}  // namespace dmtf::ppo
