#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstring>
#include <filesystem>

#include "dmtf/errors.hpp"
#include "dmtf/metrics.hpp"
#include "dmtf/rng.hpp"
#include "dmtf/suite.hpp"

using namespace dmtf;
using namespace dmtf::metrics;

namespace {

env::EpisodeRecord rec(bool success, int l, int p, int a, int a_star = 1) {
  env::EpisodeRecord r;
  r.success = success;
  r.shortest_path = l;
  r.path_cells = p;
  r.actions = a;
  r.oracle_actions = a_star;
  return r;
}

data::SuiteGenConfig small_gen(uint64_t seed) {
  data::SuiteGenConfig cfg;
  cfg.seed = seed;
  cfg.template_count = 2;
  cfg.unheard_fraction = 0.5;
  cfg.train_episodes = 4;
  cfg.eval_episodes = 6;
  cfg.width = 8;
  cfg.height = 8;
  cfg.density = 0.0;
  cfg.image = 8;
  cfg.bands = 8;
  cfg.frames = 8;
  cfg.max_steps = 30;
  cfg.audio_noise = 0.0;
  return cfg;
}

net::ModelConfig small_model() {
  net::ModelConfig c;
  c.d_m = 8;
  c.heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.num_targets = 2;
  c.patch = 4;
  c.ffn_hidden = 16;
  c.gru_hidden = 12;
  c.gru_input = 8;
  c.image_h = 8;
  c.image_w = 8;
  c.image_c = 3;
  c.bands = 8;
  c.frames = 8;
  return c;
}

}  // namespace

TEST_CASE("success rate examples and counting oracle") {
  CHECK(success_rate({rec(true, 1, 1, 1), rec(true, 1, 1, 1)}) == 1.0);
  CHECK(success_rate({rec(true, 1, 1, 1), rec(true, 1, 1, 1), rec(true, 1, 1, 1),
                      rec(false, 1, 1, 1)}) == 0.75);
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<env::EpisodeRecord> rs;
    int hits = 0;
    const int n = 1 + rng.index(20);
    for (int i = 0; i < n; ++i) {
      const bool s = rng.uniform01() < 0.5;
      hits += s ? 1 : 0;
      rs.push_back(rec(s, 2, 3, 4));
    }
    CHECK(success_rate(rs) == static_cast<double>(hits) / n);
  }
  CHECK_THROWS_AS(success_rate({}), std::invalid_argument);
}

TEST_CASE("spl examples") {
  CHECK(spl({rec(true, 10, 20, 25)}) == 0.5);
  CHECK(spl({rec(true, 10, 7, 9)}) == 1.0);  // p <= l guarded by the max
  // mixed 3-episode hand evaluation: 0.5, 0 and 1 -> mean 0.5
  const double v = spl({rec(true, 10, 20, 25), rec(false, 5, 9, 9), rec(true, 4, 4, 7)});
  CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(spl({rec(true, 0, 3, 3)}), DataError);
}

TEST_CASE("sna examples follow the 1/a form exactly") {
  CHECK(sna({rec(true, 2, 2, 4)}) == 0.25);
  CHECK(sna({rec(false, 2, 2, 4)}) == 0.0);
  // {(S=1, a=5), (S=0, a=3)} -> (0.2 + 0) / 2 = 0.1
  CHECK(sna({rec(true, 2, 2, 5), rec(false, 2, 2, 3)}) == doctest::Approx(0.1).epsilon(1e-15));
  env::EpisodeRecord bad = rec(true, 2, 2, 0);
  CHECK_THROWS_AS(sna({bad}), DataError);
}

TEST_CASE("sna_normalized uses the oracle action count") {
  // a = 8, a* = 6 -> 6/8
  CHECK(sna_normalized({rec(true, 2, 2, 8, 6)}) == 0.75);
  CHECK(sna_normalized({rec(true, 2, 2, 4, 6)}) == 1.0);  // faster than oracle clamps at 1
}

TEST_CASE("SPL <= SR and SNA <= SR on randomized record sets") {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<env::EpisodeRecord> rs;
    const int n = 1 + rng.index(30);
    for (int i = 0; i < n; ++i) {
      const bool s = rng.uniform01() < 0.6;
      const int l = 1 + rng.index(20);
      const int p = l + rng.index(10);
      const int a = std::max<int>(1, p + rng.index(6));
      rs.push_back(rec(s, l, p, a, std::max(1, l + 1)));
    }
    const double r_sr = success_rate(rs);
    CHECK(spl(rs) <= r_sr);
    CHECK(sna(rs) <= r_sr);
    CHECK(sna_normalized(rs) <= r_sr);
  }
}

TEST_CASE("metrics are invariant under episode reordering") {
  Rng rng(3);
  std::vector<env::EpisodeRecord> rs;
  for (int i = 0; i < 17; ++i) {
    rs.push_back(rec(rng.uniform01() < 0.5, 1 + rng.index(9), 1 + rng.index(15),
                     1 + rng.index(20), 1 + rng.index(9)));
  }
  const double a = spl(rs), b = sna(rs);
  for (int t = 0; t < 20; ++t) {
    std::vector<env::EpisodeRecord> shuffled = rs;
    for (int i = static_cast<int>(shuffled.size()) - 1; i > 0; --i) {
      std::swap(shuffled[i], shuffled[rng.index(i + 1)]);
    }
    const double a2 = spl(shuffled), b2 = sna(shuffled);
    CHECK(std::memcmp(&a, &a2, sizeof(double)) == 0);
    CHECK(std::memcmp(&b, &b2, sizeof(double)) == 0);
  }
}

TEST_CASE("oracle agent scores SR = 1 and SPL = 1 on generated suites") {
  data::GeneratedSuites gen = data::generate_suites(small_gen(11));
  MetricsReport r = evaluate_oracle(gen.val_heard, gen.bank);
  CHECK(r.sr == 1.0);
  CHECK(r.spl == 1.0);
  CHECK(r.sna_normalized == 1.0);
}

TEST_CASE("random agent lands near the floor") {
  data::GeneratedSuites gen = data::generate_suites(small_gen(12));
  MetricsReport random_r = evaluate_random(gen.val_heard, gen.bank, 5);
  MetricsReport oracle_r = evaluate_oracle(gen.val_heard, gen.bank);
  CHECK(random_r.sr < oracle_r.sr);
  CHECK(random_r.spl <= 0.6);
}

TEST_CASE("greedy evaluation is deterministic and parallel-invariant") {
  data::GeneratedSuites gen = data::generate_suites(small_gen(13));
  net::Model model(small_model(), 99);
  EvalOptions serial;
  serial.workers = 1;
  EvalOptions parallel;
  parallel.workers = 4;
  MetricsReport a = evaluate_model(model, gen.val_heard, gen.bank, serial);
  MetricsReport b = evaluate_model(model, gen.val_heard, gen.bank, parallel);
  CHECK(std::memcmp(&a.sr, &b.sr, sizeof(double)) == 0);
  CHECK(std::memcmp(&a.spl, &b.spl, sizeof(double)) == 0);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].success == b.records[i].success);
    CHECK(a.records[i].actions == b.records[i].actions);
    CHECK(a.records[i].undiscounted_return == b.records[i].undiscounted_return);
  }
}

TEST_CASE("split violations are protocol errors") {
  data::GeneratedSuites gen = data::generate_suites(small_gen(14));
  REQUIRE(gen.val_unheard.has_value());
  data::Suite tainted = *gen.val_unheard;
  // swap one episode back to a heard template
  tainted.episodes[0].template_id = gen.bank.by_split("heard")[0].id;
  net::Model model(small_model(), 1);
  CHECK_THROWS_AS(evaluate_model(model, tainted, gen.bank), ProtocolError);
}

TEST_CASE("report files: CSV rows and JSON summary") {
  namespace fs = std::filesystem;
  data::GeneratedSuites gen = data::generate_suites(small_gen(15));
  MetricsReport r = evaluate_oracle(gen.val_heard, gen.bank);
  const fs::path dir = fs::temp_directory_path() / "dmtf_metrics_test";
  fs::create_directories(dir);
  write_report(r, dir / "report.csv", dir / "report.json");

  std::ifstream csv(dir / "report.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "episode_id,S,l,p,a,return");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == static_cast<int>(r.records.size()));

  std::ifstream js(dir / "report.json");
  nlohmann::json j = nlohmann::json::parse(js);
  CHECK(j["sr"] == 1.0);
  CHECK(j["split"] == "heard");
  fs::remove_all(dir);
}
