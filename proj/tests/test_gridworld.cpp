#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <queue>
#include <set>
#include <vector>

#include "dmtf/errors.hpp"
#include "dmtf/gridworld.hpp"
#include "dmtf/rng.hpp"

using namespace dmtf;
using namespace dmtf::env;

namespace {

GridMap empty_room(int w, int h) {
  GridMap m;
  m.width = w;
  m.height = h;
  m.occ.assign(static_cast<size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (x == 0 || y == 0 || x == w - 1 || y == h - 1) m.occ[static_cast<size_t>(y) * w + x] = 1;
  return m;
}

void block(GridMap& m, int x, int y) { m.occ[static_cast<size_t>(y) * m.width + x] = 1; }

// independent connectivity check: stack-based DFS over free cells
bool dfs_connected(const GridMap& m) {
  std::vector<uint8_t> seen(m.occ.size(), 0);
  int free_total = 0;
  int sx = -1, sy = -1;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.free_cell(x, y)) {
        ++free_total;
        if (sx < 0) {
          sx = x;
          sy = y;
        }
      }
  if (free_total == 0) return false;
  std::vector<Cell> stack{{sx, sy}};
  seen[static_cast<size_t>(sy) * m.width + sx] = 1;
  int visited = 0;
  while (!stack.empty()) {
    Cell c = stack.back();
    stack.pop_back();
    ++visited;
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nx = c.x + dx[k], ny = c.y + dy[k];
      if (m.free_cell(nx, ny) && !seen[static_cast<size_t>(ny) * m.width + nx]) {
        seen[static_cast<size_t>(ny) * m.width + nx] = 1;
        stack.push_back({nx, ny});
      }
    }
  }
  return visited == free_total;
}

// independent shortest-path oracle: Dijkstra with a priority queue
int dijkstra_distance(const GridMap& m, Cell a, Cell b) {
  using Item = std::pair<int, int>;  // dist, cell index
  std::vector<int> dist(m.occ.size(), -1);
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  const auto idx = [&](int x, int y) { return y * m.width + x; };
  dist[idx(a.x, a.y)] = 0;
  pq.push({0, idx(a.x, a.y)});
  while (!pq.empty()) {
    auto [d, ci] = pq.top();
    pq.pop();
    if (d != dist[ci]) continue;
    const int x = ci % m.width, y = ci / m.width;
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k], ny = y + dy[k];
      if (!m.free_cell(nx, ny)) continue;
      if (dist[idx(nx, ny)] < 0 || dist[idx(nx, ny)] > d + 1) {
        dist[idx(nx, ny)] = d + 1;
        pq.push({d + 1, idx(nx, ny)});
      }
    }
  }
  return dist[idx(b.x, b.y)];
}

// Exhaustive plan oracle: forward search over (cell, heading) minimizing
// (moves, actions) lexicographically; success = Stop within the radius.
struct PlanCost {
  int moves = 1 << 20;
  int actions = 1 << 20;
  bool operator<(const PlanCost& o) const {
    return moves != o.moves ? moves < o.moves : actions < o.actions;
  }
  bool operator==(const PlanCost& o) const { return moves == o.moves && actions == o.actions; }
};

PlanCost best_plan(const GridMap& m, Pose start, Cell goal, int radius) {
  // Dijkstra over states with lexicographic cost; the final Stop adds one action.
  std::map<std::tuple<int, int, int>, PlanCost> bestmap;
  using Entry = std::pair<PlanCost, std::tuple<int, int, int>>;
  auto cmp = [](const Entry& a, const Entry& b) { return b.first < a.first; };
  std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> pq(cmp);
  const auto push = [&](int x, int y, Heading h, PlanCost c) {
    auto key = std::make_tuple(x, y, static_cast<int>(h));
    auto it = bestmap.find(key);
    if (it == bestmap.end() || c < it->second) {
      bestmap[key] = c;
      pq.push({c, key});
    }
  };
  push(start.cell.x, start.cell.y, start.heading, {0, 0});
  PlanCost best;
  std::vector<int> goal_dist(m.occ.size(), -1);
  {
    // plain BFS from the goal for radius checks
    std::queue<Cell> q;
    goal_dist[goal.y * m.width + goal.x] = 0;
    q.push(goal);
    while (!q.empty()) {
      Cell c = q.front();
      q.pop();
      const int d = goal_dist[c.y * m.width + c.x];
      const int dx[4] = {1, -1, 0, 0};
      const int dy[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        const int nx = c.x + dx[k], ny = c.y + dy[k];
        if (m.free_cell(nx, ny) && goal_dist[ny * m.width + nx] < 0) {
          goal_dist[ny * m.width + nx] = d + 1;
          q.push({nx, ny});
        }
      }
    }
  }
  while (!pq.empty()) {
    auto [cost, key] = pq.top();
    pq.pop();
    auto [x, y, hi] = key;
    if (bestmap[key] < cost) continue;
    const Heading h = static_cast<Heading>(hi);
    const int g = goal_dist[y * m.width + x];
    if (g >= 0 && g <= radius) {
      PlanCost finish{cost.moves, cost.actions + 1};
      if (finish < best) best = finish;
      continue;  // optimal plans stop immediately inside the radius
    }
    const Cell f = forward_vec(h);
    if (m.free_cell(x + f.x, y + f.y)) {
      push(x + f.x, y + f.y, h, {cost.moves + 1, cost.actions + 1});
    }
    push(x, y, turn_left(h), {cost.moves, cost.actions + 1});
    push(x, y, turn_right(h), {cost.moves, cost.actions + 1});
  }
  return best;
}

std::set<Action> oracle_by_enumeration(const GridMap& m, Pose start, Cell goal, int radius) {
  const PlanCost overall = best_plan(m, start, goal, radius);
  std::set<Action> out;
  const int g0 = dijkstra_distance(m, start.cell, goal);
  if (g0 >= 0 && g0 <= radius) {
    out.insert(Action::Stop);
    return out;
  }
  const Cell f = forward_vec(start.heading);
  if (m.free_cell(start.cell.x + f.x, start.cell.y + f.y)) {
    PlanCost c = best_plan(m, {{start.cell.x + f.x, start.cell.y + f.y}, start.heading}, goal, radius);
    if (PlanCost{c.moves + 1, c.actions + 1} == overall) out.insert(Action::MoveForward);
  }
  {
    PlanCost c = best_plan(m, {start.cell, turn_left(start.heading)}, goal, radius);
    if (PlanCost{c.moves, c.actions + 1} == overall) out.insert(Action::TurnLeft);
  }
  {
    PlanCost c = best_plan(m, {start.cell, turn_right(start.heading)}, goal, radius);
    if (PlanCost{c.moves, c.actions + 1} == overall) out.insert(Action::TurnRight);
  }
  return out;
}

GridMap rotate_cw(const GridMap& m) {
  GridMap r;
  r.width = m.height;
  r.height = m.width;
  r.occ.assign(m.occ.size(), 0);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      const int nx = m.height - 1 - y;
      const int ny = x;
      r.occ[static_cast<size_t>(ny) * r.width + nx] = m.occ[static_cast<size_t>(y) * m.width + x];
    }
  return r;
}

Pose rotate_cw(Pose p, int old_height) {
  return {{old_height - 1 - p.cell.y, p.cell.x}, turn_right(p.heading)};
}

SoundTemplate flat_template(int id, int bands) {
  SoundTemplate t;
  t.id = id;
  t.profile.assign(bands, 1.0);
  t.split = "heard";
  return t;
}

EnvParams small_params() {
  EnvParams p;
  p.width = 9;
  p.height = 4;
  p.density = 0.0;
  p.image_h = 16;
  p.image_w = 16;
  p.image_c = 3;
  p.bands = 8;
  p.frames = 8;
  p.max_steps = 100;
  p.audio_noise = 0.0;
  return p;
}

}  // namespace

TEST_CASE("generate_map: density zero gives an empty interior") {
  GridMap m = generate_map(3, 10, 6, 0.0);
  for (int y = 1; y < 5; ++y)
    for (int x = 1; x < 9; ++x) CHECK(m.free_cell(x, y));
  for (int x = 0; x < 10; ++x) {
    CHECK(m.occupied(x, 0));
    CHECK(m.occupied(x, 5));
  }
}

TEST_CASE("generate_map: deterministic in the seed") {
  GridMap a = generate_map(17, 16, 16, 0.25);
  GridMap b = generate_map(17, 16, 16, 0.25);
  CHECK(a.occ == b.occ);
  GridMap c = generate_map(18, 16, 16, 0.25);
  CHECK(a.occ != c.occ);
}

TEST_CASE("generate_map: free space is connected (flood-fill oracle)") {
  for (uint64_t seed : {7ULL, 8ULL, 9ULL, 100ULL, 4242ULL}) {
    GridMap m = generate_map(seed, 16, 16, 0.2);
    CHECK(dfs_connected(m));
  }
}

TEST_CASE("generate_map: parameter violations") {
  CHECK_THROWS_AS(generate_map(1, 3, 8, 0.1), ConfigError);
  CHECK_THROWS_AS(generate_map(1, 8, 8, 0.5), ConfigError);
}

TEST_CASE("geodesic distance basics") {
  GridMap m = empty_room(9, 4);
  CHECK(geodesic_distance(m, {2, 1}, {2, 1}) == 0);
  CHECK(geodesic_distance(m, {1, 1}, {6, 1}) == 5);
  CHECK_THROWS_AS(geodesic_distance(m, {0, 0}, {1, 1}), std::invalid_argument);
}

TEST_CASE("geodesic matches Dijkstra oracle on an L-shaped maze") {
  GridMap m = empty_room(8, 8);
  // L-shaped wall
  for (int y = 1; y <= 5; ++y) block(m, 4, y);
  for (int x = 4; x <= 6; ++x) block(m, x, 5);
  for (int y = 1; y < 7; ++y)
    for (int x = 1; x < 7; ++x) {
      if (!m.free_cell(x, y)) continue;
      for (int y2 = 1; y2 < 7; ++y2)
        for (int x2 = 1; x2 < 7; ++x2) {
          if (!m.free_cell(x2, y2)) continue;
          auto d = geodesic_distance(m, {x, y}, {x2, y2});
          const int expect = dijkstra_distance(m, {x, y}, {x2, y2});
          if (expect < 0) {
            CHECK(!d.has_value());
          } else {
            REQUIRE(d.has_value());
            CHECK(*d == expect);
          }
        }
    }
}

TEST_CASE("geodesic is symmetric") {
  GridMap m = generate_map(5, 12, 12, 0.2);
  Rng rng(3);
  std::vector<Cell> frees;
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x)
      if (m.free_cell(x, y)) frees.push_back({x, y});
  for (int t = 0; t < 50; ++t) {
    Cell a = frees[rng.index(frees.size())];
    Cell b = frees[rng.index(frees.size())];
    CHECK(geodesic_distance(m, a, b) == geodesic_distance(m, b, a));
  }
}

TEST_CASE("oracle: goal adjacent and ahead yields only Stop") {
  GridMap m = empty_room(6, 6);
  OracleResult r = oracle_first_actions(m, {{2, 2}, Heading::East}, {3, 2}, 1);
  CHECK(r.optimal_first == std::vector<Action>{Action::Stop});
  CHECK(r.geodesic == 1);
  CHECK(r.min_actions == 1);
}

TEST_CASE("oracle: open room, goal diagonal front-left") {
  GridMap m = empty_room(10, 10);
  // heading North at (5,5); goal one ahead, two to the left: the northbound
  // plan (M,TL,M,Stop) and the westbound plan (TL,M,M,Stop) tie at 4 actions
  OracleResult r = oracle_first_actions(m, {{5, 5}, Heading::North}, {3, 4}, 1);
  CHECK(r.optimal_first == std::vector<Action>{Action::MoveForward, Action::TurnLeft});
}

TEST_CASE("oracle: corridor behind the agent allows either rotation") {
  GridMap m = empty_room(9, 4);
  OracleResult r = oracle_first_actions(m, {{2, 1}, Heading::East}, {1, 1}, 0);
  // goal directly behind: either rotation starts an optimal plan
  CHECK(r.optimal_first == std::vector<Action>{Action::TurnLeft, Action::TurnRight});
}

TEST_CASE("oracle: unreachable goal raises an episode-setup error") {
  GridMap m = empty_room(8, 8);
  for (int y = 1; y < 7; ++y) block(m, 4, y);  // split the room
  CHECK_THROWS_AS(oracle_first_actions(m, {{2, 2}, Heading::North}, {6, 2}, 1), DataError);
}

TEST_CASE("oracle matches exhaustive plan enumeration on random maps") {
  Rng rng(909);
  for (int trial = 0; trial < 40; ++trial) {
    GridMap m = generate_map(1000 + trial, 8, 8, 0.2);
    std::vector<Cell> frees;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        if (m.free_cell(x, y)) frees.push_back({x, y});
    Pose pose{frees[rng.index(frees.size())], static_cast<Heading>(rng.index(4))};
    Cell goal = frees[rng.index(frees.size())];
    OracleResult r = oracle_first_actions(m, pose, goal, 1);
    std::set<Action> expect = oracle_by_enumeration(m, pose, goal, 1);
    std::set<Action> got(r.optimal_first.begin(), r.optimal_first.end());
    CHECK(got == expect);
    CHECK(r.min_actions == best_plan(m, pose, goal, 1).actions);
  }
}

TEST_CASE("render: wall directly ahead gives minimum depth in center columns") {
  GridMap m = empty_room(8, 8);
  for (int x = 1; x < 7; ++x) block(m, x, 2);  // wall one cell north of row 3
  std::vector<double> img = render_visual(m, {{3, 3}, Heading::North}, 16, 16, 3, 8);
  // depth channel (1) should be 1/8 in the center columns
  for (int i = 0; i < 16; ++i) {
    const double d = img[(static_cast<size_t>(i) * 16 + 8) * 3 + 1];
    CHECK(d == doctest::Approx(1.0 / 8.0));
  }
}

TEST_CASE("render: empty room center has free occupancy in the valid window") {
  GridMap m = empty_room(24, 24);
  std::vector<double> img = render_visual(m, {{12, 20}, Heading::North}, 16, 16, 3, 8);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      const double occ = img[(static_cast<size_t>(i) * 16 + j) * 3 + 0];
      const double valid = img[(static_cast<size_t>(i) * 16 + j) * 3 + 2];
      CHECK(valid == 1.0);
      CHECK(occ == 0.0);
    }
}

TEST_CASE("render: rotating map and heading together leaves the image unchanged") {
  Rng rng(55);
  for (int trial = 0; trial < 10; ++trial) {
    GridMap m = generate_map(300 + trial, 10, 10, 0.25);
    std::vector<Cell> frees;
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x)
        if (m.free_cell(x, y)) frees.push_back({x, y});
    Pose pose{frees[rng.index(frees.size())], static_cast<Heading>(rng.index(4))};
    std::vector<double> a = render_visual(m, pose, 32, 32, 3, 8);
    GridMap mr = rotate_cw(m);
    Pose pr = rotate_cw(pose, m.height);
    std::vector<double> b = render_visual(mr, pr, 32, 32, 3, 8);
    CHECK(a == b);
  }
}

TEST_CASE("audio: source dead ahead gives equal channels") {
  GridMap m = empty_room(10, 10);
  SoundTemplate t = flat_template(0, 8);
  std::vector<double> s =
      synth_audio(m, {{5, 7}, Heading::North}, {5, 2}, t, 1, 8, 8, 0.0);
  for (size_t i = 0; i < s.size(); i += 2) CHECK(s[i] == s[i + 1]);
}

TEST_CASE("audio: energy falls off as 1/(1+d)") {
  GridMap m = empty_room(13, 4);
  SoundTemplate t = flat_template(0, 8);
  auto energy = [](const std::vector<double>& s) {
    double e = 0;
    for (double v : s) e += v;
    return e;
  };
  std::vector<double> near =
      synth_audio(m, {{1, 1}, Heading::East}, {1, 1}, t, 1, 8, 8, 0.0);
  std::vector<double> far =
      synth_audio(m, {{1, 1}, Heading::East}, {10, 1}, t, 1, 8, 8, 0.0);
  CHECK(energy(near) / energy(far) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("audio: source hard left silences the right channel") {
  GridMap m = empty_room(10, 10);
  SoundTemplate t = flat_template(0, 8);
  // heading North, source due west (left)
  std::vector<double> s =
      synth_audio(m, {{6, 5}, Heading::North}, {2, 5}, t, 1, 8, 8, 0.0);
  for (size_t i = 1; i < s.size(); i += 2) CHECK(s[i] == 0.0);
  CHECK(s[0] > 0.0);
}

TEST_CASE("audio: channel energy is non-increasing in geodesic distance") {
  GridMap m = empty_room(13, 4);
  SoundTemplate t = flat_template(0, 8);
  auto energy = [](const std::vector<double>& s) {
    double e = 0;
    for (double v : s) e += v;
    return e;
  };
  double prev = 1e18;
  for (int x = 1; x <= 11; ++x) {
    std::vector<double> s = synth_audio(m, {{x, 1}, Heading::East}, {1, 1}, t, 1, 8, 8, 0.0);
    const double e = energy(s);
    CHECK(e <= prev);
    prev = e;
  }
}

TEST_CASE("environment: stop adjacent to the source succeeds with +9.99") {
  EnvParams p = small_params();
  Environment env(p, {flat_template(0, p.bands)});
  EpisodeSpec spec{.id = 1, .map_seed = 4, .start = {{5, 1}, Heading::East}, .source = {6, 1},
                    .template_id = 0, .max_steps = 50};
  env.reset(spec);
  StepResult r = env.step(Action::Stop);
  CHECK(r.done);
  CHECK(r.info.success);
  CHECK(r.reward == doctest::Approx(9.99));
}

TEST_CASE("environment: moving into a wall flags a collision and keeps the pose") {
  EnvParams p = small_params();
  Environment env(p, {flat_template(0, p.bands)});
  EpisodeSpec spec{.id = 1, .map_seed = 4, .start = {{1, 1}, Heading::North}, .source = {6, 1},
                    .template_id = 0, .max_steps = 50};
  env.reset(spec);
  StepResult r = env.step(Action::MoveForward);
  CHECK(r.info.collided);
  CHECK(env.pose().cell == Cell{1, 1});
  CHECK(r.reward == doctest::Approx(-0.01));
}

TEST_CASE("environment: scripted corridor rollout accumulates 10 + 5 - 0.01 per action") {
  EnvParams p = small_params();
  Environment env(p, {flat_template(0, p.bands)});
  EpisodeSpec spec{.id = 1, .map_seed = 4, .start = {{1, 1}, Heading::East}, .source = {6, 1},
                    .template_id = 0, .max_steps = 50};
  env.reset(spec);
  double total = 0.0;
  for (int i = 0; i < 5; ++i) total += env.step(Action::MoveForward).reward;
  StepResult last = env.step(Action::Stop);
  total += last.reward;
  CHECK(last.info.success);
  CHECK(total == doctest::Approx(10.0 + 5.0 - 0.01 * 6));
  EpisodeRecord rec = env.record();
  CHECK(rec.success);
  CHECK(rec.shortest_path == 5);
  CHECK(rec.path_cells == 5);
  CHECK(rec.actions == 6);
}

TEST_CASE("environment: acting after done is a protocol error") {
  EnvParams p = small_params();
  Environment env(p, {flat_template(0, p.bands)});
  EpisodeSpec spec{.id = 1, .map_seed = 4, .start = {{5, 1}, Heading::East}, .source = {6, 1},
                    .template_id = 0, .max_steps = 50};
  env.reset(spec);
  env.step(Action::Stop);
  CHECK_THROWS_AS(env.step(Action::MoveForward), ProtocolError);
}

TEST_CASE("environment: geodesic changes by at most one per action, exactly -1 on oracle forward") {
  EnvParams p = small_params();
  p.width = 12;
  p.height = 12;
  p.density = 0.2;
  Environment env(p, {flat_template(0, p.bands)});
  Rng rng(77);
  for (int ep = 0; ep < 10; ++ep) {
    GridMap m = generate_map(600 + ep, 12, 12, 0.2);
    std::vector<Cell> frees;
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x)
        if (m.free_cell(x, y)) frees.push_back({x, y});
    Cell start = frees[rng.index(frees.size())];
    Cell source = frees[rng.index(frees.size())];
    EpisodeSpec spec{.id = ep, .map_seed = 600 + static_cast<uint64_t>(ep),
                      .start = {start, static_cast<Heading>(rng.index(4))}, .source = source,
                      .template_id = 0, .max_steps = 60};
    env.reset(spec);
    int geo = env.geodesic_now();
    while (!env.done()) {
      OracleResult oracle = env.oracle();
      Action a;
      if (rng.uniform01() < 0.5) {
        a = oracle.optimal_first[rng.index(oracle.optimal_first.size())];
      } else {
        a = static_cast<Action>(rng.index(3));  // random non-stop action
      }
      const bool forward_optimal =
          a == Action::MoveForward &&
          std::count(oracle.optimal_first.begin(), oracle.optimal_first.end(), a) > 0;
      StepResult r = env.step(a);
      const int geo_after = r.info.geodesic_distance;
      CHECK(std::abs(geo_after - geo) <= 1);
      if (forward_optimal) CHECK(geo_after == geo - 1);
      geo = geo_after;
    }
  }
}

TEST_CASE("environment: reset is deterministic and episodes replay bit-identically") {
  EnvParams p = small_params();
  p.audio_noise = 0.01;
  Environment env1(p, {flat_template(0, p.bands)});
  Environment env2(p, {flat_template(0, p.bands)});
  EpisodeSpec spec{.id = 1, .map_seed = 11, .start = {{2, 1}, Heading::East}, .source = {7, 2},
                    .template_id = 0, .max_steps = 30};
  Observation o1 = env1.reset(spec);
  Observation o2 = env2.reset(spec);
  CHECK(o1.visual == o2.visual);
  CHECK(o1.audio == o2.audio);
  const Action script[] = {Action::MoveForward, Action::TurnRight, Action::MoveForward,
                           Action::MoveForward, Action::TurnLeft};
  for (Action a : script) {
    StepResult r1 = env1.step(a);
    StepResult r2 = env2.step(a);
    CHECK(r1.reward == r2.reward);
    CHECK(r1.observation.visual == r2.observation.visual);
    CHECK(r1.observation.audio == r2.observation.audio);
  }
}

TEST_CASE("environment: pointgoal displacement rotates with heading") {
  EnvParams p = small_params();
  p.width = 12;
  p.height = 12;
  p.pointgoal = true;
  Environment env(p, {flat_template(0, p.bands)});
  // heading East, source 2 cells north: forward component 0, left component 2
  EpisodeSpec spec{.id = 1, .map_seed = 2, .start = {{5, 5}, Heading::East}, .source = {5, 3},
                    .template_id = 0, .max_steps = 30};
  Observation o = env.reset(spec);
  REQUIRE(o.has_delta);
  CHECK(o.delta_forward == 0.0);
  CHECK(o.delta_left == 2.0);

  // frame-transform oracle: rotate world displacement by the heading angle
  for (int h = 0; h < 4; ++h) {
    EpisodeSpec s2 = spec;
    s2.start.heading = static_cast<Heading>(h);
    Observation ob = env.reset(s2);
    const double dx = 0.0, dy = -2.0;  // source - start
    // angle of heading measured clockwise from North
    const double ang = h * (3.14159265358979323846 / 2.0);
    // forward axis in world coords: (sin a, -cos a); left axis: (-cos a, -sin a)
    const double fwd = dx * std::sin(ang) - dy * std::cos(ang);
    const double left = -dx * std::cos(ang) - dy * std::sin(ang);
    CHECK(ob.delta_forward == doctest::Approx(fwd).epsilon(1e-12));
    CHECK(ob.delta_left == doctest::Approx(left).epsilon(1e-12));
  }
}

TEST_CASE("environment: reset rejects invalid specs") {
  EnvParams p = small_params();
  Environment env(p, {flat_template(0, p.bands)});
  EpisodeSpec bad{.id = 1, .map_seed = 4, .start = {{0, 0}, Heading::East}, .source = {6, 1},
                   .template_id = 0, .max_steps = 50};
  CHECK_THROWS_AS(env.reset(bad), DataError);
  EpisodeSpec bad2{.id = 1, .map_seed = 4, .start = {{1, 1}, Heading::East}, .source = {6, 1},
                    .template_id = 9, .max_steps = 50};
  CHECK_THROWS_AS(env.reset(bad2), DataError);
}
