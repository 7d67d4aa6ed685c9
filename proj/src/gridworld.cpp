#include "dmtf/gridworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "dmtf/errors.hpp"
#include "dmtf/rng.hpp"

namespace dmtf::env {

namespace {

constexpr int kMapAttempts = 64;

size_t cell_index(const GridMap& map, int x, int y) {
  return static_cast<size_t>(y) * map.width + x;
}

}  // namespace

const char* heading_name(Heading h) {
  switch (h) {
    case Heading::North: return "N";
    case Heading::East: return "E";
    case Heading::South: return "S";
    case Heading::West: return "W";
  }
  return "?";
}

Heading heading_from_name(const std::string& name) {
  if (name == "N") return Heading::North;
  if (name == "E") return Heading::East;
  if (name == "S") return Heading::South;
  if (name == "W") return Heading::West;
  throw DataError("unknown heading '" + name + "'");
}

const char* action_name(Action a) {
  switch (a) {
    case Action::MoveForward: return "MoveForward";
    case Action::TurnLeft: return "TurnLeft";
    case Action::TurnRight: return "TurnRight";
    case Action::Stop: return "Stop";
  }
  return "?";
}

Cell forward_vec(Heading h) {
  switch (h) {
    case Heading::North: return {0, -1};
    case Heading::East: return {1, 0};
    case Heading::South: return {0, 1};
    case Heading::West: return {-1, 0};
  }
  return {0, 0};
}

Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }

Cell left_vec(Heading h) { return forward_vec(turn_left(h)); }
Cell right_vec(Heading h) { return forward_vec(turn_right(h)); }

GridMap generate_map(uint64_t seed, int width, int height, double density) {
  if (width < 4 || height < 4) throw ConfigError("generate_map: width and height must be >= 4");
  if (density < 0.0 || density > 0.4) throw ConfigError("generate_map: density must be in [0, 0.4]");

  for (int attempt = 0; attempt < kMapAttempts; ++attempt) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(attempt), 0x6d61705fULL));
    GridMap map;
    map.width = width;
    map.height = height;
    map.seed = seed;
    map.occ.assign(static_cast<size_t>(width) * height, 0);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const bool border = x == 0 || y == 0 || x == width - 1 || y == height - 1;
        if (border) {
          map.occ[cell_index(map, x, y)] = 1;
        } else if (rng.uniform01() < density) {
          map.occ[cell_index(map, x, y)] = 1;
        }
      }
    }
    // connectivity: flood fill from the first free cell must reach all free cells
    int free_count = 0;
    Cell start{-1, -1};
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (map.free_cell(x, y)) {
          ++free_count;
          if (start.x < 0) start = {x, y};
        }
    if (free_count < 2) continue;
    DistanceField df = bfs_distances(map, start);
    int reached = 0;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (map.free_cell(x, y) && df.at(x, y) >= 0) ++reached;
    if (reached == free_count) return map;
  }
  throw DataError("generate_map: no connected map found after bounded retries (seed " +
                  std::to_string(seed) + ", density " + std::to_string(density) + ")");
}

DistanceField bfs_distances(const GridMap& map, Cell from) {
  DistanceField df;
  df.width = map.width;
  df.height = map.height;
  df.dist.assign(static_cast<size_t>(map.width) * map.height, -1);
  if (!map.free_cell(from)) return df;
  std::deque<Cell> queue;
  df.dist[cell_index(map, from.x, from.y)] = 0;
  queue.push_back(from);
  const int dx[4] = {0, 1, 0, -1};
  const int dy[4] = {-1, 0, 1, 0};
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    const int d = df.at(c.x, c.y);
    for (int k = 0; k < 4; ++k) {
      const int nx = c.x + dx[k], ny = c.y + dy[k];
      if (map.free_cell(nx, ny) && df.at(nx, ny) < 0) {
        df.dist[cell_index(map, nx, ny)] = d + 1;
        queue.push_back({nx, ny});
      }
    }
  }
  return df;
}

std::optional<int> geodesic_distance(const GridMap& map, Cell a, Cell b) {
  if (!map.free_cell(a) || !map.free_cell(b)) {
    throw std::invalid_argument("geodesic_distance: endpoints must be free cells");
  }
  DistanceField df = bfs_distances(map, a);
  const int d = df.at(b.x, b.y);
  if (d < 0) return std::nullopt;
  return d;
}

ActionField action_distance_field(const GridMap& map, const DistanceField& goal_dist,
                                  int success_radius) {
  ActionField af;
  af.width = map.width;
  af.height = map.height;
  af.dist.assign(static_cast<size_t>(map.width) * map.height * 4, -1);
  auto idx = [&](int x, int y, int h) {
    return (static_cast<size_t>(y) * map.width + x) * 4 + h;
  };
  std::deque<std::array<int, 3>> queue;  // x, y, heading
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      const int g = goal_dist.at(x, y);
      if (map.free_cell(x, y) && g >= 0 && g <= success_radius) {
        for (int h = 0; h < 4; ++h) {
          af.dist[idx(x, y, h)] = 1;  // the Stop action
          queue.push_back({x, y, h});
        }
      }
    }
  while (!queue.empty()) {
    const auto [x, y, h] = queue.front();
    queue.pop_front();
    const int d = af.dist[idx(x, y, h)];
    // predecessor via MoveForward: pose one cell behind with the same heading.
    // Only geodesic-descending moves count as optimal, so the move edge is
    // restricted to cells whose goal distance is one larger.
    const Cell f = forward_vec(static_cast<Heading>(h));
    const int px = x - f.x, py = y - f.y;
    if (map.free_cell(px, py) && goal_dist.at(px, py) == goal_dist.at(x, y) + 1 &&
        af.dist[idx(px, py, h)] < 0) {
      af.dist[idx(px, py, h)] = d + 1;
      queue.push_back({px, py, h});
    }
    // predecessor via TurnLeft: heading whose left turn yields h
    const int hl = static_cast<int>(turn_right(static_cast<Heading>(h)));
    if (af.dist[idx(x, y, hl)] < 0) {
      af.dist[idx(x, y, hl)] = d + 1;
      queue.push_back({x, y, hl});
    }
    // predecessor via TurnRight
    const int hr = static_cast<int>(turn_left(static_cast<Heading>(h)));
    if (af.dist[idx(x, y, hr)] < 0) {
      af.dist[idx(x, y, hr)] = d + 1;
      queue.push_back({x, y, hr});
    }
  }
  return af;
}

OracleResult oracle_first_actions(const GridMap& map, const ActionField& af,
                                  const DistanceField& goal_dist, Pose pose, int success_radius) {
  const int geo = goal_dist.at(pose.cell);
  const int best = af.at(pose);
  if (geo < 0 || best < 0) {
    throw DataError("oracle_first_actions: goal unreachable from pose");
  }
  OracleResult result;
  result.geodesic = geo;
  result.min_actions = best;
  if (geo <= success_radius) {
    // within the success radius the single optimal action is to stop
    result.optimal_first.push_back(Action::Stop);
    return result;
  }
  const Cell f = forward_vec(pose.heading);
  const Cell ahead{pose.cell.x + f.x, pose.cell.y + f.y};
  if (map.free_cell(ahead) && goal_dist.at(ahead.x, ahead.y) == geo - 1 &&
      af.at(ahead.x, ahead.y, pose.heading) == best - 1) {
    result.optimal_first.push_back(Action::MoveForward);
  }
  if (af.at(pose.cell.x, pose.cell.y, turn_left(pose.heading)) == best - 1) {
    result.optimal_first.push_back(Action::TurnLeft);
  }
  if (af.at(pose.cell.x, pose.cell.y, turn_right(pose.heading)) == best - 1) {
    result.optimal_first.push_back(Action::TurnRight);
  }
  return result;
}

OracleResult oracle_first_actions(const GridMap& map, Pose pose, Cell goal, int success_radius) {
  if (!map.free_cell(goal)) throw std::invalid_argument("oracle_first_actions: goal cell occupied");
  DistanceField df = bfs_distances(map, goal);
  ActionField af = action_distance_field(map, df, success_radius);
  return oracle_first_actions(map, af, df, pose, success_radius);
}

std::vector<double> render_visual(const GridMap& map, Pose pose, int image_h, int image_w,
                                  int image_c, int view_cells) {
  if (image_h <= 0 || image_w <= 0 || image_c <= 0 || view_cells <= 0) {
    throw ConfigError("render_visual: non-positive image dimensions");
  }
  const int v = view_cells;
  const int lat = v + 1;  // lateral offsets -v/2 .. +v/2
  const Cell fwd = forward_vec(pose.heading);
  const Cell right = right_vec(pose.heading);

  // per-lateral-offset raycast depth
  std::vector<double> depth(lat, 1.0);
  for (int li = 0; li < lat; ++li) {
    const int r = li - v / 2;
    const int ox = pose.cell.x + r * right.x;
    const int oy = pose.cell.y + r * right.y;
    for (int f = 1; f <= v; ++f) {
      const int cx = ox + f * fwd.x;
      const int cy = oy + f * fwd.y;
      if (map.occupied(cx, cy)) {
        depth[li] = static_cast<double>(f) / v;
        break;
      }
    }
  }

  std::vector<double> image(static_cast<size_t>(image_h) * image_w * image_c, 0.0);
  for (int i = 0; i < image_h; ++i) {
    const int f = ((image_h - 1 - i) * v) / image_h;  // row 0 = far
    for (int j = 0; j < image_w; ++j) {
      const int li = (j * lat) / image_w;
      const int r = li - v / 2;
      const int cx = pose.cell.x + r * right.x + f * fwd.x;
      const int cy = pose.cell.y + r * right.y + f * fwd.y;
      const bool inside = map.in_bounds(cx, cy);
      const double occ = map.occupied(cx, cy) ? 1.0 : 0.0;
      double* px = image.data() + (static_cast<size_t>(i) * image_w + j) * image_c;
      if (image_c > 0) px[0] = occ;
      if (image_c > 1) px[1] = depth[li];
      if (image_c > 2) px[2] = inside ? 1.0 : 0.0;
    }
  }
  return image;
}

std::vector<double> synth_audio(const GridMap& map, Pose pose, Cell source,
                                const SoundTemplate& tmpl, uint64_t step_seed, int bands,
                                int frames, double noise_mag, const DistanceField* source_dist) {
  if (bands <= 0 || frames <= 0) throw ConfigError("synth_audio: non-positive spectrogram size");
  if (static_cast<int>(tmpl.profile.size()) != bands) {
    throw DataError("synth_audio: template has " + std::to_string(tmpl.profile.size()) +
                    " bands, expected " + std::to_string(bands));
  }
  int d_geo;
  if (source_dist != nullptr) {
    d_geo = source_dist->at(pose.cell);
  } else {
    const auto d = geodesic_distance(map, pose.cell, source);
    d_geo = d ? *d : -1;
  }
  if (d_geo < 0) throw DataError("synth_audio: source unreachable from pose");

  const double dx = static_cast<double>(source.x - pose.cell.x);
  const double dy = static_cast<double>(source.y - pose.cell.y);
  const Cell fv = forward_vec(pose.heading);
  const Cell lv = left_vec(pose.heading);
  const double fcomp = dx * fv.x + dy * fv.y;
  const double lcomp = dx * lv.x + dy * lv.y;
  const double norm = std::sqrt(fcomp * fcomp + lcomp * lcomp);
  const double sin_bearing = norm > 0.0 ? lcomp / norm : 0.0;

  const double amplitude = 1.0 / (1.0 + static_cast<double>(d_geo));
  const double gain[2] = {(1.0 + sin_bearing) / 2.0, (1.0 - sin_bearing) / 2.0};  // left, right

  Rng noise(step_seed);
  std::vector<double> spec(static_cast<size_t>(bands) * frames * 2);
  for (int b = 0; b < bands; ++b) {
    const double base = amplitude * tmpl.profile[b];
    for (int t = 0; t < frames; ++t) {
      for (int ch = 0; ch < 2; ++ch) {
        double val = gain[ch] * base;
        if (noise_mag > 0.0) val += noise.uniform(-noise_mag, noise_mag);
        spec[(static_cast<size_t>(b) * frames + t) * 2 + ch] = std::clamp(val, 0.0, 1.0);
      }
    }
  }
  return spec;
}

void EnvParams::validate() const {
  if (width < 4 || height < 4) throw ConfigError("env: width and height must be >= 4");
  if (density < 0.0 || density > 0.4) throw ConfigError("env: density must be in [0, 0.4]");
  if (image_h <= 0 || image_w <= 0 || image_c <= 0) throw ConfigError("env: bad image dims");
  if (bands <= 0 || frames <= 0) throw ConfigError("env: bad spectrogram dims");
  if (view_cells <= 0) throw ConfigError("env: view_cells must be positive");
  if (max_steps <= 0) throw ConfigError("env: max_steps must be positive");
  if (success_radius < 0) throw ConfigError("env: success_radius must be >= 0");
  if (audio_noise < 0.0 || audio_noise > 0.01) {
    throw ConfigError("env: audio_noise must be in [0, 0.01]");
  }
}

Environment::Environment(EnvParams params, const std::vector<SoundTemplate>& templates)
    : params_(params) {
  params_.validate();
  for (const SoundTemplate& t : templates) {
    if (!templates_.emplace(t.id, t).second) {
      throw DataError("duplicate sound template id " + std::to_string(t.id));
    }
  }
}

Observation Environment::observe() const {
  Observation obs;
  obs.visual = render_visual(map_, pose_, params_.image_h, params_.image_w, params_.image_c,
                             params_.view_cells);
  const SoundTemplate& tmpl = templates_.at(spec_.template_id);
  const uint64_t step_seed = mix_seed(episode_key_, static_cast<uint64_t>(steps_), 0xb0a7ULL);
  obs.audio = synth_audio(map_, pose_, spec_.source, tmpl, step_seed, params_.bands,
                          params_.frames, params_.audio_noise, &source_dist_);
  if (params_.pointgoal) {
    obs.has_delta = true;
    const double dx = static_cast<double>(spec_.source.x - pose_.cell.x);
    const double dy = static_cast<double>(spec_.source.y - pose_.cell.y);
    const Cell fv = forward_vec(pose_.heading);
    const Cell lv = left_vec(pose_.heading);
    obs.delta_forward = dx * fv.x + dy * fv.y;
    obs.delta_left = dx * lv.x + dy * lv.y;
  }
  return obs;
}

Observation Environment::reset(const EpisodeSpec& spec) {
  if (spec.max_steps <= 0) throw DataError("episode spec: max_steps must be positive");
  if (templates_.find(spec.template_id) == templates_.end()) {
    throw DataError("episode spec: unknown template id " + std::to_string(spec.template_id));
  }
  map_ = generate_map(spec.map_seed, params_.width, params_.height, params_.density);
  if (!map_.free_cell(spec.start.cell)) throw DataError("episode spec: start cell occupied");
  if (!map_.free_cell(spec.source)) throw DataError("episode spec: source cell occupied");
  source_dist_ = bfs_distances(map_, spec.source);
  if (source_dist_.at(spec.start.cell) < 0) {
    throw DataError("episode spec: source unreachable from start");
  }
  action_field_ = action_distance_field(map_, source_dist_, params_.success_radius);
  spec_ = spec;
  pose_ = spec.start;
  episode_key_ = mix_seed(spec.map_seed,
                          mix_seed(static_cast<uint64_t>(spec.start.cell.x * 1024 + spec.start.cell.y),
                                   static_cast<uint64_t>(static_cast<int>(spec.start.heading)),
                                   static_cast<uint64_t>(spec.source.x * 1024 + spec.source.y)),
                          static_cast<uint64_t>(spec.template_id));
  steps_ = 0;
  cells_moved_ = 0;
  active_ = true;
  done_ = false;
  stopped_ = false;
  success_ = false;
  return_ = 0.0;
  start_geodesic_ = source_dist_.at(pose_.cell);
  start_min_actions_ = action_field_.at(pose_);
  return observe();
}

StepResult Environment::step(Action action) {
  if (!active_ || done_) throw ProtocolError("step called on a finished episode");
  const int geo_before = source_dist_.at(pose_.cell);
  ++steps_;
  bool collided = false;
  switch (action) {
    case Action::MoveForward: {
      const Cell f = forward_vec(pose_.heading);
      const Cell target{pose_.cell.x + f.x, pose_.cell.y + f.y};
      if (map_.free_cell(target)) {
        pose_.cell = target;
        ++cells_moved_;
      } else {
        collided = true;
      }
      break;
    }
    case Action::TurnLeft:
      pose_.heading = turn_left(pose_.heading);
      break;
    case Action::TurnRight:
      pose_.heading = turn_right(pose_.heading);
      break;
    case Action::Stop:
      stopped_ = true;
      done_ = true;
      success_ = source_dist_.at(pose_.cell) <= params_.success_radius;
      break;
  }
  const int geo_after = source_dist_.at(pose_.cell);
  if (!done_ && steps_ >= spec_.max_steps) done_ = true;  // budget truncation

  StepResult result;
  result.reward = (success_ ? 10.0 : 0.0) + static_cast<double>(geo_before - geo_after) - 0.01;
  return_ += result.reward;
  result.done = done_;
  result.info.geodesic_distance = geo_after;
  result.info.collided = collided;
  result.info.success = success_;
  result.observation = observe();
  return result;
}

OracleResult Environment::oracle() const {
  if (!active_) throw ProtocolError("oracle queried outside an episode");
  return oracle_first_actions(map_, action_field_, source_dist_, pose_, params_.success_radius);
}

EpisodeRecord Environment::record() const {
  if (!active_ || !done_) throw ProtocolError("record queried before the episode finished");
  EpisodeRecord r;
  r.success = success_;
  r.shortest_path = start_geodesic_;
  r.path_cells = cells_moved_;
  r.actions = steps_;
  r.oracle_actions = start_min_actions_;
  r.undiscounted_return = return_;
  return r;
}

}  // namespace dmtf::env
