#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dmtf::env {

enum class Heading : int { North = 0, East = 1, South = 2, West = 3 };
enum class Action : int { MoveForward = 0, TurnLeft = 1, TurnRight = 2, Stop = 3 };
constexpr int kNumActions = 4;

const char* heading_name(Heading h);
Heading heading_from_name(const std::string& name);
const char* action_name(Action a);

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

// Grid coordinates: x grows east, y grows south.
Cell forward_vec(Heading h);
Cell left_vec(Heading h);
Cell right_vec(Heading h);
Heading turn_left(Heading h);
Heading turn_right(Heading h);

struct Pose {
  Cell cell;
  Heading heading = Heading::North;
};

struct GridMap {
  int width = 0;
  int height = 0;
  uint64_t seed = 0;
  std::vector<uint8_t> occ;  // row-major, 1 = blocked; border always blocked

  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  bool occupied(int x, int y) const { return !in_bounds(x, y) || occ[static_cast<size_t>(y) * width + x] != 0; }
  bool free_cell(int x, int y) const { return !occupied(x, y); }
  bool free_cell(Cell c) const { return free_cell(c.x, c.y); }
};

// Bordered map with interior cells blocked at the given density. Free space
// is guaranteed to form one connected component (regenerated on failure,
// bounded retries). Deterministic in the seed.
GridMap generate_map(uint64_t seed, int width, int height, double density);

struct DistanceField {
  int width = 0;
  int height = 0;
  std::vector<int> dist;  // -1 = unreachable

  int at(int x, int y) const { return dist[static_cast<size_t>(y) * width + x]; }
  int at(Cell c) const { return at(c.x, c.y); }
};

DistanceField bfs_distances(const GridMap& map, Cell from);

// 4-neighbor shortest path length in cells; nullopt if unreachable.
std::optional<int> geodesic_distance(const GridMap& map, Cell a, Cell b);

// Minimum number of actions (moves, turns, final Stop) needed to finish the
// episode from each (x, y, heading). Built by multi-source backward BFS from
// every free cell within the success radius of the goal.
struct ActionField {
  int width = 0;
  int height = 0;
  std::vector<int> dist;  // -1 = cannot finish

  int at(int x, int y, Heading h) const {
    return dist[(static_cast<size_t>(y) * width + x) * 4 + static_cast<int>(h)];
  }
  int at(Pose p) const { return at(p.cell.x, p.cell.y, p.heading); }
};

ActionField action_distance_field(const GridMap& map, const DistanceField& goal_dist,
                                  int success_radius);

struct OracleResult {
  std::vector<Action> optimal_first;  // in ascending Action order
  int geodesic = 0;                   // cells from pose to goal
  int min_actions = 0;                // optimal action count including Stop
};

OracleResult oracle_first_actions(const GridMap& map, const ActionField& af,
                                  const DistanceField& goal_dist, Pose pose, int success_radius);
OracleResult oracle_first_actions(const GridMap& map, Pose pose, Cell goal, int success_radius);

// Egocentric rendering: channel 0 = occupancy in a forward-facing window,
// channel 1 = per-column raycast depth normalized by the view range,
// channel 2 = in-bounds validity mask. Extra channels are zero.
std::vector<double> render_visual(const GridMap& map, Pose pose, int image_h, int image_w,
                                  int image_c, int view_cells);

struct SoundTemplate {
  int id = 0;
  std::vector<double> profile;  // per-band energies in [0,1], unit max
  std::string split;            // "heard" | "unheard"
};

// Parametric binaural spectrogram. Amplitude falls off as 1/(1+d_geo); the
// interaural level difference encodes the source bearing in the agent frame:
// left gain (1+sin t)/2, right gain (1-sin t)/2 with t positive to the left.
// Per-element uniform noise in [-noise_mag, +noise_mag], clipped to [0,1].
std::vector<double> synth_audio(const GridMap& map, Pose pose, Cell source,
                                const SoundTemplate& tmpl, uint64_t step_seed, int bands,
                                int frames, double noise_mag,
                                const DistanceField* source_dist = nullptr);

struct EnvParams {
  int width = 16;
  int height = 16;
  double density = 0.2;
  int image_h = 64;
  int image_w = 64;
  int image_c = 3;
  int bands = 64;
  int frames = 64;
  int view_cells = 8;
  int max_steps = 500;
  int success_radius = 1;
  bool pointgoal = false;
  double audio_noise = 0.01;

  void validate() const;
};

struct EpisodeSpec {
  int64_t id = 0;
  uint64_t map_seed = 0;
  Pose start;
  Cell source;
  int template_id = 0;
  int max_steps = 500;
};

struct Observation {
  std::vector<double> visual;  // image_h * image_w * image_c
  std::vector<double> audio;   // bands * frames * 2
  bool has_delta = false;      // pointgoal mode only
  double delta_forward = 0.0;  // displacement to the source in the agent frame
  double delta_left = 0.0;
};

struct StepInfo {
  int geodesic_distance = 0;
  bool collided = false;
  bool success = false;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct EpisodeRecord {
  bool success = false;
  int shortest_path = 0;         // l_i, BFS at episode start
  int path_cells = 0;            // p_i, cells actually traversed
  int actions = 0;               // a_i, all actions incl. collisions and turns
  int oracle_actions = 0;        // optimal action count from the start state
  double undiscounted_return = 0.0;
};

// One episode at a time; instances are independent and movable across
// threads but never shared. Reward: +10 on success + geodesic delta - 0.01
// per action. Stop ends the episode; success iff geodesic <= success radius.
class Environment {
 public:
  Environment(EnvParams params, const std::vector<SoundTemplate>& templates);

  Observation reset(const EpisodeSpec& spec);
  StepResult step(Action action);

  bool episode_active() const { return active_; }
  bool done() const { return done_; }
  bool truncated() const { return done_ && !stopped_; }
  const GridMap& map() const { return map_; }
  Pose pose() const { return pose_; }
  int geodesic_now() const { return source_dist_.at(pose_.cell); }
  OracleResult oracle() const;
  EpisodeRecord record() const;
  const EnvParams& params() const { return params_; }
  int steps_taken() const { return steps_; }
  // scale for the distance-based modality heuristic
  double modality_dmax() const { return static_cast<double>(params_.width - 2 + params_.height - 2); }

 private:
  Observation observe() const;

  EnvParams params_;
  std::unordered_map<int, SoundTemplate> templates_;

  GridMap map_;
  DistanceField source_dist_;
  ActionField action_field_;
  EpisodeSpec spec_;
  Pose pose_;
  uint64_t episode_key_ = 0;
  int steps_ = 0;
  int cells_moved_ = 0;
  bool active_ = false;
  bool done_ = true;
  bool stopped_ = false;
  bool success_ = false;
  double return_ = 0.0;
  int start_geodesic_ = 0;
  int start_min_actions_ = 0;
};

}  // namespace dmtf::env
