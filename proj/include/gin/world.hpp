#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gin/geom.hpp"
#include "gin/rng.hpp"

namespace gin::world {

using geom::Point2;
using geom::Polyline;
using geom::Pose;

class NoPathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RoadNode {
  int id = 0;
  Point2 pos;
};

struct RoadEdge {
  int from = 0;
  int to = 0;
  double lane_width = 3.5;
  // Centerline from `from` to `to`; endpoints coincide with the nodes.
  std::vector<Point2> shape;
};

// Undirected road graph. Each edge carries one lane per direction; vehicles
// keep right of the centerline.
class RoadNetwork {
 public:
  struct Link {
    std::size_t edge;
    std::size_t other;  // node index
  };

  RoadNetwork(std::string name, std::vector<RoadNode> nodes, std::vector<RoadEdge> edges,
              std::vector<int> spawn_points);

  static RoadNetwork from_json(const nlohmann::json& j);
  static RoadNetwork load(const std::string& path);
  nlohmann::json to_json() const;

  const std::string& name() const { return name_; }
  const std::vector<RoadNode>& nodes() const { return nodes_; }
  const std::vector<RoadEdge>& edges() const { return edges_; }
  const std::vector<int>& spawn_points() const { return spawn_points_; }
  const std::vector<Link>& links(std::size_t node_index) const { return adjacency_[node_index]; }
  std::size_t index_of(int node_id) const;
  double edge_length(std::size_t edge) const { return lengths_[edge]; }
  // Edge index joining two node indices; -1 if none.
  long edge_between(std::size_t a, std::size_t b) const;

  // Centerline through a node-index sequence.
  Polyline centerline(const std::vector<std::size_t>& node_path) const;
  // Right-hand lane for travel along the node-index sequence.
  Polyline lane(const std::vector<std::size_t>& node_path) const;

 private:
  std::string name_;
  std::vector<RoadNode> nodes_;
  std::vector<RoadEdge> edges_;
  std::vector<int> spawn_points_;
  std::vector<std::vector<Link>> adjacency_;
  std::vector<double> lengths_;
};

// Built-in maps: "straight", "intersection", "t_junction", "town".
RoadNetwork builtin_map(const std::string& name);
std::vector<std::string> builtin_map_names();

struct Route {
  std::vector<std::size_t> nodes;  // node indices
  double cost = 0.0;
};

// Shortest node path by summed edge length with a straight-line heuristic.
// Start and goal are node ids.
Route astar(const RoadNetwork& road, int start_id, int goal_id);

struct VehicleParams {
  double wheelbase = 2.7;
  double a_max = 3.0;
  double b_max = 6.0;
  double delta_max = 0.6;
  double v_max = 15.0;
};

struct VehicleState {
  Point2 position;
  double heading = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  double yaw_rate = 0.0;
  double length = 4.5;
  double width = 1.9;

  Pose pose() const { return {position.x, position.y, heading}; }
  Point2 velocity() const;
};

// throttle < 0 brakes; steer maps linearly onto [-delta_max, delta_max].
struct Action {
  double throttle = 0.0;
  double steer = 0.0;

  Action clipped() const;
};

// Kinematic bicycle step (explicit Euler on the rear-axle model).
VehicleState step_vehicle(const VehicleState& s, const Action& a, double dt, const VehicleParams& p);

struct NpcParams {
  double lookahead_min = 4.0;
  double lookahead_gain = 0.6;  // seconds of travel added to the look-ahead
  double speed_gain = 0.5;      // throttle per m/s of speed error
  double standstill_gap = 2.0;  // bumper-to-bumper metres kept when stopped
  double headway = 1.2;         // seconds
  double gap_range = 30.0;
  double lane_half_width = 2.0;
};

// Pure-pursuit steering plus speed tracking with gap braking on the nearest
// vehicle ahead in the same lane. `route_s` is a progress hint along `route`.
Action npc_controller(const VehicleState& npc, const Polyline& route, double target_speed,
                      std::span<const VehicleState> neighbors, bool ignore_gap,
                      const VehicleParams& vp, const NpcParams& np, double route_s = -1.0);

struct RewardWeights {
  double w_vs = 1.0;
  double w_vd = -0.5;
  double w_ec = -1.0;
  double w_dec = -0.5;
  double w_steer = -0.1;
  double w_eh_vd = -0.5;
};

double reward(double v_s, double v_d, double e_c, double d_e_c, double delta_s, double e_h,
              const RewardWeights& w = {});

double collision_cost(double relative_speed, double v_norm = 10.0);

enum class DoneReason { kNone, kSuccess, kCollision, kTimeout, kOffRoute };
std::string to_string(DoneReason r);

struct WorldConfig {
  std::string map = "town";
  std::string map_file;  // overrides `map` when set
  double dt = 0.1;
  int max_steps = 600;
  double goal_radius = 3.0;
  double off_route = 8.0;
  double v_norm = 10.0;
  VehicleParams vehicle;
  NpcParams npc;
  RewardWeights weights;
  double ego_length = 4.5;
  double ego_width = 1.9;
  double ego_init_speed = 4.0;
  int npc_min = 4;
  int npc_max = 8;
  double npc_base_speed = 8.0;
  double npc_speed_spread = 0.2;
  double abnormal_fraction = 0.2;
  double route_min = 120.0;
  double route_max = 260.0;
  // Share of NPCs staged to reach an intersection on the ego route at about
  // the same time as the ego; the rest are placed uniformly on the network.
  double npc_crossing_share = 0.5;
};

struct Npc {
  int id = 0;
  VehicleState state;
  std::vector<std::size_t> route_nodes;
  Polyline route = Polyline({{0, 0}, {1, 0}});
  double route_s = 0.0;
  double target_speed = 0.0;
  bool abnormal = false;
};

struct Observation {
  int step = 0;
  VehicleState ego;
  std::vector<int> npc_ids;
  std::vector<VehicleState> npcs;
};

struct RewardTerms {
  double v_s = 0, v_d = 0, e_c = 0, d_e_c = 0, delta_s = 0, e_h = 0;
};

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  double env_cost = 0.0;
  bool done = false;
  DoneReason reason = DoneReason::kNone;
  RewardTerms terms;
};

struct TraceRow {
  int t;
  int vehicle_id;
  double x, y, heading, speed;
  bool is_ego;
};

class World {
 public:
  // Deterministic in (config, road, seed).
  static World spawn(const WorldConfig& config, std::shared_ptr<const RoadNetwork> road,
                     std::uint64_t seed);
  // Scenario with hand-placed vehicles, for tests and scripted studies.
  World(const WorldConfig& config, std::shared_ptr<const RoadNetwork> road, Polyline global_path,
        VehicleState ego, std::vector<Npc> npcs, std::uint64_t seed);

  StepOutcome step(const Action& ego_action);
  Observation observe() const;

  const WorldConfig& config() const { return config_; }
  const RoadNetwork& road() const { return *road_; }
  const Polyline& global_path() const { return path_; }
  Point2 goal() const { return path_.points().back(); }
  const VehicleState& ego() const { return ego_; }
  const std::vector<Npc>& npcs() const { return npcs_; }
  int step_count() const { return step_; }
  bool done() const { return done_; }
  double ego_progress() const { return ego_s_; }
  double traveled() const { return traveled_; }
  const std::vector<TraceRow>& trace() const { return trace_; }

  // Scripted pure-pursuit driver for the ego along the global path.
  Action scripted_ego_action(double target_speed) const;

  // Canonical text of the full mutable state; equal strings mean equal worlds.
  std::string fingerprint() const;

 private:
  void record_trace();
  geom::PathProjection project_ego() const;

  WorldConfig config_;
  std::shared_ptr<const RoadNetwork> road_;
  Polyline path_;
  VehicleState ego_;
  std::vector<Npc> npcs_;
  Rng rng_;
  int step_ = 0;
  bool done_ = false;
  double ego_s_ = 0.0;
  double prev_e_c_ = 0.0;
  double traveled_ = 0.0;
  std::vector<TraceRow> trace_;
};

void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows);

}  // namespace gin::world
