#include "gin/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>

namespace gin::world {

using geom::distance;
using geom::wrap_angle;

// ---------------------------------------------------------------------------
// Road network

RoadNetwork::RoadNetwork(std::string name, std::vector<RoadNode> nodes, std::vector<RoadEdge> edges,
                         std::vector<int> spawn_points)
    : name_(std::move(name)),
      nodes_(std::move(nodes)),
      edges_(std::move(edges)),
      spawn_points_(std::move(spawn_points)) {
  if (nodes_.empty()) throw MapError("road network has no nodes");
  std::map<int, std::size_t> ids;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!geom::is_finite(nodes_[i].pos)) throw MapError("non-finite node position");
    if (!ids.emplace(nodes_[i].id, i).second) {
      throw MapError("duplicate node id " + std::to_string(nodes_[i].id));
    }
  }
  adjacency_.resize(nodes_.size());
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    RoadEdge& edge = edges_[e];
    auto fa = ids.find(edge.from), fb = ids.find(edge.to);
    if (fa == ids.end() || fb == ids.end()) {
      throw MapError("edge " + std::to_string(edge.from) + "-" + std::to_string(edge.to) +
                     " references a missing node");
    }
    if (fa->second == fb->second) throw MapError("self-loop edge at node " + std::to_string(edge.from));
    if (!(edge.lane_width > 0)) throw MapError("lane_width must be positive");
    const Point2 a = nodes_[fa->second].pos, b = nodes_[fb->second].pos;
    if (edge.shape.empty() || !(edge.shape.front() == a)) edge.shape.insert(edge.shape.begin(), a);
    if (!(edge.shape.back() == b)) edge.shape.push_back(b);
    double len = 0;
    for (std::size_t i = 0; i + 1 < edge.shape.size(); ++i) len += distance(edge.shape[i], edge.shape[i + 1]);
    lengths_.push_back(len);
    adjacency_[fa->second].push_back({e, fb->second});
    adjacency_[fb->second].push_back({e, fa->second});
  }
  for (int sp : spawn_points_) {
    if (!ids.count(sp)) throw MapError("spawn point " + std::to_string(sp) + " is not a node");
  }
  if (!spawn_points_.empty()) {
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<std::size_t> stack{ids.at(spawn_points_[0])};
    seen[stack[0]] = true;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (const auto& l : adjacency_[u]) {
        if (!seen[l.other]) {
          seen[l.other] = true;
          stack.push_back(l.other);
        }
      }
    }
    for (int sp : spawn_points_) {
      if (!seen[ids.at(sp)]) throw MapError("spawn points are not in one connected component");
    }
  }
}

std::size_t RoadNetwork::index_of(int node_id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id == node_id) return i;
  }
  throw MapError("unknown node id " + std::to_string(node_id));
}

long RoadNetwork::edge_between(std::size_t a, std::size_t b) const {
  for (const auto& l : adjacency_[a]) {
    if (l.other == b) return static_cast<long>(l.edge);
  }
  return -1;
}

Polyline RoadNetwork::centerline(const std::vector<std::size_t>& node_path) const {
  if (node_path.size() < 2) throw MapError("a path needs at least two nodes");
  std::vector<Point2> pts;
  for (std::size_t k = 0; k + 1 < node_path.size(); ++k) {
    const long e = edge_between(node_path[k], node_path[k + 1]);
    if (e < 0) throw MapError("consecutive path nodes are not adjacent");
    std::vector<Point2> shape = edges_[e].shape;
    if (nodes_[node_path[k]].id != edges_[e].from) std::reverse(shape.begin(), shape.end());
    for (std::size_t i = pts.empty() ? 0 : 1; i < shape.size(); ++i) pts.push_back(shape[i]);
  }
  return Polyline(std::move(pts));
}

Polyline RoadNetwork::lane(const std::vector<std::size_t>& node_path) const {
  double width = 0;
  for (std::size_t k = 0; k + 1 < node_path.size(); ++k) {
    width += edges_[edge_between(node_path[k], node_path[k + 1])].lane_width;
  }
  width /= static_cast<double>(node_path.size() - 1);
  return geom::offset_polyline(centerline(node_path), -0.5 * width);
}

RoadNetwork RoadNetwork::from_json(const nlohmann::json& j) {
  try {
    std::vector<RoadNode> nodes;
    for (const auto& n : j.at("nodes")) nodes.push_back({n.at("id").get<int>(), {n.at("x").get<double>(), n.at("y").get<double>()}});
    std::vector<RoadEdge> edges;
    for (const auto& e : j.at("edges")) {
      RoadEdge edge;
      edge.from = e.at("from").get<int>();
      edge.to = e.at("to").get<int>();
      edge.lane_width = e.value("lane_width", 3.5);
      if (e.contains("shape")) {
        for (const auto& p : e.at("shape")) edge.shape.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      }
      edges.push_back(std::move(edge));
    }
    std::vector<int> spawns = j.value("spawn_points", std::vector<int>{});
    return RoadNetwork(j.value("name", std::string("unnamed")), std::move(nodes), std::move(edges),
                       std::move(spawns));
  } catch (const nlohmann::json::exception& ex) {
    throw MapError(std::string("malformed map document: ") + ex.what());
  }
}

RoadNetwork RoadNetwork::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MapError("cannot open map file " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw MapError("map file " + path + " is not valid JSON: " + ex.what());
  }
  return from_json(j);
}

nlohmann::json RoadNetwork::to_json() const {
  nlohmann::json j;
  j["name"] = name_;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes_) j["nodes"].push_back({{"id", n.id}, {"x", n.pos.x}, {"y", n.pos.y}});
  j["edges"] = nlohmann::json::array();
  for (const auto& e : edges_) {
    nlohmann::json shape = nlohmann::json::array();
    for (const auto& p : e.shape) shape.push_back({p.x, p.y});
    j["edges"].push_back({{"from", e.from}, {"to", e.to}, {"lane_width", e.lane_width}, {"shape", shape}});
  }
  j["spawn_points"] = spawn_points_;
  return j;
}

namespace {

RoadNetwork star(const std::string& name, const std::vector<Point2>& arms) {
  std::vector<RoadNode> nodes{{0, {0, 0}}};
  std::vector<RoadEdge> edges;
  std::vector<int> spawns;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    nodes.push_back({id, arms[i]});
    edges.push_back({0, id, 3.5, {}});
    spawns.push_back(id);
  }
  return RoadNetwork(name, nodes, edges, spawns);
}

}  // namespace

RoadNetwork builtin_map(const std::string& name) {
  if (name == "straight") {
    std::vector<RoadNode> nodes;
    std::vector<RoadEdge> edges;
    for (int i = 0; i < 4; ++i) nodes.push_back({i, {150.0 * i, 0}});
    for (int i = 0; i < 3; ++i) edges.push_back({i, i + 1, 3.5, {}});
    return RoadNetwork("straight", nodes, edges, {0, 1, 2, 3});
  }
  if (name == "intersection") return star("intersection", {{120, 0}, {0, 120}, {-120, 0}, {0, -120}});
  if (name == "t_junction") return star("t_junction", {{120, 0}, {-120, 0}, {0, -120}});
  if (name == "town") {
    // 4 x 4 grid of 60 m blocks.
    constexpr int kSide = 4;
    constexpr double kBlock = 60.0;
    std::vector<RoadNode> nodes;
    std::vector<RoadEdge> edges;
    std::vector<int> spawns;
    for (int r = 0; r < kSide; ++r) {
      for (int c = 0; c < kSide; ++c) {
        const int id = r * kSide + c;
        nodes.push_back({id, {kBlock * c, kBlock * r}});
        spawns.push_back(id);
        if (c + 1 < kSide) edges.push_back({id, id + 1, 3.5, {}});
        if (r + 1 < kSide) edges.push_back({id, id + kSide, 3.5, {}});
      }
    }
    return RoadNetwork("town", nodes, edges, spawns);
  }
  throw MapError("unknown built-in map '" + name + "'");
}

std::vector<std::string> builtin_map_names() { return {"straight", "intersection", "t_junction", "town"}; }

Route astar(const RoadNetwork& road, int start_id, int goal_id) {
  const std::size_t s = road.index_of(start_id), g = road.index_of(goal_id);
  const auto& nodes = road.nodes();
  const std::size_t n = nodes.size();
  auto h = [&](std::size_t i) { return distance(nodes[i].pos, nodes[g].pos); };
  std::vector<double> cost(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> parent(n, n);
  std::vector<bool> closed(n, false);
  using Item = std::tuple<double, double, std::size_t>;  // f, g, node
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  cost[s] = 0;
  open.push({h(s), 0.0, s});
  while (!open.empty()) {
    auto [f, gc, u] = open.top();
    open.pop();
    if (closed[u]) continue;
    closed[u] = true;
    if (u == g) break;
    for (const auto& l : road.links(u)) {
      const double c = gc + road.edge_length(l.edge);
      if (c < cost[l.other]) {
        cost[l.other] = c;
        parent[l.other] = u;
        open.push({c + h(l.other), c, l.other});
      }
    }
  }
  if (!std::isfinite(cost[g])) {
    throw NoPathError("no path from node " + std::to_string(start_id) + " to " + std::to_string(goal_id));
  }
  Route route;
  route.cost = cost[g];
  for (std::size_t v = g; v != n; v = parent[v]) route.nodes.push_back(v);
  std::reverse(route.nodes.begin(), route.nodes.end());
  return route;
}

// ---------------------------------------------------------------------------
// Vehicles

Point2 VehicleState::velocity() const { return {speed * std::cos(heading), speed * std::sin(heading)}; }

Action Action::clipped() const {
  auto c = [](double v) { return std::isfinite(v) ? std::clamp(v, -1.0, 1.0) : 0.0; };
  return {c(throttle), c(steer)};
}

VehicleState step_vehicle(const VehicleState& s, const Action& action, double dt, const VehicleParams& p) {
  const Action a = action.clipped();
  const double delta = a.steer * p.delta_max;
  const double accel = a.throttle >= 0 ? a.throttle * p.a_max : a.throttle * p.b_max;
  VehicleState n = s;
  n.position.x += s.speed * std::cos(s.heading) * dt;
  n.position.y += s.speed * std::sin(s.heading) * dt;
  const double dtheta = s.speed / p.wheelbase * std::tan(delta) * dt;
  n.heading = wrap_angle(s.heading + dtheta);
  n.speed = std::clamp(s.speed + accel * dt, 0.0, p.v_max);
  n.accel = (n.speed - s.speed) / dt;
  n.yaw_rate = dtheta / dt;
  return n;
}

Action npc_controller(const VehicleState& npc, const Polyline& route, double target_speed,
                      std::span<const VehicleState> neighbors, bool ignore_gap, const VehicleParams& vp,
                      const NpcParams& np, double route_s) {
  const auto proj = route_s < 0 ? geom::project_onto(route, npc.position)
                                 : geom::project_onto(route, npc.position, route_s - 10.0, route_s + 20.0);
  const double lookahead = np.lookahead_min + np.lookahead_gain * npc.speed;
  const Pose target = geom::pose_at_arc_length(route, proj.arc_length + lookahead);
  const double dx = target.x - npc.position.x, dy = target.y - npc.position.y;
  const double c = std::cos(npc.heading), s = std::sin(npc.heading);
  const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
  const double ld2 = lx * lx + ly * ly;
  double delta = 0;
  if (ld2 > 1e-9) delta = std::atan(2.0 * vp.wheelbase * ly / ld2);
  Action a;
  a.steer = std::clamp(delta / vp.delta_max, -1.0, 1.0);

  double desired = target_speed;
  if (!ignore_gap) {
    for (const auto& nb : neighbors) {
      const auto q = geom::project_onto(route, nb.position, proj.arc_length - 5.0,
                                        proj.arc_length + np.gap_range + 10.0);
      const double ds = q.arc_length - proj.arc_length;
      if (std::abs(q.lateral) >= np.lane_half_width || ds <= 0 || ds > np.gap_range) continue;
      if (distance(q.foot, nb.position) >= np.lane_half_width) continue;
      const double gap = ds - 0.5 * (npc.length + nb.length);
      desired = std::min(desired, std::max(0.0, (gap - np.standstill_gap) / np.headway));
    }
  }
  a.throttle = std::clamp(np.speed_gain * (desired - npc.speed), -1.0, 1.0);
  if (desired < 0.05 && npc.speed < 0.5) a.throttle = std::min(a.throttle, -0.2);
  return a;
}

double reward(double v_s, double v_d, double e_c, double d_e_c, double delta_s, double e_h,
              const RewardWeights& w) {
  return w.w_vs * std::abs(v_s) + w.w_vd * std::abs(v_d) + w.w_ec * std::abs(e_c) +
         w.w_dec * std::abs(d_e_c) + w.w_steer * std::abs(delta_s) + w.w_eh_vd * std::abs(e_h) * std::abs(v_d);
}

double collision_cost(double relative_speed, double v_norm) {
  if (relative_speed <= 0) return 0.0;
  return std::min(1.0, relative_speed / v_norm);
}

std::string to_string(DoneReason r) {
  switch (r) {
    case DoneReason::kNone: return "none";
    case DoneReason::kSuccess: return "success";
    case DoneReason::kCollision: return "collision";
    case DoneReason::kTimeout: return "timeout";
    case DoneReason::kOffRoute: return "off_route";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// World

namespace {

// Random walk over the graph without immediate reversal, stopping at dead
// ends or once `min_length` metres are covered.
std::vector<std::size_t> random_walk(const RoadNetwork& road, std::vector<std::size_t> prefix,
                                     double min_length, Rng& rng) {
  double len = 0;
  for (std::size_t k = 0; k + 1 < prefix.size(); ++k) {
    len += road.edge_length(road.edge_between(prefix[k], prefix[k + 1]));
  }
  while (len < min_length) {
    const std::size_t u = prefix.back();
    const std::size_t prev = prefix.size() >= 2 ? prefix[prefix.size() - 2] : road.nodes().size();
    std::vector<RoadNetwork::Link> options;
    for (const auto& l : road.links(u)) {
      if (l.other != prev) options.push_back(l);
    }
    if (options.empty()) break;
    const auto& pick = options[rng.index(options.size())];
    prefix.push_back(pick.other);
    len += road.edge_length(pick.edge);
  }
  return prefix;
}

bool too_close(const VehicleState& v, const VehicleState& ego, const std::vector<Npc>& npcs) {
  if (distance(v.position, ego.position) < 15.0) return true;
  for (const auto& o : npcs) {
    if (distance(v.position, o.state.position) < 9.0) return true;
  }
  return false;
}

std::string hexd(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

}  // namespace

World::World(const WorldConfig& config, std::shared_ptr<const RoadNetwork> road, Polyline global_path,
             VehicleState ego, std::vector<Npc> npcs, std::uint64_t seed)
    : config_(config),
      road_(std::move(road)),
      path_(std::move(global_path)),
      ego_(ego),
      npcs_(std::move(npcs)),
      rng_(derive_seed(seed, 1)) {
  if (!(config_.dt > 0)) throw ScenarioError("dt must be positive");
  const auto proj = geom::project_onto(path_, ego_.position);
  ego_s_ = proj.arc_length;
  prev_e_c_ = proj.lateral;
  for (auto& n : npcs_) n.route_s = geom::project_onto(n.route, n.state.position).arc_length;
  record_trace();
}

World World::spawn(const WorldConfig& config, std::shared_ptr<const RoadNetwork> road, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0));
  const RoadNetwork& net = *road;
  if (net.spawn_points().empty()) throw ScenarioError("map " + net.name() + " has no spawn points");
  if (config.npc_min < 0 || config.npc_max < config.npc_min) throw ScenarioError("bad npc count range");

  // Ego route: random start among spawn points, goal among nodes whose
  // shortest path falls in the configured length band.
  Route route;
  bool found = false;
  for (int attempt = 0; attempt < 64 && !found; ++attempt) {
    const int start = net.spawn_points()[rng.index(net.spawn_points().size())];
    std::vector<Route> candidates;
    for (const auto& n : net.nodes()) {
      if (n.id == start) continue;
      try {
        Route r = astar(net, start, n.id);
        if (r.cost >= config.route_min && r.cost <= config.route_max) candidates.push_back(std::move(r));
      } catch (const NoPathError&) {
      }
    }
    if (!candidates.empty()) {
      route = candidates[rng.index(candidates.size())];
      found = true;
    }
  }
  if (!found) {
    throw ScenarioError("no route with length in [" + std::to_string(config.route_min) + ", " +
                        std::to_string(config.route_max) + "] on map " + net.name());
  }
  Polyline path = net.lane(route.nodes);
  const Pose start = geom::pose_at_arc_length(path, 0.0);
  VehicleState ego;
  ego.position = {start.x, start.y};
  ego.heading = start.theta;
  ego.speed = config.ego_init_speed;
  ego.length = config.ego_length;
  ego.width = config.ego_width;

  // Arc length of each ego-route node along the centerline.
  std::vector<double> node_arc{0.0};
  for (std::size_t k = 0; k + 1 < route.nodes.size(); ++k) {
    node_arc.push_back(node_arc.back() + net.edge_length(net.edge_between(route.nodes[k], route.nodes[k + 1])));
  }

  const int count = rng.uniform_int(config.npc_min, config.npc_max);
  std::vector<Npc> npcs;
  int attempts = 0;
  while (static_cast<int>(npcs.size()) < count) {
    if (++attempts > 400) throw ScenarioError("could not place " + std::to_string(count) + " vehicles");
    Npc npc;
    npc.id = static_cast<int>(npcs.size()) + 1;
    npc.abnormal = rng.bernoulli(config.abnormal_fraction);
    npc.target_speed = config.npc_base_speed *
                       rng.uniform(1.0 - config.npc_speed_spread, 1.0 + config.npc_speed_spread);
    double s0 = 0;
    std::vector<std::size_t> nodes;
    if (rng.bernoulli(config.npc_crossing_share)) {
      // Approach an intersection on the ego route from a side road.
      std::vector<std::size_t> junctions;
      for (std::size_t k = 1; k < route.nodes.size(); ++k) {
        if (net.links(route.nodes[k]).size() >= 3) junctions.push_back(k);
      }
      if (junctions.empty()) continue;
      const std::size_t k = junctions[rng.index(junctions.size())];
      const std::size_t c = route.nodes[k];
      std::vector<std::size_t> sides;
      for (const auto& l : net.links(c)) {
        const bool on_route = l.other == route.nodes[k - 1] ||
                              (k + 1 < route.nodes.size() && l.other == route.nodes[k + 1]);
        if (!on_route) sides.push_back(l.other);
      }
      if (sides.empty()) continue;
      const std::size_t u = sides[rng.index(sides.size())];
      // Extend backwards one edge when possible so there is room to approach.
      std::vector<std::size_t> before;
      for (const auto& l : net.links(u)) {
        if (l.other != c) before.push_back(l.other);
      }
      nodes = before.empty() ? std::vector<std::size_t>{u, c}
                             : std::vector<std::size_t>{before[rng.index(before.size())], u, c};
      nodes = random_walk(net, nodes, 400.0, rng);
      double sc = 0;
      for (std::size_t i = 0; i + 1 < nodes.size() && nodes[i] != c; ++i) {
        sc += net.edge_length(net.edge_between(nodes[i], nodes[i + 1]));
      }
      const double ego_eta = node_arc[k] / std::max(1.0, config.npc_base_speed);
      s0 = std::max(0.0, sc - npc.target_speed * ego_eta * rng.uniform(0.8, 1.2));
    } else {
      const std::size_t s = rng.index(net.nodes().size());
      nodes = random_walk(net, {s}, 400.0, rng);
      if (nodes.size() < 2) continue;
      double total = 0;
      for (std::size_t i = 0; i + 1 < nodes.size(); ++i) total += net.edge_length(net.edge_between(nodes[i], nodes[i + 1]));
      s0 = rng.uniform(0.0, std::min(0.5 * total, 150.0));
    }
    npc.route_nodes = nodes;
    npc.route = net.lane(nodes);
    const Pose p = geom::pose_at_arc_length(npc.route, s0);
    npc.state.position = {p.x, p.y};
    npc.state.heading = p.theta;
    npc.state.speed = npc.target_speed;
    npc.route_s = s0;
    if (too_close(npc.state, ego, npcs)) continue;
    npcs.push_back(std::move(npc));
  }
  return World(config, std::move(road), std::move(path), ego, std::move(npcs), seed);
}

geom::PathProjection World::project_ego() const {
  return geom::project_onto(path_, ego_.position, ego_s_ - 10.0, ego_s_ + 30.0);
}

Observation World::observe() const {
  Observation o;
  o.step = step_;
  o.ego = ego_;
  for (const auto& n : npcs_) {
    o.npc_ids.push_back(n.id);
    o.npcs.push_back(n.state);
  }
  return o;
}

StepOutcome World::step(const Action& ego_action) {
  if (done_) throw std::logic_error("World::step called after the episode ended");
  const Action a = ego_action.clipped();
  const double dt = config_.dt;

  // Every vehicle decides from the same snapshot, then all advance.
  std::vector<Action> npc_actions;
  npc_actions.reserve(npcs_.size());
  for (std::size_t i = 0; i < npcs_.size(); ++i) {
    std::vector<VehicleState> others{ego_};
    for (std::size_t j = 0; j < npcs_.size(); ++j) {
      if (j != i) others.push_back(npcs_[j].state);
    }
    npc_actions.push_back(npc_controller(npcs_[i].state, npcs_[i].route, npcs_[i].target_speed, others,
                                         npcs_[i].abnormal, config_.vehicle, config_.npc, npcs_[i].route_s));
  }
  const VehicleState prev = ego_;
  ego_ = step_vehicle(ego_, a, dt, config_.vehicle);
  traveled_ += distance(prev.position, ego_.position);
  for (std::size_t i = 0; i < npcs_.size(); ++i) {
    Npc& n = npcs_[i];
    n.state = step_vehicle(n.state, npc_actions[i], dt, config_.vehicle);
    n.route_s = geom::project_onto(n.route, n.state.position, n.route_s - 10.0, n.route_s + 20.0).arc_length;
  }
  // Vehicles that reach the end of their route leave the map.
  std::erase_if(npcs_, [](const Npc& n) { return n.route_s >= n.route.length() - 1.0; });
  ++step_;

  StepOutcome out;
  const geom::Polygon ego_g = geom::vehicle_footprint(ego_.pose(), ego_.length, ego_.width);
  bool contact = false;
  double rel_speed = 0;
  for (const auto& n : npcs_) {
    if (distance(n.state.position, ego_.position) > ego_.length + n.state.length) continue;
    const geom::Polygon g = geom::vehicle_footprint(n.state.pose(), n.state.length, n.state.width);
    if (geom::polygons_intersect(ego_g, g)) {
      contact = true;
      rel_speed = std::max(rel_speed, geom::norm(ego_.velocity() - n.state.velocity()));
    }
  }
  out.env_cost = contact ? collision_cost(rel_speed, config_.v_norm) : 0.0;

  const auto proj = project_ego();
  ego_s_ = proj.arc_length;
  RewardTerms& t = out.terms;
  t.e_c = proj.lateral;
  t.e_h = wrap_angle(ego_.heading - proj.tangent);
  t.v_s = ego_.speed * std::cos(t.e_h);
  t.v_d = ego_.speed * std::sin(t.e_h);
  t.d_e_c = t.e_c - prev_e_c_;
  t.delta_s = a.steer * config_.vehicle.delta_max;
  prev_e_c_ = t.e_c;
  out.reward = reward(t.v_s, t.v_d, t.e_c, t.d_e_c, t.delta_s, t.e_h, config_.weights);

  if (contact) {
    out.reason = DoneReason::kCollision;
  } else if (distance(ego_.position, goal()) <= config_.goal_radius) {
    out.reason = DoneReason::kSuccess;
  } else if (std::abs(t.e_c) > config_.off_route) {
    out.reason = DoneReason::kOffRoute;
  } else if (step_ >= config_.max_steps) {
    out.reason = DoneReason::kTimeout;
  }
  out.done = out.reason != DoneReason::kNone;
  done_ = out.done;
  record_trace();
  out.observation = observe();
  return out;
}

Action World::scripted_ego_action(double target_speed) const {
  std::vector<VehicleState> none;
  return npc_controller(ego_, path_, target_speed, none, true, config_.vehicle, config_.npc, ego_s_);
}

void World::record_trace() {
  trace_.push_back({step_, 0, ego_.position.x, ego_.position.y, ego_.heading, ego_.speed, true});
  for (const auto& n : npcs_) {
    trace_.push_back({step_, n.id, n.state.position.x, n.state.position.y, n.state.heading, n.state.speed, false});
  }
}

std::string World::fingerprint() const {
  std::ostringstream os;
  auto vs = [&](const VehicleState& v) {
    os << hexd(v.position.x) << ' ' << hexd(v.position.y) << ' ' << hexd(v.heading) << ' ' << hexd(v.speed)
       << ' ' << hexd(v.accel) << ' ' << hexd(v.yaw_rate) << ' ' << hexd(v.length) << ' ' << hexd(v.width) << '\n';
  };
  os << "step " << step_ << " done " << done_ << '\n';
  for (const auto& p : path_.points()) os << hexd(p.x) << ',' << hexd(p.y) << ' ';
  os << '\n';
  vs(ego_);
  for (const auto& n : npcs_) {
    os << "npc " << n.id << ' ' << n.abnormal << ' ' << hexd(n.target_speed) << ' ' << hexd(n.route_s) << '\n';
    for (auto k : n.route_nodes) os << k << ' ';
    os << '\n';
    vs(n.state);
  }
  os << rng_.state();
  return os.str();
}

void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows) {
  os << "t,vehicle_id,x,y,heading,speed,is_ego\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%d\n", r.t, r.vehicle_id, r.x, r.y, r.heading,
                  r.speed, r.is_ego ? 1 : 0);
    os << buf;
  }
}

}  // namespace gin::world
