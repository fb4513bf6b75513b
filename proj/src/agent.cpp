#include "gin/agent.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <unordered_map>

namespace gin::agent {

namespace {

using world::DoneReason;

constexpr std::uint64_t kTrainEpisodes = 11;
constexpr std::uint64_t kEvalEpisodes = 12;
constexpr std::size_t kVehicleCols = 12;
constexpr std::size_t kTransitionCols = 13;

const std::vector<std::pair<std::string, Toggles>>& variant_table() {
  using predict::EncoderKind;
  static const std::vector<std::pair<std::string, Toggles>> table = {
      {"B1", {false, false, false, false, EncoderKind::kGraph}},
      {"B2", {false, true, false, false, EncoderKind::kGraph}},
      {"B3", {false, true, true, false, EncoderKind::kGraph}},
      {"B4", {true, false, false, false, EncoderKind::kGraph}},
      {"B5", {true, true, false, false, EncoderKind::kGraph}},
      {"B6", {true, false, true, false, EncoderKind::kGraph}},
      {"B7", {true, true, true, false, EncoderKind::kGraph}},
      {"B8", {true, true, true, true, EncoderKind::kGraph}},
      {"RN", {true, true, true, true, EncoderKind::kNoise}},
      {"VGRU", {true, true, true, true, EncoderKind::kGruOnly}},
  };
  return table;
}

Tensor string_tensor(const std::string& s) {
  Tensor t({s.size()});
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = static_cast<unsigned char>(s[i]);
  return t;
}

std::string tensor_string(const Tensor& t) {
  std::string s(t.size(), '\0');
  for (std::size_t i = 0; i < t.size(); ++i) s[i] = static_cast<char>(static_cast<unsigned char>(t[i]));
  return s;
}

bool is_success(DoneReason r) { return r == DoneReason::kSuccess; }
bool is_collision(DoneReason r) { return r == DoneReason::kCollision; }

}  // namespace

Toggles variant_toggles(const std::string& name) {
  for (const auto& [n, t] : variant_table()) {
    if (n == name) return t;
  }
  throw std::invalid_argument("unknown variant '" + name + "'");
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : variant_table()) out.push_back(entry.first);
    return out;
  }();
  return names;
}

AgentConfig resolve(AgentConfig c) {
  const Toggles t = variant_toggles(c.variant);
  c.feat.wedge = t.wedge;
  c.predict.encoder = t.encoder;
  c.predict.n_max = c.feat.n_max;
  c.predict.history = c.feat.history;
  c.predict.hops = c.feat.hops;
  c.predict.dt = c.world.dt;
  c.wcsac.cost = t.cost;
  c.wcsac.net.z_dim = c.predict.z_dim;
  if (c.capacity == 0) throw std::invalid_argument("capacity must be positive");
  if (c.batch == 0) throw std::invalid_argument("batch must be positive");
  if (c.predictor_every < 1) throw std::invalid_argument("predictor_every must be at least 1");
  if (c.updates_per_step < 0) throw std::invalid_argument("updates_per_step must be non-negative");
  return c;
}

std::shared_ptr<const world::RoadNetwork> load_road(const world::WorldConfig& config) {
  if (!config.map_file.empty()) {
    return std::make_shared<const world::RoadNetwork>(world::RoadNetwork::load(config.map_file));
  }
  return std::make_shared<const world::RoadNetwork>(world::builtin_map(config.map));
}

feat::CenteredGraphFeature Transition::centered(const feat::FeatConfig& config) const {
  if (!has_centered(config.history)) throw feat::InsufficientHistory("transition has no centered window");
  const auto begin = log->frames.begin() + (frame + 1 - static_cast<int>(2 * config.history));
  const std::vector<world::Observation> window(begin, log->frames.begin() + frame + 1);
  return feat::build_centered_feature(window, config);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t k, Rng& rng) const {
  if (items_.empty()) throw std::out_of_range("sample from an empty replay buffer");
  std::vector<const Transition*> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(&items_[rng.index(items_.size())]);
  return out;
}

void write_episode_header(std::ostream& os) {
  os << "episode,env_steps,return,cost,aux_cost,distance,steps,reason\n";
}

void write_loss_header(std::ostream& os) {
  os << "step,prediction_loss,actor_loss,critic_loss,cost_critic_loss,beta,kappa,mean_gamma\n";
}

void write_progress_header(std::ostream& os) {
  os << "env_steps,success_rate,collision_rate,return_mean,cost_mean\n";
}

Trainer::Trainer(const AgentConfig& config, std::uint64_t seed)
    : config_(resolve(config)),
      toggles_(variant_toggles(config_.variant)),
      seed_(seed),
      road_(load_road(config_.world)),
      predictor_(config_.predict, derive_seed(seed, 1)),
      wcsac_(config_.wcsac, derive_seed(seed, 2)),
      buffer_(config_.capacity),
      action_rng_(derive_seed(seed, 3)),
      sample_rng_(derive_seed(seed, 4)),
      update_rng_(derive_seed(seed, 5)),
      next_eval_(config_.eval_every) {}

std::uint64_t Trainer::eval_seed(int k) const {
  return derive_seed(derive_seed(seed_, kEvalEpisodes), static_cast<std::uint64_t>(k));
}

std::shared_ptr<const ControlInput> Trainer::control_input(const world::World& w,
                                                           const std::vector<world::Observation>& frames,
                                                           feat::SocialGraphFeature* graph_out) {
  const std::size_t h = config_.feat.history;
  const std::span<const world::Observation> recent(frames.data() + frames.size() - h, h);
  feat::SocialGraphFeature graph = feat::build_social_graph(recent, config_.feat);
  const Tensor z = predictor_.encode(predict::make_batch({&graph}));
  auto input = std::make_shared<ControlInput>();
  input->z = z.reshaped({z.dim(1), z.dim(2)});
  input->positions = graph.positions;
  input->mask = graph.mask;
  const world::VehicleState& ego = w.ego();
  input->path = feat::build_path_feature(w.global_path(), ego.pose(), ego.speed, config_.feat.lookahead,
                                         w.ego_progress())
                    .values();
  if (graph_out) *graph_out = std::move(graph);
  return input;
}

bool predicted_conflict(const RiskScene& scene, double margin) {
  const std::size_t n = scene.mask.size();
  const std::size_t h = n ? scene.trajectories.size() / (n * 2) : 0;
  auto polyline = [&](std::size_t slot) {
    std::vector<geom::Point2> pts{{scene.positions[slot * 2], scene.positions[slot * 2 + 1]}};
    for (std::size_t t = 0; t < h; ++t) {
      pts.push_back({scene.trajectories[(slot * h + t) * 2], scene.trajectories[(slot * h + t) * 2 + 1]});
    }
    return geom::Polyline(std::move(pts));
  };
  auto pose = [&](std::size_t slot) {
    return geom::Pose{scene.positions[slot * 2], scene.positions[slot * 2 + 1], scene.headings[slot]};
  };
  const geom::Polygon ego_g =
      geom::vehicle_footprint(pose(0), scene.extents[0][0], scene.extents[0][1], margin, margin);
  const geom::Polyline ego_l = polyline(0);
  std::vector<geom::Polygon> others_g;
  std::vector<geom::Polyline> others_l;
  for (std::size_t j = 1; j < n; ++j) {
    if (scene.mask[j] == 0) continue;
    others_g.push_back(geom::vehicle_footprint(pose(j), scene.extents[j][0], scene.extents[j][1]));
    others_l.push_back(polyline(j));
  }
  return geom::auxiliary_cost(ego_g, ego_l, others_g, others_l) != 0;
}

double Trainer::auxiliary_cost(const ControlInput& input, const feat::SocialGraphFeature& graph,
                               const world::Observation& last) {
  const std::size_t n = input.mask.size(), h = config_.feat.history;
  RiskScene scene;
  scene.positions = input.positions;
  scene.mask = input.mask;
  const Tensor traj = predictor_.decode(input.z.reshaped({1, n, input.z.dim(1)}),
                                        input.positions.reshaped({1, n, 2}), input.mask.reshaped({1, n}));
  scene.trajectories = traj.reshaped({n, h, 2});
  scene.headings.assign(n, 0.0);
  scene.extents.assign(n, {4.5, 1.9});
  scene.extents[0] = {config_.world.ego_length, config_.world.ego_width};
  for (std::size_t j = 1; j < n; ++j) {
    if (input.mask[j] == 0) continue;
    scene.headings[j] = graph.nodes[(j * h + (h - 1)) * feat::kNodeDim + 2];
    for (std::size_t k = 0; k < last.npc_ids.size(); ++k) {
      if (last.npc_ids[k] == graph.ids[j]) scene.extents[j] = {last.npcs[k].length, last.npcs[k].width};
    }
  }
  return predicted_conflict(scene, config_.aux_margin) ? config_.cost_aux_scale : 0.0;
}

safectrl::StateBatch Trainer::state_batch(const std::vector<const ControlInput*>& inputs) const {
  const std::size_t b = inputs.size();
  const std::size_t n = inputs.front()->mask.size(), dz = inputs.front()->z.dim(1);
  Tensor z({b, n, dz}), pos({b, n, 2}), mask({b, n}), path({b, feat::kPathDim});
  for (std::size_t i = 0; i < b; ++i) {
    const ControlInput& in = *inputs[i];
    std::copy(in.z.data(), in.z.data() + n * dz, z.data() + i * n * dz);
    std::copy(in.positions.data(), in.positions.data() + n * 2, pos.data() + i * n * 2);
    std::copy(in.mask.data(), in.mask.data() + n, mask.data() + i * n);
    std::copy(in.path.begin(), in.path.end(), path.data() + i * feat::kPathDim);
  }
  return {std::move(z), safectrl::pooling_weights(pos, mask, config_.dap_tau, toggles_.dap), std::move(path)};
}

std::array<double, safectrl::kActionDim> Trainer::choose(const ControlInput& input, Mode mode) {
  if (mode == Mode::kTrain && env_steps_ < config_.start_steps) {
    return {action_rng_.uniform(-1, 1), action_rng_.uniform(-1, 1)};
  }
  return wcsac_.act(state_batch({&input}), action_rng_, mode == Mode::kEval);
}

EpisodeRecord Trainer::run_episode(std::uint64_t episode_seed, Mode mode, EpisodeLog* log_out) {
  world::World w = world::World::spawn(config_.world, road_, episode_seed);
  auto log = std::make_shared<EpisodeLog>();
  log->frames.push_back(w.observe());
  const std::size_t h = config_.feat.history;
  const bool train = mode == Mode::kTrain;

  EpisodeRecord rec;
  std::shared_ptr<const ControlInput> current;
  feat::SocialGraphFeature graph;
  while (!w.done()) {
    if (log->frames.size() < h) {
      const world::StepOutcome out = w.step({config_.warmup_throttle, 0.0});
      log->frames.push_back(out.observation);
      rec.ret += out.reward;
      rec.cost += out.env_cost;
      rec.steps += 1;
      rec.reason = out.reason;
      continue;
    }
    if (!current) current = control_input(w, log->frames, &graph);
    const auto action = choose(*current, mode);
    const int frame = static_cast<int>(log->frames.size()) - 1;
    const world::StepOutcome out = w.step({action[0], action[1]});
    log->frames.push_back(out.observation);
    rec.ret += out.reward;
    rec.cost += out.env_cost;
    rec.steps += 1;
    rec.reason = out.reason;

    if (!train) {
      if (!w.done()) current = control_input(w, log->frames, &graph);
      continue;
    }

    Transition t;
    t.s = current;
    t.action = action;
    t.reward = out.reward;
    t.env_cost = out.env_cost;
    if (toggles_.aux) t.aux_cost = auxiliary_cost(*current, graph, log->frames[frame]);
    t.c_plus = t.env_cost + t.aux_cost;
    t.terminal = out.done && out.reason != DoneReason::kTimeout;
    t.reason = out.reason;
    t.log = log;
    t.frame = frame;
    feat::SocialGraphFeature next_graph;
    auto next = control_input(w, log->frames, &next_graph);
    t.next = next;
    rec.aux_cost += t.aux_cost;
    buffer_.push(std::move(t));
    current = std::move(next);
    graph = std::move(next_graph);
    env_steps_ += 1;

    for (int u = 0; u < config_.updates_per_step; ++u) {
      GradientReport r = gradient_step();
      if (!r.applied) break;
      if (sinks_ && sinks_->losses) {
        const auto& c = r.control;
        *sinks_->losses << gradient_steps_ << ',' << r.prediction_loss << ',' << c.actor_loss << ','
                        << c.critic_loss << ',' << c.cost_critic_loss << ',' << c.beta << ',' << c.kappa << ','
                        << c.mean_gamma << '\n';
      }
    }
  }
  rec.distance = w.traveled();
  if (log_out) *log_out = *log;
  return rec;
}

EpisodeRecord Trainer::train_episode() {
  const std::uint64_t s = derive_seed(derive_seed(seed_, kTrainEpisodes), static_cast<std::uint64_t>(episodes_));
  EpisodeRecord rec = run_episode(s, Mode::kTrain, nullptr);
  episodes_ += 1;
  return rec;
}

EpisodeRecord Trainer::eval_episode(std::uint64_t episode_seed, EpisodeLog* log) {
  return run_episode(episode_seed, Mode::kEval, log);
}

GradientReport Trainer::gradient_step() {
  GradientReport report;
  if (buffer_.size() < config_.min_buffer || buffer_.size() == 0) return report;
  const auto batch = buffer_.sample(config_.batch, sample_rng_);

  if (gradient_steps_ % config_.predictor_every == 0) {
    std::vector<feat::CenteredGraphFeature> windows;
    for (const Transition* t : batch) {
      if (windows.size() == config_.predictor_batch) break;
      if (t->has_centered(config_.feat.history)) windows.push_back(t->centered(config_.feat));
    }
    if (!windows.empty()) {
      std::vector<const feat::CenteredGraphFeature*> ptrs;
      for (const auto& w : windows) ptrs.push_back(&w);
      report.prediction_loss = predictor_.train_step(predict::make_train_batch(ptrs));
    }
  }

  std::vector<const ControlInput*> s, next;
  const std::size_t b = batch.size();
  safectrl::TransitionBatch tb;
  tb.action = Tensor({b, safectrl::kActionDim});
  tb.reward = Tensor({b});
  tb.cost = Tensor({b});
  tb.done = Tensor({b});
  for (std::size_t i = 0; i < b; ++i) {
    const Transition& t = *batch[i];
    s.push_back(t.s.get());
    next.push_back(t.next.get());
    tb.action[i * 2] = t.action[0];
    tb.action[i * 2 + 1] = t.action[1];
    tb.reward[i] = t.reward * config_.reward_scale;
    tb.cost[i] = t.c_plus;
    tb.done[i] = t.terminal ? 1.0 : 0.0;
  }
  tb.s = state_batch(s);
  tb.next = state_batch(next);
  report.control = wcsac_.update(tb, update_rng_);
  report.applied = true;
  gradient_steps_ += 1;
  last_report_ = report;
  return report;
}

void Trainer::evaluate_snapshot(const TrainSinks& sinks) {
  double success = 0, collision = 0, ret = 0, cost = 0;
  const int n = config_.eval_episodes;
  for (int k = 0; k < n; ++k) {
    const EpisodeRecord r = eval_episode(eval_seed(k));
    success += is_success(r.reason);
    collision += is_collision(r.reason);
    ret += r.ret;
    cost += r.cost;
  }
  if (sinks.progress && n > 0) {
    *sinks.progress << env_steps_ << ',' << success / n << ',' << collision / n << ',' << ret / n << ','
                    << cost / n << '\n';
  }
}

void Trainer::train(long total_steps, const TrainSinks& sinks) {
  sinks_ = &sinks;
  while (env_steps_ < total_steps) {
    const long episode = episodes_;
    const EpisodeRecord r = train_episode();
    if (sinks.episodes) {
      *sinks.episodes << episode << ',' << env_steps_ << ',' << r.ret << ',' << r.cost << ',' << r.aux_cost << ','
                      << r.distance << ',' << r.steps << ',' << world::to_string(r.reason) << '\n';
    }
    if (config_.eval_every > 0 && env_steps_ >= next_eval_) {
      evaluate_snapshot(sinks);
      while (next_eval_ <= env_steps_) next_eval_ += config_.eval_every;
    }
  }
  sinks_ = nullptr;
}

// Checkpoint layout: learner tensors as <owner>/<name>.{value,m,v}, optimiser
// step counts, counters, the training seed, rng states and the replay buffer with shared
// control inputs and episode logs stored once.
std::vector<ad::NamedTensor> Trainer::state() {
  std::vector<ad::NamedTensor> out;
  auto params = [&](const std::string& owner, const std::vector<ad::Parameter*>& ps) {
    for (const ad::Parameter* p : ps) {
      out.push_back({owner + "/" + p->name + ".value", p->value});
      out.push_back({owner + "/" + p->name + ".m", p->m});
      out.push_back({owner + "/" + p->name + ".v", p->v});
    }
  };
  params("predictor", predictor_.parameters());
  params("wcsac", wcsac_.parameters());
  out.push_back({"predictor/adam_steps", Tensor({1}, {static_cast<double>(predictor_.optimizer().steps())})});
  {
    const auto opts = wcsac_.optimizers();
    Tensor steps({opts.size()});
    for (std::size_t i = 0; i < opts.size(); ++i) steps[i] = static_cast<double>(opts[i]->steps());
    out.push_back({"wcsac/adam_steps", steps});
  }
  out.push_back({"counters", Tensor({5}, {static_cast<double>(env_steps_), static_cast<double>(gradient_steps_),
                                          static_cast<double>(episodes_), static_cast<double>(next_eval_),
                                          static_cast<double>(predictor_.skipped_batches())})});
  out.push_back({"seed", string_tensor(std::to_string(seed_))});
  out.push_back({"rng/action", string_tensor(action_rng_.state())});
  out.push_back({"rng/sample", string_tensor(sample_rng_.state())});
  out.push_back({"rng/update", string_tensor(update_rng_.state())});
  out.push_back({"rng/noise", string_tensor(predictor_.encoder().noise().state())});

  // Replay buffer.
  std::unordered_map<const ControlInput*, std::size_t> input_index;
  std::unordered_map<const EpisodeLog*, std::size_t> log_index;
  std::vector<const ControlInput*> inputs;
  std::vector<const EpisodeLog*> logs;
  auto intern_input = [&](const ControlInput* p) {
    auto [it, fresh] = input_index.emplace(p, inputs.size());
    if (fresh) inputs.push_back(p);
    return it->second;
  };
  auto intern_log = [&](const EpisodeLog* p) {
    auto [it, fresh] = log_index.emplace(p, logs.size());
    if (fresh) logs.push_back(p);
    return it->second;
  };
  const std::size_t count = buffer_.size();
  Tensor rows({count, kTransitionCols});
  for (std::size_t i = 0; i < count; ++i) {
    const Transition& t = buffer_[i];
    const double vals[kTransitionCols] = {static_cast<double>(intern_input(t.s.get())),
                                          static_cast<double>(intern_input(t.next.get())),
                                          t.action[0],
                                          t.action[1],
                                          t.reward,
                                          t.env_cost,
                                          t.aux_cost,
                                          t.c_plus,
                                          t.terminal ? 1.0 : 0.0,
                                          static_cast<double>(static_cast<int>(t.reason)),
                                          t.log ? static_cast<double>(intern_log(t.log.get())) : -1.0,
                                          static_cast<double>(t.frame),
                                          0.0};
    std::copy(vals, vals + kTransitionCols, rows.data() + i * kTransitionCols);
  }
  out.push_back({"buffer/transitions", rows});

  const std::size_t n = config_.feat.n_max, dz = config_.predict.z_dim;
  Tensor z({inputs.size(), n, dz}), pos({inputs.size(), n, 2}), mask({inputs.size(), n}),
      path({inputs.size(), feat::kPathDim});
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ControlInput& in = *inputs[i];
    std::copy(in.z.data(), in.z.data() + n * dz, z.data() + i * n * dz);
    std::copy(in.positions.data(), in.positions.data() + n * 2, pos.data() + i * n * 2);
    std::copy(in.mask.data(), in.mask.data() + n, mask.data() + i * n);
    std::copy(in.path.begin(), in.path.end(), path.data() + i * feat::kPathDim);
  }
  out.push_back({"buffer/z", z});
  out.push_back({"buffer/positions", pos});
  out.push_back({"buffer/mask", mask});
  out.push_back({"buffer/path", path});

  std::vector<double> vehicles;
  for (std::size_t l = 0; l < logs.size(); ++l) {
    for (std::size_t f = 0; f < logs[l]->frames.size(); ++f) {
      const world::Observation& o = logs[l]->frames[f];
      auto row = [&](int id, const world::VehicleState& v) {
        const double vals[kVehicleCols] = {static_cast<double>(l), static_cast<double>(f), static_cast<double>(o.step),
                                           static_cast<double>(id), v.position.x, v.position.y, v.heading, v.speed,
                                           v.accel, v.yaw_rate, v.length, v.width};
        vehicles.insert(vehicles.end(), vals, vals + kVehicleCols);
      };
      row(feat::kEgoId, o.ego);
      for (std::size_t k = 0; k < o.npcs.size(); ++k) row(o.npc_ids[k], o.npcs[k]);
    }
  }
  const std::size_t vrows = vehicles.size() / kVehicleCols;
  out.push_back({"buffer/vehicles", Tensor({vrows, kVehicleCols}, std::move(vehicles))});
  return out;
}

void Trainer::set_state(const std::vector<ad::NamedTensor>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : tensors) by_name[nt.name] = &nt.tensor;
  auto get = [&](const std::string& name) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks '" + name + "'");
    return *it->second;
  };
  auto load_into = [&](const std::string& name, Tensor& dst) {
    const Tensor& src = get(name);
    if (src.shape() != dst.shape()) {
      throw CheckpointError("checkpoint tensor '" + name + "' has shape " + ad::shape_string(src.shape()) +
                            ", expected " + ad::shape_string(dst.shape()));
    }
    dst = src;
  };
  auto params = [&](const std::string& owner, const std::vector<ad::Parameter*>& ps) {
    for (ad::Parameter* p : ps) {
      load_into(owner + "/" + p->name + ".value", p->value);
      load_into(owner + "/" + p->name + ".m", p->m);
      load_into(owner + "/" + p->name + ".v", p->v);
      p->grad.fill(0.0);
    }
  };
  params("predictor", predictor_.parameters());
  params("wcsac", wcsac_.parameters());
  predictor_.optimizer().set_steps(static_cast<long>(get("predictor/adam_steps").item()));
  {
    const auto opts = wcsac_.optimizers();
    const Tensor& steps = get("wcsac/adam_steps");
    if (steps.size() != opts.size()) throw CheckpointError("checkpoint optimiser count mismatch");
    for (std::size_t i = 0; i < opts.size(); ++i) opts[i]->set_steps(static_cast<long>(steps[i]));
  }
  const Tensor& counters = get("counters");
  if (counters.size() != 5) throw CheckpointError("checkpoint counters malformed");
  env_steps_ = static_cast<long>(counters[0]);
  gradient_steps_ = static_cast<long>(counters[1]);
  episodes_ = static_cast<long>(counters[2]);
  next_eval_ = static_cast<long>(counters[3]);
  seed_ = std::stoull(tensor_string(get("seed")));
  action_rng_.set_state(tensor_string(get("rng/action")));
  sample_rng_.set_state(tensor_string(get("rng/sample")));
  update_rng_.set_state(tensor_string(get("rng/update")));
  predictor_.encoder().noise().set_state(tensor_string(get("rng/noise")));

  const std::size_t n = config_.feat.n_max, dz = config_.predict.z_dim;
  const Tensor& z = get("buffer/z");
  const Tensor& pos = get("buffer/positions");
  const Tensor& mask = get("buffer/mask");
  const Tensor& path = get("buffer/path");
  const std::size_t ni = z.rank() == 3 ? z.dim(0) : 0;
  if (z.size() != ni * n * dz || pos.size() != ni * n * 2 || mask.size() != ni * n ||
      path.size() != ni * feat::kPathDim) {
    throw CheckpointError("checkpoint replay inputs do not match the configured widths");
  }
  std::vector<std::shared_ptr<const ControlInput>> inputs;
  for (std::size_t i = 0; i < ni; ++i) {
    auto in = std::make_shared<ControlInput>();
    in->z = Tensor({n, dz}, std::vector<double>(z.data() + i * n * dz, z.data() + (i + 1) * n * dz));
    in->positions = Tensor({n, 2}, std::vector<double>(pos.data() + i * n * 2, pos.data() + (i + 1) * n * 2));
    in->mask = Tensor({n}, std::vector<double>(mask.data() + i * n, mask.data() + (i + 1) * n));
    std::copy(path.data() + i * feat::kPathDim, path.data() + (i + 1) * feat::kPathDim, in->path.begin());
    inputs.push_back(std::move(in));
  }

  std::vector<std::shared_ptr<EpisodeLog>> logs;
  const Tensor& veh = get("buffer/vehicles");
  const std::size_t vrows = veh.empty() ? 0 : veh.dim(0);
  for (std::size_t r = 0; r < vrows; ++r) {
    const double* v = veh.data() + r * kVehicleCols;
    const auto l = static_cast<std::size_t>(v[0]);
    const auto f = static_cast<std::size_t>(v[1]);
    while (logs.size() <= l) logs.push_back(std::make_shared<EpisodeLog>());
    auto& frames = logs[l]->frames;
    if (frames.size() <= f) frames.resize(f + 1);
    world::Observation& o = frames[f];
    o.step = static_cast<int>(v[2]);
    world::VehicleState s;
    s.position = {v[4], v[5]};
    s.heading = v[6];
    s.speed = v[7];
    s.accel = v[8];
    s.yaw_rate = v[9];
    s.length = v[10];
    s.width = v[11];
    const int id = static_cast<int>(v[3]);
    if (id == feat::kEgoId) {
      o.ego = s;
    } else {
      o.npc_ids.push_back(id);
      o.npcs.push_back(s);
    }
  }

  buffer_.clear();
  const Tensor& rows = get("buffer/transitions");
  const std::size_t count = rows.empty() ? 0 : rows.dim(0);
  for (std::size_t i = 0; i < count; ++i) {
    const double* v = rows.data() + i * kTransitionCols;
    Transition t;
    const auto si = static_cast<std::size_t>(v[0]), ni2 = static_cast<std::size_t>(v[1]);
    if (si >= inputs.size() || ni2 >= inputs.size()) throw CheckpointError("checkpoint replay index out of range");
    t.s = inputs[si];
    t.next = inputs[ni2];
    t.action = {v[2], v[3]};
    t.reward = v[4];
    t.env_cost = v[5];
    t.aux_cost = v[6];
    t.c_plus = v[7];
    t.terminal = v[8] != 0;
    t.reason = static_cast<DoneReason>(static_cast<int>(v[9]));
    if (v[10] >= 0) {
      const auto l = static_cast<std::size_t>(v[10]);
      if (l >= logs.size()) throw CheckpointError("checkpoint replay log index out of range");
      t.log = logs[l];
    }
    t.frame = static_cast<int>(v[11]);
    buffer_.push(std::move(t));
  }
}

void Trainer::save(const std::string& path) { ad::save_checkpoint(path, state()); }

void Trainer::load(const std::string& path) { set_state(ad::load_checkpoint(path)); }

}  // namespace gin::agent
