#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "gin/feat.hpp"
#include "gin/nn.hpp"
#include "gin/predict.hpp"
#include "gin/safectrl.hpp"
#include "gin/world.hpp"

namespace gin::agent {

using ad::Tensor;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ablation switches. Cost off freezes kappa at 0; Wedge off keeps binary
// edge weights; DAP off pools by plain mean; Aux off drops the predicted
// risk term from c+.
struct Toggles {
  bool cost = true;
  bool wedge = true;
  bool dap = true;
  bool aux = true;
  predict::EncoderKind encoder = predict::EncoderKind::kGraph;

  friend bool operator==(const Toggles&, const Toggles&) = default;
};

// B1..B8, RN (noise context) and VGRU (graph blocks removed); RN and VGRU
// keep every B8 switch on.
Toggles variant_toggles(const std::string& name);
const std::vector<std::string>& variant_names();

struct AgentConfig {
  world::WorldConfig world;
  feat::FeatConfig feat;
  predict::PredictConfig predict;
  safectrl::WcsacConfig wcsac;
  std::string variant = "B8";
  double dap_tau = 10.0;
  double cost_aux_scale = 0.5;
  double aux_margin = 0.5;  // ego footprint inflation for the risk check, m
  double reward_scale = 1.0;
  long total_steps = 100000;
  std::size_t min_buffer = 2000;
  long start_steps = 2000;  // uniform random actions before the policy takes over
  std::size_t batch = 128;
  std::size_t capacity = 100000;
  int updates_per_step = 1;
  std::size_t predictor_batch = 32;
  int predictor_every = 1;
  double warmup_throttle = 0.2;
  long eval_every = 0;  // env steps between evaluation snapshots; 0 disables
  int eval_episodes = 10;
};

// Copies the variant switches and shared widths into the sub-configs.
AgentConfig resolve(AgentConfig config);

// Frames of one episode, oldest first. Transitions refer into it so the
// centered feature can be rebuilt on demand.
struct EpisodeLog {
  std::vector<world::Observation> frames;
};

// Everything the controller sees at one step.
struct ControlInput {
  Tensor z;          // [N, D_z]
  Tensor positions;  // [N, 2]
  Tensor mask;       // [N]
  std::array<double, feat::kPathDim> path{};
};

struct Transition {
  std::shared_ptr<const ControlInput> s;
  std::shared_ptr<const ControlInput> next;
  std::array<double, safectrl::kActionDim> action{};
  double reward = 0;
  double env_cost = 0;
  double aux_cost = 0;  // 0 or cost_aux_scale
  double c_plus = 0;
  bool terminal = false;  // done for a reason other than timeout
  world::DoneReason reason = world::DoneReason::kNone;
  std::shared_ptr<const EpisodeLog> log;
  int frame = 0;  // index of o_t in log

  bool has_centered(std::size_t history) const { return log && frame + 1 >= static_cast<int>(2 * history); }
  feat::CenteredGraphFeature centered(const feat::FeatConfig& config) const;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  // Oldest first.
  const Transition& operator[](std::size_t i) const { return items_[i]; }
  // k draws, uniform with replacement. Throws on an empty buffer.
  std::vector<const Transition*> sample(std::size_t k, Rng& rng) const;
  void clear() { items_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

struct EpisodeRecord {
  double ret = 0;
  double distance = 0;
  double cost = 0;  // cumulative environment cost
  double aux_cost = 0;
  int steps = 0;
  world::DoneReason reason = world::DoneReason::kNone;
};

struct GradientReport {
  bool applied = false;
  double prediction_loss = std::numeric_limits<double>::quiet_NaN();
  safectrl::LossReport control;
};

// Optional CSV sinks for a training run.
struct TrainSinks {
  std::ostream* episodes = nullptr;
  std::ostream* losses = nullptr;
  std::ostream* progress = nullptr;
};

void write_episode_header(std::ostream& os);
void write_loss_header(std::ostream& os);
void write_progress_header(std::ostream& os);

// Current vehicles and their predicted paths in the ego frame; slot 0 is the ego.
struct RiskScene {
  Tensor positions;     // [N, 2]
  Tensor mask;          // [N]
  Tensor trajectories;  // [N, H, 2]
  std::vector<double> headings;                // per slot
  std::vector<std::array<double, 2>> extents;  // length, width per slot
};

// Any conflict between the ego footprint inflated by `margin` (or its
// predicted path, which starts at its current position) and another
// vehicle's footprint or predicted path.
bool predicted_conflict(const RiskScene& scene, double margin);

// Rollout, replay and interleaved prediction/control updates for one seed.
class Trainer {
 public:
  Trainer(const AgentConfig& config, std::uint64_t seed);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const AgentConfig& config() const { return config_; }
  const Toggles& toggles() const { return toggles_; }
  std::uint64_t seed() const { return seed_; }

  // Runs training episodes until at least `total_steps` environment steps
  // have been taken. Stops only at episode boundaries.
  void train(long total_steps, const TrainSinks& sinks = {});

  // One training episode: stochastic policy, stored transitions, gradient
  // steps once the buffer is warm.
  EpisodeRecord train_episode();
  // Deterministic policy, nothing stored. `log` receives every frame.
  EpisodeRecord eval_episode(std::uint64_t episode_seed, EpisodeLog* log = nullptr);
  // Seed of the k-th fixed evaluation episode.
  std::uint64_t eval_seed(int k) const;

  // No-op (applied = false) until the buffer holds min_buffer transitions.
  GradientReport gradient_step();

  // Control input for the newest frame of `frames` (at least H of them).
  std::shared_ptr<const ControlInput> control_input(const world::World& w,
                                                    const std::vector<world::Observation>& frames,
                                                    feat::SocialGraphFeature* graph = nullptr);
  // 0 or cost_aux_scale: predicted risk from the shared context of `graph`.
  double auxiliary_cost(const ControlInput& input, const feat::SocialGraphFeature& graph,
                        const world::Observation& last);

  std::vector<ad::NamedTensor> state();
  void set_state(const std::vector<ad::NamedTensor>& tensors);
  void save(const std::string& path);
  // Restores everything including the training seed.
  void load(const std::string& path);

  ReplayBuffer& buffer() { return buffer_; }
  predict::Predictor& predictor() { return predictor_; }
  safectrl::Wcsac& wcsac() { return wcsac_; }
  const world::RoadNetwork& road() const { return *road_; }
  long env_steps() const { return env_steps_; }
  long gradient_steps() const { return gradient_steps_; }
  long episodes() const { return episodes_; }
  const GradientReport& last_report() const { return last_report_; }

 private:
  enum class Mode { kTrain, kEval };
  EpisodeRecord run_episode(std::uint64_t episode_seed, Mode mode, EpisodeLog* log);
  safectrl::StateBatch state_batch(const std::vector<const ControlInput*>& inputs) const;
  std::array<double, safectrl::kActionDim> choose(const ControlInput& input, Mode mode);
  void evaluate_snapshot(const TrainSinks& sinks);

  AgentConfig config_;
  Toggles toggles_;
  std::uint64_t seed_;
  std::shared_ptr<const world::RoadNetwork> road_;
  predict::Predictor predictor_;
  safectrl::Wcsac wcsac_;
  ReplayBuffer buffer_;
  Rng action_rng_, sample_rng_, update_rng_;
  long env_steps_ = 0;
  long gradient_steps_ = 0;
  long episodes_ = 0;
  long next_eval_ = 0;
  GradientReport last_report_;
  const TrainSinks* sinks_ = nullptr;
};

// Road network named by the world config (map file or built-in).
std::shared_ptr<const world::RoadNetwork> load_road(const world::WorldConfig& config);

}  // namespace gin::agent
