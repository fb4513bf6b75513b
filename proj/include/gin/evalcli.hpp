#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gin/agent.hpp"

namespace gin::evalcli {

using agent::EpisodeRecord;
using ad::Tensor;

// Schema violations; the message lists every offending key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  agent::AgentConfig agent;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int episodes = 100;  // evaluation episodes per seed
  int predict_episodes = 20;  // logged episodes for predict-eval
  int predict_stride = 5;     // frames between logged windows
  long predict_fit_steps = 0;  // predict-eval fits a fresh predictor when > 0
};

// Missing keys keep the values of `base`; unknown keys and type errors throw.
RunConfig parse_config(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});
nlohmann::json to_json(const RunConfig& config);

// Desk-scale profile: narrower networks, smaller replay and batches, and the
// 3 seed x 30 episode protocol.
void apply_quick(RunConfig& config);

struct MetricsRow {
  std::string seed;
  int episodes = 0;
  double return_mean = 0, return_std = 0;
  double success_rate = 0;
  double distance_mean = 0;
  double cost_mean = 0;
  double collision_rate = 0;
  double survival_step_mean = 0;
  double success_step_mean = 0;  // NaN when no episode succeeded
  double ade = 0, fde = 0;        // NaN when no window was scored
};

MetricsRow summarize(const std::string& seed, std::span<const EpisodeRecord> episodes, double ade, double fde);
// Mean and (population) std over per-seed rows, labelled "mean" and "std".
std::vector<MetricsRow> aggregate(std::span<const MetricsRow> rows);

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricsRow& row);

// Displacement errors of one prediction: ADE over valid vehicles and all
// steps, FDE over valid vehicles at the last step. Empty when nothing is
// valid.
struct Displacement {
  double ade = 0, fde = 0;
};
std::optional<Displacement> ade_fde(const Tensor& pred, const Tensor& truth, const Tensor& valid);

// Running sums over many windows, weighted per valid vehicle.
struct DisplacementSum {
  double ade_sum = 0, fde_sum = 0;
  long vehicles = 0;
  void add(const Tensor& pred, const Tensor& truth, const Tensor& valid);
  double ade() const;
  double fde() const;
};

// Constant-velocity rollout from the last two history frames: [N, H, 2].
Tensor constant_velocity(const feat::SocialGraphFeature& past);

// Centered windows every `stride` frames from a full episode log.
std::vector<feat::CenteredGraphFeature> windows_from_log(const agent::EpisodeLog& log, int stride,
                                                         const feat::FeatConfig& config);

// Windows from episodes driven by the scripted ego at `ego_speed`.
std::vector<feat::CenteredGraphFeature> logged_windows(const agent::AgentConfig& config, std::uint64_t seed,
                                                       int episodes, int stride, double ego_speed = 8.0);

struct PredictionReport {
  long windows = 0;
  Displacement model;
  Displacement constant_velocity;
};

PredictionReport predict_eval(predict::Predictor& predictor, std::span<const feat::CenteredGraphFeature> windows);

// Minibatch training on logged windows; returns the last batch loss.
double fit_predictor(predict::Predictor& predictor, std::span<const feat::CenteredGraphFeature> windows,
                     long steps, std::size_t batch, Rng& rng);

// Deterministic evaluation episodes 0..n-1 of the trainer's seed. With
// `windows` set, every episode's windows are appended for ADE/FDE.
std::vector<EpisodeRecord> evaluate(agent::Trainer& trainer, int episodes,
                                    std::vector<feat::CenteredGraphFeature>* windows = nullptr, int stride = 5);

// Learning-curve series from one seed's progress CSV.
struct Curve {
  std::string label;
  std::vector<double> steps;
  std::vector<double> values;
};

Curve read_progress(const std::string& path, const std::string& column);
// SVG line plot: mean line over curves with a min/max band. Throws on empty
// input.
std::string svg_band_plot(const std::vector<Curve>& curves, const std::string& title, const std::string& y_label);
// Writes success and collision plots for every progress.csv under run_dir.
std::vector<std::string> emit_plots(const std::string& run_dir);

}  // namespace gin::evalcli
