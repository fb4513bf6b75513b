#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "gin/feat.hpp"
#include "gin/nn.hpp"

namespace gin::safectrl {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;

inline constexpr std::size_t kActionDim = 2;

double normal_pdf(double x);
double normal_cdf(double x);
// Inverse standard normal CDF by a rational approximation with one Halley
// refinement step; p in (0, 1).
double normal_quantile(double p);

// phi(Phi^-1(alpha)) / alpha, or phi(Phi(alpha)) / alpha when `literal` is
// set. Zero at alpha = 1 in the standard form.
double cvar_coefficient(double alpha, bool literal = false);
// Gaussian CVaR: Q + coefficient * sqrt(V).
double cvar(double q, double v, double alpha, bool literal = false);
Var cvar(const Var& q, const Var& v, double alpha, bool literal = false);

// [B, N] pooling weights: mask * exp(-|p| / tau) / N_valid, or plain
// mask / N_valid when `distance_weighted` is off (mean pooling).
Tensor pooling_weights(const Tensor& positions, const Tensor& mask, double tau, bool distance_weighted);

// Distance average pooling of per-node features relu(local(z)): [B, N, D_z] -> [B, D_h].
Var dap(Tape& tape, ad::Dense& local, const Var& z, const Tensor& weights);

// Inputs shared by the actor and critics.
struct StateBatch {
  Tensor z;        // [B, N, D_z]
  Tensor weights;  // [B, N] pooling weights
  Tensor path;     // [B, 5] path feature
  std::size_t size() const { return path.dim(0); }
};

struct NetConfig {
  std::size_t z_dim = 64;
  std::size_t local = 64;   // D_h
  std::size_t hidden = 128;
};

class Actor {
 public:
  Actor() = default;
  Actor(const std::string& name, const NetConfig& config, Rng& init);

  struct Output {
    Var action;    // [B, 2] in [-1, 1]
    Var log_prob;  // [B]
    Var mean;      // [B, 2] pre-squash mean
  };
  // Reparameterised sample u = mu + sigma * eps, action = tanh(u).
  Output operator()(Tape& tape, const StateBatch& s, const Tensor& eps);
  void collect(std::vector<Parameter*>& out);

  ad::Dense local;
  ad::Mlp trunk;
  ad::Dense mean_head;
  ad::Dense log_std_head;
};

class QCritic {
 public:
  QCritic() = default;
  QCritic(const std::string& name, const NetConfig& config, Rng& init);
  Var operator()(Tape& tape, const StateBatch& s, const Var& action);  // [B]
  void collect(std::vector<Parameter*>& out);

  ad::Dense local;
  ad::Mlp net;
};

class CostCritic {
 public:
  CostCritic() = default;
  CostCritic(const std::string& name, const NetConfig& config, Rng& init);
  struct Output {
    Var mean;      // [B]
    Var variance;  // [B], softplus head
  };
  Output operator()(Tape& tape, const StateBatch& s, const Var& action);
  void collect(std::vector<Parameter*>& out);

  ad::Dense local;
  ad::Mlp net;
};

struct WcsacConfig {
  NetConfig net;
  double gamma = 0.99;
  double alpha = 0.5;  // risk level
  double budget = 1.0;  // d
  double polyak = 0.995;
  double target_entropy = -2.0;
  double lr = 3e-4;
  double weight_lr = 3e-4;  // for log beta and log kappa
  double beta_init = 1.0;
  double kappa_init = 1.0;
  bool cost = true;  // false freezes kappa at 0 and leaves the cost critic untouched
  bool literal_cvar = false;
};

struct TransitionBatch {
  StateBatch s;
  StateBatch next;
  Tensor action;  // [B, 2]
  Tensor reward;  // [B]
  Tensor cost;    // [B]
  Tensor done;    // [B], 1 on terminal transitions
};

struct LossReport {
  double actor_loss = 0;
  double critic_loss = 0;
  double cost_critic_loss = 0;
  double beta = 0;
  double kappa = 0;
  double mean_gamma = 0;
};

class Wcsac {
 public:
  Wcsac(const WcsacConfig& config, std::uint64_t seed);
  Wcsac(const Wcsac&) = delete;
  Wcsac& operator=(const Wcsac&) = delete;

  const WcsacConfig& config() const { return config_; }
  double beta() const;
  double kappa() const;

  // One update of critics, actor, beta and kappa, then a Polyak step on the
  // targets. Noise for the reparameterised samples comes from `rng`.
  LossReport update(const TransitionBatch& batch, Rng& rng);
  void target_update();

  // Action in [-1, 1]^2 for a single state; deterministic returns tanh(mu).
  std::array<double, kActionDim> act(const StateBatch& s, Rng& rng, bool deterministic);

  // Every tensor that defines the learner's state, including optimiser
  // moments and step counts, in a fixed order with unique names.
  std::vector<Parameter*> parameters();
  std::vector<ad::Adam*> optimizers();

  Actor actor, actor_target;
  QCritic q1, q2, q1_target, q2_target;
  CostCritic cost_critic, cost_target;
  Parameter log_beta, log_kappa;

 private:
  WcsacConfig config_;
  ad::Adam actor_opt_, critic_opt_, cost_opt_, beta_opt_, kappa_opt_;
};

void write_loss_header(std::ostream& os);
void write_loss_row(std::ostream& os, long step, const LossReport& r);

}  // namespace gin::safectrl
