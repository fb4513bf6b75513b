#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gin/autodiff.hpp"
#include "gin/rng.hpp"

namespace gin::ad {

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Affine map on the last axis.
struct Dense {
  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  Var operator()(Tape& tape, const Var& x);
  void collect(std::vector<Parameter*>& out);
  std::size_t in_features() const { return w.value.dim(0); }
  std::size_t out_features() const { return w.value.dim(1); }

  Parameter w;
  Parameter b;
};

struct Gru {
  Gru() = default;
  Gru(const std::string& name, std::size_t in, std::size_t hidden, Rng& rng);

  GruWeights bind(Tape& tape);
  void collect(std::vector<Parameter*>& out);
  std::size_t hidden() const { return b_z.value.dim(0); }

  Parameter w_z, w_r, w_h;
  Parameter b_z, b_r, b_h;
};

// Stack of Dense layers with ReLU between them (none after the last).
struct Mlp {
  Mlp() = default;
  Mlp(const std::string& name, const std::vector<std::size_t>& widths, Rng& rng);

  Var operator()(Tape& tape, const Var& x);
  void collect(std::vector<Parameter*>& out);

  std::vector<Dense> layers;
};

// Per-(node, frame) affine lift of node features: [..., D_v] -> [..., D_emb].
Var bottleneck_1x1(const Var& nodes, const Var& w, const Var& b);

// relu(sum_k A_k H W_k) with each A_k an already-normalised constant [B, N, N]
// and H [B, N, T, D].
Var gcn_layer(const std::vector<Tensor>& adjacency, const Var& h, const std::vector<Var>& w);

// D^-1/2 (A + I) D^-1/2 for a symmetric non-negative [N, N] matrix.
Tensor normalize_adjacency(const Tensor& a);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. step() consumes the gradients and zeroes them.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamConfig config);

  void step();
  void zero_grad();
  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  long t_ = 0;
};

// target <- rho * target + (1 - rho) * online, elementwise.
void polyak_update(const std::vector<Parameter*>& targets,
                   const std::vector<Parameter*>& online, double rho);

// Central finite differences on every parameter coordinate. Returns the
// largest |g_ad - g_fd| / (|g_ad| + |g_fd| + 1e-12).
double grad_check(const std::function<Var(Tape&)>& f, const std::vector<Parameter*>& params,
                  double step = 1e-5);

// Checkpoint container: UTF-8 header of (name, shape, byte offset) records,
// then little-endian IEEE-754 binary64 payloads.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace gin::ad
