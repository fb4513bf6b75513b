#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "gin/tensor.hpp"

namespace gin::ad {

// Trainable tensor with its gradient and first/second optimizer moments.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  void zero_grad();

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t i) const { return value().dim(i); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records primitive ops in execution order; backward() replays them in
// exact reverse order, accumulating gradients additively. A tape built with
// record = false only evaluates values (inference mode).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);

  // Seeds d(loss)/d(loss) = 1 and accumulates into every reachable
  // Parameter::grad.
  void backward(const Var& loss);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);
  const Tensor& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  Tensor& grad(int id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  bool record_;
  std::deque<Node> nodes_;
};

// Elementwise ops (operands must have identical shapes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var softplus(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
// Values clipped to [lo, hi]; gradient passes only where unclipped.
Var clamp(const Var& a, double lo, double hi);

// Multiplies by a constant tensor whose shape is a prefix of a's shape,
// broadcasting over the trailing dimensions (masks, pooling weights).
Var mul_const(const Var& a, const Tensor& c);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_last(const Var& a);
// [B, N, D] -> [B, D]
Var sum_axis1(const Var& a);
// Euclidean norm over the last axis; zero subgradient at the origin.
Var norm_last(const Var& a);

// Shape manipulation.
Var reshape(const Var& a, Shape shape);
Var concat_last(const std::vector<Var>& parts);
Var slice_last(const Var& a, std::size_t from, std::size_t to);
// [B, N, T, D] -> [B, N, D] at time t.
Var time_slice(const Var& a, std::size_t t);
// T x [B, N, D] -> [B, N, T, D]
Var stack_time(const std::vector<Var>& frames);

// x [..., in] * W [in, out] (+ b [out]).
Var linear(const Var& x, const Var& w, const Var* b = nullptr);
// Adds b [D] to every row of x [..., D].
Var add_bias(const Var& x, const Var& b);

// Y[b, i, t, :] = sum_j A[b, i, j] * X[b, j, t, :] with constant A [B, N, N].
Var graph_mix(const Tensor& adjacency, const Var& x);

// 1-D convolution over the time axis of x [B, N, T, D] with kernel
// [k, D, D_out], shared across nodes.
Var temporal_conv(const Var& x, const Var& kernel, const Var& bias, std::size_t stride,
                  std::size_t pad);

struct GruWeights {
  Var w_z;  // [D_in + D_h, D_h]
  Var w_r;
  Var w_h;
  Var b_z;  // [D_h]
  Var b_r;
  Var b_h;
};

// Gated recurrent update on rows: x [M, D_in], h [M, D_h] -> [M, D_h].
Var gru_cell(const Var& x, const Var& h, const GruWeights& w);

}  // namespace gin::ad
