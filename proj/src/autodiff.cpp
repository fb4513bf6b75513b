#include "gin/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace gin::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MutMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.tape() != b.tape()) throw std::logic_error(std::string(op) + ": operands on different tapes");
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(a.shape()));
  }
}

// y = f(x); dy/dx = df(x, y).
template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const int ia = a.id();
  return a.tape()->push(std::move(y), {a}, [ia, df](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace

Parameter::Parameter(std::string name_in, Tensor value_in)
    : name(std::move(name_in)),
      value(std::move(value_in)),
      grad(value.shape()),
      m(value.shape()),
      v(value.shape()) {}

void Parameter::zero_grad() { grad.fill(0.0); }

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, record_, record_ ? &p : nullptr, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  if (record_) {
    for (const auto& in : inputs) {
      if (in.tape() != this) throw std::logic_error("op input recorded on a different tape");
      needs = needs || nodes_[in.id()].needs_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(fn) : BackwardFn{}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool needs = false;
  if (record_) {
    for (const auto& in : inputs) {
      if (in.tape() != this) throw std::logic_error("op input recorded on a different tape");
      needs = needs || nodes_[in.id()].needs_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(fn) : BackwardFn{}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
    n.grad = Tensor(n.value.shape());
  }
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::logic_error("backward on a Var from another tape");
  if (loss.value().size() != 1) throw ShapeError("backward needs a scalar loss");
  if (!nodes_[loss.id()].needs_grad) return;
  grad(loss.id())[0] += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  y += b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(y), {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) t.grad(ib) += g;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  const Tensor& xb = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= xb[i];
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(y), {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) t.grad(ia) += g;
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  const Tensor& xa = a.value();
  const Tensor& xb = b.value();
  Tensor y(xa.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xa[i] * xb[i];
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(y), {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& xa = t.value(ia);
    const Tensor& xb = t.value(ib);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb[i];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa[i];
    }
  });
}

Var minimum(const Var& a, const Var& b) {
  require_same_shape(a, b, "minimum");
  const Tensor& xa = a.value();
  const Tensor& xb = b.value();
  Tensor y(xa.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(xa[i], xb[i]);
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(y), {a, b}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& xa = t.value(ia);
    const Tensor& xb = t.value(ib);
    // Ties route the gradient to the first operand.
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xa[i] <= xb[i]) ga[i] += g[i];
      }
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xa[i] > xb[i]) gb[i] += g[i];
      }
    }
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var sqrt(const Var& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / std::max(y, 1e-12); });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var mul_const(const Var& a, const Tensor& c) {
  const Tensor& x = a.value();
  const Shape& xs = x.shape();
  const Shape& cs = c.shape();
  if (cs.size() > xs.size() || !std::equal(cs.begin(), cs.end(), xs.begin())) {
    throw ShapeError("mul_const: " + shape_string(cs) + " is not a prefix of " + shape_string(xs));
  }
  const std::size_t inner = c.size() == 0 ? 0 : x.size() / c.size();
  Tensor y(xs);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * c[i / inner];
  const int ia = a.id();
  return a.tape()->push(std::move(y), {a}, [ia, c, inner](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c[i / inner];
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const int ia = a.id();
  return a.tape()->push(Tensor::scalar(s), {a}, [ia](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const double g = t.grad(self)[0];
    for (double& v : t.grad(ia).values()) v += g;
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_last(const Var& a) {
  const Tensor& x = a.value();
  if (x.rank() == 0) throw ShapeError("sum_last on a scalar");
  const std::size_t d = x.shape().back();
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  Tensor y(out_shape);
  for (std::size_t r = 0; r < y.size(); ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += x[r * d + k];
    y[r] = s;
  }
  const int ia = a.id();
  return a.tape()->push(std::move(y), {a}, [ia, d](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t r = 0; r < g.size(); ++r) {
      for (std::size_t k = 0; k < d; ++k) ga[r * d + k] += g[r];
    }
  });
}

Var sum_axis1(const Var& a) {
  require_rank(a, 3, "sum_axis1");
  const Tensor& x = a.value();
  const std::size_t bn = x.dim(0), n = x.dim(1), d = x.dim(2);
  Tensor y({bn, d});
  for (std::size_t b = 0; b < bn; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) y[b * d + k] += x[(b * n + i) * d + k];
    }
  }
  const int ia = a.id();
  return a.tape()->push(std::move(y), {a}, [ia, bn, n, d](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t b = 0; b < bn; ++b) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) ga[(b * n + i) * d + k] += g[b * d + k];
      }
    }
  });
}

Var norm_last(const Var& a) {
  const Tensor& x = a.value();
  if (x.rank() == 0) throw ShapeError("norm_last on a scalar");
  const std::size_t d = x.shape().back();
  Tensor y(Shape(x.shape().begin(), x.shape().end() - 1));
  for (std::size_t r = 0; r < y.size(); ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += x[r * d + k] * x[r * d + k];
    y[r] = std::sqrt(s);
  }
  const int ia = a.id();
  return a.tape()->push(std::move(y), {a}, [ia, d](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t r = 0; r < y.size(); ++r) {
      if (y[r] == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) ga[r * d + k] += g[r] * x[r * d + k] / y[r];
    }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const int ia = a.id();
  return a.tape()->push(std::move(y), {a}, [ia](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var concat_last(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_last of nothing");
  const Shape& s0 = parts[0].shape();
  if (s0.empty()) throw ShapeError("concat_last on scalars");
  const Shape lead(s0.begin(), s0.end() - 1);
  const std::size_t rows = shape_size(lead);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw ShapeError("concat_last: leading shape mismatch " + shape_string(s) + " vs " +
                       shape_string(s0));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor y(out_shape);
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& x = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < widths[p]; ++k) y[r * total + col + k] = x[r * widths[p] + k];
    }
    col += widths[p];
  }
  std::vector<int> ids;
  for (const auto& p : parts) ids.push_back(p.id());
  return parts[0].tape()->push(std::move(y), parts, [ids, widths, rows, total](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    std::size_t col = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (t.needs_grad(ids[p])) {
        Tensor& gp = t.grad(ids[p]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t k = 0; k < widths[p]; ++k) gp[r * widths[p] + k] += g[r * total + col + k];
        }
      }
      col += widths[p];
    }
  });
}

Var slice_last(const Var& a, std::size_t from, std::size_t to) {
  const Tensor& x = a.value();
  if (x.rank() == 0 || from >= to || to > x.shape().back()) {
    throw ShapeError("slice_last: bad range on " + shape_string(x.shape()));
  }
  const std::size_t d = x.shape().back();
  const std::size_t w = to - from;
  Shape out_shape = x.shape();
  out_shape.back() = w;
  Tensor y(out_shape);
  const std::size_t rows = x.size() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < w; ++k) y[r * w + k] = x[r * d + from + k];
  }
  const int ia = a.id();
  return a.tape()->push(std::move(y), {a}, [ia, rows, d, w, from](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < w; ++k) ga[r * d + from + k] += g[r * w + k];
    }
  });
}

Var time_slice(const Var& a, std::size_t ts) {
  require_rank(a, 4, "time_slice");
  const Tensor& x = a.value();
  const std::size_t bn = x.dim(0) * x.dim(1), tn = x.dim(2), d = x.dim(3);
  if (ts >= tn) throw ShapeError("time_slice: index out of range");
  Tensor y({x.dim(0), x.dim(1), d});
  for (std::size_t r = 0; r < bn; ++r) {
    for (std::size_t k = 0; k < d; ++k) y[r * d + k] = x[(r * tn + ts) * d + k];
  }
  const int ia = a.id();
  return a.tape()->push(std::move(y), {a}, [ia, bn, tn, d, ts](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t r = 0; r < bn; ++r) {
      for (std::size_t k = 0; k < d; ++k) ga[(r * tn + ts) * d + k] += g[r * d + k];
    }
  });
}

Var stack_time(const std::vector<Var>& frames) {
  if (frames.empty()) throw ShapeError("stack_time of nothing");
  const Shape& s0 = frames[0].shape();
  if (s0.size() != 3) throw ShapeError("stack_time expects [B, N, D] frames");
  for (const auto& f : frames) {
    if (f.shape() != s0) throw ShapeError("stack_time: frame shape mismatch");
  }
  const std::size_t bn = s0[0] * s0[1], d = s0[2], tn = frames.size();
  Tensor y({s0[0], s0[1], tn, d});
  for (std::size_t ts = 0; ts < tn; ++ts) {
    const Tensor& x = frames[ts].value();
    for (std::size_t r = 0; r < bn; ++r) {
      for (std::size_t k = 0; k < d; ++k) y[(r * tn + ts) * d + k] = x[r * d + k];
    }
  }
  std::vector<int> ids;
  for (const auto& f : frames) ids.push_back(f.id());
  return frames[0].tape()->push(std::move(y), frames, [ids, bn, tn, d](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    for (std::size_t ts = 0; ts < tn; ++ts) {
      if (!t.needs_grad(ids[ts])) continue;
      Tensor& gx = t.grad(ids[ts]);
      for (std::size_t r = 0; r < bn; ++r) {
        for (std::size_t k = 0; k < d; ++k) gx[r * d + k] += g[(r * tn + ts) * d + k];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Dense layers

Var linear(const Var& x, const Var& w, const Var* b) {
  require_rank(w, 2, "linear weight");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const std::size_t in = wv.dim(0), out = wv.dim(1);
  if (xv.rank() == 0 || xv.shape().back() != in) {
    throw ShapeError("linear: input " + shape_string(xv.shape()) + " vs weight " +
                     shape_string(wv.shape()));
  }
  if (b != nullptr && (b->value().rank() != 1 || b->value().dim(0) != out)) {
    throw ShapeError("linear: bias shape " + shape_string(b->shape()));
  }
  const std::size_t rows = xv.size() / in;
  Shape out_shape = xv.shape();
  out_shape.back() = out;
  Tensor y(out_shape);
  auto ym = as_matrix(y, rows, out);
  ym.noalias() = as_matrix(xv, rows, in) * as_matrix(wv, in, out);
  if (b != nullptr) {
    const Tensor& bv = b->value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < out; ++k) y[r * out + k] += bv[k];
    }
  }
  const int ix = x.id(), iw = w.id(), ib = b ? b->id() : -1;
  std::vector<Var> inputs{x, w};
  if (b != nullptr) inputs.push_back(*b);
  return x.tape()->push(std::move(y), inputs, [ix, iw, ib, rows, in, out](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const auto gm = as_matrix(g, rows, out);
    if (t.needs_grad(ix)) {
      as_matrix(t.grad(ix), rows, in).noalias() += gm * as_matrix(t.value(iw), in, out).transpose();
    }
    if (t.needs_grad(iw)) {
      as_matrix(t.grad(iw), in, out).noalias() += as_matrix(t.value(ix), rows, in).transpose() * gm;
    }
    if (ib >= 0 && t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < out; ++k) gb[k] += g[r * out + k];
      }
    }
  });
}

Var add_bias(const Var& x, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 1 || xv.rank() == 0 || xv.shape().back() != bv.dim(0)) {
    throw ShapeError("add_bias: " + shape_string(xv.shape()) + " + " + shape_string(bv.shape()));
  }
  const std::size_t d = bv.dim(0), rows = xv.size() / d;
  Tensor y = xv;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < d; ++k) y[r * d + k] += bv[k];
  }
  const int ix = x.id(), ib = b.id();
  return x.tape()->push(std::move(y), {x, b}, [ix, ib, rows, d](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ix)) t.grad(ix) += g;
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < d; ++k) gb[k] += g[r * d + k];
      }
    }
  });
}

Var graph_mix(const Tensor& adjacency, const Var& x) {
  require_rank(x, 4, "graph_mix");
  const Tensor& xv = x.value();
  const std::size_t bn = xv.dim(0), n = xv.dim(1), tn = xv.dim(2), d = xv.dim(3);
  if (adjacency.rank() != 3 || adjacency.dim(0) != bn || adjacency.dim(1) != n ||
      adjacency.dim(2) != n) {
    throw ShapeError("graph_mix: adjacency " + shape_string(adjacency.shape()) + " vs nodes " +
                     shape_string(xv.shape()));
  }
  const std::size_t row = tn * d;  // one node's [T, D] block
  Tensor y(xv.shape());
  for (std::size_t b = 0; b < bn; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      double* yi = y.data() + (b * n + i) * row;
      for (std::size_t j = 0; j < n; ++j) {
        const double a = adjacency[(b * n + i) * n + j];
        if (a == 0.0) continue;
        const double* xj = xv.data() + (b * n + j) * row;
        for (std::size_t k = 0; k < row; ++k) yi[k] += a * xj[k];
      }
    }
  }
  const int ix = x.id();
  return x.tape()->push(std::move(y), {x}, [ix, adjacency, bn, n, row](Tape& t, int self) {
    if (!t.needs_grad(ix)) return;
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ix);
    for (std::size_t b = 0; b < bn; ++b) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* gi = g.data() + (b * n + i) * row;
        for (std::size_t j = 0; j < n; ++j) {
          const double a = adjacency[(b * n + i) * n + j];
          if (a == 0.0) continue;
          double* gj = gx.data() + (b * n + j) * row;
          for (std::size_t k = 0; k < row; ++k) gj[k] += a * gi[k];
        }
      }
    }
  });
}

Var temporal_conv(const Var& x, const Var& kernel, const Var& bias, std::size_t stride,
                  std::size_t pad) {
  require_rank(x, 4, "temporal_conv");
  require_rank(kernel, 3, "temporal_conv kernel");
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  const std::size_t bn = xv.dim(0) * xv.dim(1), tn = xv.dim(2), d = xv.dim(3);
  const std::size_t kw = kv.dim(0), d_out = kv.dim(2);
  if (kv.dim(1) != d) {
    throw ShapeError("temporal_conv: kernel " + shape_string(kv.shape()) + " vs input " +
                     shape_string(xv.shape()));
  }
  if (bias.value().rank() != 1 || bias.value().dim(0) != d_out) {
    throw ShapeError("temporal_conv: bias shape " + shape_string(bias.shape()));
  }
  if (stride == 0 || kw > tn + 2 * pad) throw ShapeError("temporal_conv: kernel wider than input");
  const std::size_t t_out = (tn + 2 * pad - kw) / stride + 1;
  Tensor y({xv.dim(0), xv.dim(1), t_out, d_out});
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < bn; ++r) {
    ConstMap xr(xv.data() + r * tn * d, static_cast<Eigen::Index>(tn),
                static_cast<Eigen::Index>(d));
    MutMap yr(y.data() + r * t_out * d_out, static_cast<Eigen::Index>(t_out),
              static_cast<Eigen::Index>(d_out));
    for (std::size_t to = 0; to < t_out; ++to) {
      for (std::size_t k = 0; k < d_out; ++k) yr(to, k) = bv[k];
      for (std::size_t j = 0; j < kw; ++j) {
        const long ti = static_cast<long>(to * stride + j) - static_cast<long>(pad);
        if (ti < 0 || ti >= static_cast<long>(tn)) continue;
        ConstMap kj(kv.data() + j * d * d_out, static_cast<Eigen::Index>(d),
                    static_cast<Eigen::Index>(d_out));
        yr.row(to).noalias() += xr.row(ti) * kj;
      }
    }
  }
  const int ix = x.id(), ik = kernel.id(), ib = bias.id();
  return x.tape()->push(
      std::move(y), {x, kernel, bias},
      [ix, ik, ib, bn, tn, d, kw, d_out, t_out, stride, pad](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(ix);
        const Tensor& kv = t.value(ik);
        const bool gx_on = t.needs_grad(ix), gk_on = t.needs_grad(ik), gb_on = t.needs_grad(ib);
        Tensor* gx = gx_on ? &t.grad(ix) : nullptr;
        Tensor* gk = gk_on ? &t.grad(ik) : nullptr;
        Tensor* gb = gb_on ? &t.grad(ib) : nullptr;
        for (std::size_t r = 0; r < bn; ++r) {
          ConstMap gr(g.data() + r * t_out * d_out, static_cast<Eigen::Index>(t_out),
                      static_cast<Eigen::Index>(d_out));
          ConstMap xr(xv.data() + r * tn * d, static_cast<Eigen::Index>(tn),
                      static_cast<Eigen::Index>(d));
          for (std::size_t to = 0; to < t_out; ++to) {
            if (gb_on) {
              for (std::size_t k = 0; k < d_out; ++k) (*gb)[k] += gr(to, k);
            }
            for (std::size_t j = 0; j < kw; ++j) {
              const long ti = static_cast<long>(to * stride + j) - static_cast<long>(pad);
              if (ti < 0 || ti >= static_cast<long>(tn)) continue;
              if (gx_on) {
                ConstMap kj(kv.data() + j * d * d_out, static_cast<Eigen::Index>(d),
                            static_cast<Eigen::Index>(d_out));
                MutMap gxr(gx->data() + r * tn * d, static_cast<Eigen::Index>(tn),
                           static_cast<Eigen::Index>(d));
                gxr.row(ti).noalias() += gr.row(to) * kj.transpose();
              }
              if (gk_on) {
                MutMap gkj(gk->data() + j * d * d_out, static_cast<Eigen::Index>(d),
                           static_cast<Eigen::Index>(d_out));
                gkj.noalias() += xr.row(ti).transpose() * gr.row(to);
              }
            }
          }
        }
      });
}

Var gru_cell(const Var& x, const Var& h, const GruWeights& w) {
  require_rank(x, 2, "gru_cell input");
  require_rank(h, 2, "gru_cell state");
  const Tensor& xv = x.value();
  const Tensor& hv = h.value();
  const std::size_t m = xv.dim(0), din = xv.dim(1), dh = hv.dim(1);
  if (hv.dim(0) != m) throw ShapeError("gru_cell: batch mismatch");
  const std::size_t dc = din + dh;
  for (const Var* p : {&w.w_z, &w.w_r, &w.w_h}) {
    if (p->value().rank() != 2 || p->value().dim(0) != dc || p->value().dim(1) != dh) {
      throw ShapeError("gru_cell: weight " + shape_string(p->shape()) + ", expected [" +
                       std::to_string(dc) + "," + std::to_string(dh) + "]");
    }
  }
  for (const Var* p : {&w.b_z, &w.b_r, &w.b_h}) {
    if (p->value().rank() != 1 || p->value().dim(0) != dh) {
      throw ShapeError("gru_cell: bias " + shape_string(p->shape()));
    }
  }

  RowMat xh(m, dc);
  xh.leftCols(din) = as_matrix(xv, m, din);
  xh.rightCols(dh) = as_matrix(hv, m, dh);
  const auto bz = Eigen::Map<const Eigen::RowVectorXd>(w.b_z.value().data(), dh);
  const auto br = Eigen::Map<const Eigen::RowVectorXd>(w.b_r.value().data(), dh);
  const auto bh = Eigen::Map<const Eigen::RowVectorXd>(w.b_h.value().data(), dh);
  RowMat z = (xh * as_matrix(w.w_z.value(), dc, dh)).rowwise() + bz;
  RowMat r = (xh * as_matrix(w.w_r.value(), dc, dh)).rowwise() + br;
  z = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  r = r.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  RowMat xrh(m, dc);
  xrh.leftCols(din) = as_matrix(xv, m, din);
  xrh.rightCols(dh) = r.cwiseProduct(as_matrix(hv, m, dh));
  RowMat hc = (xrh * as_matrix(w.w_h.value(), dc, dh)).rowwise() + bh;
  hc = hc.unaryExpr([](double v) { return std::tanh(v); });

  Tensor out({m, dh});
  as_matrix(out, m, dh) =
      (RowMat::Ones(m, dh) - z).cwiseProduct(as_matrix(hv, m, dh)) + z.cwiseProduct(hc);

  const int ix = x.id(), ih = h.id();
  const int iwz = w.w_z.id(), iwr = w.w_r.id(), iwh = w.w_h.id();
  const int ibz = w.b_z.id(), ibr = w.b_r.id(), ibh = w.b_h.id();
  return x.tape()->push(
      std::move(out), {x, h, w.w_z, w.w_r, w.w_h, w.b_z, w.b_r, w.b_h},
      [=, xh = std::move(xh), xrh = std::move(xrh), z = std::move(z), r = std::move(r),
       hc = std::move(hc)](Tape& t, int self) {
        const auto g = as_matrix(t.grad(self), m, dh);
        const auto hv = as_matrix(t.value(ih), m, dh);
        const RowMat dz = g.cwiseProduct(hc - hv);
        const RowMat dhc = g.cwiseProduct(z);
        const RowMat da_h = dhc.cwiseProduct((RowMat::Ones(m, dh) - hc.cwiseProduct(hc)));
        if (t.needs_grad(iwh)) as_matrix(t.grad(iwh), dc, dh).noalias() += xrh.transpose() * da_h;
        if (t.needs_grad(ibh)) {
          Eigen::Map<Eigen::RowVectorXd>(t.grad(ibh).data(), dh) += da_h.colwise().sum();
        }
        const RowMat dxrh = da_h * as_matrix(t.value(iwh), dc, dh).transpose();
        const RowMat drh = dxrh.rightCols(dh);
        const RowMat dr = drh.cwiseProduct(hv);
        const RowMat da_z = dz.cwiseProduct(z.cwiseProduct(RowMat::Ones(m, dh) - z));
        const RowMat da_r = dr.cwiseProduct(r.cwiseProduct(RowMat::Ones(m, dh) - r));
        if (t.needs_grad(iwz)) as_matrix(t.grad(iwz), dc, dh).noalias() += xh.transpose() * da_z;
        if (t.needs_grad(iwr)) as_matrix(t.grad(iwr), dc, dh).noalias() += xh.transpose() * da_r;
        if (t.needs_grad(ibz)) {
          Eigen::Map<Eigen::RowVectorXd>(t.grad(ibz).data(), dh) += da_z.colwise().sum();
        }
        if (t.needs_grad(ibr)) {
          Eigen::Map<Eigen::RowVectorXd>(t.grad(ibr).data(), dh) += da_r.colwise().sum();
        }
        const RowMat dxh = da_z * as_matrix(t.value(iwz), dc, dh).transpose() +
                           da_r * as_matrix(t.value(iwr), dc, dh).transpose();
        if (t.needs_grad(ix)) {
          as_matrix(t.grad(ix), m, din) += dxh.leftCols(din) + dxrh.leftCols(din);
        }
        if (t.needs_grad(ih)) {
          as_matrix(t.grad(ih), m, dh) += dxh.rightCols(dh) + drh.cwiseProduct(r) +
                                          g.cwiseProduct(RowMat::Ones(m, dh) - z);
        }
      });
}

}  // namespace gin::ad
