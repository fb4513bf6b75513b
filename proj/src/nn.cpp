#include "gin/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace gin::ad {

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

Dense::Dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : w(name + ".w", glorot_uniform({in, out}, in, out, rng)), b(name + ".b", Tensor({out})) {}

Var Dense::operator()(Tape& tape, const Var& x) {
  Var wv = tape.param(w);
  Var bv = tape.param(b);
  return linear(x, wv, &bv);
}

void Dense::collect(std::vector<Parameter*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

Gru::Gru(const std::string& name, std::size_t in, std::size_t hidden, Rng& rng)
    : w_z(name + ".w_z", glorot_uniform({in + hidden, hidden}, in + hidden, hidden, rng)),
      w_r(name + ".w_r", glorot_uniform({in + hidden, hidden}, in + hidden, hidden, rng)),
      w_h(name + ".w_h", glorot_uniform({in + hidden, hidden}, in + hidden, hidden, rng)),
      b_z(name + ".b_z", Tensor({hidden})),
      b_r(name + ".b_r", Tensor({hidden})),
      b_h(name + ".b_h", Tensor({hidden})) {}

GruWeights Gru::bind(Tape& tape) {
  return GruWeights{tape.param(w_z), tape.param(w_r), tape.param(w_h),
                    tape.param(b_z), tape.param(b_r), tape.param(b_h)};
}

void Gru::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&w_z, &w_r, &w_h, &b_z, &b_r, &b_h}) out.push_back(p);
}

Mlp::Mlp(const std::string& name, const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.emplace_back(name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
  }
}

Var Mlp::operator()(Tape& tape, const Var& x) {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](tape, h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers) l.collect(out);
}

Var bottleneck_1x1(const Var& nodes, const Var& w, const Var& b) { return linear(nodes, w, &b); }

Var gcn_layer(const std::vector<Tensor>& adjacency, const Var& h, const std::vector<Var>& w) {
  if (adjacency.empty() || adjacency.size() != w.size()) {
    throw ShapeError("gcn_layer: need one weight per adjacency power");
  }
  Var acc;
  for (std::size_t k = 0; k < adjacency.size(); ++k) {
    Var term = graph_mix(adjacency[k], linear(h, w[k]));
    acc = k == 0 ? term : add(acc, term);
  }
  return relu(acc);
}

Tensor normalize_adjacency(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw ShapeError("normalize_adjacency expects a square matrix, got " + shape_string(a.shape()));
  }
  const std::size_t n = a.dim(0);
  Tensor out(a.shape());
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 1.0;
    for (std::size_t j = 0; j < n; ++j) deg += a[i * n + j];
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double aij = a[i * n + j] + (i == j ? 1.0 : 0.0);
      out[i * n + j] = aij * (inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
  }
  return out;
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {}

void Adam::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (Parameter* p : params_) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      p->m[i] = b1 * p->m[i] + (1.0 - b1) * g;
      p->v[i] = b2 * p->v[i] + (1.0 - b2) * g * g;
      const double mh = p->m[i] / c1;
      const double vh = p->v[i] / c2;
      p->value[i] -= config_.lr * mh / (std::sqrt(vh) + config_.eps);
    }
    p->zero_grad();
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void polyak_update(const std::vector<Parameter*>& targets, const std::vector<Parameter*>& online,
                   double rho) {
  if (targets.size() != online.size()) throw ShapeError("polyak_update: parameter count mismatch");
  for (std::size_t k = 0; k < targets.size(); ++k) {
    Tensor& t = targets[k]->value;
    const Tensor& o = online[k]->value;
    if (t.shape() != o.shape()) throw ShapeError("polyak_update: shape mismatch");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rho * t[i] + (1.0 - rho) * o[i];
  }
}

double grad_check(const std::function<Var(Tape&)>& f, const std::vector<Parameter*>& params,
                  double step) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);

  auto eval = [&] {
    Tape tape(false);
    return f(tape).value().item();
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k]->value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + step;
      const double up = eval();
      value[i] = orig - step;
      const double down = eval();
      value[i] = orig;
      const double fd = (up - down) / (2.0 * step);
      const double ad = analytic[k][i];
      const double rel = std::abs(ad - fd) / (std::abs(ad) + std::abs(fd) + 1e-12);
      worst = std::max(worst, rel);
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return worst;
}

namespace {

constexpr const char* kMagic = "GINCKPT 1";

void write_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

// Header lines:
//   GINCKPT 1
//   <count>
//   <name> <rank> <d0> ... <offset-bytes>     (one per tensor)
//   data
// followed by the concatenated payloads.
void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  std::ostringstream header;
  header << kMagic << '\n' << tensors.size() << '\n';
  std::size_t offset = 0;
  for (const auto& nt : tensors) {
    if (nt.name.empty() || nt.name.find_first_of(" \t\n\r") != std::string::npos) {
      throw std::invalid_argument("checkpoint tensor names must be non-empty without whitespace: '" +
                                  nt.name + "'");
    }
    header << nt.name << ' ' << nt.tensor.rank();
    for (auto d : nt.tensor.shape()) header << ' ' << d;
    header << ' ' << offset << '\n';
    offset += nt.tensor.size() * 8;
  }
  header << "data\n";
  os << header.str();
  for (const auto& nt : tensors) {
    for (double v : nt.tensor.values()) write_le(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint write failed");
}

std::vector<NamedTensor> read_checkpoint(std::istream& is) {
  auto fail = [](const std::string& why) { throw std::runtime_error("bad checkpoint: " + why); };
  std::string line;
  if (!std::getline(is, line) || line != kMagic) fail("missing magic line");
  if (!std::getline(is, line)) fail("missing count");
  std::size_t count = 0;
  try {
    count = std::stoul(line);
  } catch (const std::exception&) {
    fail("count is not a number");
  }
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(is, line)) fail("truncated header");
    std::istringstream ls(line);
    Entry e;
    std::size_t rank = 0;
    if (!(ls >> e.name >> rank)) fail("malformed record: " + line);
    e.shape.resize(rank);
    for (auto& d : e.shape) {
      if (!(ls >> d)) fail("malformed shape: " + line);
    }
    if (!(ls >> e.offset)) fail("missing offset: " + line);
    entries.push_back(std::move(e));
  }
  if (!std::getline(is, line) || line != "data") fail("missing data marker");

  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
  std::vector<NamedTensor> out;
  for (const auto& e : entries) {
    const std::size_t n = shape_size(e.shape);
    if (e.offset + n * 8 > payload.size()) fail("payload too short for " + e.name);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = read_le(payload.data() + e.offset + 8 * i);
    out.push_back({e.name, Tensor(e.shape, std::move(data))});
  }
  return out;
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(os, tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace gin::ad
