#include "gin/predict.hpp"

#include <ostream>

namespace gin::predict {

using ad::ShapeError;

GraphBatch make_batch(const std::vector<const feat::SocialGraphFeature*>& features) {
  if (features.empty()) throw ShapeError("make_batch: empty batch");
  const feat::SocialGraphFeature& f0 = *features[0];
  const std::size_t b = features.size(), n = f0.mask.dim(0), h = f0.nodes.dim(1), dv = f0.nodes.dim(2);
  const std::size_t l = f0.adjacency.dim(0);
  GraphBatch out;
  out.nodes = Tensor({b, n, h, dv});
  out.mask = Tensor({b, n});
  out.positions = Tensor({b, n, 2});
  out.adjacency.assign(l, Tensor({b, n, n}));
  Tensor slice({n, n});
  for (std::size_t s = 0; s < b; ++s) {
    const feat::SocialGraphFeature& f = *features[s];
    if (f.nodes.shape() != f0.nodes.shape() || f.adjacency.shape() != f0.adjacency.shape()) {
      throw ShapeError("make_batch: features disagree in shape");
    }
    std::copy(f.nodes.values().begin(), f.nodes.values().end(), out.nodes.data() + s * n * h * dv);
    std::copy(f.mask.values().begin(), f.mask.values().end(), out.mask.data() + s * n);
    std::copy(f.positions.values().begin(), f.positions.values().end(), out.positions.data() + s * n * 2);
    for (std::size_t k = 0; k < l; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) slice[i * n + j] = i == j ? 0.0 : f.adjacency[(k * n + i) * n + j];
      }
      const Tensor norm = ad::normalize_adjacency(slice);
      std::copy(norm.values().begin(), norm.values().end(), out.adjacency[k].data() + s * n * n);
    }
  }
  return out;
}

Encoder::Encoder(const PredictConfig& config, Rng& init) : config_(config), noise_(init.uniform_int(0, 1 << 30)) {
  const std::size_t dv = feat::kNodeDim;
  lift_w_ = Parameter("enc.lift.w", ad::glorot_uniform({dv, config.emb}, dv, config.emb, init));
  lift_b_ = Parameter("enc.lift.b", Tensor({config.emb}));
  std::size_t width = config.emb;
  if (config.encoder == EncoderKind::kGraph) {
    for (std::size_t bi = 0; bi < config.blocks; ++bi) {
      const std::string name = "enc.block" + std::to_string(bi);
      const std::size_t c = config.channels;
      Block blk;
      for (std::size_t k = 0; k < config.hops; ++k) {
        blk.gcn.emplace_back(name + ".gcn" + std::to_string(k), ad::glorot_uniform({width, c}, width, c, init));
      }
      blk.kernel = Parameter(name + ".tconv.w",
                             ad::glorot_uniform({config.kernel, c, c}, config.kernel * c, config.kernel * c, init));
      blk.bias = Parameter(name + ".tconv.b", Tensor({c}));
      blk.project = width != c;
      if (blk.project) blk.skip = Parameter(name + ".skip", ad::glorot_uniform({width, c}, width, c, init));
      blocks_.push_back(std::move(blk));
      width = c;
    }
  }
  gru_ = ad::Gru("enc.gru", width, config.z_dim, init);
}

void Encoder::collect(std::vector<Parameter*>& out) {
  if (config_.encoder == EncoderKind::kNoise) return;
  out.push_back(&lift_w_);
  out.push_back(&lift_b_);
  for (auto& blk : blocks_) {
    for (auto& w : blk.gcn) out.push_back(&w);
    out.push_back(&blk.kernel);
    out.push_back(&blk.bias);
    if (blk.project) out.push_back(&blk.skip);
  }
  gru_.collect(out);
}

Var Encoder::operator()(Tape& tape, const GraphBatch& batch) {
  const std::size_t b = batch.nodes.dim(0), n = batch.nodes.dim(1), h = batch.nodes.dim(2);
  if (batch.nodes.dim(3) != feat::kNodeDim || n != config_.n_max) {
    throw ShapeError("encoder: unexpected node tensor " + ad::shape_string(batch.nodes.shape()));
  }
  if (config_.encoder == EncoderKind::kNoise) {
    Tensor z({b, n, config_.z_dim});
    for (double& v : z.values()) v = noise_.normal();
    return mul_const(tape.constant(std::move(z)), batch.mask);
  }

  Tensor scaled = batch.nodes;
  for (std::size_t r = 0; r < b * n * h; ++r) {
    double* row = scaled.data() + r * feat::kNodeDim;
    row[0] /= config_.pos_scale;
    row[1] /= config_.pos_scale;
    row[3] /= config_.vel_scale;
    row[4] /= config_.vel_scale;
  }
  Var x = ad::bottleneck_1x1(tape.constant(std::move(scaled)), tape.param(lift_w_), tape.param(lift_b_));
  for (auto& blk : blocks_) {
    std::vector<Var> ws;
    for (auto& w : blk.gcn) ws.push_back(tape.param(w));
    Var g = ad::gcn_layer(batch.adjacency, x, ws);
    Var c = ad::temporal_conv(g, tape.param(blk.kernel), tape.param(blk.bias), 1, config_.kernel / 2);
    Var skip = blk.project ? ad::linear(x, tape.param(blk.skip)) : x;
    x = mul_const(ad::relu(ad::add(c, skip)), batch.mask);
  }

  const std::size_t rows = b * n, width = x.dim(3);
  ad::GruWeights w = gru_.bind(tape);
  Var state = tape.constant(Tensor({rows, config_.z_dim}));
  for (std::size_t t = 0; t < h; ++t) {
    state = ad::gru_cell(ad::reshape(ad::time_slice(x, t), {rows, width}), state, w);
  }
  return mul_const(ad::reshape(ad::tanh(state), {b, n, config_.z_dim}), batch.mask);
}

Decoder::Decoder(const PredictConfig& config, Rng& init)
    : gru("dec.gru", 2, config.z_dim, init), head("dec.head", config.z_dim, 2, init), config_(config) {}

void Decoder::collect(std::vector<Parameter*>& out) {
  gru.collect(out);
  head.collect(out);
}

Var Decoder::operator()(Tape& tape, const Var& z, const Tensor& origin, const Tensor& mask) {
  if (z.shape().size() != 3 || origin.shape() != ad::Shape{z.dim(0), z.dim(1), 2}) {
    throw ShapeError("decoder: z " + ad::shape_string(z.shape()) + " vs origin " + ad::shape_string(origin.shape()));
  }
  const std::size_t b = z.dim(0), n = z.dim(1), rows = b * n;
  ad::GruWeights w = gru.bind(tape);
  Var state = ad::reshape(z, {rows, config_.z_dim});
  Var p = tape.constant(origin.reshaped({rows, 2}));
  std::vector<Var> frames;
  for (std::size_t t = 0; t < config_.history; ++t) {
    state = ad::gru_cell(ad::scale(p, 1.0 / config_.pos_scale), state, w);
    Var v = ad::scale(head(tape, state), config_.vel_scale);
    p = ad::add(p, ad::scale(v, config_.dt));
    frames.push_back(ad::reshape(p, {b, n, 2}));
  }
  return mul_const(ad::stack_time(frames), mask);
}

Var prediction_loss(const Var& pred, const Tensor& truth, const Tensor& valid) {
  if (pred.shape() != truth.shape() || pred.shape().size() != 4 || valid.shape() != ad::Shape{pred.dim(0), pred.dim(1)}) {
    throw ShapeError("prediction_loss: pred " + ad::shape_string(pred.shape()) + ", truth " +
                     ad::shape_string(truth.shape()) + ", valid " + ad::shape_string(valid.shape()));
  }
  double count = 0;
  for (double v : valid.values()) count += v;
  Tape& tape = *pred.tape();
  if (count == 0) return tape.constant(Tensor::scalar(0.0));
  const double horizon = static_cast<double>(pred.dim(2));
  Tensor weights = valid;
  weights *= 1.0 / (horizon * count);
  Var dist = ad::norm_last(ad::sub(pred, tape.constant(truth)));
  return ad::sum(mul_const(ad::sum_last(dist), weights));
}

TrainBatch make_train_batch(const std::vector<const feat::CenteredGraphFeature*>& samples) {
  std::vector<const feat::SocialGraphFeature*> past;
  for (const auto* s : samples) past.push_back(&s->past);
  TrainBatch out;
  out.graph = make_batch(past);
  const ad::Shape fs = samples[0]->future.shape();
  const std::size_t b = samples.size(), n = fs[0], per = samples[0]->future.size();
  out.truth = Tensor({b, fs[0], fs[1], fs[2]});
  out.valid = Tensor({b, n});
  for (std::size_t s = 0; s < b; ++s) {
    if (samples[s]->future.shape() != fs) throw ShapeError("make_train_batch: future shape mismatch");
    std::copy(samples[s]->future.values().begin(), samples[s]->future.values().end(), out.truth.data() + s * per);
    std::copy(samples[s]->valid.values().begin(), samples[s]->valid.values().end(), out.valid.data() + s * n);
  }
  return out;
}

Predictor::Predictor(const PredictConfig& config, std::uint64_t seed) : config_(config) {
  Rng init(seed);
  encoder_ = Encoder(config, init);
  decoder_ = Decoder(config, init);
  adam_ = ad::Adam(parameters(), config.adam);
}

std::vector<Parameter*> Predictor::parameters() {
  std::vector<Parameter*> out;
  encoder_.collect(out);
  decoder_.collect(out);
  return out;
}

Tensor Predictor::encode(const GraphBatch& batch) {
  Tape tape(false);
  return encoder_(tape, batch).value();
}

Tensor Predictor::decode(const Tensor& z, const Tensor& origin, const Tensor& mask) {
  Tape tape(false);
  return decoder_(tape, tape.constant(z), origin, mask).value();
}

double Predictor::loss(const TrainBatch& batch) {
  Tape tape(false);
  Var z = encoder_(tape, batch.graph);
  return prediction_loss(decoder_(tape, z, batch.graph.positions, batch.graph.mask), batch.truth, batch.valid)
      .value()
      .item();
}

double Predictor::train_step(const TrainBatch& batch) {
  double count = 0;
  for (double v : batch.valid.values()) count += v;
  if (count == 0) {
    ++skipped_;
    return 0.0;
  }
  Tape tape;
  Var z = encoder_(tape, batch.graph);
  Var loss = prediction_loss(decoder_(tape, z, batch.graph.positions, batch.graph.mask), batch.truth, batch.valid);
  tape.backward(loss);
  adam_.step();
  return loss.value().item();
}

void write_context_csv(std::ostream& os, int episode, int step, const Tensor& z, const Tensor& mask, bool header) {
  const std::size_t n = z.dim(z.rank() - 2), d = z.dim(z.rank() - 1);
  if (header) {
    os << "episode,step,slot";
    for (std::size_t k = 0; k < d; ++k) os << ",z" << k + 1;
    os << '\n';
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] == 0) continue;
    os << episode << ',' << step << ',' << i;
    for (std::size_t k = 0; k < d; ++k) os << ',' << z[i * d + k];
    os << '\n';
  }
}

}  // namespace gin::predict
