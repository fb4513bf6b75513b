#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gin/feat.hpp"
#include "gin/nn.hpp"

namespace gin::predict {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;

enum class EncoderKind {
  kGraph,    // graph blocks then GRU
  kNoise,    // context replaced by standard normal noise (RN)
  kGruOnly,  // graph blocks removed (V-GRU)
};

struct PredictConfig {
  std::size_t n_max = 12;
  std::size_t history = 12;  // input frames; the decoder predicts the same count
  std::size_t hops = 3;
  std::size_t emb = 32;
  std::size_t channels = 32;
  std::size_t blocks = 3;
  std::size_t kernel = 3;
  std::size_t z_dim = 64;  // also the decoder GRU width
  double dt = 0.1;
  // Fixed input scalings; positions are divided by pos_scale before entering
  // either network and the velocity head is multiplied by vel_scale.
  double pos_scale = 10.0;
  double vel_scale = 10.0;
  EncoderKind encoder = EncoderKind::kGraph;
  ad::AdamConfig adam;
};

// Stacked graph features ready for the encoder. Adjacency slices are
// normalised per hop.
struct GraphBatch {
  Tensor nodes;                   // [B, N, H, D_v]
  std::vector<Tensor> adjacency;  // L x [B, N, N]
  Tensor mask;                    // [B, N]
  Tensor positions;               // [B, N, 2]
  std::size_t batch() const { return mask.dim(0); }
};

// Each A_k already carries its self-connections, so its diagonal is dropped
// before the A + I normalisation; masked nodes end up with an isolated
// self-loop.
GraphBatch make_batch(const std::vector<const feat::SocialGraphFeature*>& features);

class Encoder {
 public:
  Encoder() = default;
  Encoder(const PredictConfig& config, Rng& init);

  // [B, N, z_dim], tanh-bounded, masked rows zero.
  Var operator()(Tape& tape, const GraphBatch& batch);
  void collect(std::vector<Parameter*>& out);
  Rng& noise() { return noise_; }

 private:
  struct Block {
    std::vector<Parameter> gcn;  // one [c_in, c_out] per hop
    Parameter kernel;            // [k, c_out, c_out]
    Parameter bias;              // [c_out]
    bool project = false;        // residual needs a width change
    Parameter skip;              // [c_in, c_out]
  };

  PredictConfig config_;
  Parameter lift_w_, lift_b_;
  std::vector<Block> blocks_;
  ad::Gru gru_;
  Rng noise_;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(const PredictConfig& config, Rng& init);

  // Rolls H steps from o_t with h0 = z. Returns positions [B, N, H, 2];
  // masked vehicles are zero.
  Var operator()(Tape& tape, const Var& z, const Tensor& origin, const Tensor& mask);
  void collect(std::vector<Parameter*>& out);

  ad::Gru gru;
  ad::Dense head;

 private:
  PredictConfig config_;
};

// Mean over valid vehicles of (1/H) sum_t ||pred_t - truth_t||_2. Returns a
// zero constant when nothing is valid.
Var prediction_loss(const Var& pred, const Tensor& truth, const Tensor& valid);

struct TrainBatch {
  GraphBatch graph;
  Tensor truth;  // [B, N, H, 2]
  Tensor valid;  // [B, N]
};

TrainBatch make_train_batch(const std::vector<const feat::CenteredGraphFeature*>& samples);

class Predictor {
 public:
  Predictor(const PredictConfig& config, std::uint64_t seed);
  Predictor(const Predictor&) = delete;
  Predictor& operator=(const Predictor&) = delete;

  const PredictConfig& config() const { return config_; }

  // Inference on one or more graphs.
  Tensor encode(const GraphBatch& batch);
  Tensor decode(const Tensor& z, const Tensor& origin, const Tensor& mask);

  // One joint optimiser step on encoder and decoder; returns the pre-step
  // loss. A batch without valid vehicles is skipped and counted.
  double train_step(const TrainBatch& batch);
  // Loss without touching parameters.
  double loss(const TrainBatch& batch);

  long skipped_batches() const { return skipped_; }
  std::vector<Parameter*> parameters();
  ad::Adam& optimizer() { return adam_; }
  Encoder& encoder() { return encoder_; }
  Decoder& decoder() { return decoder_; }

 private:
  PredictConfig config_;
  Encoder encoder_;
  Decoder decoder_;
  ad::Adam adam_;
  long skipped_ = 0;
};

// Social-context dump rows: episode, step, slot, z_1..z_D for unmasked slots.
void write_context_csv(std::ostream& os, int episode, int step, const Tensor& z, const Tensor& mask, bool header);

}  // namespace gin::predict
