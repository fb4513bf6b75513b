#include "gin/predict.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include "scenes.hpp"

using namespace gin;
using predict::PredictConfig;
using predict::Predictor;

namespace {

PredictConfig small_config() {
  PredictConfig c;
  c.emb = 8;
  c.channels = 8;
  c.z_dim = 12;
  return c;
}

// Random scene feature with `present` unmasked slots.
feat::SocialGraphFeature random_feature(Rng& rng, std::size_t present, const feat::FeatConfig& fc = {}) {
  std::vector<world::Observation> frames(fc.history);
  std::vector<world::VehicleState> base(present);
  for (auto& v : base) {
    v.position = {rng.uniform(-20, 20), rng.uniform(-20, 20)};
    v.heading = rng.uniform(-3, 3);
    v.speed = rng.uniform(0, 10);
  }
  for (std::size_t t = 0; t < fc.history; ++t) {
    auto& o = frames[t];
    o.ego.speed = 5;
    o.ego.position = {0.5 * t, 0};
    for (std::size_t k = 0; k < present; ++k) {
      world::VehicleState v = base[k];
      v.position.x += v.speed * 0.1 * t * std::cos(v.heading);
      v.position.y += v.speed * 0.1 * t * std::sin(v.heading);
      v.accel = rng.uniform(-1, 1);
      o.npc_ids.push_back(static_cast<int>(k));
      o.npcs.push_back(v);
    }
  }
  return feat::build_social_graph(frames, fc);
}

// Swaps slots a and b everywhere in a feature.
feat::SocialGraphFeature swapped(feat::SocialGraphFeature f, std::size_t a, std::size_t b) {
  const std::size_t n = f.mask.dim(0), h = f.nodes.dim(1), dv = f.nodes.dim(2), l = f.adjacency.dim(0);
  auto perm = [&](std::size_t i) { return i == a ? b : i == b ? a : i; };
  feat::SocialGraphFeature g = f;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < h * dv; ++t) g.nodes[perm(i) * h * dv + t] = f.nodes[i * h * dv + t];
    g.mask[perm(i)] = f.mask[i];
    g.positions[perm(i) * 2] = f.positions[i * 2];
    g.positions[perm(i) * 2 + 1] = f.positions[i * 2 + 1];
    for (std::size_t k = 0; k < l; ++k) {
      for (std::size_t j = 0; j < n; ++j) g.adjacency[(k * n + perm(i)) * n + perm(j)] = f.adjacency[(k * n + i) * n + j];
    }
  }
  return g;
}

}  // namespace

TEST(MakeBatch, NormalisesWithoutDoubleSelfLoops) {
  Rng rng(1);
  auto f = random_feature(rng, 0);
  auto b = predict::make_batch({&f});
  const std::size_t n = 12;
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(b.adjacency[k][i * n + j], i == j ? 1.0 : 0.0);
    }
  }
}

TEST(MakeBatch, TwoNodeHandValues) {
  // Ego plus one NPC at distance tau: A_1 = [[1, e^-1], [e^-1, 1]], degree 1 + e^-1.
  feat::FeatConfig fc;
  fc.history = 1;
  world::Observation o;
  o.npc_ids = {3};
  world::VehicleState v;
  v.position = {fc.tau, 0};
  o.npcs = {v};
  std::vector<world::Observation> frames{o};
  auto f = feat::build_social_graph(frames, fc);
  auto b = predict::make_batch({&f});
  const double e = std::exp(-1.0), deg = 1 + e;
  EXPECT_NEAR(b.adjacency[0][0], 1 / deg, 1e-12);
  EXPECT_NEAR(b.adjacency[0][1], e / deg, 1e-12);
  EXPECT_NEAR(b.adjacency[0][12 + 1], 1 / deg, 1e-12);
}

TEST(Encoder, ShapeMaskAndDeterminism) {
  Rng rng(2);
  Predictor p(small_config(), 7);
  auto f = random_feature(rng, 3);
  auto batch = predict::make_batch({&f});
  ad::Tensor z = p.encode(batch);
  ASSERT_EQ(z.shape(), (ad::Shape{1, 12, 12}));
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t k = 0; k < 12; ++k) {
      const double v = z[i * 12 + k];
      if (i >= 4) {
        EXPECT_EQ(v, 0.0);
      } else {
        EXPECT_LE(std::abs(v), 1.0);
      }
    }
  }
  EXPECT_EQ(p.encode(batch), z);
  Predictor q(small_config(), 7);
  EXPECT_EQ(q.encode(batch), z);
}

TEST(Encoder, SlotSwapPermutesContext) {
  Rng rng(3);
  PredictConfig cfg;
  Predictor p(cfg, 11);
  for (int trial = 0; trial < 5; ++trial) {
    auto f = random_feature(rng, 6);
    const std::size_t a = 1 + trial % 3, b = 4 + trial % 3;
    auto g = swapped(f, a, b);
    ad::Tensor zf = p.encode(predict::make_batch({&f}));
    ad::Tensor zg = p.encode(predict::make_batch({&g}));
    auto perm = [&](std::size_t i) { return i == a ? b : i == b ? a : i; };
    for (std::size_t i = 0; i < 12; ++i) {
      for (std::size_t k = 0; k < cfg.z_dim; ++k) {
        ASSERT_LE(std::abs(zf[i * cfg.z_dim + k] - zg[perm(i) * cfg.z_dim + k]), 1e-10);
      }
    }
  }
}

TEST(Encoder, MaskedNodeIsOpaque) {
  Rng rng(4);
  Predictor p(small_config(), 5);
  auto f = random_feature(rng, 4);
  auto g = f;
  const std::size_t h = f.nodes.dim(1);
  for (std::size_t t = 0; t < h * feat::kNodeDim; ++t) g.nodes[9 * h * feat::kNodeDim + t] = rng.uniform(-30, 30);
  ad::Tensor origin({1, 12, 2});
  auto bf = predict::make_batch({&f}), bg = predict::make_batch({&g});
  ad::Tensor zf = p.encode(bf), zg = p.encode(bg);
  EXPECT_EQ(zf, zg);
  EXPECT_EQ(p.decode(zf, bf.positions, bf.mask), p.decode(zg, bg.positions, bg.mask));
}

TEST(Encoder, VariantsRun) {
  Rng rng(6);
  auto f = random_feature(rng, 2);
  auto batch = predict::make_batch({&f, &f});
  for (auto kind : {predict::EncoderKind::kNoise, predict::EncoderKind::kGruOnly}) {
    PredictConfig cfg = small_config();
    cfg.encoder = kind;
    Predictor p(cfg, 1);
    ad::Tensor z = p.encode(batch);
    EXPECT_EQ(z.shape(), (ad::Shape{2, 12, 12}));
    EXPECT_TRUE(z.all_finite());
    for (std::size_t k = 3 * 12; k < 12 * 12; ++k) EXPECT_EQ(z[k], 0.0);
  }
  PredictConfig noise = small_config();
  noise.encoder = predict::EncoderKind::kNoise;
  EXPECT_TRUE(Predictor(noise, 1).parameters().size() < Predictor(small_config(), 1).parameters().size());
}

TEST(Decoder, ZeroVelocityHoldsPosition) {
  Predictor p(small_config(), 3);
  p.decoder().head.w.value.fill(0);
  p.decoder().head.b.value.fill(0);
  ad::Tensor z({1, 12, 12}, 0.3), origin({1, 12, 2}), mask({1, 12});
  origin[0] = 4;
  origin[1] = -2;
  mask[0] = 1;
  ad::Tensor traj = p.decode(z, origin, mask);
  for (std::size_t t = 0; t < 12; ++t) {
    EXPECT_EQ(traj[t * 2], 4.0);
    EXPECT_EQ(traj[t * 2 + 1], -2.0);
  }
  for (std::size_t k = 24; k < traj.size(); ++k) EXPECT_EQ(traj[k], 0.0);
}

TEST(Decoder, ConstantVelocityIsEvenlySpaced) {
  PredictConfig cfg = small_config();
  Predictor p(cfg, 3);
  p.decoder().head.w.value.fill(0);
  p.decoder().head.b.value[0] = 0.3;
  p.decoder().head.b.value[1] = -0.4;
  ad::Tensor z({1, 12, 12}), origin({1, 12, 2}), mask({1, 12}, 1.0);
  ad::Tensor traj = p.decode(z, origin, mask);
  const double vx = 0.3 * cfg.vel_scale, vy = -0.4 * cfg.vel_scale;
  for (std::size_t t = 0; t < 12; ++t) {
    EXPECT_NEAR(traj[t * 2], vx * cfg.dt * (t + 1), 1e-12);
    EXPECT_NEAR(traj[t * 2 + 1], vy * cfg.dt * (t + 1), 1e-12);
  }
}

TEST(Decoder, UntrainedOutputIsAnchored) {
  PredictConfig cfg = small_config();
  Predictor p(cfg, 9);
  Rng rng(9);
  auto f = random_feature(rng, 5);
  auto batch = predict::make_batch({&f});
  ad::Tensor z = p.encode(batch);
  ad::Tensor traj = p.decode(z, batch.positions, batch.mask);
  ASSERT_TRUE(traj.all_finite());
  // First step equals o_t + v0 dt, with v0 the head output at the first GRU state.
  for (std::size_t i = 0; i < 6; ++i) {
    const double step = std::hypot(traj[i * 24] - batch.positions[i * 2], traj[i * 24 + 1] - batch.positions[i * 2 + 1]);
    EXPECT_LT(step, cfg.vel_scale * 10 * cfg.dt);
  }
}

TEST(PredictionLoss, Examples) {
  ad::Tensor truth({1, 2, 4, 2}), valid({1, 2}, {1, 0});
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = 0.25 * i;
  auto eval = [&](double dx) {
    ad::Tape tape(false);
    ad::Tensor pred = truth;
    for (std::size_t t = 0; t < 4; ++t) pred[t * 2] += dx;
    pred[8] += 100;  // invalid vehicle is ignored
    return predict::prediction_loss(tape.constant(pred), truth, valid).value().item();
  };
  EXPECT_EQ(eval(0), 0.0);
  EXPECT_NEAR(eval(1), 1.0, 1e-12);
  EXPECT_NEAR(eval(2), 2 * eval(1), 1e-12);
  ad::Tape tape(false);
  EXPECT_EQ(predict::prediction_loss(tape.constant(truth), truth, ad::Tensor({1, 2})).value().item(), 0.0);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  PredictConfig cfg = small_config();
  cfg.adam.lr = 0;
  Predictor p(cfg, 2);
  auto samples = scenes::logged_windows(1, 1, 5, {});
  ASSERT_FALSE(samples.empty());
  std::vector<const feat::CenteredGraphFeature*> ptrs{&samples[0]};
  auto batch = predict::make_train_batch(ptrs);
  std::vector<ad::Tensor> before;
  for (auto* q : p.parameters()) before.push_back(q->value);
  const double loss = p.train_step(batch);
  EXPECT_TRUE(std::isfinite(loss));
  auto params = p.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) EXPECT_EQ(params[k]->value, before[k]);
}

TEST(Train, EmptyValidityIsSkipped) {
  Predictor p(small_config(), 2);
  auto samples = scenes::logged_windows(1, 1, 5, {});
  std::vector<const feat::CenteredGraphFeature*> ptrs{&samples[0]};
  auto batch = predict::make_train_batch(ptrs);
  batch.valid.fill(0);
  EXPECT_EQ(p.train_step(batch), 0.0);
  EXPECT_EQ(p.skipped_batches(), 1);
}

TEST(Train, FixedBatchLossDecreases) {
  Predictor p(PredictConfig{}, 4);
  auto samples = scenes::logged_windows(2, 2, 7, {});
  ASSERT_GE(samples.size(), 8u);
  std::vector<const feat::CenteredGraphFeature*> ptrs;
  for (std::size_t k = 0; k < 8; ++k) ptrs.push_back(&samples[k * samples.size() / 8]);
  auto batch = predict::make_train_batch(ptrs);
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> losses;
  for (int k = 0; k < 50; ++k) losses.push_back(p.train_step(batch));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "50 steps on 8 samples: " << secs << " s, loss " << losses.front() << " -> " << losses.back() << "\n";
  for (std::size_t k = 1; k < losses.size(); ++k) EXPECT_LE(losses[k], losses[k - 1] * 1.05) << k;
  EXPECT_LT(losses.back(), losses.front());
}

TEST(ContextCsv, OneRowPerUnmaskedSlot) {
  ad::Tensor z({2, 3}, {1, 2, 3, 4, 5, 6}), mask({2}, {1, 0});
  std::ostringstream os;
  predict::write_context_csv(os, 1, 5, z, mask, true);
  EXPECT_EQ(os.str(), "episode,step,slot,z1,z2,z3\n1,5,0,1,2,3\n");
}
