#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "gin/agent.hpp"
#include "oracles.hpp"

using namespace gin;
using agent::AgentConfig;
using agent::Trainer;
using agent::Transition;

namespace {

AgentConfig small_config(const std::string& variant = "B8") {
  AgentConfig c;
  c.variant = variant;
  c.predict.emb = 8;
  c.predict.channels = 8;
  c.predict.z_dim = 8;
  c.wcsac.net.local = 8;
  c.wcsac.net.hidden = 16;
  c.batch = 16;
  c.predictor_batch = 4;
  c.predictor_every = 2;
  c.min_buffer = 100;
  c.start_steps = 100;
  c.capacity = 5000;
  c.reward_scale = 0.1;
  return c;
}

Transition tagged(double reward) {
  Transition t;
  t.reward = reward;
  return t;
}

bool same_state(const std::vector<ad::NamedTensor>& a, const std::vector<ad::NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !(a[i].tensor == b[i].tensor)) return false;
  }
  return true;
}

}  // namespace

TEST(Variants, TableRows) {
  const std::vector<std::array<bool, 4>> rows = {
      {false, false, false, false}, {false, true, false, false}, {false, true, true, false},
      {true, false, false, false},  {true, true, false, false},  {true, false, true, false},
      {true, true, true, false},    {true, true, true, true}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto t = agent::variant_toggles("B" + std::to_string(i + 1));
    EXPECT_EQ(t.cost, rows[i][0]) << i;
    EXPECT_EQ(t.wedge, rows[i][1]) << i;
    EXPECT_EQ(t.dap, rows[i][2]) << i;
    EXPECT_EQ(t.aux, rows[i][3]) << i;
    EXPECT_EQ(t.encoder, predict::EncoderKind::kGraph);
  }
  EXPECT_EQ(agent::variant_toggles("RN").encoder, predict::EncoderKind::kNoise);
  EXPECT_EQ(agent::variant_toggles("VGRU").encoder, predict::EncoderKind::kGruOnly);
  EXPECT_THROW(agent::variant_toggles("B9"), std::invalid_argument);
}

TEST(Variants, ResolveCopiesSwitches) {
  AgentConfig c;
  c.variant = "B3";
  c.predict.z_dim = 24;
  const AgentConfig r = agent::resolve(c);
  EXPECT_FALSE(r.wcsac.cost);
  EXPECT_TRUE(r.feat.wedge);
  EXPECT_EQ(r.wcsac.net.z_dim, 24u);
  c.variant = "B4";
  EXPECT_FALSE(agent::resolve(c).feat.wedge);
}

TEST(ReplayBuffer, FifoEviction) {
  agent::ReplayBuffer buf(3);
  for (int i = 0; i < 4; ++i) buf.push(tagged(i));
  ASSERT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf[0].reward, 1.0);
  EXPECT_EQ(buf[2].reward, 3.0);
}

TEST(ReplayBuffer, SamplesComeFromContents) {
  agent::ReplayBuffer buf(5);
  for (int i = 0; i < 8; ++i) buf.push(tagged(i));
  Rng rng(3);
  const auto s = buf.sample(50, rng);
  EXPECT_EQ(s.size(), 50u);
  for (const Transition* t : s) {
    EXPECT_GE(t->reward, 3.0);
    EXPECT_LE(t->reward, 7.0);
  }
}

TEST(ReplayBuffer, EmptySampleThrows) {
  agent::ReplayBuffer buf(2);
  Rng rng(1);
  EXPECT_THROW(buf.sample(1, rng), std::out_of_range);
  EXPECT_THROW(agent::ReplayBuffer(0), std::invalid_argument);
}

TEST(ReplayBuffer, UniformChiSquare) {
  agent::ReplayBuffer buf(10);
  for (int i = 0; i < 10; ++i) buf.push(tagged(i));
  Rng rng(2024);
  std::array<double, 10> counts{};
  const int draws = 100000;
  for (const Transition* t : buf.sample(draws, rng)) counts[static_cast<int>(t->reward)] += 1;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - draws / 10.0) * (c - draws / 10.0) / (draws / 10.0);
  // Upper 1% point of chi-square with 9 degrees of freedom.
  EXPECT_LT(chi2, 21.666);
}

namespace {

agent::RiskScene two_vehicle_scene(double lateral, double npc_heading, std::vector<geom::Point2> ego_path,
                                   std::vector<geom::Point2> npc_path, geom::Point2 npc_pos) {
  agent::RiskScene s;
  const std::size_t n = 3, h = ego_path.size();
  s.positions = ad::Tensor({n, 2});
  s.mask = ad::Tensor({n}, std::vector<double>{1, 1, 0});
  s.trajectories = ad::Tensor({n, h, 2});
  s.positions[2] = npc_pos.x;
  s.positions[3] = npc_pos.y + lateral;
  for (std::size_t t = 0; t < h; ++t) {
    s.trajectories[t * 2] = ego_path[t].x;
    s.trajectories[t * 2 + 1] = ego_path[t].y;
    s.trajectories[(h + t) * 2] = npc_path[t].x;
    s.trajectories[(h + t) * 2 + 1] = npc_path[t].y;
  }
  s.headings = {0.0, npc_heading, 0.0};
  s.extents = {{4.5, 1.9}, {4.5, 1.9}, {4.5, 1.9}};
  return s;
}

}  // namespace

TEST(AuxCost, MarginFiresWithoutContact) {
  // Side by side 2.2 m apart: 0.3 m clear, but inside the 0.5 m ego margin.
  const std::vector<geom::Point2> still(4, {0, 0});
  const std::vector<geom::Point2> npc_still(4, {0, 2.2});
  auto scene = two_vehicle_scene(0.0, 0.0, still, npc_still, {0, 2.2});
  EXPECT_FALSE(geom::polygons_intersect(geom::vehicle_footprint({0, 0, 0}, 4.5, 1.9),
                                        geom::vehicle_footprint({0, 2.2, 0}, 4.5, 1.9)));
  EXPECT_TRUE(agent::predicted_conflict(scene, 0.5));
  EXPECT_FALSE(agent::predicted_conflict(scene, 0.0));
}

TEST(AuxCost, CrossingPredictionsFireViaPolylines) {
  // Ego heads east, NPC 20 m ahead and 12 m to the side heads south; the
  // footprints are far apart, only the predicted paths cross.
  std::vector<geom::Point2> ego_path, npc_path;
  for (int t = 1; t <= 12; ++t) {
    ego_path.push_back({2.0 * t, 0.0});
    npc_path.push_back({20.0, 12.0 - 2.0 * t});
  }
  const auto scene = two_vehicle_scene(0.0, -M_PI / 2, ego_path, npc_path, {20, 12});
  const geom::Polygon ego_g = geom::vehicle_footprint({0, 0, 0}, 4.5, 1.9, 0.5, 0.5);
  const geom::Polygon npc_g = geom::vehicle_footprint({20, 12, -M_PI / 2}, 4.5, 1.9);
  EXPECT_FALSE(oracle::polygons(ego_g.vertices(), npc_g.vertices()).intersect);
  bool crossing = false;
  std::vector<geom::Point2> el{{0, 0}}, nl{{20, 12}};
  el.insert(el.end(), ego_path.begin(), ego_path.end());
  nl.insert(nl.end(), npc_path.begin(), npc_path.end());
  for (std::size_t i = 0; i + 1 < el.size(); ++i) {
    for (std::size_t j = 0; j + 1 < nl.size(); ++j) {
      crossing = crossing || oracle::segments(el[i], el[i + 1], nl[j], nl[j + 1]).intersect;
    }
  }
  ASSERT_TRUE(crossing);
  EXPECT_TRUE(agent::predicted_conflict(scene, 0.5));

  // Same scene with the NPC path stopping short of the ego path.
  auto short_scene = scene;
  for (std::size_t t = 0; t < 12; ++t) short_scene.trajectories[(12 + t) * 2 + 1] = 12.0 - 0.5 * (t + 1);
  EXPECT_FALSE(agent::predicted_conflict(short_scene, 0.5));
}

TEST(AuxCost, MaskedVehiclesIgnored) {
  const std::vector<geom::Point2> still(4, {0, 0});
  auto scene = two_vehicle_scene(0.0, 0.0, still, still, {0, 0});
  scene.mask[1] = 0;
  EXPECT_FALSE(agent::predicted_conflict(scene, 0.5));
}

TEST(Trainer, EmptyRoadHasNoAuxCost) {
  AgentConfig c = small_config();
  c.world.npc_min = 0;
  c.world.npc_max = 0;
  Trainer tr(c, 5);
  world::World w = world::World::spawn(tr.config().world, std::make_shared<world::RoadNetwork>(tr.road()), 9);
  std::vector<world::Observation> frames{w.observe()};
  for (int i = 0; i < 15; ++i) {
    w.step(w.scripted_ego_action(6.0));
    frames.push_back(w.observe());
  }
  feat::SocialGraphFeature graph;
  const auto input = tr.control_input(w, frames, &graph);
  EXPECT_EQ(tr.auxiliary_cost(*input, graph, frames.back()), 0.0);
}

TEST(Trainer, ColdBufferIsNoOp) {
  AgentConfig c = small_config();
  Trainer tr(c, 1);
  const auto before = tr.state();
  const auto r = tr.gradient_step();
  EXPECT_FALSE(r.applied);
  EXPECT_EQ(tr.gradient_steps(), 0);
  EXPECT_TRUE(same_state(before, tr.state()));
}

TEST(Trainer, ZeroStepsTrainsNothing) {
  Trainer tr(small_config(), 1);
  tr.train(0);
  EXPECT_EQ(tr.env_steps(), 0);
  EXPECT_EQ(tr.buffer().size(), 0u);
}

class TrainedAgent : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    trainer_ = new Trainer(small_config(), 42);
    trainer_->train(400);
  }
  static void TearDownTestSuite() {
    delete trainer_;
    trainer_ = nullptr;
  }
  static Trainer* trainer_;
};

Trainer* TrainedAgent::trainer_ = nullptr;

TEST_F(TrainedAgent, WarmupStoresNothingEarly) {
  const std::size_t h = trainer_->config().feat.history;
  const auto& buf = trainer_->buffer();
  ASSERT_GT(buf.size(), 0u);
  int min_frame = 1 << 30;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    min_frame = std::min(min_frame, buf[i].frame);
    EXPECT_EQ(buf[i].has_centered(h), buf[i].frame + 1 >= static_cast<int>(2 * h));
  }
  EXPECT_EQ(min_frame, static_cast<int>(h) - 1);
}

TEST_F(TrainedAgent, CostAugmentationInvariants) {
  const auto& buf = trainer_->buffer();
  const double scale = trainer_->config().cost_aux_scale;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const Transition& t = buf[i];
    EXPECT_GE(t.c_plus, t.env_cost);
    EXPECT_GE(t.c_plus, 0.0);
    EXPECT_TRUE(t.aux_cost == 0.0 || t.aux_cost == scale);
    EXPECT_EQ(t.c_plus, t.env_cost + t.aux_cost);
  }
}

TEST_F(TrainedAgent, ConsecutiveStepsShareContext) {
  const auto& buf = trainer_->buffer();
  int shared = 0;
  for (std::size_t i = 0; i + 1 < buf.size(); ++i) {
    if (buf[i].log != buf[i + 1].log) continue;
    EXPECT_EQ(buf[i].next.get(), buf[i + 1].s.get());
    ++shared;
  }
  EXPECT_GT(shared, 0);
}

TEST_F(TrainedAgent, CenteredWindowEndsAtStep) {
  const auto& buf = trainer_->buffer();
  const auto& fc = trainer_->config().feat;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    if (!buf[i].has_centered(fc.history)) continue;
    const auto cf = buf[i].centered(fc);
    EXPECT_EQ(cf.future.dim(1), fc.history);
    return;
  }
  FAIL() << "no centered window stored";
}

TEST_F(TrainedAgent, GradientStepsRan) {
  EXPECT_GT(trainer_->gradient_steps(), 0);
  EXPECT_TRUE(std::isfinite(trainer_->last_report().control.critic_loss));
}

TEST(Trainer, AuxOffMeansEnvCostOnly) {
  Trainer tr(small_config("B7"), 3);
  tr.train(200);
  const auto& buf = tr.buffer();
  ASSERT_GT(buf.size(), 0u);
  for (std::size_t i = 0; i < buf.size(); ++i) EXPECT_EQ(buf[i].c_plus, buf[i].env_cost);
}

TEST(Trainer, SameSeedSameRun) {
  Trainer a(small_config(), 7), b(small_config(), 7);
  a.train(250);
  b.train(250);
  EXPECT_TRUE(same_state(a.state(), b.state()));
}

TEST(Trainer, CheckpointRoundTrip) {
  const std::string path = (std::filesystem::temp_directory_path() / "gin_agent_roundtrip.ckpt").string();
  Trainer a(small_config("RN"), 11);
  a.train(250);
  a.save(path);
  Trainer b(small_config("RN"), 99);
  b.load(path);
  EXPECT_TRUE(same_state(a.state(), b.state()));
  std::filesystem::remove(path);
}

TEST(Trainer, ResumeMatchesUninterrupted) {
  const std::string path = (std::filesystem::temp_directory_path() / "gin_agent_resume.ckpt").string();
  Trainer a(small_config(), 13);
  a.train(250);
  a.save(path);
  std::ostringstream la, lb;
  agent::TrainSinks sa{nullptr, &la, nullptr}, sb{nullptr, &lb, nullptr};
  a.train(400, sa);

  Trainer b(small_config(), 13);
  b.load(path);
  b.train(400, sb);
  ASSERT_FALSE(la.str().empty());
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_TRUE(same_state(a.state(), b.state()));
  std::filesystem::remove(path);
}

TEST(Trainer, CheckpointShapeMismatch) {
  const std::string path = (std::filesystem::temp_directory_path() / "gin_agent_mismatch.ckpt").string();
  Trainer a(small_config(), 1);
  a.save(path);
  AgentConfig wide = small_config();
  wide.wcsac.net.hidden = 32;
  Trainer b(wide, 1);
  EXPECT_THROW(b.load(path), agent::CheckpointError);
  std::filesystem::remove(path);
}

TEST(Trainer, EvalIsDeterministic) {
  Trainer a(small_config(), 2);
  const auto r1 = a.eval_episode(a.eval_seed(0));
  const auto r2 = a.eval_episode(a.eval_seed(0));
  EXPECT_EQ(r1.ret, r2.ret);
  EXPECT_EQ(r1.steps, r2.steps);
  EXPECT_GE(r1.steps, 1);
  EXPECT_GE(r1.distance, 0.0);
}
