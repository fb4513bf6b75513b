#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "gin/evalcli.hpp"

using namespace gin;
using evalcli::ConfigError;
using evalcli::EpisodeRecord;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

EpisodeRecord record(double ret, double dist, double cost, int steps, world::DoneReason reason) {
  EpisodeRecord r;
  r.ret = ret;
  r.distance = dist;
  r.cost = cost;
  r.steps = steps;
  r.reason = reason;
  return r;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const auto c = evalcli::parse_config(json::object());
  EXPECT_EQ(c.agent.variant, "B8");
  EXPECT_EQ(c.agent.min_buffer, 2000u);
  EXPECT_EQ(c.agent.batch, 128u);
  EXPECT_EQ(c.agent.capacity, 100000u);
  EXPECT_EQ(c.agent.cost_aux_scale, 0.5);
  EXPECT_EQ(c.agent.wcsac.gamma, 0.99);
  EXPECT_EQ(c.agent.wcsac.alpha, 0.5);
  EXPECT_EQ(c.agent.wcsac.budget, 1.0);
  EXPECT_EQ(c.agent.feat.n_max, 12u);
  EXPECT_EQ(c.agent.world.max_steps, 600);
  EXPECT_EQ(c.seeds.size(), 5u);
  EXPECT_EQ(c.episodes, 100);
}

TEST(Config, EmptyFileGivesDefaults) {
  const fs::path dir = temp_dir("gin_cfg_empty");
  std::ofstream(dir / "empty.json") << "  \n";
  const auto c = evalcli::load_config((dir / "empty.json").string());
  EXPECT_EQ(c.agent.variant, "B8");
  EXPECT_EQ(c.episodes, 100);
}

TEST(Config, UnknownKeysAreNamed) {
  try {
    evalcli::parse_config(json::parse(R"({"foo": 1, "world": {"bar": 2}, "wcsac": {"gamma": 0.9}})"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("foo"), std::string::npos) << msg;
    EXPECT_NE(msg.find("world.bar"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("gamma"), std::string::npos) << msg;
  }
}

TEST(Config, TypeAndRangeErrors) {
  EXPECT_THROW(evalcli::parse_config(json::parse(R"({"batch": "big"})")), ConfigError);
  EXPECT_THROW(evalcli::parse_config(json::parse(R"({"batch": -3})")), ConfigError);
  EXPECT_THROW(evalcli::parse_config(json::parse(R"({"world": 3})")), ConfigError);
  EXPECT_THROW(evalcli::parse_config(json::parse(R"({"variant": "B12"})")), ConfigError);
  EXPECT_THROW(evalcli::parse_config(json::parse(R"({"wcsac": {"alpha": 0}})")), ConfigError);
  EXPECT_THROW(evalcli::parse_config(json::parse("[1, 2]")), ConfigError);
}

TEST(Config, VariantExpandsToToggles) {
  const auto c = evalcli::parse_config(json::parse(R"({"variant": "B3"})"));
  const auto t = agent::variant_toggles(c.agent.variant);
  EXPECT_FALSE(t.cost);
  EXPECT_TRUE(t.wedge);
  EXPECT_TRUE(t.dap);
  EXPECT_FALSE(t.aux);
}

TEST(Config, RoundTrip) {
  evalcli::RunConfig c;
  evalcli::apply_quick(c);
  c.agent.wcsac.budget = 0.25;
  c.agent.world.vehicle.wheelbase = 2.9;
  const auto back = evalcli::parse_config(evalcli::to_json(c));
  EXPECT_EQ(evalcli::to_json(back), evalcli::to_json(c));
  EXPECT_EQ(back.agent.wcsac.budget, 0.25);
  EXPECT_EQ(back.agent.world.vehicle.wheelbase, 2.9);
  EXPECT_EQ(back.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(Config, OverridesKeepBase) {
  evalcli::RunConfig base;
  evalcli::apply_quick(base);
  const auto c = evalcli::parse_config(json::parse(R"({"batch": 32})"), base);
  EXPECT_EQ(c.agent.batch, 32u);
  EXPECT_EQ(c.agent.predict.z_dim, 32u);
}

TEST(Config, QuickFileMatchesQuickFlag) {
  evalcli::RunConfig flag;
  evalcli::apply_quick(flag);
  const auto file = evalcli::load_config(GIN_SOURCE_DIR "/configs/quick.json");
  EXPECT_EQ(evalcli::to_json(file), evalcli::to_json(flag));
}

TEST(Metrics, AllCollide) {
  std::vector<EpisodeRecord> eps(4, record(-5, 3, 0.8, 12, world::DoneReason::kCollision));
  const auto m = evalcli::summarize("1", eps, NAN, NAN);
  EXPECT_EQ(m.success_rate, 0.0);
  EXPECT_EQ(m.collision_rate, 1.0);
  EXPECT_TRUE(std::isnan(m.success_step_mean));
  EXPECT_DOUBLE_EQ(m.cost_mean, 0.8);
}

TEST(Metrics, Definitions) {
  const std::vector<EpisodeRecord> eps = {record(10, 100, 0, 200, world::DoneReason::kSuccess),
                                          record(4, 40, 0.6, 80, world::DoneReason::kCollision),
                                          record(6, 60, 0, 600, world::DoneReason::kTimeout),
                                          record(8, 90, 0, 300, world::DoneReason::kSuccess)};
  const auto m = evalcli::summarize("7", eps, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(m.return_mean, 7.0);
  EXPECT_DOUBLE_EQ(m.return_std, std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(m.success_rate, 0.5);
  EXPECT_DOUBLE_EQ(m.collision_rate, 0.25);
  EXPECT_LE(m.success_rate + m.collision_rate, 1.0);
  EXPECT_DOUBLE_EQ(m.distance_mean, 72.5);
  EXPECT_DOUBLE_EQ(m.cost_mean, 0.15);
  EXPECT_DOUBLE_EQ(m.survival_step_mean, 295.0);
  EXPECT_DOUBLE_EQ(m.success_step_mean, 250.0);
}

TEST(Metrics, AggregateAndCsv) {
  evalcli::MetricsRow a, b;
  a.seed = "1";
  b.seed = "2";
  a.episodes = b.episodes = 30;
  a.success_rate = 0.4;
  b.success_rate = 0.6;
  a.success_step_mean = NAN;
  b.success_step_mean = 100;
  const std::vector<evalcli::MetricsRow> rows{a, b};
  const auto agg = evalcli::aggregate(rows);
  ASSERT_EQ(agg.size(), 2u);
  EXPECT_EQ(agg[0].seed, "mean");
  EXPECT_DOUBLE_EQ(agg[0].success_rate, 0.5);
  EXPECT_DOUBLE_EQ(agg[1].success_rate, 0.1);
  EXPECT_DOUBLE_EQ(agg[0].success_step_mean, 100.0);
  EXPECT_EQ(agg[0].episodes, 60);

  std::ostringstream os;
  evalcli::write_metrics_header(os);
  evalcli::write_metrics_row(os, a);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "seed,episodes,return_mean,return_std,success_rate,distance_mean,cost_mean,collision_rate,"
            "survival_step_mean,success_step_mean,ade,fde");
  EXPECT_NE(os.str().find("1,30,0,0,0.4,0,0,0,0,nan,0,0"), std::string::npos) << os.str();
}

TEST(Displacement, Exact) {
  ad::Tensor p({2, 3, 2});
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.1 * static_cast<double>(i);
  const auto d = evalcli::ade_fde(p, p, ad::Tensor({2}, 1.0));
  ASSERT_TRUE(d.has_value());
  EXPECT_EQ(d->ade, 0.0);
  EXPECT_EQ(d->fde, 0.0);
}

TEST(Displacement, ConstantOffset) {
  ad::Tensor truth({3, 4, 2}), pred({3, 4, 2});
  for (std::size_t i = 0; i < pred.size(); i += 2) {
    pred[i] = truth[i] + 0.3;
    pred[i + 1] = truth[i + 1] + 0.4;
  }
  const auto d = evalcli::ade_fde(pred, truth, ad::Tensor({3}, 1.0));
  EXPECT_NEAR(d->ade, 0.5, 1e-12);
  EXPECT_NEAR(d->fde, 0.5, 1e-12);
}

TEST(Displacement, LinearRamp) {
  // Error grows linearly to e_H = 2.4 over H = 12 steps: ADE is the ramp mean.
  const std::size_t h = 12;
  const double e_h = 2.4;
  ad::Tensor truth({1, h, 2}), pred({1, h, 2});
  double ramp_sum = 0;
  for (std::size_t t = 0; t < h; ++t) {
    const double e = e_h * static_cast<double>(t + 1) / h;
    pred[t * 2 + 1] = e;
    ramp_sum += e;
  }
  const auto d = evalcli::ade_fde(pred, truth, ad::Tensor({1}, 1.0));
  EXPECT_NEAR(d->ade, ramp_sum / h, 1e-12);
  EXPECT_NEAR(d->ade, e_h * (h + 1) / (2.0 * h), 1e-12);
  EXPECT_NEAR(d->fde, e_h, 1e-12);
}

TEST(Displacement, ValidityAndEmpty) {
  ad::Tensor truth({2, 2, 2}), pred({2, 2, 2});
  pred[4] = 100;  // vehicle 1 is invalid and must not count
  auto d = evalcli::ade_fde(pred, truth, ad::Tensor({2}, std::vector<double>{1, 0}));
  EXPECT_EQ(d->ade, 0.0);
  EXPECT_FALSE(evalcli::ade_fde(pred, truth, ad::Tensor({2})).has_value());
  EXPECT_THROW(evalcli::ade_fde(pred, ad::Tensor({2, 3, 2}), ad::Tensor({2})), ad::ShapeError);
}

TEST(Displacement, BoundedByLargestStepError) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    ad::Tensor truth({4, 6, 2}), pred({4, 6, 2});
    double largest = 0;
    for (std::size_t i = 0; i < pred.size(); i += 2) {
      pred[i] = rng.normal();
      pred[i + 1] = rng.normal();
      truth[i] = rng.normal();
      truth[i + 1] = rng.normal();
      largest = std::max(largest, std::hypot(pred[i] - truth[i], pred[i + 1] - truth[i + 1]));
    }
    const auto d = evalcli::ade_fde(pred, truth, ad::Tensor({4}, 1.0));
    EXPECT_GE(d->ade, 0.0);
    EXPECT_GE(d->fde, 0.0);
    EXPECT_LE(d->fde, largest);
  }
}

namespace {

// Ego at rest with one NPC ahead moving along x from `x0` with speed `v`
// and acceleration `a` (speed floored at zero).
agent::EpisodeLog kinematic_log(double x0, double v, double a, int frames, double dt) {
  agent::EpisodeLog log;
  double x = x0, s = v;
  for (int f = 0; f < frames; ++f) {
    world::Observation o;
    o.step = f;
    o.npc_ids = {3};
    world::VehicleState npc;
    npc.position = {x, 0.0};
    npc.speed = s;
    o.npcs = {npc};
    log.frames.push_back(o);
    const double next = std::max(0.0, s + a * dt);
    x += 0.5 * (s + next) * dt;
    s = next;
  }
  return log;
}

}  // namespace

TEST(ConstantVelocity, MatchesConstantVelocityScenes) {
  feat::FeatConfig fc;
  const auto windows = evalcli::windows_from_log(kinematic_log(5.0, 6.0, 0.0, 60, 0.1), 3, fc);
  ASSERT_FALSE(windows.empty());
  evalcli::DisplacementSum s;
  for (const auto& w : windows) s.add(evalcli::constant_velocity(w.past), w.future, w.valid);
  EXPECT_LT(s.ade(), 1e-9);
  EXPECT_LT(s.fde(), 1e-9);
}

TEST(ConstantVelocity, StationaryScene) {
  feat::FeatConfig fc;
  const auto windows = evalcli::windows_from_log(kinematic_log(5.0, 0.0, 0.0, 30, 0.1), 1, fc);
  for (const auto& w : windows) {
    const auto d = evalcli::ade_fde(evalcli::constant_velocity(w.past), w.future, w.valid);
    EXPECT_LT(d->fde, 1e-12);
  }
}

TEST(ConstantVelocity, BrakingLowerBound) {
  // Braking at 4 m/s^2 from 12 m/s: over T = H dt the constant-velocity
  // guess overshoots by at least 1/2 |a| T^2 minus the one-frame lag.
  feat::FeatConfig fc;
  const double dt = 0.1, a = -4.0;
  const auto windows = evalcli::windows_from_log(kinematic_log(0.0, 12.0, a, 24, dt), 1, fc);
  ASSERT_EQ(windows.size(), 1u);
  const auto& w = windows[0];
  const double horizon = fc.history * dt;
  const double bound = 0.5 * std::abs(a) * horizon * horizon;
  ad::Tensor npc_only = w.valid;
  npc_only[0] = 0;  // the resting ego is predicted exactly
  const auto d = evalcli::ade_fde(evalcli::constant_velocity(w.past), w.future, npc_only);
  ASSERT_TRUE(d.has_value());
  EXPECT_GT(d->fde, 0.0);
  EXPECT_GE(d->fde, bound - std::abs(a) * dt * horizon - 1e-9);
  EXPECT_LE(d->fde, bound + std::abs(a) * dt * horizon + 1e-9);
}

TEST(PredictEval, ReportsBothMethods) {
  agent::AgentConfig c;
  c.predict.emb = 8;
  c.predict.channels = 8;
  c.predict.z_dim = 8;
  const auto windows = evalcli::logged_windows(c, 3, 2, 10);
  ASSERT_FALSE(windows.empty());
  predict::Predictor p(agent::resolve(c).predict, 1);
  const auto r = evalcli::predict_eval(p, windows);
  EXPECT_EQ(r.windows, static_cast<long>(windows.size()));
  EXPECT_GE(r.model.ade, 0.0);
  EXPECT_GE(r.constant_velocity.ade, 0.0);
  EXPECT_TRUE(std::isfinite(r.model.fde));
}

TEST(Evaluate, ScriptedStyleDeterminism) {
  agent::AgentConfig c;
  c.predict.emb = 8;
  c.predict.channels = 8;
  c.predict.z_dim = 8;
  c.wcsac.net.local = 8;
  c.wcsac.net.hidden = 16;
  agent::Trainer a(c, 4), b(c, 4);
  const auto ra = evalcli::evaluate(a, 2);
  const auto rb = evalcli::evaluate(b, 2);
  std::ostringstream sa, sb;
  evalcli::write_metrics_row(sa, evalcli::summarize("4", ra, NAN, NAN));
  evalcli::write_metrics_row(sb, evalcli::summarize("4", rb, NAN, NAN));
  EXPECT_EQ(sa.str(), sb.str());
  for (const auto& r : ra) EXPECT_GE(r.steps, 1);
}

TEST(Plot, EmptyLogIsError) {
  const fs::path dir = temp_dir("gin_plot_empty");
  EXPECT_THROW(evalcli::emit_plots(dir.string()), std::runtime_error);
  std::ofstream(dir / "progress.csv") << "env_steps,success_rate,collision_rate,return_mean,cost_mean\n";
  EXPECT_THROW(evalcli::emit_plots(dir.string()), std::runtime_error);
}

TEST(Plot, BandIsMinMaxEnvelope) {
  const fs::path dir = temp_dir("gin_plot_band");
  fs::create_directories(dir / "seed_1");
  fs::create_directories(dir / "seed_2");
  std::ofstream(dir / "seed_1" / "progress.csv")
      << "env_steps,success_rate,collision_rate,return_mean,cost_mean\n100,0.2,0.5,1,0\n200,0.6,0.1,2,0\n";
  std::ofstream(dir / "seed_2" / "progress.csv")
      << "env_steps,success_rate,collision_rate,return_mean,cost_mean\n100,0.4,0.3,1,0\n200,0.8,0.3,2,0\n";
  const auto files = evalcli::emit_plots(dir.string());
  ASSERT_EQ(files.size(), 2u);

  const auto c1 = evalcli::read_progress((dir / "seed_1" / "progress.csv").string(), "success_rate");
  const auto c2 = evalcli::read_progress((dir / "seed_2" / "progress.csv").string(), "success_rate");
  const std::string svg = evalcli::svg_band_plot({c1, c2}, "t", "success");
  // Plot area: x in [64, 624] for steps [100, 200]; y in [352, 32] for [0, 1].
  auto y = [](double v) { return 352.0 - v * 320.0; };
  std::smatch m;
  ASSERT_TRUE(std::regex_search(svg, m, std::regex("class=\"band\"[^>]*points=\"([^\"]*)\"")));
  std::vector<double> nums;
  {
    std::string pts = m[1];
    std::replace(pts.begin(), pts.end(), ',', ' ');
    std::istringstream is(pts);
    double v;
    while (is >> v) nums.push_back(v);
  }
  ASSERT_EQ(nums.size(), 8u);
  EXPECT_NEAR(nums[0], 64, 1e-6);
  EXPECT_NEAR(nums[1], y(0.4), 1e-3);  // max at first snapshot
  EXPECT_NEAR(nums[2], 624, 1e-6);
  EXPECT_NEAR(nums[3], y(0.8), 1e-3);
  EXPECT_NEAR(nums[5], y(0.6), 1e-3);  // min at second snapshot
  EXPECT_NEAR(nums[7], y(0.2), 1e-3);
}

TEST(Plot, AxesContainData) {
  evalcli::Curve c{"c", {0, 50, 90}, {-0.5, 1.7, 0.3}};
  const std::string svg = evalcli::svg_band_plot({c}, "t", "v");
  std::smatch m;
  ASSERT_TRUE(std::regex_search(svg, m, std::regex("class=\"mean\"[^>]*points=\"([^\"]*)\"")));
  std::string pts = m[1];
  std::replace(pts.begin(), pts.end(), ',', ' ');
  std::istringstream is(pts);
  double x, yv;
  while (is >> x >> yv) {
    EXPECT_GE(x, 64.0 - 1e-9);
    EXPECT_LE(x, 624.0 + 1e-9);
    EXPECT_GE(yv, 32.0 - 1e-9);
    EXPECT_LE(yv, 352.0 + 1e-9);
  }
}
