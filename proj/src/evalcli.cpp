#include "gin/evalcli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace gin::evalcli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Walks every configurable field once; the reader and writer below share it
// so the schema has a single definition.
template <class V>
void visit_config(RunConfig& c, V& v) {
  auto& a = c.agent;
  v("variant", a.variant);
  v("total_steps", a.total_steps);
  v("min_buffer", a.min_buffer);
  v("start_steps", a.start_steps);
  v("batch", a.batch);
  v("capacity", a.capacity);
  v("updates_per_step", a.updates_per_step);
  v("predictor_batch", a.predictor_batch);
  v("predictor_every", a.predictor_every);
  v("warmup_throttle", a.warmup_throttle);
  v("eval_every", a.eval_every);
  v("eval_episodes", a.eval_episodes);
  v("reward_scale", a.reward_scale);
  v("cost_aux_scale", a.cost_aux_scale);
  v("aux_margin", a.aux_margin);
  v("dap_tau", a.dap_tau);
  v.section("world", [&] {
    auto& w = a.world;
    v("map", w.map);
    v("map_file", w.map_file);
    v("dt", w.dt);
    v("max_steps", w.max_steps);
    v("goal_radius", w.goal_radius);
    v("off_route", w.off_route);
    v("v_norm", w.v_norm);
    v("ego_length", w.ego_length);
    v("ego_width", w.ego_width);
    v("ego_init_speed", w.ego_init_speed);
    v("npc_min", w.npc_min);
    v("npc_max", w.npc_max);
    v("npc_base_speed", w.npc_base_speed);
    v("npc_speed_spread", w.npc_speed_spread);
    v("abnormal_fraction", w.abnormal_fraction);
    v("route_min", w.route_min);
    v("route_max", w.route_max);
    v("npc_crossing_share", w.npc_crossing_share);
    v.section("vehicle", [&] {
      v("wheelbase", w.vehicle.wheelbase);
      v("a_max", w.vehicle.a_max);
      v("b_max", w.vehicle.b_max);
      v("delta_max", w.vehicle.delta_max);
      v("v_max", w.vehicle.v_max);
    });
    v.section("weights", [&] {
      v("w_vs", w.weights.w_vs);
      v("w_vd", w.weights.w_vd);
      v("w_ec", w.weights.w_ec);
      v("w_dec", w.weights.w_dec);
      v("w_steer", w.weights.w_steer);
      v("w_eh_vd", w.weights.w_eh_vd);
    });
  });
  v.section("feat", [&] {
    auto& f = a.feat;
    v("n_max", f.n_max);
    v("history", f.history);
    v("hops", f.hops);
    v("d_close", f.d_close);
    v("range", f.range);
    v("tau", f.tau);
    v("lookahead", f.lookahead);
    v("raw_powers", f.raw_powers);
  });
  v.section("predict", [&] {
    auto& p = a.predict;
    v("emb", p.emb);
    v("channels", p.channels);
    v("blocks", p.blocks);
    v("kernel", p.kernel);
    v("z_dim", p.z_dim);
    v("pos_scale", p.pos_scale);
    v("vel_scale", p.vel_scale);
    v("lr", p.adam.lr);
  });
  v.section("wcsac", [&] {
    auto& s = a.wcsac;
    v("gamma", s.gamma);
    v("alpha", s.alpha);
    v("budget", s.budget);
    v("polyak", s.polyak);
    v("target_entropy", s.target_entropy);
    v("lr", s.lr);
    v("weight_lr", s.weight_lr);
    v("beta_init", s.beta_init);
    v("kappa_init", s.kappa_init);
    v("local", s.net.local);
    v("hidden", s.net.hidden);
    v("literal_cvar", s.literal_cvar);
  });
  v.section("eval", [&] {
    v("seeds", c.seeds);
    v("episodes", c.episodes);
    v("predict_episodes", c.predict_episodes);
    v("predict_stride", c.predict_stride);
    v("predict_fit_steps", c.predict_fit_steps);
  });
}

class Reader {
 public:
  explicit Reader(const json& root) { frames_.push_back({&root, "", {}}); }

  template <class T>
  void operator()(const char* key, T& dst) {
    Frame& f = frames_.back();
    f.seen.insert(key);
    if (!f.node || !f.node->contains(key)) return;
    const json& value = (*f.node)[key];
    if (!read(value, dst)) errors_.push_back(f.prefix + key + " (wrong type)");
  }

  void section(const char* key, const std::function<void()>& body) {
    Frame& f = frames_.back();
    f.seen.insert(key);
    const json* child = nullptr;
    const std::string prefix = f.prefix + key + ".";
    if (f.node && f.node->contains(key)) {
      child = &(*f.node)[key];
      if (!child->is_object()) {
        errors_.push_back(f.prefix + key + " (expected an object)");
        child = nullptr;
      }
    }
    frames_.push_back({child, prefix, {}});
    body();
    close();
    frames_.pop_back();
  }

  void close() {
    const Frame& f = frames_.back();
    if (!f.node) return;
    for (const auto& item : f.node->items()) {
      if (!f.seen.count(item.key())) errors_.push_back(f.prefix + item.key() + " (unknown key)");
    }
  }

  std::vector<std::string>& errors() { return errors_; }

 private:
  struct Frame {
    const json* node;
    std::string prefix;
    std::set<std::string> seen;
  };

  static bool read(const json& v, double& d) {
    if (!v.is_number()) return false;
    d = v.get<double>();
    return true;
  }
  static bool read(const json& v, bool& b) {
    if (!v.is_boolean()) return false;
    b = v.get<bool>();
    return true;
  }
  static bool read(const json& v, std::string& s) {
    if (!v.is_string()) return false;
    s = v.get<std::string>();
    return true;
  }
  static bool read(const json& v, int& i) {
    if (!v.is_number_integer()) return false;
    i = v.get<int>();
    return true;
  }
  static bool read(const json& v, long& i) {
    if (!v.is_number_integer()) return false;
    i = v.get<long>();
    return true;
  }
  static bool read(const json& v, std::size_t& i) {
    if (!v.is_number_unsigned()) return false;
    i = v.get<std::size_t>();
    return true;
  }
  static bool read(const json& v, std::vector<std::uint64_t>& out) {
    if (!v.is_array()) return false;
    std::vector<std::uint64_t> tmp;
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) return false;
      tmp.push_back(e.get<std::uint64_t>());
    }
    out = std::move(tmp);
    return true;
  }

  std::vector<Frame> frames_;
  std::vector<std::string> errors_;
};

class Writer {
 public:
  Writer() { stack_.push_back(&root_); }

  template <class T>
  void operator()(const char* key, T& value) {
    (*stack_.back())[key] = value;
  }

  void section(const char* key, const std::function<void()>& body) {
    json& child = (*stack_.back())[key] = json::object();
    stack_.push_back(&child);
    body();
    stack_.pop_back();
  }

  json& root() { return root_; }

 private:
  json root_ = json::object();
  std::vector<json*> stack_;
};

void check_ranges(const RunConfig& c, std::vector<std::string>& errors) {
  const auto& a = c.agent;
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) errors.push_back(what);
  };
  const auto& names = agent::variant_names();
  need(std::find(names.begin(), names.end(), a.variant) != names.end(), "variant (unknown variant '" + a.variant + "')");
  need(a.total_steps >= 0, "total_steps (must be non-negative)");
  need(a.batch > 0, "batch (must be positive)");
  need(a.capacity > 0, "capacity (must be positive)");
  need(a.predictor_batch > 0, "predictor_batch (must be positive)");
  need(a.predictor_every >= 1, "predictor_every (must be at least 1)");
  need(a.updates_per_step >= 0, "updates_per_step (must be non-negative)");
  need(a.eval_episodes >= 0, "eval_episodes (must be non-negative)");
  need(a.world.dt > 0, "world.dt (must be positive)");
  need(a.world.max_steps > 0, "world.max_steps (must be positive)");
  need(a.world.npc_min >= 0 && a.world.npc_min <= a.world.npc_max, "world.npc_min (must lie in [0, npc_max])");
  need(a.feat.n_max >= 1, "feat.n_max (must be positive)");
  need(a.feat.history >= 2, "feat.history (must be at least 2)");
  need(a.feat.hops >= 1, "feat.hops (must be positive)");
  need(a.feat.tau > 0, "feat.tau (must be positive)");
  need(a.dap_tau > 0, "dap_tau (must be positive)");
  need(a.predict.z_dim > 0 && a.predict.emb > 0 && a.predict.channels > 0, "predict widths (must be positive)");
  need(a.predict.kernel % 2 == 1, "predict.kernel (must be odd)");
  need(a.wcsac.alpha > 0 && a.wcsac.alpha <= 1, "wcsac.alpha (must lie in (0, 1])");
  need(a.wcsac.gamma >= 0 && a.wcsac.gamma < 1, "wcsac.gamma (must lie in [0, 1))");
  need(a.wcsac.polyak >= 0 && a.wcsac.polyak <= 1, "wcsac.polyak (must lie in [0, 1])");
  need(a.wcsac.beta_init > 0 && a.wcsac.kappa_init > 0, "wcsac.beta_init/kappa_init (must be positive)");
  need(!c.seeds.empty(), "eval.seeds (must not be empty)");
  need(c.episodes > 0, "eval.episodes (must be positive)");
  need(c.predict_stride > 0, "eval.predict_stride (must be positive)");
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  const double m = mean_of(v);
  double acc = 0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

RunConfig parse_config(const json& j, RunConfig base) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  RunConfig c = std::move(base);
  Reader r(j);
  visit_config(c, r);
  r.close();
  std::vector<std::string>& errors = r.errors();
  if (errors.empty()) check_ranges(c, errors);
  if (!errors.empty()) {
    std::string msg = "config: invalid keys:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return parse_config(json::object(), std::move(base));
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j, std::move(base));
}

json to_json(const RunConfig& config) {
  RunConfig copy = config;
  Writer w;
  visit_config(copy, w);
  return w.root();
}

void apply_quick(RunConfig& c) {
  auto& a = c.agent;
  a.predict.emb = 16;
  a.predict.channels = 16;
  a.predict.z_dim = 32;
  a.wcsac.net.local = 32;
  a.wcsac.net.hidden = 64;
  a.batch = 64;
  a.capacity = 50000;
  a.predict.adam.lr = 1e-3;
  a.predictor_batch = 16;
  a.predictor_every = 4;
  a.reward_scale = 0.1;
  a.total_steps = 100000;
  a.eval_every = 10000;
  a.eval_episodes = 10;
  c.seeds = {1, 2, 3};
  c.episodes = 30;
}

MetricsRow summarize(const std::string& seed, std::span<const EpisodeRecord> episodes, double ade, double fde) {
  MetricsRow row;
  row.seed = seed;
  row.episodes = static_cast<int>(episodes.size());
  std::vector<double> returns, distances, costs, steps, success_steps;
  double success = 0, collision = 0;
  for (const EpisodeRecord& e : episodes) {
    returns.push_back(e.ret);
    distances.push_back(e.distance);
    costs.push_back(e.cost);
    steps.push_back(e.steps);
    if (e.reason == world::DoneReason::kSuccess) {
      success += 1;
      success_steps.push_back(e.steps);
    }
    if (e.reason == world::DoneReason::kCollision) collision += 1;
  }
  const double n = episodes.empty() ? kNaN : static_cast<double>(episodes.size());
  row.return_mean = mean_of(returns);
  row.return_std = std_of(returns);
  row.success_rate = success / n;
  row.distance_mean = mean_of(distances);
  row.cost_mean = mean_of(costs);
  row.collision_rate = collision / n;
  row.survival_step_mean = mean_of(steps);
  row.success_step_mean = mean_of(success_steps);
  row.ade = ade;
  row.fde = fde;
  return row;
}

std::vector<MetricsRow> aggregate(std::span<const MetricsRow> rows) {
  MetricsRow mean, sd;
  mean.seed = "mean";
  sd.seed = "std";
  using Field = double MetricsRow::*;
  const Field fields[] = {&MetricsRow::return_mean,    &MetricsRow::return_std,         &MetricsRow::success_rate,
                          &MetricsRow::distance_mean,  &MetricsRow::cost_mean,          &MetricsRow::collision_rate,
                          &MetricsRow::survival_step_mean, &MetricsRow::success_step_mean, &MetricsRow::ade,
                          &MetricsRow::fde};
  for (Field f : fields) {
    std::vector<double> vals;
    for (const MetricsRow& r : rows) {
      if (!std::isnan(r.*f)) vals.push_back(r.*f);
    }
    mean.*f = mean_of(vals);
    sd.*f = std_of(vals);
  }
  for (const MetricsRow& r : rows) mean.episodes += r.episodes;
  sd.episodes = mean.episodes;
  return {mean, sd};
}

void write_metrics_header(std::ostream& os) {
  os << "seed,episodes,return_mean,return_std,success_rate,distance_mean,cost_mean,collision_rate,"
        "survival_step_mean,success_step_mean,ade,fde\n";
}

void write_metrics_row(std::ostream& os, const MetricsRow& r) {
  os << r.seed << ',' << r.episodes << ',' << fmt(r.return_mean) << ',' << fmt(r.return_std) << ','
     << fmt(r.success_rate) << ',' << fmt(r.distance_mean) << ',' << fmt(r.cost_mean) << ','
     << fmt(r.collision_rate) << ',' << fmt(r.survival_step_mean) << ',' << fmt(r.success_step_mean) << ','
     << fmt(r.ade) << ',' << fmt(r.fde) << '\n';
}

void DisplacementSum::add(const Tensor& pred, const Tensor& truth, const Tensor& valid) {
  if (pred.shape() != truth.shape() || pred.rank() < 3 || pred.shape().back() != 2) {
    throw ad::ShapeError("ade_fde: prediction " + ad::shape_string(pred.shape()) + " vs truth " +
                         ad::shape_string(truth.shape()));
  }
  const std::size_t h = pred.dim(pred.rank() - 2);
  const std::size_t count = pred.size() / (h * 2);
  if (valid.size() != count) throw ad::ShapeError("ade_fde: validity mask does not match vehicles");
  for (std::size_t i = 0; i < count; ++i) {
    if (valid[i] == 0) continue;
    double sum = 0, last = 0;
    for (std::size_t t = 0; t < h; ++t) {
      const std::size_t o = (i * h + t) * 2;
      last = std::hypot(pred[o] - truth[o], pred[o + 1] - truth[o + 1]);
      sum += last;
    }
    ade_sum += sum / static_cast<double>(h);
    fde_sum += last;
    vehicles += 1;
  }
}

double DisplacementSum::ade() const { return vehicles ? ade_sum / static_cast<double>(vehicles) : kNaN; }
double DisplacementSum::fde() const { return vehicles ? fde_sum / static_cast<double>(vehicles) : kNaN; }

std::optional<Displacement> ade_fde(const Tensor& pred, const Tensor& truth, const Tensor& valid) {
  DisplacementSum s;
  s.add(pred, truth, valid);
  if (s.vehicles == 0) return std::nullopt;
  return Displacement{s.ade(), s.fde()};
}

Tensor constant_velocity(const feat::SocialGraphFeature& past) {
  const std::size_t n = past.nodes.dim(0), h = past.nodes.dim(1), d = past.nodes.dim(2);
  Tensor out({n, h, 2});
  for (std::size_t j = 0; j < n; ++j) {
    if (past.mask[j] == 0) continue;
    for (std::size_t c = 0; c < 2; ++c) {
      const double p = past.nodes[(j * h + h - 1) * d + c];
      const double q = past.nodes[(j * h + h - 2) * d + c];
      for (std::size_t t = 0; t < h; ++t) out[(j * h + t) * 2 + c] = p + static_cast<double>(t + 1) * (p - q);
    }
  }
  return out;
}

std::vector<feat::CenteredGraphFeature> windows_from_log(const agent::EpisodeLog& log, int stride,
                                                         const feat::FeatConfig& config) {
  std::vector<feat::CenteredGraphFeature> out;
  const std::size_t span = 2 * config.history;
  for (std::size_t end = span; end <= log.frames.size(); end += static_cast<std::size_t>(stride)) {
    out.push_back(feat::build_centered_feature(
        std::span<const world::Observation>(log.frames.data() + end - span, span), config));
  }
  return out;
}

std::vector<feat::CenteredGraphFeature> logged_windows(const agent::AgentConfig& config, std::uint64_t seed,
                                                       int episodes, int stride, double ego_speed) {
  const auto road = agent::load_road(config.world);
  std::vector<feat::CenteredGraphFeature> out;
  for (int e = 0; e < episodes; ++e) {
    world::World w = world::World::spawn(config.world, road, derive_seed(seed, static_cast<std::uint64_t>(e)));
    agent::EpisodeLog log;
    log.frames.push_back(w.observe());
    while (!w.done()) {
      w.step(w.scripted_ego_action(ego_speed));
      log.frames.push_back(w.observe());
    }
    auto windows = windows_from_log(log, stride, config.feat);
    std::move(windows.begin(), windows.end(), std::back_inserter(out));
  }
  return out;
}

PredictionReport predict_eval(predict::Predictor& predictor, std::span<const feat::CenteredGraphFeature> windows) {
  constexpr std::size_t kChunk = 32;
  DisplacementSum model, cv;
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    std::vector<const feat::CenteredGraphFeature*> chunk;
    for (std::size_t i = start; i < std::min(windows.size(), start + kChunk); ++i) chunk.push_back(&windows[i]);
    const predict::TrainBatch batch = predict::make_train_batch(chunk);
    const Tensor pred = predictor.decode(predictor.encode(batch.graph), batch.graph.positions, batch.graph.mask);
    model.add(pred, batch.truth, batch.valid);
    for (const auto* w : chunk) cv.add(constant_velocity(w->past), w->future, w->valid);
  }
  PredictionReport r;
  r.windows = static_cast<long>(windows.size());
  r.model = {model.ade(), model.fde()};
  r.constant_velocity = {cv.ade(), cv.fde()};
  return r;
}

double fit_predictor(predict::Predictor& predictor, std::span<const feat::CenteredGraphFeature> windows,
                     long steps, std::size_t batch, Rng& rng) {
  if (windows.empty()) throw std::invalid_argument("fit_predictor: no windows");
  double last = kNaN;
  for (long s = 0; s < steps; ++s) {
    std::vector<const feat::CenteredGraphFeature*> chunk;
    for (std::size_t i = 0; i < batch; ++i) chunk.push_back(&windows[rng.index(windows.size())]);
    last = predictor.train_step(predict::make_train_batch(chunk));
  }
  return last;
}

std::vector<EpisodeRecord> evaluate(agent::Trainer& trainer, int episodes,
                                    std::vector<feat::CenteredGraphFeature>* windows, int stride) {
  std::vector<EpisodeRecord> out;
  for (int k = 0; k < episodes; ++k) {
    agent::EpisodeLog log;
    out.push_back(trainer.eval_episode(trainer.eval_seed(k), windows ? &log : nullptr));
    if (windows) {
      auto w = windows_from_log(log, stride, trainer.config().feat);
      std::move(w.begin(), w.end(), std::back_inserter(*windows));
    }
  }
  return out;
}

Curve read_progress(const std::string& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path + "' is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const auto col = std::find(header.begin(), header.end(), column);
  if (header.empty() || header[0] != "env_steps" || col == header.end()) {
    throw std::runtime_error("'" + path + "' lacks env_steps/" + column + " columns");
  }
  const std::size_t k = static_cast<std::size_t>(col - header.begin());
  Curve c;
  c.label = path;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != header.size()) throw std::runtime_error("'" + path + "' has a malformed row");
    c.steps.push_back(vals[0]);
    c.values.push_back(vals[k]);
  }
  return c;
}

std::string svg_band_plot(const std::vector<Curve>& curves, const std::string& title, const std::string& y_label) {
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const Curve& c : curves) len = std::min(len, c.values.size());
  if (curves.empty() || len == 0) throw std::runtime_error("plot: no data points");

  // Curves are aligned by snapshot index; x is the mean step at that index.
  std::vector<double> xs(len), lo(len), hi(len), mid(len);
  for (std::size_t i = 0; i < len; ++i) {
    double sx = 0, sy = 0;
    lo[i] = std::numeric_limits<double>::infinity();
    hi[i] = -lo[i];
    for (const Curve& c : curves) {
      sx += c.steps[i];
      sy += c.values[i];
      lo[i] = std::min(lo[i], c.values[i]);
      hi[i] = std::max(hi[i], c.values[i]);
    }
    xs[i] = sx / static_cast<double>(curves.size());
    mid[i] = sy / static_cast<double>(curves.size());
  }
  double x0 = *std::min_element(xs.begin(), xs.end()), x1 = *std::max_element(xs.begin(), xs.end());
  double y0 = std::min(0.0, *std::min_element(lo.begin(), lo.end()));
  double y1 = std::max(1.0, *std::max_element(hi.begin(), hi.end()));
  if (x1 == x0) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  const double w = 640, h = 400, ml = 64, mr = 16, mt = 32, mb = 48;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb); };

  std::ostringstream os;
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << ' ' << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    os << "<text x=\"" << px(fx) << "\" y=\"" << h - mb + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fx << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << py(fy) + 3
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fy << "</text>\n";
  }
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 10
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">environment steps</text>\n";
  os << "<text x=\"14\" y=\"" << h / 2 << "\" transform=\"rotate(-90 14 " << h / 2
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << y_label << "</text>\n";
  os << "<polygon class=\"band\" fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < len; ++i) os << px(xs[i]) << ',' << py(hi[i]) << ' ';
  for (std::size_t i = len; i-- > 0;) os << px(xs[i]) << ',' << py(lo[i]) << ' ';
  os << "\"/>\n";
  os << "<polyline class=\"mean\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < len; ++i) os << px(xs[i]) << ',' << py(mid[i]) << ' ';
  os << "\"/>\n</svg>\n";
  return os.str();
}

std::vector<std::string> emit_plots(const std::string& run_dir) {
  if (!fs::is_directory(run_dir)) throw std::runtime_error("plot: '" + run_dir + "' is not a directory");
  // Seed directories named seed_<n> are pooled under their parent.
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file() || entry.path().filename() != "progress.csv") continue;
    fs::path dir = entry.path().parent_path();
    if (dir.filename().string().rfind("seed_", 0) == 0) dir = dir.parent_path();
    groups[fs::relative(dir, run_dir).string()].push_back(entry.path().string());
  }
  if (groups.empty()) throw std::runtime_error("plot: no progress.csv under '" + run_dir + "'");
  std::vector<std::string> written;
  for (auto& [group, files] : groups) {
    std::sort(files.begin(), files.end());
    for (const auto& [column, label] : {std::pair<std::string, std::string>{"success_rate", "success rate"},
                                        std::pair<std::string, std::string>{"collision_rate", "collision rate"}}) {
      std::vector<Curve> curves;
      for (const auto& f : files) curves.push_back(read_progress(f, column));
      const std::string name = group == "." ? "" : group;
      std::string stem = name;
      std::replace(stem.begin(), stem.end(), '/', '_');
      const fs::path out = fs::path(run_dir) / ((stem.empty() ? "" : stem + "_") + column + ".svg");
      std::ofstream os(out);
      os << svg_band_plot(curves, (name.empty() ? std::string() : name + ": ") + label, label);
      if (!os) throw std::runtime_error("plot: cannot write '" + out.string() + "'");
      written.push_back(out.string());
    }
  }
  return written;
}

}  // namespace gin::evalcli
