// Command-line front end: train, eval, predict-eval, ablate, plot.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gin/evalcli.hpp"

namespace fs = std::filesystem;
using namespace gin;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct Common {
  std::string config;
  std::string out;
  std::string variant;
  std::string checkpoint;
  std::vector<std::uint64_t> seeds;
  int episodes = 0;
  bool quick = false;
};

evalcli::RunConfig load(const Common& o) {
  evalcli::RunConfig base;
  if (o.quick) evalcli::apply_quick(base);
  evalcli::RunConfig c = o.config.empty() ? evalcli::parse_config(nlohmann::json::object(), base)
                                          : evalcli::load_config(o.config, base);
  if (!o.variant.empty()) {
    c.agent.variant = o.variant;
    try {
      agent::variant_toggles(o.variant);
    } catch (const std::invalid_argument& e) {
      throw evalcli::ConfigError(std::string("--variant: ") + e.what());
    }
  }
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.episodes > 0) c.episodes = o.episodes;
  return c;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  return os;
}

// Trains one seed into `dir` and returns the trainer for evaluation.
std::unique_ptr<agent::Trainer> train_into(const evalcli::RunConfig& c, std::uint64_t seed, const fs::path& dir,
                                           const std::string& resume) {
  fs::create_directories(dir);
  auto trainer = std::make_unique<agent::Trainer>(c.agent, seed);
  if (!resume.empty()) trainer->load(resume);
  {
    std::ofstream cfg = open_out(dir / "config.json");
    cfg << evalcli::to_json(c).dump(2) << '\n';
  }
  std::ofstream episodes = open_out(dir / "episodes.csv");
  std::ofstream losses = open_out(dir / "losses.csv");
  std::ofstream progress = open_out(dir / "progress.csv");
  agent::write_episode_header(episodes);
  agent::write_loss_header(losses);
  agent::write_progress_header(progress);
  trainer->train(c.agent.total_steps, {&episodes, &losses, &progress});
  trainer->save((dir / "checkpoint.bin").string());
  return trainer;
}

evalcli::MetricsRow evaluate_row(agent::Trainer& trainer, const evalcli::RunConfig& c, const std::string& label) {
  std::vector<feat::CenteredGraphFeature> windows;
  const auto records = evalcli::evaluate(trainer, c.episodes, &windows, c.predict_stride);
  double ade = std::numeric_limits<double>::quiet_NaN(), fde = ade;
  if (!windows.empty()) {
    const auto report = evalcli::predict_eval(trainer.predictor(), windows);
    ade = report.model.ade;
    fde = report.model.fde;
  }
  return evalcli::summarize(label, records, ade, fde);
}

void write_table(std::ostream& os, const std::vector<evalcli::MetricsRow>& rows) {
  evalcli::write_metrics_header(os);
  for (const auto& r : rows) evalcli::write_metrics_row(os, r);
  for (const auto& r : evalcli::aggregate(rows)) evalcli::write_metrics_row(os, r);
}

int cmd_train(const Common& o, std::uint64_t seed, const std::string& resume) {
  const evalcli::RunConfig c = load(o);
  train_into(c, seed, o.out, resume);
  std::cout << "trained " << c.agent.variant << " seed " << seed << " into " << o.out << '\n';
  return kOk;
}

int cmd_eval(const Common& o, const std::string& context) {
  const evalcli::RunConfig c = load(o);
  std::vector<evalcli::MetricsRow> rows;
  for (std::uint64_t seed : c.seeds) {
    agent::Trainer trainer(c.agent, seed);
    trainer.load(o.checkpoint);
    rows.push_back(evaluate_row(trainer, c, std::to_string(seed)));
    if (!context.empty() && rows.size() == 1) {
      // Social context of every step of the first evaluation episode.
      agent::EpisodeLog log;
      trainer.eval_episode(trainer.eval_seed(0), &log);
      std::ofstream os = open_out(context);
      const std::size_t h = c.agent.feat.history;
      bool header = true;
      for (std::size_t end = h; end <= log.frames.size(); ++end) {
        const auto graph = feat::build_social_graph(
            std::span<const world::Observation>(log.frames.data() + end - h, h), c.agent.feat);
        const ad::Tensor z = trainer.predictor().encode(predict::make_batch({&graph}));
        predict::write_context_csv(os, 0, static_cast<int>(end - 1), z, graph.mask.reshaped({1, graph.mask.size()}),
                                   header);
        header = false;
      }
    }
  }
  std::ofstream os = open_out(o.out);
  write_table(os, rows);
  write_table(std::cout, rows);
  return kOk;
}

int cmd_predict_eval(const Common& o) {
  const evalcli::RunConfig c = load(o);
  if (o.checkpoint.empty() && c.predict_fit_steps <= 0) {
    throw evalcli::ConfigError("predict-eval needs --checkpoint or eval.predict_fit_steps > 0");
  }
  std::ofstream os = open_out(o.out);
  os << "seed,windows,ade,fde,cv_ade,cv_fde\n";
  for (std::uint64_t seed : c.seeds) {
    agent::Trainer trainer(c.agent, seed);
    if (!o.checkpoint.empty()) {
      trainer.load(o.checkpoint);
    } else {
      const auto train = evalcli::logged_windows(c.agent, derive_seed(seed, 101), c.predict_episodes,
                                                 c.predict_stride);
      Rng rng(derive_seed(seed, 102));
      evalcli::fit_predictor(trainer.predictor(), train, c.predict_fit_steps, c.agent.predictor_batch, rng);
    }
    const auto held_out = evalcli::logged_windows(c.agent, derive_seed(seed, 103), c.predict_episodes,
                                                  c.predict_stride);
    if (held_out.empty()) throw std::runtime_error("predict-eval: logged episodes are too short for a window");
    const auto r = evalcli::predict_eval(trainer.predictor(), held_out);
    os << seed << ',' << r.windows << ',' << r.model.ade << ',' << r.model.fde << ',' << r.constant_velocity.ade
       << ',' << r.constant_velocity.fde << '\n';
    std::cout << "seed " << seed << ": ADE " << r.model.ade << " FDE " << r.model.fde << " (constant velocity "
              << r.constant_velocity.ade << " / " << r.constant_velocity.fde << ")\n";
  }
  return kOk;
}

int cmd_ablate(const Common& o, const std::vector<std::string>& variants) {
  evalcli::RunConfig c = load(o);
  for (const auto& v : variants) {
    try {
      agent::variant_toggles(v);
    } catch (const std::invalid_argument& e) {
      throw evalcli::ConfigError(std::string("--variants: ") + e.what());
    }
  }
  std::ofstream table = open_out(fs::path(o.out) / "ablation.csv");
  table << "variant,";
  evalcli::write_metrics_header(table);
  for (const auto& v : variants) {
    c.agent.variant = v;
    std::vector<evalcli::MetricsRow> rows;
    for (std::uint64_t seed : c.seeds) {
      auto trainer = train_into(c, seed, fs::path(o.out) / v / ("seed_" + std::to_string(seed)), "");
      rows.push_back(evaluate_row(*trainer, c, std::to_string(seed)));
      std::cout << v << " seed " << seed << ": success " << rows.back().success_rate << " collision "
                << rows.back().collision_rate << '\n';
    }
    for (const auto& r : rows) {
      table << v << ',';
      evalcli::write_metrics_row(table, r);
    }
    for (const auto& r : evalcli::aggregate(rows)) {
      table << v << ',';
      evalcli::write_metrics_row(table, r);
    }
    table.flush();
  }
  evalcli::emit_plots(o.out);
  return kOk;
}

int cmd_plot(const std::string& dir) {
  for (const auto& f : evalcli::emit_plots(dir)) std::cout << f << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interaction-aware constrained policy optimisation for navigation"};
  app.require_subcommand(1);

  Common o;
  std::uint64_t seed = 1;
  std::string resume, context, run_dir;
  std::vector<std::string> variants = {"B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8"};

  auto common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--variant", o.variant, "B1..B8, RN or VGRU");
    sub->add_flag("--quick", o.quick, "desk-scale profile");
    auto* out = sub->add_option("--out", o.out, "output path");
    if (needs_out) out->required();
  };

  auto* train = app.add_subcommand("train", "train one seed");
  common(train, true);
  train->add_option("--seed", seed, "training seed");
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  common(eval, true);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--seeds", o.seeds, "evaluation seeds")->delimiter(',');
  eval->add_option("--episodes", o.episodes, "episodes per seed");
  eval->add_option("--context", context, "social-context CSV for the first episode");

  auto* pe = app.add_subcommand("predict-eval", "trajectory prediction against constant velocity");
  common(pe, true);
  pe->add_option("--checkpoint", o.checkpoint, "checkpoint file")->check(CLI::ExistingFile);
  pe->add_option("--seeds", o.seeds, "seeds")->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "train and evaluate variants");
  common(ablate, true);
  ablate->add_option("--seeds", o.seeds, "seeds")->delimiter(',');
  ablate->add_option("--episodes", o.episodes, "evaluation episodes per seed");
  ablate->add_option("--variants", variants, "variants to run")->delimiter(',');

  auto* plot = app.add_subcommand("plot", "SVG learning curves from a run directory");
  plot->add_option("--out", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*train) return cmd_train(o, seed, resume);
    if (*eval) return cmd_eval(o, context);
    if (*pe) return cmd_predict_eval(o);
    if (*ablate) return cmd_ablate(o, variants);
    if (*plot) return cmd_plot(run_dir);
  } catch (const evalcli::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
