#pragma once

// Command-line driver: one verb per invocation, outputs under a fresh run
// directory with a manifest.json that replays the run. Requires yaml-cpp.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sensex/config.hpp"
#include "sensex/data.hpp"
#include "sensex/explore.hpp"
#include "sensex/falsify.hpp"
#include "sensex/io.hpp"
#include "sensex/net.hpp"
#include "sensex/systems.hpp"

namespace sensex {

inline constexpr const char* kVersion = "0.1.0";

namespace cli {

enum ExitCode : int { kSuccess = 0, kDomainError = 1, kConfigError = 2 };

using ModelFn = std::function<Vector(const State&, const Vector&, double)>;

/// Everything a verb needs: the resolved system, its run parameters and the
/// output directory.
struct Context {
  std::string verb;
  RunConfig config;
  ConfigNode root;
  std::filesystem::path out;
  std::uint64_t seed = 1;
  SystemSpec system;
  Box init_set;
  double h = 0.0;
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();  // verb-specific manifest fields
  std::vector<std::string> outputs;
  std::ostream* log = &std::cout;

  std::uint64_t section_seed(const ConfigNode& node, std::uint64_t stream) {
    const std::uint64_t s = node.seed("seed", substream_seed(seed, stream));
    seeds[node.full("seed")] = s;
    return s;
  }

  std::filesystem::path output(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
};

inline std::string zero_pad(std::size_t i, int width = 3) {
  std::string s = std::to_string(i);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

inline void load_system(Context& ctx) {
  const std::string name = ctx.root.text("system");
  try {
    ctx.system = builtin_system(name);
  } catch (const NotFoundError& e) {
    ctx.root.fail("system", e.what());
  }
  if (ctx.root.has("controller")) {
    const std::string path = ctx.root.text("controller");
    try {
      ctx.system = with_controller(ctx.system, load_controller(path));
    } catch (const Error& e) {
      ctx.root.fail("controller", e.what());
    }
  }
  ctx.init_set = ctx.root.box("init_set", default_init_set(ctx.system));
  if (ctx.init_set.dim() != ctx.system.dimension) {
    ctx.root.fail("init_set", "dimension does not match system " + ctx.system.name);
  }
  if (!ctx.system.domain.contains(ctx.init_set)) {
    ctx.root.fail("init_set", "initial set is not inside the system domain");
  }
  ctx.h = ctx.root.number("step", ctx.system.info.default_step);
  if (!(ctx.h > 0.0)) ctx.root.fail("step", "step size must be positive");
}

inline void check_state(const ConfigNode& node, const std::string& key, const Vector& x,
                        const SystemSpec& sys) {
  if (x.size() != sys.dimension) {
    node.fail(key, "expected " + std::to_string(sys.dimension) + " coordinates, got " +
                       std::to_string(x.size()));
  }
}

inline std::vector<Trajectory> build_corpus(Context& ctx) {
  const ConfigNode c = ctx.root.child("corpus");
  if (c.has("file")) {
    try {
      return read_corpus_binary(std::filesystem::path(c.text("file")));
    } catch (const ParseError& e) {
      c.fail("file", e.what());
    }
  }
  const std::size_t n = c.count("trajectories", 30);
  const std::size_t k = c.count("steps", ctx.system.info.default_horizon);
  if (n < 2) c.fail("trajectories", "at least two trajectories are needed");
  if (k < 1) c.fail("steps", "at least one step is needed");
  const std::uint64_t seed = ctx.section_seed(c, 1);
  return generate_corpus(ctx.system, ctx.init_set, n, k, ctx.h, seed);
}

struct DatasetChoice {
  Dataset data;
  double test_fraction = 0.1;
  std::uint64_t split_seed = 0;
};

inline DatasetChoice build_dataset(Context& ctx, std::optional<SensKind> forced_kind = {}) {
  const ConfigNode d = ctx.root.child("dataset");
  DatasetChoice out;
  out.test_fraction = d.number("test_fraction", 0.1);
  if (!(out.test_fraction > 0.0 && out.test_fraction < 1.0)) {
    d.fail("test_fraction", "must lie strictly between 0 and 1");
  }
  out.split_seed = d.seed("split_seed", substream_seed(ctx.seed, 3));
  ctx.seeds[d.full("split_seed")] = out.split_seed;
  if (d.has("file")) {
    try {
      out.data = load_dataset(std::filesystem::path(d.text("file")));
    } catch (const ParseError& e) {
      d.fail("file", e.what());
    }
    if (forced_kind && out.data.kind != *forced_kind) {
      d.fail("file", "dataset kind does not match the model kind");
    }
    return out;
  }
  SensKind kind = SensKind::forward;
  try {
    kind = parse_sens_kind(d.text("kind", std::string(to_string(forced_kind.value_or(SensKind::forward)))));
  } catch (const ParseError& e) {
    d.fail("kind", e.what());
  }
  if (forced_kind && kind != *forced_kind) d.fail("kind", "does not match the model kind");
  const std::size_t budget = d.count("budget", 200000);
  if (budget < 1) d.fail("budget", "must be at least 1");
  const std::string pairing = d.text("pairing", "cross");
  if (pairing != "cross" && pairing != "same_offset") {
    d.fail("pairing", "expected 'cross' or 'same_offset'");
  }
  const auto corpus = build_corpus(ctx);
  const std::uint64_t seed = ctx.section_seed(d, 2);
  out.data = make_records(corpus, kind, budget, seed,
                          pairing == "cross" ? Pairing::cross : Pairing::same_offset,
                          ctx.system.name);
  return out;
}

inline ModelFn load_model_fn(Context& ctx, SensKind kind) {
  const std::string path = ctx.root.text("model");
  if (path == "exact") {
    if (!ctx.system.info.linear_matrix) {
      ctx.root.fail("model", "the exact sensitivity is only available for linear systems");
    }
    ExactLinearSensitivity exact{make_oracle(ctx.system), kind == SensKind::inverse};
    return ModelFn(exact);
  }
  Mlp m;
  try {
    m = load_model(path);
  } catch (const ParseError& e) {
    ctx.root.fail("model", e.what());
  }
  if (m.meta.kind != kind) {
    ctx.root.fail("model", std::string("expected a ") + std::string(to_string(kind)) +
                               "-sensitivity model, file holds " + std::string(to_string(m.meta.kind)));
  }
  if (m.state_dimension() != ctx.system.dimension) {
    ctx.root.fail("model", "model dimension does not match system " + ctx.system.name);
  }
  auto shared = std::make_shared<Mlp>(std::move(m));
  const ModelFn raw = [shared](const State& x, const Vector& v, double t) { return shared->predict(x, v, t); };
  if (!ctx.root.flag("zero_anchor", true)) return raw;
  return ModelFn(zero_anchored(raw));
}

inline nlohmann::json reference_for(const SystemSpec& sys, SensKind kind) {
  const std::string prefix = kind == SensKind::forward ? "forward_" : "inverse_";
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : sys.info.reference) {
    if (k.rfind(prefix, 0) == 0) j[k.substr(prefix.size())] = v;
  }
  return j;
}

// ---- verbs ------------------------------------------------------------------

inline void run_systems(Context& ctx) {
  nlohmann::json all = nlohmann::json::array();
  for (const auto& name : builtin_system_names()) {
    all.push_back(describe(builtin_system(name)));
    *ctx.log << name << '\n';
  }
  write_json(ctx.output("systems.json"), all);
}

inline void run_simulate(Context& ctx) {
  load_system(ctx);
  const ConfigNode s = ctx.root.child("simulate");
  std::vector<Trajectory> corpus;
  if (s.has("starts")) {
    const auto starts = s.vectors("starts");
    const std::size_t k = s.count("steps", ctx.system.info.default_horizon);
    if (k < 1) s.fail("steps", "at least one step is needed");
    for (const auto& x : starts) {
      check_state(s, "starts", x, ctx.system);
      corpus.push_back(simulate(ctx.system, x, k, ctx.h));
    }
  } else {
    corpus = build_corpus(ctx);
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    write_trajectory_csv(ctx.output("trajectory_" + zero_pad(i) + ".csv"), corpus[i]);
  }
  write_corpus_binary(ctx.output("corpus.bin"), corpus);
  *ctx.log << "simulated " << corpus.size() << " trajectories of " << corpus.front().steps()
           << " steps\n";
}

inline void run_dataset(Context& ctx) {
  load_system(ctx);
  const auto choice = build_dataset(ctx);
  ctx.outputs.insert(ctx.outputs.end(), {"dataset.bin", "dataset.csv", "dataset.json"});
  save_dataset(ctx.out / "dataset", choice.data);
  *ctx.log << "wrote " << choice.data.size() << ' ' << to_string(choice.data.kind)
           << " records\n";
}

inline TrainConfig read_train_config(Context& ctx, const ConfigNode& n) {
  TrainConfig cfg;
  cfg.epochs = n.count("epochs", 40);
  cfg.batch_size = n.count("batch_size", 64);
  cfg.learning_rate = n.number("learning_rate", 0.01);
  cfg.momentum = n.number("momentum", 0.9);
  cfg.final_lr_fraction = n.number("final_lr_fraction", 0.05);
  cfg.seed = n.seed("train_seed", substream_seed(ctx.seed, 5));
  ctx.seeds[n.full("train_seed")] = cfg.seed;
  try {
    cfg.loss = parse_loss(n.text("loss", "mae"));
  } catch (const ParseError& e) {
    n.fail("loss", e.what());
  }
  try {
    cfg.init = parse_init(n.text("init", "nguyen-widrow"));
  } catch (const ParseError& e) {
    n.fail("init", e.what());
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    n.fail("", e.what());
  }
  return cfg;
}

inline void run_train(Context& ctx) {
  load_system(ctx);
  const ConfigNode n = ctx.root.child("net");
  const std::size_t layers = n.count("hidden_layers", 4);
  const std::size_t width = n.count("width", 128);
  if (layers < 1) n.fail("hidden_layers", "must be at least 1");
  if (width < 1) n.fail("width", "must be at least 1");
  Activation act = Activation::relu;
  try {
    act = parse_activation(n.text("activation", "relu"));
  } catch (const ParseError& e) {
    n.fail("activation", e.what());
  }
  const TrainConfig cfg = read_train_config(ctx, n);
  const std::uint64_t init_seed = ctx.section_seed(n, 4);

  const auto choice = build_dataset(ctx);
  const auto [train_set, test_set] = split(choice.data, choice.test_fraction, choice.split_seed);
  Mlp model = make_mlp(ctx.system.dimension, layers, static_cast<Index>(width), act, cfg.init,
                       init_seed);
  const auto result = train(std::move(model), train_set, cfg);
  const Metrics test = evaluate(result.model, test_set);
  save_model(ctx.output("model.json"), result.model);

  nlohmann::json metrics = to_json(test);
  metrics["kind"] = std::string(to_string(train_set.kind));
  metrics["train_records"] = train_set.size();
  metrics["test_records"] = test_set.size();
  metrics["loss_history"] = result.loss_history;
  metrics["reference"] = reference_for(ctx.system, train_set.kind);
  write_json(ctx.output("metrics.json"), metrics);
  ctx.extra["metrics"] = to_json(test);
  ctx.extra["reference"] = metrics["reference"];
  *ctx.log << to_string(train_set.kind) << " model: test mse " << format_double(test.mse)
           << " mre " << format_double(test.mre) << '\n';
}

inline void run_eval(Context& ctx) {
  load_system(ctx);
  Mlp model;
  try {
    model = load_model(ctx.root.text("model"));
  } catch (const ParseError& e) {
    ctx.root.fail("model", e.what());
  }
  if (model.state_dimension() != ctx.system.dimension) {
    ctx.root.fail("model", "model dimension does not match system " + ctx.system.name);
  }
  const auto choice = build_dataset(ctx, model.meta.kind);
  const bool held_out = ctx.root.child("eval").flag("held_out", true);
  Dataset test_set = choice.data;
  if (held_out && !ctx.root.child("dataset").has("file")) {
    test_set = split(choice.data, choice.test_fraction, choice.split_seed).second;
  }
  const Metrics m = evaluate(model, test_set);
  nlohmann::json metrics = to_json(m);
  metrics["kind"] = std::string(to_string(model.meta.kind));
  metrics["reference"] = reference_for(ctx.system, model.meta.kind);
  write_json(ctx.output("metrics.json"), metrics);
  ctx.extra["metrics"] = to_json(m);
  ctx.extra["reference"] = metrics["reference"];
  *ctx.log << "mse " << format_double(m.mse) << " rmse " << format_double(m.rmse) << " mre "
           << format_double(m.mre) << '\n';
}

inline ReachOptions read_reach_options(const ConfigNode& n) {
  ReachOptions o;
  o.epsilon = n.number("epsilon", o.epsilon);
  o.iterations = n.count("iterations", o.iterations);
  o.restarts = n.count("restarts", o.restarts);
  o.stall_passes = n.count("stall_passes", o.stall_passes);
  o.confine_to_initial_set = n.flag("confine_to_initial_set", false);
  if (!(o.epsilon > 0.0)) n.fail("epsilon", "must be positive");
  if (o.iterations < 1) n.fail("iterations", "must be at least 1");
  if (o.restarts < 1) n.fail("restarts", "must be at least 1");
  return o;
}

inline StepWindow read_time(const ConfigNode& n) {
  StepWindow w;
  if (n.has("window")) {
    const auto [a, b] = n.step_pair("window");
    w = {a, b};
  } else {
    const std::size_t s = n.count("step");
    w = {s, s};
  }
  if (w.first < 1) n.fail(n.has("window") ? "window" : "step", "reach time must be at least one step");
  return w;
}

inline void run_reach(Context& ctx) {
  load_system(ctx);
  const ConfigNode r = ctx.root.child("reach");
  const auto targets = r.vectors("targets");
  for (const auto& z : targets) check_state(r, "targets", z, ctx.system);
  const StepWindow window = read_time(r);
  const ReachOptions opts = read_reach_options(r);
  const std::uint64_t seed = ctx.section_seed(r, 6);
  const ModelFn model = load_model_fn(ctx, SensKind::inverse);

  const auto outcomes = reach_targets(ctx.system, model, targets, window, ctx.h, ctx.init_set, opts, seed);
  nlohmann::json results = nlohmann::json::array();
  std::size_t failures = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    if (!o.result) {
      ++failures;
      results.push_back({{"target", to_json(targets[i])}, {"error", o.error}});
      continue;
    }
    nlohmann::json j = to_json(*o.result);
    j["target"] = to_json(targets[i]);
    results.push_back(std::move(j));
    {
      std::ofstream csv(ctx.output("iterates_" + zero_pad(i) + ".csv"));
      write_iterates_csv(csv, *o.result);
    }
    write_trajectory_csv(ctx.output("best_trajectory_" + zero_pad(i) + ".csv"),
                         simulate(ctx.system, o.result->x, o.result->step, ctx.h));
    *ctx.log << "target " << i << ": d_a " << format_double(o.result->d_a) << " d_r "
             << format_double(o.result->d_r) << (o.result->converged ? " converged" : "") << '\n';
  }
  write_json(ctx.output("results.json"), results);
  if (failures == outcomes.size() && !outcomes.empty()) {
    throw Error("every target failed; first error: " + outcomes.front().error);
  }
}

inline SafetySpec read_safety(Context& ctx, const ConfigNode& f) {
  SafetySpec spec{f.box("unsafe"), f.count("horizon", ctx.system.info.default_horizon), {}};
  if (spec.unsafe.dim() != ctx.system.dimension) f.fail("unsafe", "dimension does not match the system");
  if (spec.horizon < 1) f.fail("horizon", "must be at least 1");
  if (f.has("window")) {
    const auto [a, b] = f.step_pair("window");
    if (b > spec.horizon) f.fail("window", "must lie within the horizon");
    spec.window = StepWindow{a, b};
  }
  if (!spec.unsafe.intersect(ctx.system.domain)) f.fail("unsafe", "does not intersect the domain");
  return spec;
}

inline void run_falsify(Context& ctx) {
  load_system(ctx);
  const ConfigNode f = ctx.root.child("falsify");
  const SafetySpec spec = read_safety(ctx, f);
  const std::string method = f.text("method", "inverse");
  const std::uint64_t seed = ctx.section_seed(f, 7);
  FalsifyReport report;
  if (method == "inverse") {
    InverseFalsifyOptions o;
    o.targets = f.count("targets", 10);
    o.stride = f.count("stride", 10);
    if (o.targets < 1) f.fail("targets", "must be at least 1");
    if (o.stride < 1) f.fail("stride", "must be at least 1");
    o.reach = read_reach_options(f);
    const ModelFn model = load_model_fn(ctx, SensKind::inverse);
    report = falsify_inverse(ctx.system, model, spec, ctx.init_set, ctx.h, o, seed);
  } else if (method == "density") {
    DensityOptions o;
    o.cluster_size = f.count("cluster_size", o.cluster_size);
    o.iterations = f.count("iterations", o.iterations);
    o.threshold = f.number("threshold", o.threshold);
    o.radius_fraction = f.number("radius_fraction", o.radius_fraction);
    o.window_halfwidth = f.count("window_halfwidth", o.window_halfwidth);
    if (o.cluster_size < 2) f.fail("cluster_size", "must be at least 2");
    if (!(o.threshold >= 0.0)) f.fail("threshold", "must be non-negative");
    if (!(o.radius_fraction >= 0.0)) f.fail("radius_fraction", "must be non-negative");
    const ModelFn model = load_model_fn(ctx, SensKind::forward);
    report = falsify_forward_density(ctx.system, model, spec, ctx.init_set, ctx.h, o, seed);
  } else if (method == "random") {
    const std::size_t budget = f.count("budget", 100);
    if (budget < 1) f.fail("budget", "must be at least 1");
    report = falsify_random_baseline(ctx.system, spec, ctx.init_set, ctx.h, budget, seed);
  } else {
    f.fail("method", "expected 'inverse', 'density' or 'random'");
  }
  write_json(ctx.output("report.json"), to_json(report));
  {
    std::ofstream csv(ctx.output("profile.csv"));
    write_profile_csv(csv, report.profile, ctx.system.dimension);
  }
  if (report.counterexample) {
    write_trajectory_csv(ctx.output("counterexample.csv"),
                         simulate(ctx.system, report.counterexample->x0, spec.horizon, ctx.h));
  }
  ctx.extra["outcome"] = std::string(to_string(report.outcome));
  *ctx.log << to_string(report.outcome) << " after " << report.samples_used << " simulations\n";
}

inline void run_predict(Context& ctx) {
  load_system(ctx);
  const ConfigNode p = ctx.root.child("predict");
  const State anchor_start = p.vector("anchor", ctx.init_set.center());
  check_state(p, "anchor", anchor_start, ctx.system);
  const std::size_t horizon = p.count("horizon", ctx.system.info.default_horizon);
  if (horizon < 1) p.fail("horizon", "must be at least 1");
  StepWindow window{0, horizon};
  if (p.has("window")) {
    const auto [a, b] = p.step_pair("window");
    if (b > horizon) p.fail("window", "exceeds the prediction horizon");
    window = {a, b};
  }
  std::vector<State> starts;
  if (p.has("starts")) {
    starts = p.vectors("starts");
    for (const auto& x : starts) check_state(p, "starts", x, ctx.system);
  } else {
    const ConfigNode c = p.child("cluster");
    const std::size_t count = c.count("count", 50);
    const double fraction = c.number("radius_fraction", 0.05);
    if (count < 1) c.fail("count", "must be at least 1");
    if (!(fraction >= 0.0)) c.fail("radius_fraction", "must be non-negative");
    const std::uint64_t seed = ctx.section_seed(c, 8);
    const Vector r = fraction * ctx.init_set.width();
    const auto region = Box(anchor_start - r, anchor_start + r).intersect(ctx.system.domain);
    if (!region) c.fail("radius_fraction", "cluster region lies outside the domain");
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) starts.push_back(region->sample(rng));
  }
  const ModelFn model = load_model_fn(ctx, SensKind::forward);
  const Trajectory anchor = simulate(ctx.system, anchor_start, horizon, ctx.h);
  const auto predictions = predict_batch(anchor, model, starts, window);
  const bool compare = p.flag("compare", true);

  std::ofstream csv(ctx.output("predictions.csv"));
  csv << "start,step,time";
  for (Index i = 1; i <= ctx.system.dimension; ++i) csv << ",x" << i;
  csv << ",displacement";
  if (compare) {
    for (Index i = 1; i <= ctx.system.dimension; ++i) csv << ",actual" << i;
    csv << ",error";
  }
  csv << '\n';
  double error_sum = 0.0, v_sum = 0.0;
  std::size_t error_count = 0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const auto& pr = predictions[k];
    std::optional<Trajectory> actual;
    if (compare) actual = simulate(ctx.system, starts[k], window.last, ctx.h);
    v_sum += (starts[k] - anchor_start).norm();
    for (std::size_t i = 0; i < pr.states.size(); ++i) {
      const std::size_t s = window.first + i;
      csv << k << ',' << s << ',' << format_double(anchor.time(s));
      for (Index d = 0; d < ctx.system.dimension; ++d) csv << ',' << format_double(pr.states[i][d]);
      csv << ',' << format_double((pr.states[i] - anchor.states[s]).norm());
      if (actual) {
        for (Index d = 0; d < ctx.system.dimension; ++d) csv << ',' << format_double(actual->states[s][d]);
        const double err = (pr.states[i] - actual->states[s]).norm();
        csv << ',' << format_double(err);
        error_sum += err;
        ++error_count;
      }
      csv << '\n';
    }
  }
  write_trajectory_csv(ctx.output("anchor.csv"), anchor);
  nlohmann::json summary{{"starts", starts.size()},
                         {"window", {window.first, window.last}},
                         {"mean_v_norm", starts.empty() ? 0.0 : v_sum / static_cast<double>(starts.size())}};
  if (error_count) summary["mean_error"] = error_sum / static_cast<double>(error_count);
  write_json(ctx.output("predict.json"), summary);
  *ctx.log << "predicted " << predictions.size() << " trajectories\n";
}

// ---- driver -----------------------------------------------------------------

inline std::filesystem::path choose_run_dir(const std::optional<std::string>& out,
                                            const std::string& verb) {
  namespace fs = std::filesystem;
  if (out) {
    const fs::path dir(*out);
    if (fs::exists(dir / "manifest.json")) {
      throw ConfigError("run directory " + dir.string() +
                        " already holds a run; choose a fresh --out directory");
    }
    fs::create_directories(dir);
    return dir;
  }
  for (std::size_t i = 1;; ++i) {
    const fs::path dir = fs::path("runs") / (verb + "-" + zero_pad(i));
    if (!fs::exists(dir)) {
      fs::create_directories(dir);
      return dir;
    }
  }
}

inline nlohmann::json manifest(const Context& ctx) {
  nlohmann::json m{{"manifest", 1},
                   {"tool", "sensex"},
                   {"version", kVersion},
                   {"verb", ctx.verb},
                   {"seed", ctx.seed},
                   {"seeds", ctx.seeds},
                   {"config", ctx.config.resolved()},
                   {"outputs", ctx.outputs},
                   {"versions",
                    {{"sensex", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                   std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"compiler", __VERSION__}}}};
  for (const auto& [k, v] : ctx.extra.items()) m[k] = v;
  return m;
}

/// Entry point. Returns the process exit status.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Learned sensitivity toolkit for closed-loop dynamical systems"};
  app.set_version_flag("--version", kVersion);
  std::string verb;
  std::optional<std::string> config_path, out_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> subject;
  app.add_option("verb", verb, "systems | simulate | dataset | train | eval | reach | falsify | predict")
      ->required()
      ->check(CLI::IsMember({"systems", "simulate", "dataset", "train", "eval", "reach", "falsify",
                             "predict"}));
  app.add_option("subject", subject, "for systems: 'list' (the default)");
  app.add_option("--config", config_path, "YAML configuration file (or a previous manifest.json)");
  app.add_option("--set", overrides, "override a dotted configuration key: key=value");
  app.add_option("--out", out_dir, "run directory (default runs/<verb>-NNN)");
  app.add_option("--seed", seed, "master seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kConfigError;
  }

  if (subject && (verb != "systems" || *subject != "list")) {
    err << "config error: unexpected argument '" << *subject << "'\n";
    return kConfigError;
  }

  try {
    RunConfig cfg = config_path ? RunConfig::load(*config_path) : RunConfig();
    for (const auto& o : overrides) cfg.set(o);
    if (seed) cfg.set("seed=" + std::to_string(*seed));
    Context ctx{verb,   cfg, cfg.root(), {}, 1, {}, Box(), 0.0, nlohmann::json::object(),
                nlohmann::json::object(), {}, &out};
    ctx.seed = ctx.root.seed("seed", 1);
    ctx.out = choose_run_dir(out_dir, verb);

    if (verb == "systems") run_systems(ctx);
    else if (verb == "simulate") run_simulate(ctx);
    else if (verb == "dataset") run_dataset(ctx);
    else if (verb == "train") run_train(ctx);
    else if (verb == "eval") run_eval(ctx);
    else if (verb == "reach") run_reach(ctx);
    else if (verb == "falsify") run_falsify(ctx);
    else run_predict(ctx);

    write_json(ctx.out / "manifest.json", manifest(ctx));
    out << "run directory: " << ctx.out.string() << '\n';
    return kSuccess;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDomainError;
  }
}

}  // namespace cli
}  // namespace sensex
