// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include "sensex/cli.hpp"
#include "sensex/sensex.hpp"

using namespace sensex;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(4);
  s << x;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Shared Vanderpol models, trained once.
struct Trained {
  SystemSpec sys = builtin_system("Vanderpol");
  Box init = default_init_set(sys);
  ZeroAnchored<Mlp> forward, inverse;
  Metrics forward_test, inverse_test;
  double seconds = 0.0;
};

Trained train_vanderpol() {
  Stopwatch clock;
  Trained t;
  const double h = 0.01;
  const auto corpus = generate_corpus(t.sys, t.init, 30, 500, h, substream_seed(1, 1));
  const auto fit = [&](SensKind kind, Pairing pairing, std::size_t epochs, Metrics& test) {
    const auto ds = make_records(corpus, kind, 50000, substream_seed(1, 2), pairing, t.sys.name);
    const auto [train_set, test_set] = split(ds, 0.1, substream_seed(1, 3));
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.final_lr_fraction = 0.05;
    cfg.seed = substream_seed(1, 5);
    auto result = train(make_mlp(2, 4, 128, Activation::relu, Init::nguyen_widrow, substream_seed(1, 4)),
                        train_set, cfg);
    test = evaluate(result.model, test_set);
    return zero_anchored(std::move(result.model));
  };
  t.forward = fit(SensKind::forward, Pairing::same_offset, 80, t.forward_test);
  t.inverse = fit(SensKind::inverse, Pairing::cross, 40, t.inverse_test);
  t.seconds = clock.seconds();
  return t;
}

Verdict criterion1() {
  Stopwatch clock;
  const auto s = builtin_system("linear-rotation");
  const Box init = default_init_set(s);
  const ExactLinearSensitivity inverse{make_oracle(s), true};
  Rng rng(101);
  ReachOptions opts;
  opts.epsilon = 1e-6;
  opts.iterations = 1;
  double worst = 0.0;
  bool ok = true;
  for (int i = 0; i < 100; ++i) {
    // Rotations preserve norms, so targets in the radius-5 disk have pre-images in the domain.
    const double r = 4.9 * std::sqrt(uniform01(rng)), a = uniform(rng, 0, 2 * std::numbers::pi);
    const State z = make_vector({r * std::cos(a), r * std::sin(a)});
    const std::size_t steps = 1 + uniform_index(rng, 628);
    const auto res = reach_target(s, inverse, z, steps, 0.01, init, opts, substream_seed(101, i));
    worst = std::max(worst, res.d_a);
    ok = ok && res.converged && res.d_a < 1e-6 && res.iterates.size() <= 2;
  }
  const double secs = clock.seconds();
  return {ok && secs < 5.0, "worst d_a " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Verdict criterion2() {
  Stopwatch clock;
  const auto s = builtin_system("Vanderpol");
  bool ok = true;
  std::size_t checked = 0;
  const auto corpus = generate_corpus(s, default_init_set(s), 30, 500, 0.01, 7);
  for (SensKind kind : {SensKind::forward, SensKind::inverse}) {
    const auto ds = make_records(corpus, kind, 50000, 8);
    for (const auto& r : ds.records) {
      const auto& p = r.source;
      const State& x1 = corpus[p.a].states[p.j];
      const State& x2 = corpus[p.b].states[p.jp];
      const State& y1 = corpus[p.a].states[p.j + p.duration];
      const State& y2 = corpus[p.b].states[p.jp + p.duration];
      const bool exact = kind == SensKind::forward
                             ? (r.x0 == x1 && r.v == x2 - x1 && r.target == y2 - y1)
                             : (r.x0 == y1 && r.v == y2 - y1 && r.target == x2 - x1);
      ok = ok && exact && r.t == static_cast<double>(p.duration) * 0.01;
      ++checked;
    }
  }
  std::size_t corpora = 0;
  for (std::size_t n = 2; n <= 4; ++n) {
    for (std::size_t len = 2; len <= 10; ++len) {
      const auto small = generate_corpus(s, default_init_set(s), n, len - 1, 0.01, 31 * n + len);
      for (Pairing pairing : {Pairing::cross, Pairing::same_offset}) {
        std::size_t brute = 0;
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t j = 0; j < len; ++j)
              for (std::size_t jp = 0; jp < len; ++jp) {
                if (pairing == Pairing::same_offset && j != jp) continue;
                if ((a == b && j == jp) || small[a].states[j] == small[b].states[jp]) continue;
                brute += len - 1 - std::max(j, jp);
              }
        ok = ok && RecordEnumeration(n, len - 1, pairing).total() == brute &&
             make_records(small, SensKind::forward, 1u << 30, 1, pairing).size() == brute;
        ++corpora;
      }
    }
  }
  const double secs = clock.seconds();
  return {ok && secs < 10.0, std::to_string(checked) + " records, " + std::to_string(corpora) +
                                 " enumerations, " + fmt(secs) + " s"};
}

Verdict criterion3() {
  Stopwatch clock;
  Rng rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Dense> layers;
    const std::vector<Index> widths{4, 8, 6, 3};
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      Matrix w(widths[l + 1], widths[l]);
      Vector b(widths[l + 1]);
      for (Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -1.5, 1.5);
      for (Index i = 0; i < b.size(); ++i) b[i] = uniform(rng, -0.5, 0.5);
      layers.push_back({w, b});
    }
    FeedForward net(std::move(layers), Activation::sigmoid);
    Matrix in(4, 8), out(3, 8);
    for (Index i = 0; i < in.size(); ++i) in.data()[i] = uniform(rng, -1, 1);
    for (Index i = 0; i < out.size(); ++i) out.data()[i] = uniform(rng, -1, 1);
    const Gradients g = gradient(net, in, out, Loss::mse);
    double num = 0.0, den = 0.0;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      const auto visit = [&](double& p, double analytic) {
        const double keep = p, step = 1e-6;
        p = keep + step;
        const double up = batch_loss(net.forward_batch(in), out, Loss::mse);
        p = keep - step;
        const double down = batch_loss(net.forward_batch(in), out, Loss::mse);
        p = keep;
        const double fd = (up - down) / (2 * step);
        num += (fd - analytic) * (fd - analytic);
        den += fd * fd;
      };
      auto& layer = net.mutable_layers()[l];
      for (Index i = 0; i < layer.weights.size(); ++i) visit(layer.weights.data()[i], g.layers[l].weights.data()[i]);
      for (Index i = 0; i < layer.bias.size(); ++i) visit(layer.bias[i], g.layers[l].bias[i]);
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  const double secs = clock.seconds();
  return {worst < 1e-4 && secs < 10.0, "worst relative error " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Verdict criterion4(const Trained& t) {
  const bool ok = t.forward_test.mre <= 0.35 && t.inverse_test.mre <= 0.35 && t.seconds <= 1800.0;
  return {ok, "forward MRE " + fmt(t.forward_test.mre) + ", inverse MRE " + fmt(t.inverse_test.mre) +
                  ", " + fmt(t.seconds) + " s"};
}

Verdict criterion5(const Trained& t) {
  Stopwatch clock;
  Rng rng(505);
  std::vector<double> after1, after5;
  for (int i = 0; i < 20; ++i) {
    const State source = t.init.sample(rng);
    const std::size_t steps = 1 + uniform_index(rng, 500);
    const State z = simulate(t.sys, source, steps, 0.01).back();
    ReachOptions opts;
    opts.iterations = 1;
    after1.push_back(reach_target(t.sys, t.inverse, z, steps, 0.01, t.init, opts, substream_seed(505, i)).d_r);
    opts.iterations = 5;
    after5.push_back(reach_target(t.sys, t.inverse, z, steps, 0.01, t.init, opts, substream_seed(505, i)).d_r);
  }
  const double m1 = median(after1), m5 = median(after5), secs = clock.seconds();
  return {m5 <= 0.5 && m5 < m1 && secs < 300.0,
          "median d_r " + fmt(m1) + " after 1, " + fmt(m5) + " after 5, " + fmt(secs) + " s"};
}

Verdict criterion6(const Trained& t) {
  const auto samples = random_vector_eval(t.sys, t.inverse, {1, 500}, 0.01, t.init, 2000, 1.0, 606);
  const auto bins = bin_by_norm(samples, 5);
  bool monotone = true;
  std::string abs_s, rel_s;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (b > 0) monotone = monotone && bins[b].mean_abs >= bins[b - 1].mean_abs;
    abs_s += (b ? " " : "") + fmt(bins[b].mean_abs);
    rel_s += (b ? " " : "") + fmt(bins[b].mean_rel);
  }
  const double last = bins[bins.size() - 1].mean_rel, prev = bins[bins.size() - 2].mean_rel;
  const bool settled = std::abs(last - prev) <= 0.25 * prev;
  return {bins.size() >= 4 && monotone && settled, "abs [" + abs_s + "], rel [" + rel_s + "]"};
}

Verdict criterion7(const Trained& t) {
  Stopwatch clock;
  Rng rng(707);
  const State source = t.init.sample(rng);
  const State point = simulate(t.sys, source, 50, 0.01).back();
  const Vector half = Vector::Constant(2, 0.02);
  const SafetySpec spec{Box(point - half, point + half), 60, StepWindow{40, 60}};
  InverseFalsifyOptions opts;
  opts.targets = 10;
  opts.reach.iterations = 10;
  const auto report = falsify_inverse(t.sys, t.inverse, spec, t.init, 0.01, opts, 707);
  bool sound = report.counterexample.has_value();
  if (report.counterexample) {
    const auto tr = simulate(t.sys, report.counterexample->x0, spec.horizon, 0.01);
    sound = spec.unsafe.contains(tr.states[report.counterexample->step]) &&
            t.init.contains(report.counterexample->x0);
  }
  const auto baseline = falsify_random_baseline(t.sys, spec, t.init, 0.01, 1000, 708);
  const double secs = clock.seconds();
  return {report.outcome == Outcome::falsified && sound && secs < 300.0,
          std::string(to_string(report.outcome)) + " after " + std::to_string(report.samples_used) +
              " simulations (random baseline " + std::to_string(baseline.samples_used) + "), " +
              fmt(secs) + " s"};
}

Verdict criterion8(const Trained& t) {
  Stopwatch clock;
  // Exact oracle on the rotation.
  const auto rot = builtin_system("linear-rotation");
  const ExactLinearSensitivity exact{make_oracle(rot), false};
  const auto anchor = simulate(rot, make_vector({0.3, -0.6}), 628, 0.01);
  Rng rng(808);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const State start = default_init_set(rot).sample(rng);
    const auto p = predict_trajectory(anchor, exact, start, {0, 628});
    const auto truth = simulate(rot, start, 628, 0.01);
    for (std::size_t k = 0; k < p.states.size(); ++k)
      worst = std::max(worst, (p.states[k] - truth.states[k]).norm());
  }
  // Trained net on a cluster around the centre of the initial set.
  const State centre = t.init.center();
  const Vector radius = 0.05 * t.init.width();
  const Box cluster(centre - radius, centre + radius);
  std::vector<State> starts;
  for (int i = 0; i < 50; ++i) starts.push_back(cluster.sample(rng));
  const auto vdp_anchor = simulate(t.sys, centre, 500, 0.01);
  const auto preds = predict_batch(vdp_anchor, t.forward, starts, {0, 500});
  double err = 0.0, vnorm = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const auto truth = simulate(t.sys, starts[i], 500, 0.01);
    vnorm += (starts[i] - centre).norm();
    for (std::size_t k = 0; k < preds[i].states.size(); ++k, ++n)
      err += (preds[i].states[k] - truth.states[k]).norm();
  }
  err /= static_cast<double>(n);
  vnorm /= static_cast<double>(starts.size());
  const double bound = 3.0 * t.forward_test.mre * vnorm, secs = clock.seconds();
  return {worst < 1e-6 && err <= bound && secs < 120.0,
          "exact worst " + fmt(worst) + ", net mean error " + fmt(err) + " vs bound " + fmt(bound) +
              ", " + fmt(secs) + " s"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int invoke(std::vector<std::string> args, std::string& err) {
  args.insert(args.begin(), "sensex");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), o, e);
  err = e.str();
  return code;
}

Verdict criterion9() {
  const fs::path dir = fs::temp_directory_path() / "sensex_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "base.yaml") << "system: Vanderpol\n"
                                      "seed: 9\n"
                                      "corpus:\n  trajectories: 6\n  steps: 120\n"
                                      "dataset:\n  budget: 3000\n"
                                      "net:\n  hidden_layers: 2\n  width: 16\n  epochs: 2\n";
  const std::string base = (dir / "base.yaml").string();
  const std::string fwd = (dir / "train_forward" / "model.json").string();
  const std::string inv = (dir / "train_inverse" / "model.json").string();
  struct Run {
    std::string name, verb;
    std::vector<std::string> sets;
  };
  const std::vector<Run> runs{
      {"systems", "systems", {}},
      {"simulate", "simulate", {}},
      {"dataset", "dataset", {}},
      {"train_forward", "train", {"dataset.pairing=same_offset"}},
      {"train_inverse", "train", {"dataset.kind=inverse"}},
      {"eval", "eval", {"model=" + fwd}},
      {"reach", "reach", {"model=" + inv, "reach.targets=[[1.5, 2.0], [0.5, 1.0]]", "reach.window=[30, 32]"}},
      {"falsify_inverse", "falsify", {"model=" + inv, "falsify.unsafe=[[1.2, 1.6], [1.0, 1.6]]", "falsify.horizon=100",
                                      "falsify.targets=2"}},
      {"falsify_density", "falsify", {"model=" + fwd, "falsify.method=density", "falsify.unsafe=[[-1, -0.5], [-3, -2]]",
                                      "falsify.horizon=100", "falsify.iterations=3"}},
      {"falsify_random", "falsify", {"falsify.method=random", "falsify.unsafe=[[-1, -0.5], [-3, -2]]",
                                     "falsify.horizon=100", "falsify.budget=20"}},
      {"predict", "predict", {"model=" + fwd, "predict.horizon=100", "predict.cluster.count=10"}},
  };
  std::size_t files = 0;
  std::string failures;
  for (const auto& r : runs) {
    std::vector<std::string> args{r.verb, "--config", base, "--out", (dir / r.name).string()};
    for (const auto& s : r.sets) args.insert(args.end(), {"--set", s});
    std::string err;
    if (invoke(args, err) != 0) {
      failures += " " + r.name + " (" + err.substr(0, err.find('\n')) + ")";
      continue;
    }
    const fs::path replay = dir / (r.name + "_replay");
    if (invoke({r.verb, "--config", (dir / r.name / "manifest.json").string(), "--out", replay.string()}, err) != 0) {
      failures += " " + r.name + "-replay (" + err.substr(0, err.find('\n')) + ")";
      continue;
    }
    for (const auto& e : fs::directory_iterator(dir / r.name)) {
      ++files;
      if (slurp(e.path()) != slurp(replay / e.path().filename())) {
        failures += " " + r.name + "/" + e.path().filename().string();
      }
    }
  }
  fs::remove_all(dir);
  return {failures.empty(), failures.empty()
                                ? std::to_string(runs.size()) + " runs, " + std::to_string(files) +
                                      " files byte-identical on replay"
                                : "mismatch:" + failures};
}

}  // namespace

int main() {
  int failed = 0;
  const auto report = [&](int id, const Verdict& v) {
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << " (" << v.detail << ")"
              << std::endl;
    failed += v.pass ? 0 : 1;
  };
  const auto guarded = [](const std::function<Verdict()>& f) -> Verdict {
    try {
      return f();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };
  report(1, guarded(criterion1));
  report(2, guarded(criterion2));
  report(3, guarded(criterion3));
  const Trained t = train_vanderpol();
  report(4, guarded([&] { return criterion4(t); }));
  report(5, guarded([&] { return criterion5(t); }));
  report(6, guarded([&] { return criterion6(t); }));
  report(7, guarded([&] { return criterion7(t); }));
  report(8, guarded([&] { return criterion8(t); }));
  report(9, guarded(criterion9));
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failed ? 1 : 0;
}
