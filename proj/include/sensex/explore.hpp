#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sensex/dynamics.hpp"
#include "sensex/io.hpp"
#include "sensex/parallel.hpp"
#include "sensex/sim.hpp"
#include "sensex/types.hpp"

namespace sensex {

/// Anything that maps (x0, v, t) to a vector: a trained Mlp, the exact linear
/// oracle, or a test double.
template <typename M>
concept SensitivityModel = requires(const M& m, const State& x0, const Vector& v, double t) {
  { m(x0, v, t) } -> std::convertible_to<Vector>;
};

/// Closed-form sensitivity of a linear system, usable wherever a learned
/// model is expected.
struct ExactLinearSensitivity {
  SensOracle oracle;
  bool inverse = false;

  [[nodiscard]] Vector operator()(const State&, const Vector& v, double t) const {
    return linear_sensitivity(oracle, v, t, inverse);
  }
};

/// Subtracts the model's output at v = 0, so a zero displacement maps to a
/// zero sensitivity exactly. Removes a learned model's constant offset, which
/// otherwise dominates for small displacements.
template <SensitivityModel M>
struct ZeroAnchored {
  M model;

  [[nodiscard]] Vector operator()(const State& x0, const Vector& v, double t) const {
    return model(x0, v, t) - model(x0, Vector::Zero(v.size()), t);
  }
};

template <SensitivityModel M>
ZeroAnchored<M> zero_anchored(M model) {
  return {std::move(model)};
}

/// Inclusive range of sample indices [first, last].
struct StepWindow {
  std::size_t first = 0;
  std::size_t last = 0;

  [[nodiscard]] std::size_t length() const { return last - first + 1; }
};

struct ReachOptions {
  double epsilon = 0.01;
  std::size_t iterations = 5;
  // Total number of random starts; 1 reproduces the single-start loop.
  std::size_t restarts = 1;
  // Consecutive passes improving the best distance by less than 1% that
  // trigger a restart.
  std::size_t stall_passes = 3;
  // Clamp iterates to the initial set instead of the domain.
  bool confine_to_initial_set = false;

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (iterations < 1) throw ConfigError("iteration count must be at least 1");
    if (restarts < 1) throw ConfigError("restart count must be at least 1");
  }
};

struct ReachIterate {
  State x;        // initial state tried
  State reached;  // xi(x, t)
  double d_a = 0.0;
};

struct ReachResult {
  State x;
  double d_a = 0.0;
  double d_r = 0.0;
  bool converged = false;
  std::size_t step = 0;  // time instance, in samples
  std::size_t best_iterate = 0;
  std::vector<ReachIterate> iterates;
  std::vector<std::string> warnings;
};

/// Receives every simulated iterate (initial state and its trajectory);
/// returning true ends the search early.
using IterateObserver = std::function<bool(const State& x, const Trajectory& tr)>;

namespace detail {

inline std::string describe_state(const State& x) {
  std::string s = "(";
  for (Index i = 0; i < x.size(); ++i) s += (i ? ", " : "") + format_double(x[i]);
  return s + ")";
}

template <SensitivityModel Model>
ReachResult reach_loop(const SystemSpec& sys, const Model& inverse_model, const State& z,
                       std::size_t steps, double h, const Box& init_set,
                       const ReachOptions& opts, std::uint64_t seed, std::size_t sim_steps,
                       const IterateObserver& observer) {
  opts.validate();
  require_dim(z, sys.dimension, "target");
  if (init_set.dim() != sys.dimension) throw DimensionError("initial set dimension mismatch");
  if (steps < 1) throw RangeError("reach time must be at least one step");
  sim_steps = std::max(sim_steps, steps);

  ReachResult res;
  res.step = steps;
  if (!sys.domain.contains(z)) {
    res.warnings.push_back("target " + describe_state(z) + " lies outside the domain");
  }
  const Box& bounds = opts.confine_to_initial_set ? init_set : sys.domain;
  const double t = static_cast<double>(steps) * h;

  Rng rng(seed);
  bool stop = false;
  const auto probe = [&](const State& x) {
    Trajectory tr = simulate(sys, x, sim_steps, h);
    ReachIterate it{x, tr.states[steps], (tr.states[steps] - z).norm()};
    res.iterates.push_back(it);
    if (observer && observer(x, tr)) stop = true;
    return it;
  };

  ReachIterate current = probe(init_set.sample(rng));
  const double d_orig = current.d_a;
  double best = current.d_a;
  std::size_t stalled = 0, restarts_left = opts.restarts - 1;

  for (std::size_t pass = 0; !stop && current.d_a > opts.epsilon && pass < opts.iterations;
       ++pass) {
    State next;
    if (stalled >= opts.stall_passes && restarts_left > 0) {
      --restarts_left;
      stalled = 0;
      next = init_set.sample(rng);
    } else {
      const Vector correction = inverse_model(current.reached, Vector(z - current.reached), t);
      if (!correction.allFinite()) {
        res.warnings.push_back("model returned a non-finite correction; search stopped");
        break;
      }
      next = current.x + correction;
      if (!bounds.contains(next)) {
        res.warnings.push_back("iterate " + describe_state(next) + " clamped to the " +
                               (opts.confine_to_initial_set ? "initial set" : "domain"));
        next = bounds.clamp(next);
      }
    }
    current = probe(next);
    if (current.d_a < best * 0.99) {
      stalled = 0;
    } else {
      ++stalled;
    }
    best = std::min(best, current.d_a);
  }

  for (std::size_t i = 1; i < res.iterates.size(); ++i) {
    if (res.iterates[i].d_a < res.iterates[res.best_iterate].d_a) res.best_iterate = i;
  }
  const auto& chosen = res.iterates[res.best_iterate];
  res.x = chosen.x;
  res.d_a = chosen.d_a;
  res.d_r = d_orig > 0.0 ? res.d_a / d_orig : 0.0;
  res.converged = res.d_a <= opts.epsilon;
  return res;
}

}  // namespace detail

/// Searches for an initial state whose trajectory passes within epsilon of
/// `z` after `steps` samples. Starting from a random state of `init_set`, each
/// pass asks the inverse-sensitivity model for the initial-state shift that
/// moves xi(x, t) onto z and re-simulates. The best iterate is reported.
template <SensitivityModel Model>
ReachResult reach_target(const SystemSpec& sys, const Model& inverse_model, const State& z,
                         std::size_t steps, double h, const Box& init_set,
                         const ReachOptions& opts, std::uint64_t seed) {
  return detail::reach_loop(sys, inverse_model, z, steps, h, init_set, opts, seed, steps, {});
}

/// reach_target at every step of `window` (same seed each time); the result
/// with the smallest distance wins, earliest step on ties.
template <SensitivityModel Model>
ReachResult reach_target_interval(const SystemSpec& sys, const Model& inverse_model,
                                  const State& z, StepWindow window, double h,
                                  const Box& init_set, const ReachOptions& opts,
                                  std::uint64_t seed) {
  if (window.first > window.last) throw RangeError("time interval is empty");
  if (window.first < 1) window.first = 1;
  std::optional<ReachResult> best;
  for (std::size_t s = window.first; s <= window.last; ++s) {
    ReachResult r = reach_target(sys, inverse_model, z, s, h, init_set, opts, seed);
    if (!best || r.d_a < best->d_a) best = std::move(r);
  }
  return *best;
}

struct TargetOutcome {
  std::optional<ReachResult> result;
  std::string error;
};

/// Independent interval searches for each target, all from the same seed.
/// A failing target records its error without affecting the others.
template <SensitivityModel Model>
std::vector<TargetOutcome> reach_targets(const SystemSpec& sys, const Model& inverse_model,
                                         const std::vector<State>& targets, StepWindow window,
                                         double h, const Box& init_set,
                                         const ReachOptions& opts, std::uint64_t seed) {
  std::vector<TargetOutcome> out(targets.size());
  parallel_for(targets.size(), [&](std::size_t i) {
    try {
      out[i].result =
          reach_target_interval(sys, inverse_model, targets[i], window, h, init_set, opts, seed);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

/// Result of scanning an ordered list of increasingly distant targets.
struct ExtremeReach {
  std::vector<ReachResult> results;  // one per target, in order
  std::optional<std::size_t> furthest_reached;  // last target converged in order
};

/// Walks the ordered targets until one cannot be reached within epsilon.
/// The furthest reached target and its time instance give the extreme
/// behaviour achievable from the initial set.
template <SensitivityModel Model>
ExtremeReach reach_extreme(const SystemSpec& sys, const Model& inverse_model,
                           const std::vector<State>& ordered_targets, StepWindow window,
                           double h, const Box& init_set, const ReachOptions& opts,
                           std::uint64_t seed) {
  ExtremeReach out;
  for (std::size_t i = 0; i < ordered_targets.size(); ++i) {
    out.results.push_back(
        reach_target_interval(sys, inverse_model, ordered_targets[i], window, h, init_set, opts, seed));
    if (!out.results.back().converged) break;
    out.furthest_reached = i;
  }
  return out;
}

struct RandomVectorSample {
  double v_norm = 0.0;
  double t = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
};

/// Accuracy of one inverse-sensitivity correction against random
/// displacements: for x1 drawn from `init_set`, a step s in `window` and a
/// random v with 0 < |v| <= max_norm, the corrected start x1 + NN(xi(x1, t), v, t)
/// should land on xi(x1, t) + v.
template <SensitivityModel Model>
std::vector<RandomVectorSample> random_vector_eval(const SystemSpec& sys,
                                                   const Model& inverse_model,
                                                   StepWindow window, double h,
                                                   const Box& init_set, std::size_t count,
                                                   double max_norm, std::uint64_t seed) {
  if (count < 1) throw ConfigError("sample count must be at least 1");
  if (window.first < 1 || window.first > window.last) throw RangeError("invalid time interval");
  if (!(max_norm > 0.0)) throw ConfigError("maximum vector norm must be positive");
  std::vector<RandomVectorSample> out(count);
  parallel_for(count, [&](std::size_t i) {
    Rng rng(substream_seed(seed, i));
    const State x1 = init_set.sample(rng);
    const std::size_t s = window.first + uniform_index(rng, window.length());
    const double t = static_cast<double>(s) * h;
    Vector dir(sys.dimension);
    do {
      for (Index d = 0; d < dir.size(); ++d) {
        // Box-Muller on two uniforms.
        const double u1 = 1.0 - uniform01(rng), u2 = uniform01(rng);
        dir[d] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
      }
    } while (dir.norm() == 0.0);
    double norm = 0.0;
    while (norm == 0.0) norm = max_norm * (1.0 - uniform01(rng));
    const Vector v = norm * dir.normalized();
    const State reached = simulate(sys, x1, s, h).back();
    const Vector correction = inverse_model(reached, v, t);
    const State landed = simulate(sys, State(x1 + correction), s, h).back();
    const double abs_error = (landed - (reached + v)).norm();
    out[i] = {v.norm(), t, abs_error, abs_error / v.norm()};
  });
  return out;
}

struct ErrorBin {
  double v_lo = 0.0, v_hi = 0.0;
  double mean_abs = 0.0, mean_rel = 0.0;
  std::size_t count = 0;
};

/// Equal-width bins over |v| in (0, max |v|].
inline std::vector<ErrorBin> bin_by_norm(const std::vector<RandomVectorSample>& samples,
                                         std::size_t bins) {
  if (bins < 1 || samples.empty()) return {};
  double hi = 0.0;
  for (const auto& s : samples) hi = std::max(hi, s.v_norm);
  std::vector<ErrorBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].v_lo = hi * static_cast<double>(b) / static_cast<double>(bins);
    out[b].v_hi = hi * static_cast<double>(b + 1) / static_cast<double>(bins);
  }
  for (const auto& s : samples) {
    auto b = static_cast<std::size_t>(s.v_norm / hi * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    out[b].mean_abs += s.abs_error;
    out[b].mean_rel += s.rel_error;
    ++out[b].count;
  }
  for (auto& b : out) {
    if (b.count) {
      b.mean_abs /= static_cast<double>(b.count);
      b.mean_rel /= static_cast<double>(b.count);
    }
  }
  return out;
}

/// Trajectory from x_j estimated from an anchor trajectory from x_i as
/// xi(x_i, t) + Phi(x_i, x_j - x_i, t) over a window of samples.
struct PredictedTrajectory {
  State anchor_start;
  State start;
  StepWindow window;
  double step = 0.0;
  std::vector<State> states;  // states[k] is the prediction at sample window.first + k
};

template <SensitivityModel Model>
PredictedTrajectory predict_trajectory(const Trajectory& anchor, const Model& forward_model,
                                       const State& start, StepWindow window) {
  if (window.first > window.last || window.last > anchor.steps()) {
    throw RangeError("prediction window [" + std::to_string(window.first) + ", " +
                     std::to_string(window.last) + "] exceeds the anchor horizon " +
                     std::to_string(anchor.steps()));
  }
  require_dim(start, anchor.dimension(), "prediction start");
  PredictedTrajectory p{anchor.initial, start, window, anchor.step, {}};
  const Vector v = start - anchor.initial;
  p.states.reserve(window.length());
  for (std::size_t s = window.first; s <= window.last; ++s) {
    const double t = anchor.time(s);
    p.states.push_back(anchor.states[s] + forward_model(anchor.initial, v, t));
  }
  return p;
}

template <SensitivityModel Model>
std::vector<PredictedTrajectory> predict_batch(const Trajectory& anchor,
                                               const Model& forward_model,
                                               const std::vector<State>& starts,
                                               StepWindow window, unsigned threads = 0) {
  std::vector<PredictedTrajectory> out(starts.size());
  parallel_for(
      starts.size(),
      [&](std::size_t i) { out[i] = predict_trajectory(anchor, forward_model, starts[i], window); },
      threads);
  return out;
}

// ---- serialization ------------------------------------------------------

inline nlohmann::json to_json(const ReachResult& r) {
  nlohmann::json iterates = nlohmann::json::array();
  for (const auto& it : r.iterates) {
    iterates.push_back({{"x", to_json(it.x)}, {"reached", to_json(it.reached)}, {"d_a", it.d_a}});
  }
  return {{"x", to_json(r.x)},          {"d_a", r.d_a},
          {"d_r", r.d_r},               {"converged", r.converged},
          {"step", r.step},             {"best_iterate", r.best_iterate},
          {"iterates", iterates},       {"warnings", r.warnings}};
}

/// One row per iterate: `iterate,d_a,x1..xn,reached1..reachedn`.
inline void write_iterates_csv(std::ostream& out, const ReachResult& r) {
  const Index n = r.x.size();
  out << "iterate,d_a";
  for (Index i = 1; i <= n; ++i) out << ",x" << i;
  for (Index i = 1; i <= n; ++i) out << ",reached" << i;
  out << '\n';
  for (std::size_t k = 0; k < r.iterates.size(); ++k) {
    const auto& it = r.iterates[k];
    out << k << ',' << format_double(it.d_a);
    for (Index i = 0; i < n; ++i) out << ',' << format_double(it.x[i]);
    for (Index i = 0; i < n; ++i) out << ',' << format_double(it.reached[i]);
    out << '\n';
  }
}

}  // namespace sensex
