#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sensex/explore.hpp"

namespace sensex {

/// Unsafe box U, the step bound of the property and an optional window of
/// steps in which entering U counts.
struct SafetySpec {
  Box unsafe;
  std::size_t horizon = 1;
  std::optional<StepWindow> window;

  void validate(Index n) const {
    if (unsafe.dim() != n) {
      throw ConfigError("unsafe set has dimension " + std::to_string(unsafe.dim()) +
                        ", system has " + std::to_string(n));
    }
    if (horizon < 1) throw ConfigError("safety horizon must be at least 1");
    if (window && (window->first > window->last || window->last > horizon)) {
      throw ConfigError("safety time window must lie within [0, horizon]");
    }
  }

  [[nodiscard]] StepWindow checked_steps() const {
    return window.value_or(StepWindow{0, horizon});
  }
};

/// Minimum distance to U over the checked steps and the first step inside U.
struct Proximity {
  double distance = std::numeric_limits<double>::infinity();
  std::size_t closest_step = 0;
  std::optional<std::size_t> entry_step;
};

inline Proximity proximity(const std::vector<State>& states, const SafetySpec& spec,
                           std::size_t offset = 0) {
  const StepWindow w = spec.checked_steps();
  Proximity p;
  for (std::size_t k = 0; k < states.size(); ++k) {
    const std::size_t s = offset + k;
    if (s < w.first || s > w.last) continue;
    const double d = spec.unsafe.distance(states[k]);
    if (d < p.distance) {
      p.distance = d;
      p.closest_step = s;
    }
    if (!p.entry_step && spec.unsafe.contains(states[k])) p.entry_step = s;
  }
  return p;
}

inline Proximity proximity(const Trajectory& tr, const SafetySpec& spec) {
  return proximity(tr.states, spec, 0);
}

enum class Outcome { falsified, exhausted };

inline std::string_view to_string(Outcome o) {
  return o == Outcome::falsified ? "falsified" : "exhausted";
}

struct Counterexample {
  State x0;
  std::size_t step = 0;
};

struct ProfileEntry {
  State x;
  double distance = 0.0;
};

struct FalsifyReport {
  Outcome outcome = Outcome::exhausted;
  std::optional<Counterexample> counterexample;
  std::size_t samples_used = 0;
  std::vector<ProfileEntry> profile;
};

namespace detail {

inline Box unsafe_in_domain(const SystemSpec& sys, const SafetySpec& spec) {
  spec.validate(sys.dimension);
  auto box = spec.unsafe.intersect(sys.domain);
  if (!box) throw ConfigError("unsafe set does not intersect the system domain");
  return *box;
}

inline void check_initial_set(const SystemSpec& sys, const Box& init_set) {
  if (init_set.dim() != sys.dimension) throw DimensionError("initial set dimension mismatch");
  if (!sys.domain.contains(init_set)) throw ConfigError("initial set is not inside the domain");
}

/// Folds one simulated probe into the report; true once U has been entered
/// from a start inside the initial set.
inline bool record_probe(const State& x0, const Trajectory& tr, const SafetySpec& spec,
                         const Box& init_set, FalsifyReport& report) {
  const Proximity p = proximity(tr, spec);
  ++report.samples_used;
  report.profile.push_back({x0, p.distance});
  if (p.entry_step && !report.counterexample && init_set.contains(x0)) {
    report.counterexample = Counterexample{x0, *p.entry_step};
    report.outcome = Outcome::falsified;
    return true;
  }
  return false;
}

}  // namespace detail

struct InverseFalsifyOptions {
  std::size_t targets = 10;  // m
  ReachOptions reach{};
  // Without a time window, reach times are every `stride` steps up to the horizon.
  std::size_t stride = 10;

  void validate() const {
    if (targets < 1) throw ConfigError("target count must be at least 1");
    if (stride < 1) throw ConfigError("time stride must be at least 1");
    reach.validate();
  }
};

inline std::vector<std::size_t> reach_times(const SafetySpec& spec, std::size_t stride) {
  std::vector<std::size_t> times;
  if (spec.window) {
    for (std::size_t s = std::max<std::size_t>(spec.window->first, 1); s <= spec.window->last; ++s)
      times.push_back(s);
  } else {
    for (std::size_t s = stride; s <= spec.horizon; s += stride) times.push_back(s);
    if (times.empty()) times.push_back(spec.horizon);
  }
  return times;
}

/// Samples m targets uniformly in U and steers trajectories toward each with
/// the inverse-sensitivity search. Every simulated probe is checked for
/// entry into U over the whole property horizon.
template <SensitivityModel Model>
FalsifyReport falsify_inverse(const SystemSpec& sys, const Model& inverse_model,
                              const SafetySpec& spec, const Box& init_set, double h,
                              const InverseFalsifyOptions& opts, std::uint64_t seed) {
  opts.validate();
  const Box target_box = detail::unsafe_in_domain(sys, spec);
  detail::check_initial_set(sys, init_set);

  Rng rng(seed);
  std::vector<State> targets;
  for (std::size_t i = 0; i < opts.targets; ++i) targets.push_back(target_box.sample(rng));
  const auto times = reach_times(spec, opts.stride);

  FalsifyReport report;
  const IterateObserver observer = [&](const State& x, const Trajectory& tr) {
    return detail::record_probe(x, tr, spec, init_set, report);
  };
  for (std::size_t i = 0; i < targets.size() && !report.counterexample; ++i) {
    for (std::size_t s : times) {
      detail::reach_loop(sys, inverse_model, targets[i], s, h, init_set, opts.reach,
                         substream_seed(seed, i), spec.horizon, observer);
      if (report.counterexample) break;
    }
  }
  return report;
}

struct DensityOptions {
  std::size_t cluster_size = 20;
  std::size_t iterations = 10;
  // Stop once the anchor passes within this distance of U.
  double threshold = 0.0;
  // Cluster half-width per axis as a fraction of the initial set's width.
  double radius_fraction = 0.05;
  // Steps on either side of the anchor's closest approach that are predicted.
  std::size_t window_halfwidth = 10;

  void validate() const {
    if (cluster_size < 2) throw ConfigError("cluster size must be at least 2");
    if (!(threshold >= 0.0)) throw ConfigError("threshold must be non-negative");
    if (!(radius_fraction >= 0.0)) throw ConfigError("cluster radius must be non-negative");
  }
};

/// Index of the predicted trajectory passing closest to U; earliest on ties.
inline std::size_t greedy_pick(const std::vector<PredictedTrajectory>& predictions,
                               const SafetySpec& spec) {
  if (predictions.empty()) throw RangeError("no predictions to choose from");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = proximity(predictions[i].states, spec, predictions[i].window.first).distance;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

/// Forward-sensitivity guided search: around each anchor, predict a cluster of
/// neighbouring trajectories near the anchor's closest approach to U, move to
/// the most promising one and re-anchor with a real simulation.
template <SensitivityModel Model>
FalsifyReport falsify_forward_density(const SystemSpec& sys, const Model& forward_model,
                                      const SafetySpec& spec, const Box& init_set, double h,
                                      const DensityOptions& opts, std::uint64_t seed) {
  opts.validate();
  spec.validate(sys.dimension);
  detail::check_initial_set(sys, init_set);

  Rng rng(seed);
  FalsifyReport report;
  State x = init_set.sample(rng);
  const Vector radius = opts.radius_fraction * init_set.width();
  const StepWindow checked = spec.checked_steps();

  for (std::size_t it = 0;; ++it) {
    const Trajectory anchor = simulate(sys, x, spec.horizon, h);
    if (detail::record_probe(x, anchor, spec, init_set, report)) break;
    const Proximity p = proximity(anchor, spec);
    if (p.distance <= opts.threshold || it >= opts.iterations) break;

    const StepWindow window{
        std::max(checked.first, p.closest_step - std::min(p.closest_step, opts.window_halfwidth)),
        std::min(checked.last, p.closest_step + opts.window_halfwidth)};
    const auto around = Box(x - radius, x + radius).intersect(init_set);
    std::vector<State> cluster;
    for (std::size_t c = 0; c < opts.cluster_size; ++c) {
      cluster.push_back(around ? around->sample(rng) : x);
    }
    const auto predictions = predict_batch(anchor, forward_model, cluster, window);
    x = cluster[greedy_pick(predictions, spec)];
  }
  return report;
}

/// Real-simulation distance to U for each probe start.
inline std::vector<ProfileEntry> distance_profile(const SystemSpec& sys,
                                                  const std::vector<State>& starts,
                                                  const SafetySpec& spec, double h) {
  spec.validate(sys.dimension);
  std::vector<ProfileEntry> out(starts.size());
  parallel_for(starts.size(), [&](std::size_t i) {
    out[i] = {starts[i], proximity(simulate(sys, starts[i], spec.horizon, h), spec).distance};
  });
  return out;
}

struct DensityMapOptions {
  std::size_t samples = 10;  // targets drawn in U
  StepWindow time{1, 1};     // reach times probed per target
  ReachOptions reach{};

  void validate() const {
    if (samples < 1) throw ConfigError("sample count must be at least 1");
    if (time.first < 1 || time.first > time.last) throw ConfigError("invalid reach time window");
    reach.validate();
  }
};

/// Every initial state probed by inverse-sensitivity searches toward random
/// targets in U, paired with its trajectory's minimum distance to U.
template <SensitivityModel Model>
std::vector<ProfileEntry> inverse_density_map(const SystemSpec& sys, const Model& inverse_model,
                                              const SafetySpec& spec, const Box& init_set,
                                              double h, const DensityMapOptions& opts,
                                              std::uint64_t seed) {
  opts.validate();
  const Box target_box = detail::unsafe_in_domain(sys, spec);
  detail::check_initial_set(sys, init_set);
  Rng rng(seed);
  std::vector<State> targets;
  for (std::size_t i = 0; i < opts.samples; ++i) targets.push_back(target_box.sample(rng));

  std::vector<std::vector<ProfileEntry>> per_target(targets.size());
  parallel_for(targets.size(), [&](std::size_t i) {
    const IterateObserver observer = [&](const State& x, const Trajectory& tr) {
      per_target[i].push_back({x, proximity(tr, spec).distance});
      return false;
    };
    for (std::size_t s = opts.time.first; s <= opts.time.last; ++s) {
      detail::reach_loop(sys, inverse_model, targets[i], s, h, init_set, opts.reach,
                         substream_seed(seed, i), spec.horizon, observer);
    }
  });
  std::vector<ProfileEntry> out;
  for (auto& part : per_target) out.insert(out.end(), part.begin(), part.end());
  return out;
}

/// Mean distance per cell of a regular grid over `region` (row-major, first
/// axis fastest). Empty cells are NaN.
inline std::vector<double> rasterize_profile(const std::vector<ProfileEntry>& profile,
                                             const Box& region,
                                             const std::vector<std::size_t>& cells) {
  if (static_cast<Index>(cells.size()) != region.dim()) {
    throw DimensionError("grid needs one cell count per axis");
  }
  std::size_t total = 1;
  for (auto c : cells) {
    if (c < 1) throw ConfigError("grid cell count must be at least 1");
    total *= c;
  }
  std::vector<double> sum(total, 0.0);
  std::vector<std::size_t> count(total, 0);
  for (const auto& e : profile) {
    if (!region.contains(e.x)) continue;
    std::size_t idx = 0, stride = 1;
    for (Index a = 0; a < region.dim(); ++a) {
      const double w = region.upper()[a] - region.lower()[a];
      const auto n = cells[static_cast<std::size_t>(a)];
      auto c = w > 0.0 ? static_cast<std::size_t>((e.x[a] - region.lower()[a]) / w *
                                                  static_cast<double>(n))
                       : 0;
      c = std::min(c, n - 1);
      idx += c * stride;
      stride *= n;
    }
    sum[idx] += e.distance;
    ++count[idx];
  }
  for (std::size_t i = 0; i < total; ++i) {
    sum[i] = count[i] ? sum[i] / static_cast<double>(count[i])
                      : std::numeric_limits<double>::quiet_NaN();
  }
  return sum;
}

/// Sum of absolute differences over cells populated in both rasters.
inline double raster_l1(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("rasters differ in size");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isnan(a[i]) && !std::isnan(b[i])) s += std::abs(a[i] - b[i]);
  }
  return s;
}

/// Uniform random starts from the initial set until one enters U or the
/// budget runs out.
inline FalsifyReport falsify_random_baseline(const SystemSpec& sys, const SafetySpec& spec,
                                             const Box& init_set, double h, std::size_t budget,
                                             std::uint64_t seed) {
  if (budget < 1) throw ConfigError("simulation budget must be at least 1");
  spec.validate(sys.dimension);
  detail::check_initial_set(sys, init_set);
  Rng rng(seed);
  FalsifyReport report;
  for (std::size_t i = 0; i < budget; ++i) {
    const State x = init_set.sample(rng);
    if (detail::record_probe(x, simulate(sys, x, spec.horizon, h), spec, init_set, report)) break;
  }
  return report;
}

// ---- serialization ------------------------------------------------------

inline nlohmann::json to_json(const FalsifyReport& r) {
  nlohmann::json profile = nlohmann::json::array();
  for (const auto& e : r.profile) {
    nlohmann::json row = to_json(e.x);
    row.push_back(e.distance);
    profile.push_back(std::move(row));
  }
  nlohmann::json cex = nullptr;
  if (r.counterexample) cex = {{"x0", to_json(r.counterexample->x0)}, {"step", r.counterexample->step}};
  return {{"outcome", std::string(to_string(r.outcome))},
          {"counterexample", cex},
          {"samples_used", r.samples_used},
          {"profile", profile}};
}

/// `x1..xn,distance`, one row per probe.
inline void write_profile_csv(std::ostream& out, const std::vector<ProfileEntry>& profile,
                              Index dimension) {
  for (Index i = 1; i <= dimension; ++i) out << 'x' << i << ',';
  out << "distance\n";
  for (const auto& e : profile) {
    for (Index i = 0; i < e.x.size(); ++i) out << format_double(e.x[i]) << ',';
    out << format_double(e.distance) << '\n';
  }
}

}  // namespace sensex
