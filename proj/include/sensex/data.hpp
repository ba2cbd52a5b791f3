#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sensex/dynamics.hpp"
#include "sensex/io.hpp"
#include "sensex/parallel.hpp"
#include "sensex/sim.hpp"
#include "sensex/types.hpp"

namespace sensex {

enum class SensKind { forward, inverse };

inline std::string_view to_string(SensKind k) {
  return k == SensKind::forward ? "forward" : "inverse";
}

inline SensKind parse_sens_kind(std::string_view s) {
  if (s == "forward") return SensKind::forward;
  if (s == "inverse") return SensKind::inverse;
  throw ParseError("unknown sensitivity kind '" + std::string(s) + "'");
}

/// Which sampled states may be paired when forming records.
enum class Pairing {
  cross,        // any two distinct sampled states, any offsets
  same_offset,  // states at the same sample index of different trajectories
};

/// Where a record came from: states xi(a, j h) and xi(b, jp h) of the corpus,
/// followed for `duration` steps.
struct Provenance {
  std::uint32_t a = 0, j = 0, b = 0, jp = 0, duration = 0;
};

/// One supervised tuple <x0, v, t, target>.
///   forward: target = xi(x0 + v, t) - xi(x0, t)
///   inverse: x0 = xi(x1, t), v = xi(x2, t) - xi(x1, t), target = x2 - x1
struct SensRecord {
  State x0;
  Vector v;
  double t = 0.0;
  Vector target;
  SensKind kind = SensKind::forward;
  Provenance source;
};

/// Per-feature min-max scaling to [0, 1]. Inputs are laid out (x0, v, t).
struct Normalization {
  Vector input_min, input_max, output_min, output_max;

  [[nodiscard]] bool empty() const { return input_min.size() == 0; }
  [[nodiscard]] Index input_width() const { return input_min.size(); }
  [[nodiscard]] Index output_width() const { return output_min.size(); }

  static double scale(double x, double lo, double hi) {
    return hi > lo ? (x - lo) / (hi - lo) : 0.0;
  }

  [[nodiscard]] Vector normalize_input(const Vector& raw) const {
    require_dim(raw, input_width(), "normalized input");
    Vector out(raw.size());
    for (Index i = 0; i < raw.size(); ++i) out[i] = scale(raw[i], input_min[i], input_max[i]);
    return out;
  }

  [[nodiscard]] Vector normalize_output(const Vector& raw) const {
    require_dim(raw, output_width(), "normalized output");
    Vector out(raw.size());
    for (Index i = 0; i < raw.size(); ++i) out[i] = scale(raw[i], output_min[i], output_max[i]);
    return out;
  }

  [[nodiscard]] Vector denormalize_output(const Vector& y) const {
    require_dim(y, output_width(), "network output");
    return output_min + (output_max - output_min).cwiseProduct(y);
  }

  friend bool operator==(const Normalization&, const Normalization&) = default;
};

inline Vector record_input(const State& x0, const Vector& v, double t) {
  Vector in(2 * x0.size() + 1);
  in << x0, v, t;
  return in;
}

inline Vector record_input(const SensRecord& r) { return record_input(r.x0, r.v, r.t); }

inline Normalization fit_normalization(const std::vector<SensRecord>& records) {
  if (records.empty()) throw ConfigError("cannot fit normalization on zero records");
  Normalization nm;
  nm.input_min = nm.input_max = record_input(records.front());
  nm.output_min = nm.output_max = records.front().target;
  for (const auto& r : records) {
    const Vector in = record_input(r);
    nm.input_min = nm.input_min.cwiseMin(in);
    nm.input_max = nm.input_max.cwiseMax(in);
    nm.output_min = nm.output_min.cwiseMin(r.target);
    nm.output_max = nm.output_max.cwiseMax(r.target);
  }
  return nm;
}

struct Dataset {
  std::vector<SensRecord> records;
  std::string system;
  double h = 0.0;
  std::uint64_t seed = 0;
  SensKind kind = SensKind::forward;
  Index dimension = 0;
  Normalization normalization;

  [[nodiscard]] std::size_t size() const { return records.size(); }
  [[nodiscard]] bool empty() const { return records.empty(); }
};

/// N trajectories of k steps from initial states drawn uniformly in
/// `init_set` (sequentially from one seeded stream).
inline std::vector<Trajectory> generate_corpus(const SystemSpec& sys, const Box& init_set,
                                               std::size_t n, std::size_t k, double h,
                                               std::uint64_t seed) {
  if (n < 2) throw ConfigError("corpus needs at least two trajectories, got " + std::to_string(n));
  if (init_set.dim() != sys.dimension) throw DimensionError("initial set dimension mismatch");
  if (!sys.domain.contains(init_set)) {
    throw ConfigError(sys.name + ": initial set is not contained in the domain");
  }
  Rng rng(seed);
  std::vector<State> starts;
  starts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) starts.push_back(init_set.sample(rng));
  std::vector<Trajectory> corpus(n);
  parallel_for(n, [&](std::size_t i) { corpus[i] = simulate(sys, starts[i], k, h); });
  return corpus;
}

/// Corpus from explicit initial states.
inline std::vector<Trajectory> generate_corpus(const SystemSpec& sys,
                                               const std::vector<State>& starts, std::size_t k,
                                               double h) {
  if (starts.size() < 2) throw ConfigError("corpus needs at least two trajectories");
  std::vector<Trajectory> corpus(starts.size());
  parallel_for(starts.size(), [&](std::size_t i) { corpus[i] = simulate(sys, starts[i], k, h); });
  return corpus;
}

/// Enumerates candidate (pair, duration) combinations of a corpus of N
/// trajectories with k steps each, in a fixed canonical order, and decodes a
/// flat index into its provenance. Groups are ordered by (j, jp); within a
/// group by ordered trajectory pair (a, b) and then duration 1..k-max(j, jp).
class RecordEnumeration {
 public:
  RecordEnumeration(std::size_t n, std::size_t k, Pairing pairing)
      : n_(n), k_(k), pairing_(pairing) {
    std::uint64_t acc = 0;
    for (std::size_t j = 0; j < k_; ++j) {
      const std::size_t jp_lo = pairing_ == Pairing::same_offset ? j : 0;
      const std::size_t jp_hi = pairing_ == Pairing::same_offset ? j + 1 : k_;
      for (std::size_t jp = jp_lo; jp < jp_hi; ++jp) {
        const std::uint64_t pairs = j == jp ? n_ * (n_ - 1) : n_ * n_;
        const std::uint64_t durations = k_ - std::max(j, jp);
        if (pairs == 0) continue;
        groups_.push_back({static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(jp), acc,
                           durations});
        acc += pairs * durations;
      }
    }
    total_ = acc;
  }

  [[nodiscard]] std::uint64_t total() const { return total_; }

  [[nodiscard]] Provenance decode(std::uint64_t index) const {
    auto it = std::upper_bound(groups_.begin(), groups_.end(), index,
                               [](std::uint64_t v, const Group& g) { return v < g.offset; });
    const Group& g = *std::prev(it);
    const std::uint64_t local = index - g.offset;
    const std::uint64_t pair = local / g.durations;
    Provenance p;
    p.j = g.j;
    p.jp = g.jp;
    p.duration = static_cast<std::uint32_t>(1 + local % g.durations);
    if (g.j == g.jp) {
      const std::uint64_t a = pair / (n_ - 1), r = pair % (n_ - 1);
      p.a = static_cast<std::uint32_t>(a);
      p.b = static_cast<std::uint32_t>(r < a ? r : r + 1);
    } else {
      p.a = static_cast<std::uint32_t>(pair / n_);
      p.b = static_cast<std::uint32_t>(pair % n_);
    }
    return p;
  }

 private:
  struct Group {
    std::uint32_t j, jp;
    std::uint64_t offset, durations;
  };
  std::size_t n_, k_;
  Pairing pairing_;
  std::vector<Group> groups_;
  std::uint64_t total_ = 0;
};

/// Builds the record a provenance describes, or nothing when the two paired
/// states coincide (x1 == x2 carries no information).
inline std::optional<SensRecord> build_record(const std::vector<Trajectory>& corpus,
                                              const Provenance& p, SensKind kind, double h) {
  const auto& ta = corpus[p.a].states;
  const auto& tb = corpus[p.b].states;
  const State& x1 = ta[p.j];
  const State& x2 = tb[p.jp];
  if (x1 == x2) return std::nullopt;
  const State& y1 = ta[p.j + p.duration];
  const State& y2 = tb[p.jp + p.duration];
  SensRecord r;
  r.t = static_cast<double>(p.duration) * h;
  r.kind = kind;
  r.source = p;
  if (kind == SensKind::forward) {
    r.x0 = x1;
    r.v = x2 - x1;
    r.target = y2 - y1;
  } else {
    r.x0 = y1;
    r.v = y2 - y1;
    r.target = x2 - x1;
  }
  return r;
}

/// Supervised records from virtual trajectories. Every sampled state is a
/// valid initial state, so any two of them (cross pairing) or any two at the
/// same offset (same-offset pairing) followed for a common duration give one
/// record. When the enumeration exceeds `budget`, `budget` distinct
/// combinations are drawn uniformly with `seed`.
inline Dataset make_records(const std::vector<Trajectory>& corpus, SensKind kind,
                            std::size_t budget, std::uint64_t seed,
                            Pairing pairing = Pairing::cross, std::string system = {}) {
  if (corpus.empty()) throw ConfigError("cannot build records from an empty corpus");
  if (budget < 1) throw ConfigError("record budget must be at least 1");
  const double h = corpus.front().step;
  const std::size_t len = corpus.front().size();
  const Index dim = corpus.front().dimension();
  for (const auto& tr : corpus) {
    if (tr.step != h) throw ConfigError("corpus trajectories use different step sizes");
    if (tr.size() != len) throw ConfigError("corpus trajectories have different lengths");
    if (tr.dimension() != dim) throw DimensionError("corpus trajectories differ in dimension");
  }

  Dataset ds;
  ds.system = std::move(system);
  ds.h = h;
  ds.seed = seed;
  ds.kind = kind;
  ds.dimension = dim;
  if (len < 2) return ds;

  const RecordEnumeration en(corpus.size(), len - 1, pairing);
  std::vector<std::uint64_t> picks;
  if (en.total() <= budget) {
    picks.resize(en.total());
    std::iota(picks.begin(), picks.end(), std::uint64_t{0});
  } else if (budget * 2 > en.total()) {
    std::vector<std::uint64_t> all(en.total());
    std::iota(all.begin(), all.end(), std::uint64_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < budget; ++i) {
      const auto r = i + uniform_index(rng, all.size() - i);
      std::swap(all[i], all[r]);
    }
    picks.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(budget));
  } else {
    Rng rng(seed);
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(budget * 2);
    while (picks.size() < budget) {
      const auto r = uniform_index(rng, en.total());
      if (seen.insert(r).second) picks.push_back(r);
    }
  }
  std::sort(picks.begin(), picks.end());

  std::vector<std::optional<SensRecord>> built(picks.size());
  parallel_for(picks.size(), [&](std::size_t i) {
    built[i] = build_record(corpus, en.decode(picks[i]), kind, h);
  });
  ds.records.reserve(built.size());
  for (auto& r : built) {
    if (r) ds.records.push_back(std::move(*r));
  }
  return ds;
}

/// Seeded shuffle split into (train, test). Normalization is fitted on the
/// training part and shared by both.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction,
                                         std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie strictly between 0 and 1");
  }
  if (ds.size() < 10) {
    throw ConfigError("need at least 10 records to split, got " + std::to_string(ds.size()));
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[uniform_index(rng, i + 1)]);
  }
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, ds.size() - 1);

  Dataset train = ds, test = ds;
  train.records.clear();
  test.records.clear();
  train.seed = test.seed = seed;
  const std::size_t n_train = ds.size() - n_test;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : test).records.push_back(ds.records[order[i]]);
  }
  train.normalization = fit_normalization(train.records);
  test.normalization = train.normalization;
  return {std::move(train), std::move(test)};
}

/// Normalized network inputs (2n+1 rows) and targets (n rows), one record
/// per column.
inline std::pair<Matrix, Matrix> to_matrices(const Dataset& ds) {
  if (ds.normalization.empty()) throw ConfigError("dataset has no normalization");
  const Index n = ds.dimension;
  Matrix in(2 * n + 1, static_cast<Index>(ds.size()));
  Matrix out(n, static_cast<Index>(ds.size()));
  for (std::size_t c = 0; c < ds.size(); ++c) {
    const auto& r = ds.records[c];
    in.col(static_cast<Index>(c)) = ds.normalization.normalize_input(record_input(r));
    out.col(static_cast<Index>(c)) = ds.normalization.normalize_output(r.target);
  }
  return {std::move(in), std::move(out)};
}

// ---- serialization ------------------------------------------------------

inline nlohmann::json normalization_to_json(const Normalization& nm) {
  return {{"input_min", to_json(nm.input_min)},
          {"input_max", to_json(nm.input_max)},
          {"output_min", to_json(nm.output_min)},
          {"output_max", to_json(nm.output_max)}};
}

inline Normalization normalization_from_json(const nlohmann::json& j) {
  try {
    Normalization nm{vector_from_json(j.at("input_min")), vector_from_json(j.at("input_max")),
                     vector_from_json(j.at("output_min")), vector_from_json(j.at("output_max"))};
    if (nm.input_min.size() != nm.input_max.size() ||
        nm.output_min.size() != nm.output_max.size()) {
      throw ParseError("normalization ranges have inconsistent widths");
    }
    return nm;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed normalization: ") + e.what());
  }
}

inline nlohmann::json dataset_sidecar(const Dataset& ds) {
  nlohmann::json j{{"system", ds.system}, {"h", ds.h},        {"seed", ds.seed},
                   {"kind", std::string(to_string(ds.kind))}, {"dimension", ds.dimension},
                   {"count", ds.size()}};
  j["normalization"] = ds.normalization.empty() ? nlohmann::json(nullptr)
                                                : normalization_to_json(ds.normalization);
  return j;
}

/// CSV columns `x0_1..x0_n, v_1..v_n, t, y_1..y_n, kind`.
inline void write_dataset_csv(std::ostream& out, const Dataset& ds) {
  const Index n = ds.dimension;
  for (Index i = 1; i <= n; ++i) out << "x0_" << i << ',';
  for (Index i = 1; i <= n; ++i) out << "v_" << i << ',';
  out << "t,";
  for (Index i = 1; i <= n; ++i) out << "y_" << i << ',';
  out << "kind\n";
  for (const auto& r : ds.records) {
    for (Index i = 0; i < n; ++i) out << format_double(r.x0[i]) << ',';
    for (Index i = 0; i < n; ++i) out << format_double(r.v[i]) << ',';
    out << format_double(r.t) << ',';
    for (Index i = 0; i < n; ++i) out << format_double(r.target[i]) << ',';
    out << to_string(r.kind) << '\n';
  }
}

namespace detail {
inline constexpr char kDatasetMagic[4] = {'S', 'X', 'D', 'S'};
}

inline void write_dataset_binary(std::ostream& out, const Dataset& ds) {
  out.write(detail::kDatasetMagic, 4);
  detail::put(out, detail::kBinaryVersion);
  detail::put(out, static_cast<std::uint64_t>(ds.dimension));
  detail::put(out, static_cast<std::uint64_t>(ds.size()));
  detail::put(out, static_cast<std::uint8_t>(ds.kind == SensKind::forward ? 0 : 1));
  for (const auto& r : ds.records) {
    const auto write_vec = [&](const Vector& v) {
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(sizeof(double) * v.size()));
    };
    write_vec(r.x0);
    write_vec(r.v);
    detail::put(out, r.t);
    write_vec(r.target);
  }
}

inline Dataset read_dataset_binary(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, detail::kDatasetMagic, 4) != 0) {
    throw ParseError("not a dataset file");
  }
  if (detail::take<std::uint32_t>(in) != detail::kBinaryVersion) {
    throw ParseError("unsupported dataset file version");
  }
  Dataset ds;
  ds.dimension = static_cast<Index>(detail::take<std::uint64_t>(in));
  const auto count = detail::take<std::uint64_t>(in);
  ds.kind = detail::take<std::uint8_t>(in) == 0 ? SensKind::forward : SensKind::inverse;
  if (ds.dimension <= 0) throw ParseError("corrupt dataset header");
  const auto read_vec = [&](Vector& v) {
    v.resize(ds.dimension);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * ds.dimension));
    if (!in) throw ParseError("truncated dataset file");
  };
  ds.records.resize(count);
  for (auto& r : ds.records) {
    read_vec(r.x0);
    read_vec(r.v);
    r.t = detail::take<double>(in);
    read_vec(r.target);
    r.kind = ds.kind;
  }
  return ds;
}

/// Writes `<stem>.bin`, `<stem>.csv` and the `<stem>.json` sidecar.
inline void save_dataset(const std::filesystem::path& stem, const Dataset& ds) {
  {
    std::ofstream out(stem.string() + ".bin", std::ios::binary);
    if (!out) throw Error("cannot write " + stem.string() + ".bin");
    write_dataset_binary(out, ds);
  }
  {
    std::ofstream out(stem.string() + ".csv");
    if (!out) throw Error("cannot write " + stem.string() + ".csv");
    write_dataset_csv(out, ds);
  }
  write_json(stem.string() + ".json", dataset_sidecar(ds));
}

inline Dataset load_dataset(const std::filesystem::path& stem) {
  std::ifstream in(stem.string() + ".bin", std::ios::binary);
  if (!in) throw ParseError("cannot open " + stem.string() + ".bin");
  Dataset ds = read_dataset_binary(in);
  const auto side = read_json(stem.string() + ".json");
  try {
    ds.system = side.at("system").get<std::string>();
    ds.h = side.at("h").get<double>();
    ds.seed = side.at("seed").get<std::uint64_t>();
    if (parse_sens_kind(side.at("kind").get<std::string>()) != ds.kind) {
      throw ParseError("dataset sidecar kind disagrees with the binary file");
    }
    if (!side.at("normalization").is_null()) {
      ds.normalization = normalization_from_json(side.at("normalization"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed dataset sidecar: ") + e.what());
  }
  return ds;
}

}  // namespace sensex
