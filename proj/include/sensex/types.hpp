#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include <Eigen/Core>

#include "sensex/errors.hpp"

namespace sensex {

using State = Eigen::VectorXd;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Seeded generator used everywhere. Draws go through the helpers below
/// rather than std distributions so sequences do not depend on the standard
/// library implementation.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n) by rejection, n > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return r % n;
}

/// Derives an independent stream seed for item `i` of a seeded batch, so
/// per-item results do not depend on execution order.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline void require_dim(const Vector& v, Index n, const char* what) {
  if (v.size() != n) {
    throw DimensionError(std::string(what) + ": expected dimension " +
                         std::to_string(n) + ", got " +
                         std::to_string(v.size()));
  }
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// Axis-aligned box [lower, upper] in R^n.
class Box {
 public:
  Box() = default;
  Box(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size()) {
      throw DimensionError("box bounds have different dimensions");
    }
    for (Index i = 0; i < lower_.size(); ++i) {
      if (!(lower_[i] <= upper_[i])) {
        throw ConfigError("box lower bound exceeds upper bound on axis " +
                          std::to_string(i));
      }
    }
  }

  [[nodiscard]] Index dim() const { return lower_.size(); }
  [[nodiscard]] const Vector& lower() const { return lower_; }
  [[nodiscard]] const Vector& upper() const { return upper_; }
  [[nodiscard]] Vector width() const { return upper_ - lower_; }
  [[nodiscard]] Vector center() const { return 0.5 * (lower_ + upper_); }

  [[nodiscard]] bool contains(const Vector& x) const {
    return ((x.array() >= lower_.array()) && (x.array() <= upper_.array())).all();
  }

  [[nodiscard]] bool contains(const Box& other) const {
    return contains(other.lower_) && contains(other.upper_);
  }

  [[nodiscard]] Vector clamp(const Vector& x) const {
    return x.cwiseMax(lower_).cwiseMin(upper_);
  }

  /// Euclidean distance to the nearest point of the box; zero inside.
  [[nodiscard]] double distance(const Vector& x) const {
    return (x - clamp(x)).norm();
  }

  [[nodiscard]] Vector sample(Rng& rng) const {
    Vector x(dim());
    for (Index i = 0; i < dim(); ++i) x[i] = uniform(rng, lower_[i], upper_[i]);
    return x;
  }

  [[nodiscard]] std::optional<Box> intersect(const Box& other) const {
    if (other.dim() != dim()) throw DimensionError("box intersection across dimensions");
    Vector lo = lower_.cwiseMax(other.lower_);
    Vector hi = upper_.cwiseMin(other.upper_);
    if (((hi - lo).array() < 0.0).any()) return std::nullopt;
    return Box(std::move(lo), std::move(hi));
  }

  friend bool operator==(const Box& a, const Box& b) {
    return a.lower_ == b.lower_ && a.upper_ == b.upper_;
  }

 private:
  Vector lower_;
  Vector upper_;
};

inline Vector make_vector(std::initializer_list<double> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace sensex
