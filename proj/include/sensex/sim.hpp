#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sensex/dynamics.hpp"
#include "sensex/errors.hpp"
#include "sensex/types.hpp"

namespace sensex {

enum class Direction { forward, backward };

/// Uniformly sampled solution xi(x0, 0), xi(x0, h), ..., xi(x0, k h).
struct Trajectory {
  State initial;
  double step = 0.0;
  std::vector<State> states;
  Direction direction = Direction::forward;

  [[nodiscard]] std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
  [[nodiscard]] std::size_t size() const { return states.size(); }
  [[nodiscard]] double time(std::size_t i) const { return static_cast<double>(i) * step; }
  [[nodiscard]] const State& at(std::size_t i) const { return states.at(i); }
  [[nodiscard]] const State& back() const { return states.back(); }
  [[nodiscard]] Index dimension() const { return initial.size(); }
};

/// States with a component beyond this magnitude count as divergent.
inline constexpr double kDivergenceBound = 1e9;

namespace detail {

inline bool runaway(const State& x) {
  return !x.allFinite() || x.norm() > kDivergenceBound;
}

/// One classical RK4 step of sign * f. Hybrid systems keep the mode chosen at
/// the step's start state for all four stages.
inline State rk4_step(const SystemSpec& sys, const State& x, double h, double sign) {
  const std::size_t mode = select_mode(sys, x);
  const auto f = [&](const State& y) -> Vector { return sign * eval_mode(sys, mode, y); };
  const Vector k1 = f(x);
  const Vector k2 = f(x + 0.5 * h * k1);
  const Vector k3 = f(x + 0.5 * h * k2);
  const Vector k4 = f(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline Trajectory integrate(const SystemSpec& sys, const State& x0, std::size_t k, double h,
                            Direction dir) {
  require_dim(x0, sys.dimension, "initial state");
  if (!(h > 0.0)) throw RangeError("step size must be positive");
  Trajectory tr{x0, h, {}, dir};
  tr.states.reserve(k + 1);
  tr.states.push_back(x0);
  if (detail::runaway(x0)) {
    throw DivergenceError(sys.name + ": initial state is not finite", {});
  }
  const double sign = dir == Direction::forward ? 1.0 : -1.0;
  State x = x0;
  for (std::size_t i = 0; i < k; ++i) {
    x = sys.kind == SystemKind::discrete ? eval_field(sys, x) : rk4_step(sys, x, h, sign);
    if (runaway(x)) {
      throw DivergenceError(sys.name + ": trajectory diverged at step " + std::to_string(i + 1),
                            std::move(tr.states));
    }
    tr.states.push_back(x);
  }
  return tr;
}

}  // namespace detail

/// Forward trajectory of k steps. Fixed-step RK4 for continuous and hybrid
/// systems, the iterated map for discrete ones.
inline Trajectory simulate(const SystemSpec& sys, const State& x0, std::size_t k, double h) {
  return detail::integrate(sys, x0, k, h, Direction::forward);
}

/// Integrates the negated field, so states[i] approximates xi^{-1}(x0, i h).
inline Trajectory simulate_backward(const SystemSpec& sys, const State& x0, std::size_t k,
                                    double h) {
  if (sys.kind == SystemKind::discrete) {
    throw UnsupportedError(sys.name + ": backward simulation of a discrete-time system");
  }
  return detail::integrate(sys, x0, k, h, Direction::backward);
}

/// xi(x0 + v, i h) - xi(x0, i h).
inline Vector empirical_sensitivity(const SystemSpec& sys, const State& x0, const Vector& v,
                                    std::size_t steps, double h) {
  require_dim(v, sys.dimension, "perturbation");
  const Trajectory base = simulate(sys, x0, steps, h);
  const Trajectory moved = simulate(sys, x0 + v, steps, h);
  return moved.back() - base.back();
}

/// Matrix exponential by scaling and squaring: the Taylor series of
/// A / 2^s (||A / 2^s||_inf <= 1/2) is summed until the next term is below
/// tol / 2^s relative to the partial sum, since s squarings amplify the
/// truncation error by about 2^s.
inline Matrix expm(const Matrix& a, double tol = 1e-12) {
  if (a.rows() != a.cols()) throw DimensionError("expm of a non-square matrix");
  const Index n = a.rows();
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Matrix scaled = a / std::ldexp(1.0, squarings);

  const double stop = tol / std::ldexp(1.0, squarings);
  Matrix sum = Matrix::Identity(n, n);
  Matrix term = Matrix::Identity(n, n);
  for (int j = 1; j < 64; ++j) {
    term = term * scaled / static_cast<double>(j);
    sum += term;
    const double tnorm = term.cwiseAbs().rowwise().sum().maxCoeff();
    const double snorm = sum.cwiseAbs().rowwise().sum().maxCoeff();
    if (tnorm <= stop * snorm) break;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

/// Exact sensitivity of a linear system x' = A x: Phi(x0, v, t) = e^{At} v
/// and Phi^{-1}(x0, v, t) = e^{-At} v, independent of x0.
struct SensOracle {
  Matrix a;

  [[nodiscard]] Vector forward(const Vector& v, double t) const { return expm(a * t) * v; }
  [[nodiscard]] Vector inverse(const Vector& v, double t) const { return expm(-a * t) * v; }
};

inline SensOracle make_oracle(const SystemSpec& sys) {
  if (!sys.info.linear_matrix) {
    throw UnsupportedError(sys.name + ": exact sensitivity needs a linear system");
  }
  return SensOracle{*sys.info.linear_matrix};
}

inline Vector linear_sensitivity(const SensOracle& oracle, const Vector& v, double t,
                                 bool inverse) {
  require_dim(v, oracle.a.rows(), "perturbation");
  if (t < 0.0) throw RangeError("sensitivity time must be non-negative");
  return inverse ? oracle.inverse(v, t) : oracle.forward(v, t);
}

}  // namespace sensex
